"""Python interface to the ttspo core.

The heavy lifting lives in the compiled ``_ttspo`` extension; this module
re-exports it and adds a dict-friendly config helper.
"""

import json as _json

from ._ttspo import *  # noqa: F401,F403
from ._ttspo import Config, __version__  # noqa: F401


def config(overrides=None, **kwargs):
    """Build a Config from a nested dict (JSON-compatible) and keyword overrides."""
    data = dict(overrides or {})
    data.update(kwargs)
    return Config.from_json(_json.dumps(data))
