#include "ttspo/report.h"

#include <algorithm>
#include <cstdio>

namespace ttspo {

std::vector<SystemRow> published_table_rows() {
  const auto row = [](const char* name, double cer, std::optional<double> elo) {
    return SystemRow{name, cer, elo, "published"};
  };
  return {
      row("ElevenLabs (Multilingual v2)", 4.74, 955.1),
      row("Supertone", 2.98, 1046.9),
      row("GPT-4o-mini-tts (sage)", 2.91, 848.9),
      row("Llasa-8B", 3.24, std::nullopt),
      row("Llasa-3B", 3.47, std::nullopt),
      row("Llasa-1B", 10.45, std::nullopt),
      row("channel-base", 2.90, 1150.1),
      row("GRPO (clean)", 2.20, 753.7),
      row("GRPO-sim extension", 42.63, 878.7),
      row("channel-base-dpo-v1", 5.80, 1096.5),
      row("channel-base-dpo-v2", 3.60, 1190.1),
      row("channel-base-dpo-v3", 3.30, 1064.2),
  };
}

std::vector<SystemRow> sort_by_elo(std::span<const SystemRow> rows) {
  std::vector<SystemRow> out(rows.begin(), rows.end());
  std::stable_sort(out.begin(), out.end(), [](const SystemRow& a, const SystemRow& b) {
    if (a.elo && b.elo) return *a.elo > *b.elo;
    return a.elo.has_value() && !b.elo.has_value();
  });
  return out;
}

namespace {

std::string fmt(std::optional<double> v, const char* spec) {
  if (!v) return "";
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, *v);
  return buf;
}

// Quotes fields that contain separators.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string table_csv(std::span<const SystemRow> rows) {
  std::string out = "system,cer_percent,elo,origin\n";
  for (const SystemRow& r : rows) {
    out += field(r.system) + "," + fmt(r.cer_percent, "%.4f") + "," + fmt(r.elo, "%.1f") + "," +
           r.origin + "\n";
  }
  return out;
}

std::string elo_bar_csv(std::span<const SystemRow> rows) {
  std::string out = "rank,system,elo\n";
  int rank = 0;
  for (const SystemRow& r : sort_by_elo(rows)) {
    if (!r.elo) continue;
    out += std::to_string(++rank) + "," + field(r.system) + "," + fmt(r.elo, "%.1f") + "\n";
  }
  return out;
}

}  // namespace ttspo
