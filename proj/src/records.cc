#include "ttspo/records.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ttspo/error.h"
#include "ttspo/policy.h"

namespace ttspo {

using nlohmann::json;

namespace {

void check_schema(const json& j, const char* what) {
  if (!j.is_object()) throw InvalidArgument(std::string(what) + " record is not an object");
  const auto it = j.find("schema_version");
  if (it == j.end()) throw InvalidArgument(std::string(what) + " record lacks schema_version");
  if (*it != kSchemaVersion) {
    throw InvalidArgument(std::string(what) + " record has unsupported schema_version " +
                          it->dump());
  }
}

template <class T, class F>
std::vector<T> read_lines(const std::filesystem::path& path, F parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

json candidate_to_json(const Candidate& c) {
  return json{{"schema_version", kSchemaVersion},
              {"prompt_id", c.prompt_id},
              {"token_ids", c.token_ids},
              {"token_logprobs", c.token_logprobs},
              {"terminated", c.terminated},
              {"seed", c.seed}};
}

Candidate candidate_from_json(const json& j) {
  check_schema(j, "candidate");
  Candidate c;
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.token_ids = j.at("token_ids").get<std::vector<int>>();
  c.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
  c.terminated = j.at("terminated").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (c.token_logprobs.size() != c.token_ids.size()) {
    throw InvalidArgument("candidate has " + std::to_string(c.token_ids.size()) +
                          " tokens but " + std::to_string(c.token_logprobs.size()) +
                          " logprobs");
  }
  return c;
}

std::string source_name(PreferenceSource source) {
  return source == PreferenceSource::kHuman ? "human" : "oracle";
}

PreferenceSource parse_source(const std::string& name) {
  if (name == "human") return PreferenceSource::kHuman;
  if (name == "oracle") return PreferenceSource::kOracle;
  throw InvalidArgument("unknown preference source '" + name + "'");
}

json pair_to_json(const PreferencePair& p) {
  return json{{"schema_version", kSchemaVersion},
              {"round", p.round},
              {"prompt_id", p.prompt_id},
              {"preferred", candidate_to_json(p.preferred)},
              {"dispreferred", candidate_to_json(p.dispreferred)},
              {"source", source_name(p.source)},
              {"annotator_id", p.annotator_id ? json(*p.annotator_id) : json(nullptr)},
              {"timestamp", p.timestamp}};
}

PreferencePair pair_from_json(const json& j) {
  check_schema(j, "preference pair");
  PreferencePair p;
  p.round = j.at("round").get<int>();
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.preferred = candidate_from_json(j.at("preferred"));
  p.dispreferred = candidate_from_json(j.at("dispreferred"));
  p.source = parse_source(j.at("source").get<std::string>());
  const json& a = j.at("annotator_id");
  if (!a.is_null()) p.annotator_id = a.get<std::string>();
  p.timestamp = j.at("timestamp").get<std::uint64_t>();
  p.validate();
  return p;
}

std::string to_line(const json& j) { return j.dump() + "\n"; }

void write_candidates(const std::filesystem::path& path, std::span<const Candidate> candidates) {
  std::string bytes;
  for (const Candidate& c : candidates) bytes += to_line(candidate_to_json(c));
  write_file_atomic(path, bytes);
}

std::vector<Candidate> read_candidates(const std::filesystem::path& path) {
  return read_lines<Candidate>(path, candidate_from_json);
}

void write_pairs(const std::filesystem::path& path, std::span<const PreferencePair> pairs) {
  std::string bytes;
  for (const PreferencePair& p : pairs) bytes += to_line(pair_to_json(p));
  write_file_atomic(path, bytes);
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  return read_lines<PreferencePair>(path, pair_from_json);
}

void write_histogram_csv(const std::filesystem::path& path,
                         std::span<const double> pitch_bins_hz,
                         std::span<const double> counts) {
  if (pitch_bins_hz.size() != counts.size()) {
    throw InvalidArgument("histogram has " + std::to_string(counts.size()) +
                          " counts for " + std::to_string(pitch_bins_hz.size()) + " bins");
  }
  std::string bytes = "bin_log_hz,count\n";
  char buf[96];
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g\n", std::log(pitch_bins_hz[i]), counts[i]);
    bytes += buf;
  }
  write_file_atomic(path, bytes);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return fnv1a_hex({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ttspo
