#pragma once

// Line-delimited record formats shared by the trainer, the labeling service
// and the report tools. Keys are written sorted so equal records serialize
// to equal bytes.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttspo/dpo.h"
#include "ttspo/env.h"

namespace ttspo {

inline constexpr int kSchemaVersion = 1;

nlohmann::json candidate_to_json(const Candidate& candidate);
Candidate candidate_from_json(const nlohmann::json& j);

std::string source_name(PreferenceSource source);
PreferenceSource parse_source(const std::string& name);

nlohmann::json pair_to_json(const PreferencePair& pair);
PreferencePair pair_from_json(const nlohmann::json& j);

// One compact JSON object per line, newline terminated.
std::string to_line(const nlohmann::json& j);

void write_candidates(const std::filesystem::path& path,
                      std::span<const Candidate> candidates);
std::vector<Candidate> read_candidates(const std::filesystem::path& path);

void write_pairs(const std::filesystem::path& path,
                 std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

// Two columns: bin_log_hz, count.
void write_histogram_csv(const std::filesystem::path& path,
                         std::span<const double> pitch_bins_hz,
                         std::span<const double> counts);

// FNV-1a over the file's bytes, hex.
std::string file_hash(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ttspo
