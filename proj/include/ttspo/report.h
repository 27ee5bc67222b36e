#pragma once

// Table and figure data files: a CER/ELO table, the ELO bar chart data and
// the pitch-histogram pairs.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ttspo {

struct SystemRow {
  std::string system;
  std::optional<double> cer_percent;
  std::optional<double> elo;
  std::string origin = "measured";  // measured | published
};

// The published comparison table, verbatim, for use as a fixture.
std::vector<SystemRow> published_table_rows();

// Rated rows by descending ELO, then unrated rows in their input order.
std::vector<SystemRow> sort_by_elo(std::span<const SystemRow> rows);

// system,cer_percent,elo,origin
std::string table_csv(std::span<const SystemRow> rows);

// rank,system,elo for rated rows in descending order.
std::string elo_bar_csv(std::span<const SystemRow> rows);

}  // namespace ttspo
