#pragma once

#include "cellgraph/graph_builder.hpp"
#include "cellgraph/models.hpp"
#include "cellgraph/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cellgraph::experiment {

/// One row of the CSV results ledger. config_hash ignores the seed, so
/// repeated seeds of a configuration share it.
struct LedgerRow {
  std::string config_hash;
  std::string protocol;
  std::string backbone;
  std::string kpi;
  double alpha_pct = 0.0;
  std::string pretext;
  unsigned long long seed = 0;
  double mse_pct = 0.0;
  std::optional<double> gain;
  double wallclock_s = 0.0;
  std::size_t peak_mem_bytes = 0;
};

LedgerRow ledger_row(const training::RunReport& report);
std::string ledger_header();
std::string to_csv_line(const LedgerRow& row);
LedgerRow parse_csv_line(const std::string& line);
void append_ledger(const std::filesystem::path& path, const training::RunReport& report);
std::vector<LedgerRow> read_ledger(const std::filesystem::path& path);

/// "x.x ± y.y%"
std::string format_mean_std(double mean, double std);

struct SummaryRow {
  std::string protocol;
  std::string backbone;
  std::string kpi;
  double alpha_pct = 0.0;
  std::string pretext;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  /// mean(no pretext) - mean(this) for PF2 rows with a matching baseline.
  std::optional<double> gain;
};

/// Groups by (protocol, backbone, kpi, alpha, pretext) in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<LedgerRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string summary_markdown(const std::vector<SummaryRow>& rows);

struct BenchResult {
  std::string backbone;
  int nodes = 0;
  int edges = 0;
  double forward_s = 0.0;  // best of the repeats
  std::size_t parameter_bytes = 0;
  std::size_t activation_bytes = 0;
  double search_space = 0.0;  // mean in-degree + 1

  std::size_t total_bytes() const { return parameter_bytes + activation_bytes; }
};

/// Mean in-degree + 1: cells consulted per estimate.
double search_space_per_result(const CellGraph& graph);

/// Times a no-tape forward pass of backbone + downstream head.
BenchResult bench(const CellGraph& graph, const models::BackboneConfig& config, int repeats = 5,
                  std::uint64_t seed = 1);
std::string to_json(const BenchResult& result);

}  // namespace cellgraph::experiment
