#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evnas/events.hpp"
#include "evnas/tensor.hpp"

namespace evnas {

// Tie-corrected Kendall tau-b. Returns NaN when either vector is fully
// tied (undefined correlation).
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

// Pearson correlation of mid-ranks (average ranks over ties). NaN when a
// rank vector has zero variance.
double spearman_r(const std::vector<double>& x, const std::vector<double>& y);

struct BenchmarkRow {
  std::string genome;
  Encoding encoding = Encoding::SHIST;
  double zen = 0.0;
  double macs = 0.0;
  double params = 0.0;
  std::optional<double> ntk_cond;
  double map50 = 0.0;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
};

BenchmarkTable read_benchmark(const std::string& path);
void write_benchmark(const BenchmarkTable& table, const std::string& path);

struct SweepRow {
  double w_zen = 0.0;
  double w_macs = 0.0;
  double tau = 0.0;
  double rho = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  size_t argmax = 0;  // row with the highest Kendall tau
};

// Correlates w*zen_norm + (1-w)*macs_norm against map50 for w in
// {0, step, ..., 1}; min-max normalization over the whole table.
SweepResult weight_sweep(const BenchmarkTable& table, double step);

struct ProxyReportCell {
  std::string proxy;
  std::string group;  // encoding name or "overall"
  double tau = 0.0;
  double rho = 0.0;
  int n = 0;
  bool degenerate = false;  // too few rows or undefined correlation
};

struct ProxyReport {
  std::vector<ProxyReportCell> cells;
};

// Per-(proxy, encoding) rank correlations against map50, plus overall rows.
ProxyReport proxy_report(const BenchmarkTable& table);

std::string proxy_report_csv(const ProxyReport& report);
std::string proxy_report_text(const ProxyReport& report);

// Synthetic benchmark with a planted linear signal: map50 follows
// w_zen*zen_norm + (1-w_zen)*macs_norm plus Gaussian noise, monotonically
// squeezed into [0,1]. Genome strings are real design-space samples.
BenchmarkTable make_planted_table(int n, double w_zen, double noise_sigma,
                                  std::uint64_t seed);

}  // namespace evnas
