#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evnas/blocks.hpp"
#include "evnas/genome.hpp"

namespace evnas {

struct ProxyVector {
  double zen = 0.0;
  unsigned long long macs = 0;
  unsigned long long params = 0;
  std::optional<double> ntk_cond;
  double diversity = 0.0;
  bool zen_degenerate = false;  // set when the finite difference vanished
};

struct ScoreConfig {
  int batch = 8;
  int height = 64;
  int width = 64;
  double noise_alpha = 0.01;              // scale of the input disturbance
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::uint64_t graph_seed = 7;           // weight initialization stream
  int ntk_probe_count = 8;
  double ntk_fd_step = 1e-3;
  bool ntk_reciprocal = false;            // report highest/lowest instead
  unsigned long long ntk_param_budget = 50000;

  void validate() const;
};

struct ZenResult {
  double score = 0.0;
  bool degenerate = false;  // delta collapsed to zero on some seed
};

// Forward abstraction for score machinery: maps a [B,C,H,W] input batch to
// (output tensor, per-batchnorm mean log sigma).
struct ScoreForward {
  int in_channels = 0;
  std::function<std::pair<Tensor, std::vector<float>>(const Tensor&)> run;
};

// Zen expressivity score of an arbitrary forward: mean over seeds of
// log(mean_batch ||f(x) - f(x + alpha*eps)||_F) plus the sum over
// batchnorm layers of the mean channel log sigma observed on f(x).
ZenResult zen_score_fn(const ScoreForward& f, const ScoreConfig& cfg);

// Zen score of a built backbone (STEM through SPPF, zero recurrent state,
// single timestep).
ZenResult zen_score(const ComputeGraph& graph, const ScoreConfig& cfg);

struct NtkResult {
  double value = 0.0;
  // Eigenvalues of the probe Gram matrix, ascending.
  std::vector<double> eigenvalues;
};

// Finite-difference NTK machinery over an arbitrary parameterized scalar
// map: eval(params) returns one scalar per probe input.
NtkResult ntk_cond_fn(
    const std::function<std::vector<double>(const std::vector<float>&)>& eval,
    const std::vector<float>& params0, double fd_step, bool reciprocal);

// NTK condition number of a small graph (global-average-pooled scalar
// output per probe). Returns nullopt when the parameter count exceeds the
// finite-difference budget.
std::optional<NtkResult> ntk_cond(const ComputeGraph& graph,
                                  const ScoreConfig& cfg);

// Eq.-style diversity over the four block-type counts: 1 minus the pairwise
// absolute count differences over the maximum attainable sum (12).
double diversity_index(const Genome& g);
double diversity_from_counts(const std::array<int, 4>& counts);

// All proxies for one genome at the configured geometry. NTK is filled only
// within its parameter budget; otherwise it stays empty, mirroring the
// benchmark treatment.
ProxyVector profile(const Genome& g, const ScoreConfig& cfg,
                    bool with_ntk = false);

}  // namespace evnas
