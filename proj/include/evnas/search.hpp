#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evnas/genome.hpp"
#include "evnas/proxies.hpp"

namespace evnas {

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SearchConfig {
  int population = 50;
  int iterations = 1000;
  unsigned long long max_params = 10000000;
  std::array<double, 3> weights = {0.6, 0.4, 0.0};  // zen, macs, ntk
  double diversity_alpha = 0.05;
  bool encoding_frozen = true;
  Encoding frozen_encoding = Encoding::SHIST;
  std::uint64_t seed = 1;
  ScoreConfig score;
  int init_attempt_factor = 1000;  // rejection-sampling cap per individual

  void validate() const;
  DesignSpace design_space() const;
};

struct Individual {
  Genome genome;
  ProxyVector proxies;
  std::uint64_t birth = 0;  // insertion counter, used for eviction ties
};

struct SearchEvent {
  int iteration = 0;
  std::string parent;
  std::string child;
  bool accepted = false;  // false when the child broke the parameter cap
  std::string evicted;    // empty for rejected attempts
  // Population membership after the event, as indices into
  // SearchResult::all_individuals.
  std::vector<size_t> population_after;
};

struct SearchResult {
  std::vector<Individual> population;    // final population, ranked by fitness
  std::vector<double> fitness;           // aligned with population
  std::vector<SearchEvent> events;
  std::vector<double> min_fitness_history;  // per accepted iteration
  std::vector<Individual> all_individuals;  // everything ever scored
};

// Eq.-style fitness over the current population: per-population min-max
// normalization of (zen, macs, ntk), F = alpha * W.Znorm + (1-alpha) * D.
// A constant proxy normalizes to 0.5; missing ntk values do too.
std::vector<double> fitness_all(const std::vector<Individual>& population,
                                const SearchConfig& cfg);

SearchResult evolve(const SearchConfig& cfg);

// Top genomes of a result by descending fitness; ties break by genome
// string order.
std::vector<Genome> top_k(const SearchResult& result, int k);

// Artifacts: population file, event-log CSV, and a text report.
void write_search_artifacts(const SearchResult& result, const SearchConfig& cfg,
                            const std::string& out_dir);

}  // namespace evnas
