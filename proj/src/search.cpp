#include "evnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace evnas {

void SearchConfig::validate() const {
  if (population < 2) throw TensorError("SearchConfig: population must be >= 2");
  if (iterations < 0) throw TensorError("SearchConfig: iterations must be >= 0");
  if (diversity_alpha < 0.0 || diversity_alpha > 1.0)
    throw TensorError("SearchConfig: diversity_alpha must lie in [0,1]");
  for (double w : weights)
    if (w < 0.0) throw TensorError("SearchConfig: weights must be >= 0");
  score.validate();
}

DesignSpace SearchConfig::design_space() const {
  return encoding_frozen ? DesignSpace::frozen_encoding(frozen_encoding)
                         : DesignSpace::standard();
}

namespace {

std::vector<double> minmax_norm(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.5);
  if (*hi > *lo) {
    const double range = *hi - *lo;
    for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  }
  return out;
}

}  // namespace

std::vector<double> fitness_all(const std::vector<Individual>& population,
                                const SearchConfig& cfg) {
  if (population.empty()) throw TensorError("fitness_all: empty population");
  const size_t n = population.size();
  std::vector<double> zen(n), macs(n), ntk(n);
  bool any_ntk = false;
  for (size_t i = 0; i < n; ++i) {
    zen[i] = population[i].proxies.zen;
    macs[i] = static_cast<double>(population[i].proxies.macs);
    if (population[i].proxies.ntk_cond) {
      ntk[i] = *population[i].proxies.ntk_cond;
      any_ntk = true;
    }
  }
  const std::vector<double> zn = minmax_norm(zen);
  const std::vector<double> mn = minmax_norm(macs);
  std::vector<double> nn(n, 0.5);
  if (any_ntk) {
    // Rows without a value stay at the neutral midpoint.
    std::vector<double> present;
    for (size_t i = 0; i < n; ++i)
      if (population[i].proxies.ntk_cond) present.push_back(ntk[i]);
    const auto [lo, hi] = std::minmax_element(present.begin(), present.end());
    if (*hi > *lo)
      for (size_t i = 0; i < n; ++i)
        if (population[i].proxies.ntk_cond)
          nn[i] = (ntk[i] - *lo) / (*hi - *lo);
  }

  const double a = cfg.diversity_alpha;
  std::vector<double> f(n);
  for (size_t i = 0; i < n; ++i)
    f[i] = a * (cfg.weights[0] * zn[i] + cfg.weights[1] * mn[i] +
                cfg.weights[2] * nn[i]) +
           (1.0 - a) * population[i].proxies.diversity;
  return f;
}

namespace {

size_t lowest_fitness_index(const std::vector<Individual>& pop,
                            const std::vector<double>& fitness) {
  size_t worst = 0;
  for (size_t i = 1; i < pop.size(); ++i) {
    if (fitness[i] < fitness[worst] ||
        (fitness[i] == fitness[worst] && pop[i].birth < pop[worst].birth))
      worst = i;
  }
  return worst;
}

}  // namespace

SearchResult evolve(const SearchConfig& cfg) {
  cfg.validate();
  const DesignSpace ds = cfg.design_space();
  Rng rng(derive_seed(cfg.seed, 0xe70));

  SearchResult res;
  std::vector<Individual> pop;
  std::vector<size_t> pop_ids;  // indices into res.all_individuals
  std::uint64_t births = 0;

  auto scored = [&](Genome&& g) {
    Individual ind;
    ind.genome = std::move(g);
    ind.proxies = profile(ind.genome, cfg.score);
    ind.birth = births++;
    return ind;
  };

  // Rejection-sampled feasible initial population.
  const long long cap =
      static_cast<long long>(cfg.init_attempt_factor) * cfg.population;
  long long attempts = 0;
  while (static_cast<int>(pop.size()) < cfg.population) {
    if (attempts++ >= cap)
      throw InfeasibleError(
          "evolve: could not sample a feasible population under max_params=" +
          std::to_string(cfg.max_params));
    Genome g = sample_genome(rng, ds);
    const Cost c = cost_full_model(g, cfg.score.height, cfg.score.width);
    if (c.params > cfg.max_params) continue;
    Individual ind = scored(std::move(g));
    res.all_individuals.push_back(ind);
    pop_ids.push_back(res.all_individuals.size() - 1);
    pop.push_back(std::move(ind));
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    // Retry with fresh parents until a child satisfies the parameter cap;
    // the iteration is counted once.
    for (long long guard = 0;; ++guard) {
      if (guard > 10000)
        throw InfeasibleError("evolve: mutation cannot satisfy max_params");
      const size_t pi = rng.bounded(pop.size());
      Genome child = mutate_genome(pop[pi].genome, rng, ds);
      const Cost c = cost_full_model(child, cfg.score.height, cfg.score.width);

      SearchEvent ev;
      ev.iteration = it;
      ev.parent = serialize_genome(pop[pi].genome);
      ev.child = serialize_genome(child);

      if (c.params > cfg.max_params) {
        ev.accepted = false;
        for (size_t id : pop_ids) ev.population_after.push_back(id);
        res.events.push_back(std::move(ev));
        continue;
      }

      Individual ind = scored(std::move(child));
      res.all_individuals.push_back(ind);
      pop.push_back(std::move(ind));
      pop_ids.push_back(res.all_individuals.size() - 1);

      const std::vector<double> fit = fitness_all(pop, cfg);
      const size_t evict = lowest_fitness_index(pop, fit);
      ev.accepted = true;
      ev.evicted = serialize_genome(pop[evict].genome);
      pop.erase(pop.begin() + static_cast<long>(evict));
      pop_ids.erase(pop_ids.begin() + static_cast<long>(evict));
      for (size_t id : pop_ids) ev.population_after.push_back(id);
      res.events.push_back(std::move(ev));

      const std::vector<double> fit_after = fitness_all(pop, cfg);
      res.min_fitness_history.push_back(
          *std::min_element(fit_after.begin(), fit_after.end()));
      break;
    }
  }

  // Rank the final population by fitness, ties by genome string.
  std::vector<double> fit = fitness_all(pop, cfg);
  std::vector<size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (fit[a] != fit[b]) return fit[a] > fit[b];
    return serialize_genome(pop[a].genome) < serialize_genome(pop[b].genome);
  });
  for (size_t i : order) {
    res.population.push_back(pop[i]);
    res.fitness.push_back(fit[i]);
  }
  return res;
}

std::vector<Genome> top_k(const SearchResult& result, int k) {
  if (k < 0 || static_cast<size_t>(k) > result.population.size())
    throw TensorError("top_k: k exceeds population size");
  std::vector<Genome> out;
  for (int i = 0; i < k; ++i)
    out.push_back(result.population[static_cast<size_t>(i)].genome);
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_search_artifacts(const SearchResult& result, const SearchConfig& cfg,
                            const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream out(fs::path(out_dir) / "population.csv");
    out << "rank,genome,zen,macs,params,ntk_cond,diversity,fitness\n";
    for (size_t i = 0; i < result.population.size(); ++i) {
      const Individual& ind = result.population[i];
      out << i << "," << serialize_genome(ind.genome) << ","
          << fmt_double(ind.proxies.zen) << "," << ind.proxies.macs << ","
          << ind.proxies.params << ",";
      if (ind.proxies.ntk_cond) out << fmt_double(*ind.proxies.ntk_cond);
      out << "," << fmt_double(ind.proxies.diversity) << ","
          << fmt_double(result.fitness[i]) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / "events.csv");
    out << "iteration,parent,child,accepted,evicted\n";
    for (const SearchEvent& ev : result.events)
      out << ev.iteration << "," << ev.parent << "," << ev.child << ","
          << (ev.accepted ? 1 : 0) << "," << ev.evicted << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "report.txt");
    out << "population " << cfg.population << ", iterations " << cfg.iterations
        << ", max_params " << cfg.max_params << ", alpha "
        << fmt_double(cfg.diversity_alpha) << ", weights ["
        << fmt_double(cfg.weights[0]) << "," << fmt_double(cfg.weights[1]) << ","
        << fmt_double(cfg.weights[2]) << "], seed " << cfg.seed << "\n";
    out << "events logged: " << result.events.size() << "\n\n";
    out << "rank fitness     params    genome\n";
    for (size_t i = 0; i < result.population.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%-4zu %-11.6f %-9llu ", i,
                    result.fitness[i], result.population[i].proxies.params);
      out << buf << serialize_genome(result.population[i].genome) << "\n";
    }
  }
}

}  // namespace evnas
