// evnas: training-free architecture scoring and search for event-camera
// detection backbones. Subcommands cover event-stream encoding, proxy
// profiling, evolutionary search, and benchmark correlation studies.

#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "evnas/blocks.hpp"
#include "evnas/events.hpp"
#include "evnas/genome.hpp"
#include "evnas/proxies.hpp"
#include "evnas/search.hpp"
#include "evnas/stats.hpp"

namespace fs = std::filesystem;
using namespace evnas;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInfeasible = 4;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

EventFileFormat file_format_of(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    return EventFileFormat::Csv;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".evt")
    return EventFileFormat::Evt;
  throw IoError("cannot infer event file format from '" + path +
                "' (expected .csv or .evt)");
}

bool parse_res(const std::string& s, int& h, int& w) {
  const size_t x = s.find('x');
  if (x == std::string::npos) return false;
  try {
    size_t p1 = 0, p2 = 0;
    h = std::stoi(s.substr(0, x), &p1);
    w = std::stoi(s.substr(x + 1), &p2);
    return p1 == x && p2 == s.size() - x - 1 && h > 0 && w > 0;
  } catch (const std::exception&) {
    return false;
  }
}

void echo_config(const std::string& path,
                 const std::map<std::string, std::string>& kv) {
  std::ofstream out(path);
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

// --- encode -------------------------------------------------------------------

struct EncodeArgs {
  std::string input;
  std::string format = "shist";
  int bins = 5;
  std::uint64_t window_us = 40000;
  int width = 346;
  int height = 260;
  std::string out_dir;
};

int run_encode(const EncodeArgs& a) {
  const auto enc = encoding_from_name(a.format);
  if (!enc) {
    std::cerr << "unknown format '" << a.format << "'\n";
    return kExitUsage;
  }
  fs::create_directories(a.out_dir);
  auto reader = open_events(a.input, file_format_of(a.input));

  std::ofstream manifest(fs::path(a.out_dir) / "windows.csv");
  manifest << "index,t_a_us,t_b_us,events,file\n";

  TafEncoder taf(a.width, a.height, a.bins);
  int index = 0;
  window_split(*reader, a.window_us, a.width, a.height, [&](EventWindow&& w) {
    EncodedTensor t;
    switch (*enc) {
      case Encoding::VTEI: t = encode_vtei(w, a.bins); break;
      case Encoding::MDES: t = encode_mdes(w, a.bins); break;
      case Encoding::SHIST: t = encode_shist(w, a.bins); break;
      case Encoding::TAF: t = taf.push_window(w); break;
    }
    char name[48];
    std::snprintf(name, sizeof name, "window_%05d.ten", index);
    write_tensor(t.tensor, (fs::path(a.out_dir) / name).string());
    manifest << index << "," << w.t_a << "," << w.t_b << "," << w.events.size()
             << "," << name << "\n";
    ++index;
  });

  echo_config((fs::path(a.out_dir) / "run_config.txt").string(),
              {{"command", "encode"},
               {"input", a.input},
               {"format", encoding_name(*enc)},
               {"bins", std::to_string(a.bins)},
               {"window_us", std::to_string(a.window_us)},
               {"width", std::to_string(a.width)},
               {"height", std::to_string(a.height)}});
  std::cout << "wrote " << index << " windows to " << a.out_dir << "\n";
  return kExitOk;
}

// --- profile ------------------------------------------------------------------

struct ProfileArgs {
  std::string genomes_path;
  std::uint64_t seed = 1;
  std::string res = "64x64";
  std::string out_csv;
  int jobs = 1;
  bool keep_going = false;
  bool with_ntk = false;
  int batch = 8;
  int zen_seeds = 4;
};

ScoreConfig score_config_for(std::uint64_t seed, int h, int w, int batch,
                             int zen_seeds) {
  ScoreConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.batch = batch;
  cfg.graph_seed = seed;
  cfg.seeds.clear();
  for (int i = 1; i <= zen_seeds; ++i) cfg.seeds.push_back(seed + static_cast<std::uint64_t>(i));
  return cfg;
}

int run_profile(const ProfileArgs& a) {
  int h = 0, w = 0;
  if (!parse_res(a.res, h, w)) {
    std::cerr << "bad --res '" << a.res << "', expected HxW\n";
    return kExitUsage;
  }
  const ScoreConfig cfg = score_config_for(a.seed, h, w, a.batch, a.zen_seeds);
  cfg.validate();

  std::ifstream in(a.genomes_path);
  if (!in) {
    std::cerr << "cannot open " << a.genomes_path << "\n";
    return kExitData;
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }

  struct Row {
    std::string genome;
    ProxyVector pv;
    std::string error;
  };
  std::vector<Row> rows(lines.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> hard_fail{false};

  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= lines.size()) return;
      Row& r = rows[i];
      r.genome = lines[i];
      try {
        const Genome g = parse_genome(lines[i]);
        r.pv = profile(g, cfg, a.with_ntk);
      } catch (const std::exception& e) {
        r.error = e.what();
        for (char& c : r.error)
          if (c == ',' || c == '\n') c = ';';
        if (!a.keep_going) hard_fail = true;
      }
    }
  };

  const int jobs = std::max(1, a.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::ofstream out(a.out_csv);
  if (!out) {
    std::cerr << "cannot open " << a.out_csv << " for writing\n";
    return kExitData;
  }
  out << "genome,zen,macs,params,ntk_cond,diversity,error\n";
  for (const Row& r : rows) {
    out << r.genome << ",";
    if (r.error.empty()) {
      out << fmt_double(r.pv.zen) << "," << r.pv.macs << "," << r.pv.params << ",";
      if (r.pv.ntk_cond) out << fmt_double(*r.pv.ntk_cond);
      out << "," << fmt_double(r.pv.diversity) << ",";
    } else {
      out << ",,,,," << r.error;
    }
    out << "\n";
  }

  echo_config(a.out_csv + ".config",
              {{"command", "profile"},
               {"genomes", a.genomes_path},
               {"seed", std::to_string(a.seed)},
               {"res", a.res},
               {"batch", std::to_string(a.batch)},
               {"zen_seeds", std::to_string(a.zen_seeds)},
               {"jobs", std::to_string(jobs)},
               {"keep_going", a.keep_going ? "1" : "0"},
               {"with_ntk", a.with_ntk ? "1" : "0"}});

  if (hard_fail) {
    std::cerr << "profiling failed for at least one genome (use --keep-going "
                 "to continue past failures)\n";
    return kExitData;
  }
  return kExitOk;
}

// --- search -------------------------------------------------------------------

SearchConfig parse_search_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  SearchConfig cfg;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "population") cfg.population = std::stoi(val);
      else if (key == "iterations") cfg.iterations = std::stoi(val);
      else if (key == "max_params") cfg.max_params = static_cast<unsigned long long>(std::stod(val));
      else if (key == "w_zen") cfg.weights[0] = std::stod(val);
      else if (key == "w_macs") cfg.weights[1] = std::stod(val);
      else if (key == "w_ntk") cfg.weights[2] = std::stod(val);
      else if (key == "alpha") cfg.diversity_alpha = std::stod(val);
      else if (key == "encoding_frozen") cfg.encoding_frozen = std::stoi(val) != 0;
      else if (key == "encoding") {
        const auto e = encoding_from_name(val);
        if (!e) throw IoError("unknown encoding " + val);
        cfg.frozen_encoding = *e;
      } else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "batch") cfg.score.batch = std::stoi(val);
      else if (key == "height") cfg.score.height = std::stoi(val);
      else if (key == "width") cfg.score.width = std::stoi(val);
      else if (key == "noise_alpha") cfg.score.noise_alpha = std::stod(val);
      else if (key == "graph_seed") cfg.score.graph_seed = std::stoull(val);
      else if (key == "zen_seeds") {
        cfg.score.seeds.clear();
        const int k = std::stoi(val);
        for (int i = 1; i <= k; ++i)
          cfg.score.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
      } else
        throw IoError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                      key + "'");
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad value '" + val +
                    "' for " + key);
    }
  }
  return cfg;
}

int run_search(const std::string& config_path, const std::string& out_dir) {
  const SearchConfig cfg = parse_search_config(config_path);
  const SearchResult res = evolve(cfg);
  write_search_artifacts(res, cfg, out_dir);

  {
    std::ofstream out(fs::path(out_dir) / "top_k.txt");
    for (const Genome& g : top_k(res, std::min<int>(5, cfg.population)))
      out << serialize_genome(g) << "\n";
  }
  echo_config((fs::path(out_dir) / "run_config.txt").string(),
              {{"command", "search"},
               {"population", std::to_string(cfg.population)},
               {"iterations", std::to_string(cfg.iterations)},
               {"max_params", std::to_string(cfg.max_params)},
               {"w_zen", fmt_double(cfg.weights[0])},
               {"w_macs", fmt_double(cfg.weights[1])},
               {"w_ntk", fmt_double(cfg.weights[2])},
               {"alpha", fmt_double(cfg.diversity_alpha)},
               {"encoding_frozen", cfg.encoding_frozen ? "1" : "0"},
               {"encoding", encoding_name(cfg.frozen_encoding)},
               {"seed", std::to_string(cfg.seed)},
               {"batch", std::to_string(cfg.score.batch)},
               {"height", std::to_string(cfg.score.height)},
               {"width", std::to_string(cfg.score.width)},
               {"graph_seed", std::to_string(cfg.score.graph_seed)},
               {"noise_alpha", fmt_double(cfg.score.noise_alpha)}});
  std::cout << "search finished; artifacts in " << out_dir << "\n";
  return kExitOk;
}

// --- sweeps / correlation -------------------------------------------------------

int run_sweep(const std::string& bench_path, double step,
              const std::string& out_csv) {
  const BenchmarkTable table = read_benchmark(bench_path);
  const SweepResult res = weight_sweep(table, step);
  std::ofstream out(out_csv);
  if (!out) {
    std::cerr << "cannot open " << out_csv << " for writing\n";
    return kExitData;
  }
  out << "w_zen,w_macs,tau,rho,argmax\n";
  for (size_t i = 0; i < res.rows.size(); ++i) {
    const SweepRow& r = res.rows[i];
    out << fmt_double(r.w_zen) << "," << fmt_double(r.w_macs) << ","
        << fmt_double(r.tau) << "," << fmt_double(r.rho) << ","
        << (i == res.argmax ? 1 : 0) << "\n";
  }
  echo_config(out_csv + ".config", {{"command", "sweep-weights"},
                                    {"benchmark", bench_path},
                                    {"step", fmt_double(step)}});
  return kExitOk;
}

int run_correlate(const std::string& bench_path, const std::string& out_dir) {
  const BenchmarkTable table = read_benchmark(bench_path);
  const ProxyReport rep = proxy_report(table);
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "correlations.csv");
    out << proxy_report_csv(rep);
  }
  {
    std::ofstream out(fs::path(out_dir) / "correlations.txt");
    out << proxy_report_text(rep);
  }
  echo_config((fs::path(out_dir) / "run_config.txt").string(),
              {{"command", "correlate"}, {"benchmark", bench_path}});
  std::cout << proxy_report_text(rep);
  return kExitOk;
}

int run_synth(int n, double w_zen, double noise, std::uint64_t seed,
              const std::string& out_csv) {
  const BenchmarkTable table = make_planted_table(n, w_zen, noise, seed);
  write_benchmark(table, out_csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot NAS toolkit for event-camera detection backbones"};
  app.require_subcommand(1);

  EncodeArgs enc;
  CLI::App* c_enc = app.add_subcommand("encode", "encode an event stream into dense tensors");
  c_enc->add_option("--input", enc.input, "event file (.csv or .evt)")->required();
  c_enc->add_option("--format", enc.format, "vtei|mdes|shist|taf");
  c_enc->add_option("--bins", enc.bins, "temporal bins / FIFO depth");
  c_enc->add_option("--window-us", enc.window_us, "window length in microseconds");
  c_enc->add_option("--width", enc.width, "sensor width");
  c_enc->add_option("--height", enc.height, "sensor height");
  c_enc->add_option("--out", enc.out_dir, "output directory")->required();

  ProfileArgs prof;
  CLI::App* c_prof = app.add_subcommand("profile", "score genomes with the proxy suite");
  c_prof->add_option("--genomes", prof.genomes_path, "newline-delimited genome strings")->required();
  c_prof->add_option("--seed", prof.seed, "base seed (weights and inputs)");
  c_prof->add_option("--res", prof.res, "scoring resolution HxW");
  c_prof->add_option("--out", prof.out_csv, "output CSV")->required();
  c_prof->add_option("--jobs", prof.jobs, "parallel scoring threads");
  c_prof->add_flag("--keep-going", prof.keep_going, "record per-genome failures and continue");
  c_prof->add_flag("--ntk", prof.with_ntk, "also compute the NTK condition number (small graphs)");
  c_prof->add_option("--batch", prof.batch, "scoring batch size");
  c_prof->add_option("--zen-seeds", prof.zen_seeds, "number of averaged zen seeds");

  std::string search_cfg, search_out;
  CLI::App* c_search = app.add_subcommand("search", "run the evolutionary architecture search");
  c_search->add_option("--config", search_cfg, "key=value run configuration")->required();
  c_search->add_option("--out", search_out, "output directory")->required();

  std::string sweep_bench, sweep_out;
  double sweep_step = 0.1;
  CLI::App* c_sweep = app.add_subcommand("sweep-weights", "zen/macs weighting sweep against recorded accuracy");
  c_sweep->add_option("--benchmark", sweep_bench, "benchmark CSV")->required();
  c_sweep->add_option("--step", sweep_step, "weight grid step (must divide 1)");
  c_sweep->add_option("--out", sweep_out, "output CSV")->required();

  std::string corr_bench, corr_out;
  CLI::App* c_corr = app.add_subcommand("correlate", "per-proxy rank correlations by encoding");
  c_corr->add_option("--benchmark", corr_bench, "benchmark CSV")->required();
  c_corr->add_option("--out", corr_out, "output directory")->required();

  int synth_n = 250;
  double synth_w = 0.6, synth_noise = 0.02;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  CLI::App* c_synth = app.add_subcommand("synth-benchmark", "generate a planted-signal benchmark table");
  c_synth->add_option("--n", synth_n, "rows");
  c_synth->add_option("--w-zen", synth_w, "planted zen weight");
  c_synth->add_option("--noise", synth_noise, "gaussian noise sigma");
  c_synth->add_option("--seed", synth_seed, "seed");
  c_synth->add_option("--out", synth_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_enc->parsed()) return run_encode(enc);
    if (c_prof->parsed()) return run_profile(prof);
    if (c_search->parsed()) return run_search(search_cfg, search_out);
    if (c_sweep->parsed()) return run_sweep(sweep_bench, sweep_step, sweep_out);
    if (c_corr->parsed()) return run_correlate(corr_bench, corr_out);
    if (c_synth->parsed()) return run_synth(synth_n, synth_w, synth_noise, synth_seed, synth_out);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
