#include "evnas/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "evnas/genome.hpp"

namespace evnas {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Merge sort counting inversions (discordant pairs after sorting by x).
unsigned long long sort_count_inversions(std::vector<double>& v,
                                         std::vector<double>& tmp, size_t lo,
                                         size_t hi) {
  if (hi - lo < 2) return 0;
  const size_t mid = lo + (hi - lo) / 2;
  unsigned long long inv = sort_count_inversions(v, tmp, lo, mid) +
                           sort_count_inversions(v, tmp, mid, hi);
  size_t a = lo, b = mid, o = lo;
  while (a < mid && b < hi) {
    if (v[b] < v[a]) {
      inv += mid - a;
      tmp[o++] = v[b++];
    } else {
      tmp[o++] = v[a++];
    }
  }
  while (a < mid) tmp[o++] = v[a++];
  while (b < hi) tmp[o++] = v[b++];
  std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(hi),
            v.begin() + static_cast<long>(lo));
  return inv;
}

unsigned long long tie_pairs(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  unsigned long long total = 0;
  size_t i = 0;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const unsigned long long t = j - i;
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

}  // namespace

// Knight's O(n log n) formulation: sort by (x, y), count joint ties, then
// count discordant swaps on y.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw TensorError("kendall_tau: length mismatch");
  const size_t n = x.size();
  if (n < 2) throw TensorError("kendall_tau: needs at least two observations");

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  const unsigned long long n0 =
      static_cast<unsigned long long>(n) * (n - 1) / 2;
  const unsigned long long n1 = tie_pairs(x);
  const unsigned long long n2 = tie_pairs(y);
  if (n1 == n0 || n2 == n0) return kNan;  // a fully tied vector

  // Joint ties (same x and same y).
  unsigned long long n3 = 0;
  {
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j < n && x[idx[j]] == x[idx[i]] && y[idx[j]] == y[idx[i]]) ++j;
      const unsigned long long t = j - i;
      n3 += t * (t - 1) / 2;
      i = j;
    }
  }

  std::vector<double> ys(n);
  for (size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  std::vector<double> tmp(n);
  const unsigned long long swaps = sort_count_inversions(ys, tmp, 0, n);

  // Concordant minus discordant: total pairs minus x-ties minus y-ties plus
  // joint ties gives concordant+discordant; swaps counts the discordant
  // ones (ties sort stably and never swap).
  const long long cd =
      static_cast<long long>(n0 - n1 - n2 + n3);
  const long long num = cd - 2 * static_cast<long long>(swaps);
  const double den = std::sqrt(static_cast<double>(n0 - n1)) *
                     std::sqrt(static_cast<double>(n0 - n2));
  return static_cast<double>(num) / den;
}

namespace {

std::vector<double> midranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && v[idx[j]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // average of i+1..j
    for (size_t k = i; k < j; ++k) rank[idx[k]] = r;
    i = j;
  }
  return rank;
}

}  // namespace

double spearman_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw TensorError("spearman_r: length mismatch");
  const size_t n = x.size();
  if (n < 2) throw TensorError("spearman_r: needs at least two observations");
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double a = rx[i] - mx, b = ry[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) return kNan;
  return sxy / std::sqrt(sxx * syy);
}

// --- benchmark table I/O -----------------------------------------------------

namespace {

constexpr char kBenchHeader[] = "genome,encoding,zen,macs,params,ntk_cond,map50";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

double parse_field_double(const std::string& s, const std::string& ctx) {
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw IoError(ctx + ": unparsable number '" + s + "'");
  }
  if (pos != s.size()) throw IoError(ctx + ": unparsable number '" + s + "'");
  return v;
}

}  // namespace

BenchmarkTable read_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kBenchHeader)
    throw IoError(path + ":1: bad header, expected '" + std::string(kBenchHeader) + "'");

  BenchmarkTable table;
  std::set<std::pair<std::string, int>> seen;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string ctx = path + ":" + std::to_string(lineno);
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 7) throw IoError(ctx + ": expected 7 fields, got " +
                                     std::to_string(f.size()));
    BenchmarkRow row;
    row.genome = f[0];
    parse_genome(row.genome);  // must be a valid genome string
    const auto enc = encoding_from_name(f[1]);
    if (!enc) throw IoError(ctx + ": unknown encoding '" + f[1] + "'");
    row.encoding = *enc;
    row.zen = parse_field_double(f[2], ctx);
    row.macs = parse_field_double(f[3], ctx);
    row.params = parse_field_double(f[4], ctx);
    if (!f[5].empty()) row.ntk_cond = parse_field_double(f[5], ctx);
    row.map50 = parse_field_double(f[6], ctx);
    if (row.map50 < 0.0 || row.map50 > 1.0)
      throw IoError(ctx + ": map50 outside [0,1]");
    if (!seen.insert({row.genome, static_cast<int>(row.encoding)}).second)
      throw IoError(ctx + ": duplicate (genome, encoding) key");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_benchmark(const BenchmarkTable& table, const std::string& path) {
  std::set<std::pair<std::string, int>> seen;
  for (const BenchmarkRow& r : table.rows)
    if (!seen.insert({r.genome, static_cast<int>(r.encoding)}).second)
      throw IoError("write_benchmark: duplicate (genome, encoding) key: " + r.genome);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kBenchHeader << "\n";
  for (const BenchmarkRow& r : table.rows) {
    out << r.genome << "," << encoding_name(r.encoding) << "," << fmt_double(r.zen)
        << "," << fmt_double(r.macs) << "," << fmt_double(r.params) << ",";
    if (r.ntk_cond) out << fmt_double(*r.ntk_cond);
    out << "," << fmt_double(r.map50) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

// --- sweeps and reports ------------------------------------------------------

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

SweepResult weight_sweep(const BenchmarkTable& table, double step) {
  if (table.rows.empty()) throw TensorError("weight_sweep: empty table");
  if (step <= 0.0 || step > 1.0) throw TensorError("weight_sweep: bad step");
  const long long k = std::llround(1.0 / step);
  if (std::abs(k * step - 1.0) > 1e-9)
    throw TensorError("weight_sweep: step must divide 1");

  std::vector<double> zen, macs, map;
  for (const BenchmarkRow& r : table.rows) {
    zen.push_back(r.zen);
    macs.push_back(r.macs);
    map.push_back(r.map50);
  }
  const std::vector<double> zn = minmax_norm(zen);
  const std::vector<double> mn = minmax_norm(macs);

  SweepResult res;
  for (long long i = 0; i <= k; ++i) {
    const double w = static_cast<double>(i) / static_cast<double>(k);
    std::vector<double> combined(table.rows.size());
    for (size_t r = 0; r < combined.size(); ++r)
      combined[r] = w * zn[r] + (1.0 - w) * mn[r];
    SweepRow row;
    row.w_zen = w;
    row.w_macs = 1.0 - w;
    row.tau = kendall_tau(combined, map);
    row.rho = spearman_r(combined, map);
    res.rows.push_back(row);
  }
  res.argmax = 0;
  for (size_t i = 1; i < res.rows.size(); ++i)
    if (res.rows[i].tau > res.rows[res.argmax].tau) res.argmax = i;
  return res;
}

ProxyReport proxy_report(const BenchmarkTable& table) {
  ProxyReport rep;
  struct Extractor {
    const char* name;
    double (*get)(const BenchmarkRow&);
    bool optional_field;
  };
  static const Extractor kProxies[] = {
      {"zen", [](const BenchmarkRow& r) { return r.zen; }, false},
      {"macs", [](const BenchmarkRow& r) { return r.macs; }, false},
      {"params", [](const BenchmarkRow& r) { return r.params; }, false},
      {"ntk_cond", [](const BenchmarkRow& r) { return r.ntk_cond.value_or(0.0); }, true},
  };

  std::vector<std::pair<std::string, std::vector<const BenchmarkRow*>>> groups;
  groups.emplace_back("overall", std::vector<const BenchmarkRow*>{});
  for (const BenchmarkRow& r : table.rows) groups[0].second.push_back(&r);
  for (Encoding e : {Encoding::VTEI, Encoding::MDES, Encoding::SHIST, Encoding::TAF}) {
    std::vector<const BenchmarkRow*> rows;
    for (const BenchmarkRow& r : table.rows)
      if (r.encoding == e) rows.push_back(&r);
    if (!rows.empty()) groups.emplace_back(encoding_name(e), std::move(rows));
  }

  for (const auto& [gname, rows] : groups) {
    for (const Extractor& px : kProxies) {
      ProxyReportCell cell;
      cell.proxy = px.name;
      cell.group = gname;
      std::vector<double> v, m;
      for (const BenchmarkRow* r : rows) {
        if (px.optional_field && !r->ntk_cond) continue;
        v.push_back(px.get(*r));
        m.push_back(r->map50);
      }
      cell.n = static_cast<int>(v.size());
      if (v.size() < 2) {
        cell.degenerate = true;
      } else {
        cell.tau = kendall_tau(v, m);
        cell.rho = spearman_r(v, m);
        if (std::isnan(cell.tau) || std::isnan(cell.rho)) cell.degenerate = true;
      }
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

std::string proxy_report_csv(const ProxyReport& report) {
  std::ostringstream os;
  os << "proxy,group,n,tau,rho,degenerate\n";
  for (const ProxyReportCell& c : report.cells) {
    os << c.proxy << "," << c.group << "," << c.n << ",";
    if (c.degenerate)
      os << ",,1\n";
    else
      os << fmt_double(c.tau) << "," << fmt_double(c.rho) << ",0\n";
  }
  return os.str();
}

std::string proxy_report_text(const ProxyReport& report) {
  std::ostringstream os;
  os << "proxy      group      n     tau      rho\n";
  for (const ProxyReportCell& c : report.cells) {
    char buf[96];
    if (c.degenerate)
      std::snprintf(buf, sizeof buf, "%-10s %-8s %4d   (degenerate)\n",
                    c.proxy.c_str(), c.group.c_str(), c.n);
    else
      std::snprintf(buf, sizeof buf, "%-10s %-8s %4d %+7.3f %+7.3f\n",
                    c.proxy.c_str(), c.group.c_str(), c.n, c.tau, c.rho);
    os << buf;
  }
  return os.str();
}

BenchmarkTable make_planted_table(int n, double w_zen, double noise_sigma,
                                  std::uint64_t seed) {
  if (n < 2) throw TensorError("make_planted_table: n must be >= 2");
  Rng rng(derive_seed(seed, 0x91a));
  BenchmarkTable table;
  std::set<std::string> used;
  std::vector<double> zen(static_cast<size_t>(n)), macs(static_cast<size_t>(n));

  while (static_cast<int>(table.rows.size()) < n) {
    Genome g = sample_genome(rng);
    const std::string s = serialize_genome(g);
    if (!used.insert(s).second) continue;  // keep (genome, encoding) keys unique
    BenchmarkRow row;
    row.genome = s;
    row.encoding = g.encoding;
    row.zen = rng.uniform() * 8.0 + 2.0;
    row.macs = std::floor(rng.uniform() * 4.0e8 + 1.0e7);
    row.params = std::floor(rng.uniform() * 9.0e6 + 5.0e5);
    const size_t i = table.rows.size();
    zen[i] = row.zen;
    macs[i] = row.macs;
    table.rows.push_back(std::move(row));
  }

  const std::vector<double> zn = minmax_norm(zen);
  const std::vector<double> mn = minmax_norm(macs);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const double combined = w_zen * zn[i] + (1.0 - w_zen) * mn[i];
    double m = 0.25 + 0.5 * combined + noise_sigma * rng.normal();
    m = std::clamp(m, 0.0, 1.0);
    table.rows[i].map50 = m;
  }
  return table;
}

}  // namespace evnas
