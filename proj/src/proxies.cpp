#include "evnas/proxies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evnas {

void ScoreConfig::validate() const {
  if (batch < 1) throw TensorError("ScoreConfig: batch must be positive");
  if (height % 32 != 0 || width % 32 != 0 || height <= 0 || width <= 0)
    throw TensorError("ScoreConfig: height/width must be positive multiples of 32");
  if (noise_alpha <= 0) throw TensorError("ScoreConfig: noise_alpha must be positive");
  if (seeds.empty()) throw TensorError("ScoreConfig: needs at least one seed");
  if (ntk_probe_count < 2) throw TensorError("ScoreConfig: ntk_probe_count must be >= 2");
  if (ntk_fd_step <= 0) throw TensorError("ScoreConfig: ntk_fd_step must be positive");
}

ZenResult zen_score_fn(const ScoreForward& f, const ScoreConfig& cfg) {
  cfg.validate();
  ZenResult res;
  double acc = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    Rng rng(derive_seed(seed, 0x5e9));
    Tensor x = rng.normal_tensor({cfg.batch, f.in_channels, cfg.height, cfg.width});
    Tensor xp = x;
    for (size_t i = 0; i < xp.size(); ++i)
      xp.data[i] += static_cast<float>(cfg.noise_alpha) * rng.normal_f();

    auto [y0, sigmas] = f.run(x);
    auto [y1, sigmas_unused] = f.run(xp);
    (void)sigmas_unused;

    // Mean over the batch of per-sample Frobenius norms of the difference.
    const size_t per = y0.size() / static_cast<size_t>(cfg.batch);
    double delta = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      double s = 0.0;
      const float* a = y0.data.data() + static_cast<size_t>(b) * per;
      const float* c = y1.data.data() + static_cast<size_t>(b) * per;
      for (size_t i = 0; i < per; ++i) {
        const double d = static_cast<double>(a[i]) - c[i];
        s += d * d;
      }
      delta += std::sqrt(s);
    }
    delta /= cfg.batch;

    double score;
    if (delta == 0.0) {
      res.degenerate = true;
      score = -std::numeric_limits<double>::infinity();
    } else {
      score = std::log(delta);
    }
    for (float s : sigmas) score += s;
    acc += score;
  }
  res.score = acc / static_cast<double>(cfg.seeds.size());
  return res;
}

ZenResult zen_score(const ComputeGraph& graph, const ScoreConfig& cfg) {
  ScoreForward f;
  f.in_channels = graph.in_channels;
  f.run = [&graph](const Tensor& x) {
    ForwardResult r = forward(graph, x);
    return std::make_pair(std::move(r.y), std::move(r.bn_log_sigma_mean));
  };
  return zen_score_fn(f, cfg);
}

// --- NTK ---------------------------------------------------------------------

namespace {

// Cyclic Jacobi eigenvalue iteration for small symmetric matrices.
std::vector<double> symmetric_eigenvalues(std::vector<double> m, int n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += m[i * n + j] * m[i * n + j];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = m[p * n + p], aqq = m[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = m[k * n + p], akq = m[k * n + q];
          m[k * n + p] = c * akp - s * akq;
          m[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = m[p * n + k], aqk = m[q * n + k];
          m[p * n + k] = c * apk - s * aqk;
          m[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = m[i * n + i];
  std::sort(eig.begin(), eig.end());
  return eig;
}

}  // namespace

NtkResult ntk_cond_fn(
    const std::function<std::vector<double>(const std::vector<float>&)>& eval,
    const std::vector<float>& params0, double fd_step, bool reciprocal) {
  const size_t p = params0.size();
  const std::vector<double> base = eval(params0);
  const int m = static_cast<int>(base.size());
  if (m < 2) throw TensorError("ntk_cond_fn: needs at least two probes");

  // Jacobian rows per probe via central differences over every parameter.
  std::vector<double> jac(static_cast<size_t>(m) * p);
  std::vector<float> work = params0;
  for (size_t j = 0; j < p; ++j) {
    const float orig = work[j];
    work[j] = orig + static_cast<float>(fd_step);
    const std::vector<double> up = eval(work);
    work[j] = orig - static_cast<float>(fd_step);
    const std::vector<double> dn = eval(work);
    work[j] = orig;
    for (int i = 0; i < m; ++i)
      jac[static_cast<size_t>(i) * p + j] = (up[static_cast<size_t>(i)] -
                                             dn[static_cast<size_t>(i)]) /
                                            (2.0 * fd_step);
  }

  std::vector<double> gram(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < p; ++k)
        s += jac[static_cast<size_t>(i) * p + k] * jac[static_cast<size_t>(j) * p + k];
      gram[static_cast<size_t>(i) * m + j] = s;
    }

  NtkResult res;
  res.eigenvalues = symmetric_eigenvalues(std::move(gram), m);
  const double lo = res.eigenvalues.front();
  const double hi = res.eigenvalues.back();
  res.value = reciprocal ? hi / lo : lo / hi;
  return res;
}

namespace {

// Flattened view of every weight tensor in graph order.
std::vector<Tensor*> graph_param_tensors(ComputeGraph& g) {
  std::vector<Tensor*> out;
  auto push = [&out](Tensor& t) { out.push_back(&t); };
  for (LayerRecord& rec : g.layers) {
    std::visit(
        [&](auto& w) {
          using T = std::decay_t<decltype(w)>;
          if constexpr (std::is_same_v<T, StemW>) {
            push(w.conv.w);
            push(w.conv.b);
          } else if constexpr (std::is_same_v<T, C2fW>) {
            push(w.cv1.w);
            push(w.cv1.b);
            for (auto& bp : w.bottlenecks) {
              push(bp[0].w);
              push(bp[0].b);
              push(bp[1].w);
              push(bp[1].b);
            }
            push(w.cv2.w);
            push(w.cv2.b);
          } else if constexpr (std::is_same_v<T, MaxViTW>) {
            for (AttentionUnitW* u : {&w.window_attn, &w.grid_attn}) {
              push(u->qkv_w);
              push(u->qkv_b);
              push(u->proj_w);
              push(u->proj_b);
              push(u->mlp1_w);
              push(u->mlp1_b);
              push(u->mlp2_w);
              push(u->mlp2_b);
            }
          } else if constexpr (std::is_same_v<T, MambaW>) {
            for (MambaGroupW& gw : w.groups) {
              push(gw.in_w);
              push(gw.in_b);
              push(gw.dw_w);
              push(gw.dw_b);
              push(gw.a);
              push(gw.b);
              push(gw.c);
              push(gw.delta);
              push(gw.out_w);
              push(gw.out_b);
            }
          } else if constexpr (std::is_same_v<T, WaveMLPW>) {
            for (WaveRepeatW& rw : w.repeats) {
              push(rw.phase_h);
              push(rw.phase_w);
              push(rw.mixh_wr);
              push(rw.mixh_wi);
              push(rw.mixh_b);
              push(rw.mixw_wr);
              push(rw.mixw_wi);
              push(rw.mixw_b);
              push(rw.fcc_w);
              push(rw.fcc_b);
              push(rw.mlp1_w);
              push(rw.mlp1_b);
              push(rw.mlp2_w);
              push(rw.mlp2_b);
            }
          } else if constexpr (std::is_same_v<T, ConvLSTMW>) {
            push(w.dw_w);
            push(w.dw_b);
            push(w.pw_w);
            push(w.pw_b);
          } else if constexpr (std::is_same_v<T, SPPFW>) {
            push(w.cv1.w);
            push(w.cv1.b);
            push(w.cv2.w);
            push(w.cv2.b);
          }
        },
        rec.weights);
  }
  return out;
}

}  // namespace

std::optional<NtkResult> ntk_cond(const ComputeGraph& graph,
                                  const ScoreConfig& cfg) {
  cfg.validate();
  ComputeGraph work = graph;  // perturbable copy
  std::vector<Tensor*> tensors = graph_param_tensors(work);
  unsigned long long pcount = 0;
  for (const Tensor* t : tensors) pcount += t->size();
  if (pcount > cfg.ntk_param_budget) return std::nullopt;

  std::vector<float> params0;
  params0.reserve(pcount);
  for (const Tensor* t : tensors)
    params0.insert(params0.end(), t->data.begin(), t->data.end());

  // Fixed probe batch.
  Rng rng(derive_seed(cfg.graph_seed, 0x47c));
  Tensor probes = rng.normal_tensor(
      {cfg.ntk_probe_count, graph.in_channels, cfg.height, cfg.width});

  auto eval = [&](const std::vector<float>& params) {
    size_t off = 0;
    for (Tensor* t : tensors) {
      std::copy(params.begin() + static_cast<long>(off),
                params.begin() + static_cast<long>(off + t->size()),
                t->data.begin());
      off += t->size();
    }
    const ForwardResult r = forward(work, probes);
    const Tensor pooled = avgpool_global(r.y);
    // Scalar per probe: mean over channels of the pooled features.
    std::vector<double> out(static_cast<size_t>(cfg.ntk_probe_count), 0.0);
    const int c = pooled.dim(1);
    for (int b = 0; b < cfg.ntk_probe_count; ++b) {
      double s = 0.0;
      for (int i = 0; i < c; ++i)
        s += pooled.data[static_cast<size_t>(b) * c + i];
      out[static_cast<size_t>(b)] = s / c;
    }
    return out;
  };

  return ntk_cond_fn(eval, params0, cfg.ntk_fd_step, cfg.ntk_reciprocal);
}

double diversity_from_counts(const std::array<int, 4>& counts) {
  int pair_sum = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) pair_sum += std::abs(counts[i] - counts[j]);
  constexpr double kMaxPairSum = 12.0;  // attained by [4,0,0,0]
  return 1.0 - static_cast<double>(pair_sum) / kMaxPairSum;
}

double diversity_index(const Genome& g) {
  std::array<int, 4> counts{};
  for (const LayerGene& gene : g.layers)
    ++counts[static_cast<size_t>(gene.block)];
  return diversity_from_counts(counts);
}

ProxyVector profile(const Genome& g, const ScoreConfig& cfg, bool with_ntk) {
  cfg.validate();
  ProxyVector pv;
  const ComputeGraph graph = build_graph(g, cfg.height, cfg.width, cfg.graph_seed);
  const ZenResult zen = zen_score(graph, cfg);
  pv.zen = zen.score;
  pv.zen_degenerate = zen.degenerate;
  const Cost c = cost_full_model(g, cfg.height, cfg.width);
  pv.params = c.params;
  pv.macs = c.macs;
  pv.diversity = diversity_index(g);
  if (with_ntk) {
    const std::optional<NtkResult> ntk = ntk_cond(graph, cfg);
    if (ntk) pv.ntk_cond = ntk->value;
  }
  return pv;
}

}  // namespace evnas
