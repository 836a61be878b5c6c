#include "evnas/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evnas {

namespace {

constexpr int kMaxViTWindow = 4;
constexpr int kMambaWindow = 8;
constexpr int kSsmStateDim = 16;
constexpr int kMlpRatio = 4;

int maxvit_heads(int c) {
  int h = std::max(1, c / 32);
  while (c % h != 0) --h;
  return h;
}

int mamba_groups(int c, int heads) { return std::min(std::max(1, heads), c); }

int mamba_group_channels(int c, int groups, int g) {
  // Even split, earlier groups take the remainder.
  return c / groups + (g < c % groups ? 1 : 0);
}

int padded(int v, int p) { return (v + p - 1) / p * p; }

// --- weight construction -----------------------------------------------------

Tensor gauss(Rng& rng, std::vector<int> shape, double fan_in) {
  return rng.normal_tensor(std::move(shape),
                           static_cast<float>(1.0 / std::sqrt(fan_in)));
}

Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0f); }

ConvUnitW make_conv_unit(Rng& rng, int cin, int cout, int k) {
  ConvUnitW u;
  u.w = gauss(rng, {cout, cin, k, k}, static_cast<double>(cin) * k * k);
  u.b = zeros({cout});
  return u;
}

AttentionUnitW make_attention_unit(Rng& rng, int c) {
  AttentionUnitW u;
  u.qkv_w = gauss(rng, {3 * c, c}, c);
  u.qkv_b = zeros({3 * c});
  u.proj_w = gauss(rng, {c, c}, c);
  u.proj_b = zeros({c});
  u.mlp1_w = gauss(rng, {kMlpRatio * c, c}, c);
  u.mlp1_b = zeros({kMlpRatio * c});
  u.mlp2_w = gauss(rng, {c, kMlpRatio * c}, kMlpRatio * c);
  u.mlp2_b = zeros({c});
  return u;
}

BlockWeights make_weights(Rng& rng, const BlockSpec& s) {
  switch (s.kind) {
    case BlockKind::Stem:
    case BlockKind::Downsample:
      return StemW{make_conv_unit(rng, s.cin, s.cout, 3)};
    case BlockKind::C2f: {
      C2fW w;
      const int h = s.cout / 2;
      w.cv1 = make_conv_unit(rng, s.cin, s.cout, 1);
      for (int i = 0; i < s.repeats; ++i)
        w.bottlenecks.push_back(
            {make_conv_unit(rng, h, h, 3), make_conv_unit(rng, h, h, 3)});
      w.cv2 = make_conv_unit(rng, (2 + s.repeats) * h, s.cout, 1);
      return w;
    }
    case BlockKind::MaxViT: {
      MaxViTW w;
      w.window_attn = make_attention_unit(rng, s.cout);
      w.grid_attn = make_attention_unit(rng, s.cout);
      return w;
    }
    case BlockKind::Mamba: {
      MambaW w;
      const int groups = mamba_groups(s.cout, s.heads);
      for (int g = 0; g < groups; ++g) {
        const int cg = mamba_group_channels(s.cout, groups, g);
        const int di = 2 * cg;
        MambaGroupW gw;
        gw.in_w = gauss(rng, {2 * di, cg}, cg);
        gw.in_b = zeros({2 * di});
        gw.dw_w = gauss(rng, {di, 1, 3}, 3);
        gw.dw_b = zeros({di});
        // A negative for a stable discretized system.
        gw.a = Tensor({di, kSsmStateDim}, 0.0f);
        for (float& v : gw.a.data)
          v = -std::exp(static_cast<float>(rng.uniform()));
        gw.b = gauss(rng, {di, kSsmStateDim}, 1.0);
        gw.c = gauss(rng, {di, kSsmStateDim}, kSsmStateDim);
        gw.delta = gauss(rng, {di}, 1.0);
        gw.out_w = gauss(rng, {cg, di}, di);
        gw.out_b = zeros({cg});
        w.groups.push_back(std::move(gw));
      }
      return w;
    }
    case BlockKind::WaveMLP: {
      WaveMLPW w;
      const int c = s.cout;
      for (int r = 0; r < s.repeats; ++r) {
        WaveRepeatW rw;
        rw.phase_h = gauss(rng, {c}, 1.0);
        rw.phase_w = gauss(rng, {c}, 1.0);
        rw.mixh_wr = gauss(rng, {c, 5}, 10.0);
        rw.mixh_wi = gauss(rng, {c, 5}, 10.0);
        rw.mixh_b = zeros({c});
        rw.mixw_wr = gauss(rng, {c, 5}, 10.0);
        rw.mixw_wi = gauss(rng, {c, 5}, 10.0);
        rw.mixw_b = zeros({c});
        rw.fcc_w = gauss(rng, {c, c, 1, 1}, c);
        rw.fcc_b = zeros({c});
        rw.mlp1_w = gauss(rng, {kMlpRatio * c, c, 1, 1}, c);
        rw.mlp1_b = zeros({kMlpRatio * c});
        rw.mlp2_w = gauss(rng, {c, kMlpRatio * c, 1, 1}, kMlpRatio * c);
        rw.mlp2_b = zeros({c});
        w.repeats.push_back(std::move(rw));
      }
      return w;
    }
    case BlockKind::ConvLSTM: {
      ConvLSTMW w;
      const int c = s.cout;
      w.dw_w = gauss(rng, {2 * c, 1, 3, 3}, 9.0);
      w.dw_b = zeros({2 * c});
      w.pw_w = gauss(rng, {4 * c, 2 * c, 1, 1}, 2.0 * c);
      w.pw_b = zeros({4 * c});
      return w;
    }
    case BlockKind::SPPF: {
      SPPFW w;
      w.cv1 = make_conv_unit(rng, s.cout, s.cout / 2, 1);
      w.cv2 = make_conv_unit(rng, 2 * s.cout, s.cout, 1);
      return w;
    }
  }
  throw TensorError("make_weights: unknown block kind");
}

// --- forward helpers ----------------------------------------------------------

struct BnCollector {
  std::vector<float>* sink = nullptr;
  void note(const std::vector<float>& sigma) {
    if (!sink) return;
    double s = 0.0;
    for (float v : sigma) s += std::log(static_cast<double>(v));
    sink->push_back(static_cast<float>(s / static_cast<double>(sigma.size())));
  }
};

Tensor conv_unit(const Tensor& x, const ConvUnitW& u, int stride, int pad,
                 BnCollector& bn) {
  Tensor y = conv2d(x, u.w, &u.b, stride, pad);
  BatchNormResult r = batchnorm(y);
  bn.note(r.sigma);
  return silu(r.y);
}

enum class Partition { Window, Grid };

// Zero-pads H,W to multiples of p and gathers sequences of p*p tokens.
// Window mode takes contiguous p x p tiles; grid mode takes tokens strided
// by (Hp/p, Wp/p). Returns [B*S, p*p, C].
Tensor gather_tokens(const Tensor& x, int p, Partition mode) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Hp = padded(H, p), Wp = padded(W, p);
  const int nr = Hp / p, nc = Wp / p;
  const int S = nr * nc, L = p * p;
  Tensor out({B * S, L, C}, 0.0f);
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < nr; ++r)
      for (int c = 0; c < nc; ++c) {
        const int seq = (b * nr + r) * nc + c;
        for (int u = 0; u < p; ++u)
          for (int v = 0; v < p; ++v) {
            const int py = mode == Partition::Window ? r * p + u : u * nr + r;
            const int px = mode == Partition::Window ? c * p + v : v * nc + c;
            if (py >= H || px >= W) continue;  // padded slot stays zero
            const int tok = u * p + v;
            float* dst = out.data.data() +
                         (static_cast<size_t>(seq) * L + tok) * C;
            for (int ch = 0; ch < C; ++ch) dst[ch] = x.at4(b, ch, py, px);
          }
      }
  return out;
}

void scatter_tokens(const Tensor& seqs, int p, Partition mode, Tensor& x) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Hp = padded(H, p), Wp = padded(W, p);
  const int nr = Hp / p, nc = Wp / p;
  const int L = p * p;
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < nr; ++r)
      for (int c = 0; c < nc; ++c) {
        const int seq = (b * nr + r) * nc + c;
        for (int u = 0; u < p; ++u)
          for (int v = 0; v < p; ++v) {
            const int py = mode == Partition::Window ? r * p + u : u * nr + r;
            const int px = mode == Partition::Window ? c * p + v : v * nc + c;
            if (py >= H || px >= W) continue;
            const int tok = u * p + v;
            const float* src = seqs.data.data() +
                               (static_cast<size_t>(seq) * L + tok) * C;
            for (int ch = 0; ch < C; ++ch) x.at4(b, ch, py, px) = src[ch];
          }
      }
}

// Pre-norm transformer unit over token sequences [N, L, C].
Tensor attention_unit(const Tensor& seqs, const AttentionUnitW& w, int heads,
                      const ForwardHooks* hooks) {
  const int N = seqs.dim(0), L = seqs.dim(1), C = seqs.dim(2);
  const int dh = C / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Tensor qkv = linear(layernorm(seqs), w.qkv_w, &w.qkv_b);  // [N, L, 3C]
  Tensor merged({N, L, C}, 0.0f);
  Tensor q({L, dh}, 0.0f), k({L, dh}, 0.0f), v({L, dh}, 0.0f);
  for (int n = 0; n < N; ++n) {
    for (int h = 0; h < heads; ++h) {
      for (int t = 0; t < L; ++t) {
        const float* row = qkv.data.data() +
                           (static_cast<size_t>(n) * L + t) * 3 * C + h * dh;
        std::copy(row, row + dh, q.data.data() + static_cast<size_t>(t) * dh);
        std::copy(row + C, row + C + dh, k.data.data() + static_cast<size_t>(t) * dh);
        std::copy(row + 2 * C, row + 2 * C + dh,
                  v.data.data() + static_cast<size_t>(t) * dh);
      }
      Tensor scores = matmul_nt(q, k);
      for (float& s : scores.data) s *= scale;
      Tensor attn = softmax(scores, 1);
      if (hooks && hooks->on_attention) hooks->on_attention(attn);
      Tensor ctx = matmul(attn, v);  // [L, dh]
      for (int t = 0; t < L; ++t)
        std::copy(ctx.data.data() + static_cast<size_t>(t) * dh,
                  ctx.data.data() + static_cast<size_t>(t) * dh + dh,
                  merged.data.data() + (static_cast<size_t>(n) * L + t) * C + h * dh);
    }
  }
  Tensor x1 = add(seqs, linear(merged, w.proj_w, &w.proj_b));
  Tensor mlp = linear(gelu(linear(layernorm(x1), w.mlp1_w, &w.mlp1_b)),
                      w.mlp2_w, &w.mlp2_b);
  return add(x1, mlp);
}

Tensor maxvit_forward(const Tensor& x, const MaxViTW& w,
                      const ForwardHooks* hooks) {
  const int C = x.dim(1);
  const int heads = maxvit_heads(C);
  Tensor cur = x;
  Tensor seqs = gather_tokens(cur, kMaxViTWindow, Partition::Window);
  seqs = attention_unit(seqs, w.window_attn, heads, hooks);
  scatter_tokens(seqs, kMaxViTWindow, Partition::Window, cur);
  seqs = gather_tokens(cur, kMaxViTWindow, Partition::Grid);
  seqs = attention_unit(seqs, w.grid_attn, heads, hooks);
  scatter_tokens(seqs, kMaxViTWindow, Partition::Grid, cur);
  return cur;
}

float softplus(float v) {
  if (v > 20.0f) return v;
  return std::log1p(std::exp(v));
}

Tensor mamba_forward(const Tensor& x, const BlockSpec& spec, const MambaW& w) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int groups = static_cast<int>(w.groups.size());
  Tensor out({B, C, H, W}, 0.0f);
  int ch0 = 0;
  for (int g = 0; g < groups; ++g) {
    const MambaGroupW& gw = w.groups[static_cast<size_t>(g)];
    const int cg = mamba_group_channels(C, groups, g);
    const int di = 2 * cg;

    // Channel slice as its own [B, Cg, H, W] view.
    Tensor slice({B, cg, H, W}, 0.0f);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < cg; ++c)
        std::copy(&x.data[((static_cast<size_t>(b) * C + ch0 + c) * H) * W],
                  &x.data[((static_cast<size_t>(b) * C + ch0 + c) * H) * W] +
                      static_cast<size_t>(H) * W,
                  &slice.data[((static_cast<size_t>(b) * cg + c) * H) * W]);

    Tensor seqs = gather_tokens(slice, kMambaWindow, Partition::Window);
    const int N = seqs.dim(0), L = seqs.dim(1);

    Tensor proj = linear(seqs, gw.in_w, &gw.in_b);  // [N, L, 2di]
    // Split last axis into the scan branch and the gate branch, channel-major
    // sequences for the conv and the scan.
    Tensor u({N, di, L}, 0.0f), z({N, L, di}, 0.0f);
    for (int n = 0; n < N; ++n)
      for (int t = 0; t < L; ++t) {
        const float* row =
            proj.data.data() + (static_cast<size_t>(n) * L + t) * 2 * di;
        for (int c = 0; c < di; ++c)
          u.data[(static_cast<size_t>(n) * di + c) * L + t] = row[c];
        std::copy(row + di, row + 2 * di,
                  z.data.data() + (static_cast<size_t>(n) * L + t) * di);
      }
    u = conv1d(u, gw.dw_w, &gw.dw_b, 1, di);

    // Zero-order-hold discretization of the diagonal system.
    std::vector<float> abar(static_cast<size_t>(di) * kSsmStateDim);
    std::vector<float> bbar(static_cast<size_t>(di) * kSsmStateDim);
    for (int c = 0; c < di; ++c) {
      const float dt = softplus(gw.delta.data[static_cast<size_t>(c)]);
      for (int m = 0; m < kSsmStateDim; ++m) {
        const size_t i = static_cast<size_t>(c) * kSsmStateDim + m;
        const float av = gw.a.data[i];
        const float e = std::exp(dt * av);
        abar[i] = e;
        bbar[i] = (e - 1.0f) / av * gw.b.data[i];
      }
    }

    Tensor y({N, L, di}, 0.0f);
    std::array<float, kSsmStateDim> hstate;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < di; ++c) {
        hstate.fill(0.0f);
        const float* uv = u.data.data() + (static_cast<size_t>(n) * di + c) * L;
        const float* ab = abar.data() + static_cast<size_t>(c) * kSsmStateDim;
        const float* bb = bbar.data() + static_cast<size_t>(c) * kSsmStateDim;
        const float* cv = gw.c.data.data() + static_cast<size_t>(c) * kSsmStateDim;
        for (int t = 0; t < L; ++t) {
          float acc = 0.0f;
          for (int m = 0; m < kSsmStateDim; ++m) {
            hstate[static_cast<size_t>(m)] =
                ab[m] * hstate[static_cast<size_t>(m)] + bb[m] * uv[t];
            acc += cv[m] * hstate[static_cast<size_t>(m)];
          }
          y.data[(static_cast<size_t>(n) * L + t) * di + c] = acc;
        }
      }
    macs::add(static_cast<unsigned long long>(N) * di * L * 3 * kSsmStateDim);

    Tensor gated = mul(y, silu(z));
    Tensor proj_out = linear(gated, gw.out_w, &gw.out_b);  // [N, L, Cg]

    Tensor merged({B, cg, H, W}, 0.0f);
    scatter_tokens(proj_out, kMambaWindow, Partition::Window, merged);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < cg; ++c)
        std::copy(&merged.data[((static_cast<size_t>(b) * cg + c) * H) * W],
                  &merged.data[((static_cast<size_t>(b) * cg + c) * H) * W] +
                      static_cast<size_t>(H) * W,
                  &out.data[((static_cast<size_t>(b) * C + ch0 + c) * H) * W]);
    ch0 += cg;
  }
  (void)spec;
  return out;
}

// Phase-aware token mixing along one spatial axis: the input is turned into
// real/imag parts with a learned per-channel phase, then mixed with a
// k=5/stride 1/pad 2 per-channel window along the axis.
Tensor patm(const Tensor& x, const Tensor& phase, const Tensor& wr,
            const Tensor& wi, const Tensor& bias, bool along_h) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  constexpr int k = 5, pad = 2;
  Tensor y({B, C, H, W}, 0.0f);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float cw = std::cos(phase.data[static_cast<size_t>(c)]);
      const float sw = std::sin(phase.data[static_cast<size_t>(c)]);
      const float* wrv = wr.data.data() + static_cast<size_t>(c) * k;
      const float* wiv = wi.data.data() + static_cast<size_t>(c) * k;
      const float bv = bias.data[static_cast<size_t>(c)];
      const float* xp = x.data.data() + (static_cast<size_t>(b) * C + c) * H * W;
      float* yp = y.data.data() + (static_cast<size_t>(b) * C + c) * H * W;
      for (int h = 0; h < H; ++h)
        for (int wx = 0; wx < W; ++wx) {
          float acc = bv;
          for (int d = 0; d < k; ++d) {
            const int hh = along_h ? h + d - pad : h;
            const int ww = along_h ? wx : wx + d - pad;
            if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
            const float xv = xp[static_cast<size_t>(hh) * W + ww];
            acc += wrv[d] * (xv * cw) + wiv[d] * (xv * sw);
          }
          yp[static_cast<size_t>(h) * W + wx] = acc;
        }
    }
  // Phase maps (2 per element) plus the 2-channel k-tap mix per output.
  macs::add(static_cast<unsigned long long>(B) * C * H * W * (2 + 2 * k));
  return y;
}

Tensor wavemlp_forward(const Tensor& x, const WaveMLPW& w, BnCollector& bn) {
  Tensor cur = x;
  for (const WaveRepeatW& rw : w.repeats) {
    BatchNormResult n1 = batchnorm(cur);
    bn.note(n1.sigma);
    Tensor th = patm(n1.y, rw.phase_h, rw.mixh_wr, rw.mixh_wi, rw.mixh_b, true);
    Tensor tw = patm(n1.y, rw.phase_w, rw.mixw_wr, rw.mixw_wi, rw.mixw_b, false);
    Tensor tc = conv2d(n1.y, rw.fcc_w, &rw.fcc_b, 1, 0);
    Tensor mixed = add(add(th, tw), tc);
    BatchNormResult n2 = batchnorm(mixed);
    bn.note(n2.sigma);
    Tensor h = gelu(conv2d(n2.y, rw.mlp1_w, &rw.mlp1_b, 1, 0));
    cur = conv2d(h, rw.mlp2_w, &rw.mlp2_b, 1, 0);
  }
  return cur;
}

Tensor c2f_forward(const Tensor& x, const BlockSpec& spec, const C2fW& w,
                   BnCollector& bn) {
  Tensor y = conv_unit(x, w.cv1, 1, 0, bn);
  std::vector<Tensor> parts = split(y, 1, 2);
  Tensor cur = parts[1];
  for (const auto& bpair : w.bottlenecks) {
    Tensor t = conv_unit(cur, bpair[0], 1, 1, bn);
    t = conv_unit(t, bpair[1], 1, 1, bn);
    cur = add(cur, t);  // backbone bottlenecks keep the shortcut
    parts.push_back(cur);
  }
  (void)spec;
  return conv_unit(concat(parts, 1), w.cv2, 1, 0, bn);
}

struct LstmOut {
  Tensor h;
  Tensor c;
};

LstmOut convlstm_forward(const Tensor& x, const ConvLSTMW& w, const Tensor& h0,
                         const Tensor& c0) {
  const int C = x.dim(1);
  Tensor cat = concat({x, h0}, 1);
  Tensor g1 = conv2d(cat, w.dw_w, &w.dw_b, 1, 1, 2 * C);
  Tensor gates = conv2d(g1, w.pw_w, &w.pw_b, 1, 0);
  std::vector<Tensor> parts = split(gates, 1, 4);
  Tensor i = sigmoid(parts[0]);
  Tensor f = sigmoid(parts[1]);
  Tensor o = sigmoid(parts[2]);
  Tensor g = tanh_op(parts[3]);
  Tensor c1 = add(mul(f, c0), mul(i, g));
  Tensor h1 = mul(o, tanh_op(c1));
  return {std::move(h1), std::move(c1)};
}

Tensor sppf_forward(const Tensor& x, const SPPFW& w, BnCollector& bn) {
  Tensor y = conv_unit(x, w.cv1, 1, 0, bn);
  Tensor p1 = maxpool2d(y, 5, 1, 2);
  Tensor p2 = maxpool2d(p1, 5, 1, 2);
  Tensor p3 = maxpool2d(p2, 5, 1, 2);
  return conv_unit(concat({y, p1, p2, p3}, 1), w.cv2, 1, 0, bn);
}

}  // namespace

const char* block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::Stem: return "stem";
    case BlockKind::Downsample: return "downsample";
    case BlockKind::C2f: return "c2f";
    case BlockKind::MaxViT: return "maxvit";
    case BlockKind::Mamba: return "mamba";
    case BlockKind::WaveMLP: return "wavemlp";
    case BlockKind::ConvLSTM: return "convlstm";
    case BlockKind::SPPF: return "sppf";
  }
  return "?";
}

ComputeGraph build_graph(const Genome& g, int height, int width,
                         std::uint64_t seed) {
  if (height % 32 != 0 || width % 32 != 0)
    throw TensorError("build_graph: height and width must be divisible by 32");
  const DerivedChannels dc = derive_channels(g);

  ComputeGraph graph;
  graph.in_channels = dc.input_channels;
  graph.height = height;
  graph.width = width;

  std::vector<BlockSpec> specs;
  specs.push_back({BlockKind::Stem, dc.input_channels, dc.stem_out, 1, 1, 0});
  for (int i = 0; i < kNumLayers; ++i) {
    const LayerGene& gene = g.layers[static_cast<size_t>(i)];
    const int cin = dc.layer_in[static_cast<size_t>(i)];
    const int cout = dc.layer_out[static_cast<size_t>(i)];
    specs.push_back({BlockKind::Downsample, cin, cout, 1, 1, 0});
    BlockSpec proc;
    proc.cin = proc.cout = cout;
    switch (gene.block) {
      case BlockType::C2f:
        proc.kind = BlockKind::C2f;
        proc.repeats = gene.repeats;
        break;
      case BlockType::MaxViT:
        proc.kind = BlockKind::MaxViT;
        proc.window = kMaxViTWindow;
        break;
      case BlockType::Mamba:
        proc.kind = BlockKind::Mamba;
        proc.heads = dc.mamba_heads[static_cast<size_t>(i)];
        proc.window = kMambaWindow;
        break;
      case BlockType::WaveMLP:
        proc.kind = BlockKind::WaveMLP;
        proc.repeats = gene.repeats;
        break;
    }
    specs.push_back(proc);
    specs.push_back({BlockKind::ConvLSTM, cout, cout, 1, 1, 0});
  }
  const int c4 = dc.layer_out[kNumLayers - 1];
  specs.push_back({BlockKind::SPPF, c4, c4, 1, 1, 0});

  Rng rng(derive_seed(seed, 0xb10c));
  for (const BlockSpec& s : specs)
    graph.layers.push_back({s, make_weights(rng, s)});
  return graph;
}

ForwardResult forward(const ComputeGraph& graph, const Tensor& x,
                      const RecurrentState* state, const ForwardHooks* hooks) {
  if (x.ndim() != 4 || x.dim(1) != graph.in_channels ||
      x.dim(2) != graph.height || x.dim(3) != graph.width)
    throw TensorError("forward: input does not match graph geometry");

  ForwardResult res;
  BnCollector bn{&res.bn_log_sigma_mean};

  int lstm_idx = 0;
  Tensor cur = x;
  for (size_t li = 0; li < graph.layers.size(); ++li) {
    const LayerRecord& rec = graph.layers[li];
    switch (rec.spec.kind) {
      case BlockKind::Stem:
      case BlockKind::Downsample:
        cur = conv_unit(cur, std::get<StemW>(rec.weights).conv, 2, 1, bn);
        break;
      case BlockKind::C2f:
        cur = c2f_forward(cur, rec.spec, std::get<C2fW>(rec.weights), bn);
        break;
      case BlockKind::MaxViT:
        cur = maxvit_forward(cur, std::get<MaxViTW>(rec.weights), hooks);
        break;
      case BlockKind::Mamba:
        cur = mamba_forward(cur, rec.spec, std::get<MambaW>(rec.weights));
        break;
      case BlockKind::WaveMLP:
        cur = wavemlp_forward(cur, std::get<WaveMLPW>(rec.weights), bn);
        break;
      case BlockKind::ConvLSTM: {
        const int C = rec.spec.cout;
        Tensor h0, c0;
        if (state && lstm_idx < static_cast<int>(state->hc.size())) {
          h0 = state->hc[static_cast<size_t>(lstm_idx)].first;
          c0 = state->hc[static_cast<size_t>(lstm_idx)].second;
          if (h0.shape != cur.shape)
            throw TensorError("forward: recurrent state shape mismatch at lstm " +
                              std::to_string(lstm_idx));
        } else {
          h0 = Tensor({cur.dim(0), C, cur.dim(2), cur.dim(3)}, 0.0f);
          c0 = h0;
        }
        LstmOut lo = convlstm_forward(cur, std::get<ConvLSTMW>(rec.weights), h0, c0);
        cur = lo.h;
        res.state.hc.emplace_back(std::move(lo.h), std::move(lo.c));
        ++lstm_idx;
        break;
      }
      case BlockKind::SPPF:
        cur = sppf_forward(cur, std::get<SPPFW>(rec.weights), bn);
        break;
    }
    if (!cur.all_finite())
      throw OverflowError("non-finite activation in layer " + std::to_string(li) +
                          " (" + block_kind_name(rec.spec.kind) + " " +
                          std::to_string(rec.spec.cin) + "->" +
                          std::to_string(rec.spec.cout) + ")");
  }
  res.y = std::move(cur);
  return res;
}

// --- analytic cost -------------------------------------------------------------

namespace {

using ull = unsigned long long;

ull conv_unit_params(int cin, int cout, int k) {
  return static_cast<ull>(cout) * cin * k * k + static_cast<ull>(cout);
}

ull conv_unit_macs(int cin, int cout, int k, int oh, int ow) {
  return static_cast<ull>(cout) * cin * k * k * oh * ow;
}

Cost c2f_cost(int cin, int cout, int n, int h, int w) {
  const int half = cout / 2;
  Cost c;
  c.params = conv_unit_params(cin, cout, 1) +
             static_cast<ull>(n) * 2 * conv_unit_params(half, half, 3) +
             conv_unit_params((2 + n) * half, cout, 1);
  c.macs = conv_unit_macs(cin, cout, 1, h, w) +
           static_cast<ull>(n) * 2 * conv_unit_macs(half, half, 3, h, w) +
           conv_unit_macs((2 + n) * half, cout, 1, h, w);
  return c;
}

Cost attention_unit_cost(int c, int hp, int wp) {
  Cost r;
  r.params = (static_cast<ull>(3 * c) * c + 3 * c) + (static_cast<ull>(c) * c + c) +
             (static_cast<ull>(kMlpRatio * c) * c + kMlpRatio * c) +
             (static_cast<ull>(c) * kMlpRatio * c + c);
  const ull tokens = static_cast<ull>(hp) * wp;
  r.macs = tokens * (3ull * c * c + static_cast<ull>(c) * c +
                     2ull * kMlpRatio * c * c);
  return r;
}

}  // namespace

Cost block_cost(const BlockSpec& s, int h_in, int w_in) {
  Cost c;
  switch (s.kind) {
    case BlockKind::Stem:
    case BlockKind::Downsample: {
      const int oh = (h_in + 2 - 3) / 2 + 1, ow = (w_in + 2 - 3) / 2 + 1;
      c.params = conv_unit_params(s.cin, s.cout, 3);
      c.macs = conv_unit_macs(s.cin, s.cout, 3, oh, ow);
      break;
    }
    case BlockKind::C2f:
      c = c2f_cost(s.cin, s.cout, s.repeats, h_in, w_in);
      break;
    case BlockKind::MaxViT: {
      const int hp = padded(h_in, kMaxViTWindow), wp = padded(w_in, kMaxViTWindow);
      const Cost unit = attention_unit_cost(s.cout, hp, wp);
      c.params = 2 * unit.params;
      c.macs = 2 * unit.macs;
      break;
    }
    case BlockKind::Mamba: {
      const int groups = mamba_groups(s.cout, s.heads);
      const int hp = padded(h_in, kMambaWindow), wp = padded(w_in, kMambaWindow);
      const ull tokens = static_cast<ull>(hp) * wp;
      for (int g = 0; g < groups; ++g) {
        const int cg = mamba_group_channels(s.cout, groups, g);
        const int di = 2 * cg;
        c.params += static_cast<ull>(2 * di) * cg + 2 * di;   // in proj
        c.params += static_cast<ull>(di) * 3 + di;            // depthwise conv
        c.params += static_cast<ull>(di) * kSsmStateDim * 3 + di;  // a,b,c,delta
        c.params += static_cast<ull>(cg) * di + cg;           // out proj
        c.macs += tokens * (static_cast<ull>(2 * di) * cg     // in proj
                            + static_cast<ull>(di) * 3        // depthwise conv
                            + static_cast<ull>(di) * 3 * kSsmStateDim  // scan
                            + static_cast<ull>(cg) * di);     // out proj
      }
      break;
    }
    case BlockKind::WaveMLP: {
      const int ch = s.cout;
      const ull hw = static_cast<ull>(h_in) * w_in;
      const ull per_params = 2ull * ch                       // phases
                             + 2ull * (2 * 5 * ch + ch)      // axis mixers
                             + (static_cast<ull>(ch) * ch + ch)  // channel fc
                             + (static_cast<ull>(kMlpRatio * ch) * ch + kMlpRatio * ch) +
                             (static_cast<ull>(ch) * kMlpRatio * ch + ch);
      const ull per_macs = hw * (2ull * ch * (2 + 2 * 5)     // both PATM branches
                                 + static_cast<ull>(ch) * ch // channel fc
                                 + 2ull * kMlpRatio * ch * ch);
      c.params = static_cast<ull>(s.repeats) * per_params;
      c.macs = static_cast<ull>(s.repeats) * per_macs;
      break;
    }
    case BlockKind::ConvLSTM: {
      const int ch = s.cout;
      const ull hw = static_cast<ull>(h_in) * w_in;
      c.params = (static_cast<ull>(2 * ch) * 9 + 2 * ch) +
                 (static_cast<ull>(4 * ch) * 2 * ch + 4 * ch);
      c.macs = hw * (static_cast<ull>(2 * ch) * 9 + static_cast<ull>(4 * ch) * 2 * ch);
      break;
    }
    case BlockKind::SPPF: {
      const int ch = s.cout;
      c.params = conv_unit_params(ch, ch / 2, 1) + conv_unit_params(2 * ch, ch, 1);
      c.macs = conv_unit_macs(ch, ch / 2, 1, h_in, w_in) +
               conv_unit_macs(2 * ch, ch, 1, h_in, w_in);
      break;
    }
  }
  return c;
}

Cost cost(const ComputeGraph& graph) {
  Cost total;
  int h = graph.height, w = graph.width;
  for (const LayerRecord& rec : graph.layers) {
    const Cost c = block_cost(rec.spec, h, w);
    total.params += c.params;
    total.macs += c.macs;
    if (rec.spec.kind == BlockKind::Stem || rec.spec.kind == BlockKind::Downsample) {
      h = (h + 2 - 3) / 2 + 1;
      w = (w + 2 - 3) / 2 + 1;
    }
  }
  return total;
}

namespace {

// Detection-head template, cost only. YOLOv8-style PANET with the table's
// C2f output channels {8,4,8,16}*Ch0 and two stride-2 transfer convs, plus
// three decoupled head stacks (reg_max 16, one class).
Cost head_cost(const Genome& g, int height, int width) {
  const DerivedChannels dc = derive_channels(g);
  const int ch0 = g.stem_ch;
  const int p3 = dc.layer_out[1], p4 = dc.layer_out[2], p5 = dc.layer_out[3];
  const int h8 = height / 8, w8 = width / 8;
  const int h16 = height / 16, w16 = width / 16;
  const int h32 = height / 32, w32 = width / 32;

  Cost total;
  auto acc = [&total](const Cost& c) {
    total.params += c.params;
    total.macs += c.macs;
  };

  const std::array<int, 4> outs = dc.panet_c2f_out;  // {8,4,8,16}*Ch0
  acc(c2f_cost(p5 + p4, outs[0], 1, h16, w16));      // after upsampling P5
  acc(c2f_cost(outs[0] + p3, outs[1], 1, h8, w8));   // N3
  Cost dsa;                                          // N3 -> stride 16
  dsa.params = conv_unit_params(outs[1], outs[1], 3);
  dsa.macs = conv_unit_macs(outs[1], outs[1], 3, h16, w16);
  acc(dsa);
  acc(c2f_cost(outs[1] + outs[0], outs[2], 1, h16, w16));  // N4
  Cost dsb;                                                // N4 -> stride 32
  dsb.params = conv_unit_params(outs[2], outs[2], 3);
  dsb.macs = conv_unit_macs(outs[2], outs[2], 3, h32, w32);
  acc(dsb);
  acc(c2f_cost(outs[2] + p5, outs[3], 1, h32, w32));  // N5

  constexpr int kRegMax = 16, kNumClasses = 1;
  const int c_reg = std::max(16, std::max(4 * ch0 / 4, 4 * kRegMax));
  const int c_cls = std::max(4 * ch0, std::min(kNumClasses, 100));
  const std::array<std::array<int, 3>, 3> scales = {{{outs[1], h8, w8},
                                                     {outs[2], h16, w16},
                                                     {outs[3], h32, w32}}};
  for (const auto& sc : scales) {
    const int ci = sc[0], sh = sc[1], sw = sc[2];
    Cost head;
    head.params = conv_unit_params(ci, c_reg, 3) + conv_unit_params(c_reg, c_reg, 3) +
                  conv_unit_params(c_reg, 4 * kRegMax, 1) +
                  conv_unit_params(ci, c_cls, 3) + conv_unit_params(c_cls, c_cls, 3) +
                  conv_unit_params(c_cls, kNumClasses, 1);
    head.macs = conv_unit_macs(ci, c_reg, 3, sh, sw) +
                conv_unit_macs(c_reg, c_reg, 3, sh, sw) +
                conv_unit_macs(c_reg, 4 * kRegMax, 1, sh, sw) +
                conv_unit_macs(ci, c_cls, 3, sh, sw) +
                conv_unit_macs(c_cls, c_cls, 3, sh, sw) +
                conv_unit_macs(c_cls, kNumClasses, 1, sh, sw);
    acc(head);
  }
  return total;
}

}  // namespace

Cost cost_full_model(const Genome& g, int height, int width) {
  if (height % 32 != 0 || width % 32 != 0)
    throw TensorError("cost_full_model: height and width must be divisible by 32");
  const DerivedChannels dc = derive_channels(g);

  Cost total;
  int h = height, w = width;
  auto step = [&](const BlockSpec& s) {
    const Cost c = block_cost(s, h, w);
    total.params += c.params;
    total.macs += c.macs;
    if (s.kind == BlockKind::Stem || s.kind == BlockKind::Downsample) {
      h = (h + 2 - 3) / 2 + 1;
      w = (w + 2 - 3) / 2 + 1;
    }
  };

  step({BlockKind::Stem, dc.input_channels, dc.stem_out, 1, 1, 0});
  for (int i = 0; i < kNumLayers; ++i) {
    const LayerGene& gene = g.layers[static_cast<size_t>(i)];
    const int cin = dc.layer_in[static_cast<size_t>(i)];
    const int cout = dc.layer_out[static_cast<size_t>(i)];
    step({BlockKind::Downsample, cin, cout, 1, 1, 0});
    BlockSpec proc;
    proc.cin = proc.cout = cout;
    switch (gene.block) {
      case BlockType::C2f:
        proc.kind = BlockKind::C2f;
        proc.repeats = gene.repeats;
        break;
      case BlockType::MaxViT:
        proc.kind = BlockKind::MaxViT;
        break;
      case BlockType::Mamba:
        proc.kind = BlockKind::Mamba;
        proc.heads = dc.mamba_heads[static_cast<size_t>(i)];
        break;
      case BlockType::WaveMLP:
        proc.kind = BlockKind::WaveMLP;
        proc.repeats = gene.repeats;
        break;
    }
    step(proc);
    step({BlockKind::ConvLSTM, cout, cout, 1, 1, 0});
  }
  const int c4 = dc.layer_out[kNumLayers - 1];
  step({BlockKind::SPPF, c4, c4, 1, 1, 0});

  const Cost head = head_cost(g, height, width);
  total.params += head.params;
  total.macs += head.macs;
  return total;
}

std::string describe(const ComputeGraph& graph) {
  std::ostringstream os;
  os << "layer  kind        cin->cout  spatial      params        macs\n";
  int h = graph.height, w = graph.width;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const BlockSpec& s = graph.layers[i].spec;
    const Cost c = block_cost(s, h, w);
    if (s.kind == BlockKind::Stem || s.kind == BlockKind::Downsample) {
      h = (h + 2 - 3) / 2 + 1;
      w = (w + 2 - 3) / 2 + 1;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6zu %-11s %4d->%-4d %4dx%-4d %11llu %11llu\n",
                  i, block_kind_name(s.kind), s.cin, s.cout, h, w, c.params, c.macs);
    os << buf;
  }
  const Cost t = cost(graph);
  os << "total params " << t.params << ", macs " << t.macs << "\n";
  return os.str();
}

}  // namespace evnas
