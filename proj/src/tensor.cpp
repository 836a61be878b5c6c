#include "evnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace evnas {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw TensorError(msg);
}

}  // namespace

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
  for (size_t i = 0; i < shape.size(); ++i)
    require(shape[i] > 0, "Tensor: dimension " + std::to_string(i) + " of " +
                              shape_str(shape) + " must be positive");
  data.assign(numel(shape), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<float> values) {
  Tensor t;
  t.shape = std::move(s);
  require(numel(t.shape) == values.size(),
          "Tensor::from: shape " + shape_str(t.shape) + " wants " +
              std::to_string(numel(t.shape)) + " values, got " +
              std::to_string(values.size()));
  t.data = std::move(values);
  return t;
}

std::size_t Tensor::numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t Rng::bounded(std::uint64_t n) {
  if (n == 0) throw TensorError("Rng::bounded: n must be positive");
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x > limit);
  return x % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0,1] so log(u1) is finite.
  const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

Tensor Rng::normal_tensor(std::vector<int> shape, float scale) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = scale * normal_f();
  return t;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 of seed + tag*golden; decorrelates adjacent tags.
  std::uint64_t z = seed + tag * 0x9E3779B97F4A7C15ull + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace macs {
namespace {
thread_local bool g_enabled = false;
thread_local unsigned long long g_count = 0;
}  // namespace
void enable() {
  g_enabled = true;
  g_count = 0;
}
void disable() { g_enabled = false; }
unsigned long long count() { return g_count; }
void add(unsigned long long n) {
  if (g_enabled) g_count += n;
}
}  // namespace macs

// --- dense linear algebra --------------------------------------------------

namespace {

// C[m,n] += A[m,k] * B[k,n], all row-major. Narrow outputs (small n, as in
// late-stage 2x2 feature maps) go column-at-a-time to keep the inner loop
// long enough to vectorize.
void gemm_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  if (n <= 8) {
    for (int i = 0; i < m; ++i) {
      const float* arow = a + static_cast<size_t>(i) * k;
      float* crow = c + static_cast<size_t>(i) * n;
      float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (int p = 0; p < k; ++p) {
        const float av = arow[p];
        const float* brow = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      for (int j = 0; j < n; ++j) crow[j] += acc[j];
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: expects rank-2 inputs");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ (" +
                                    std::to_string(a.dim(1)) + " vs " +
                                    std::to_string(b.dim(0)) + ")");
  Tensor c({a.dim(0), b.dim(1)}, 0.0f);
  gemm_acc(a.data.data(), b.data.data(), c.data.data(), a.dim(0), a.dim(1),
           b.dim(1));
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul_nt: expects rank-2 inputs");
  require(a.dim(1) == b.dim(1), "matmul_nt: inner dimensions differ (" +
                                    std::to_string(a.dim(1)) + " vs " +
                                    std::to_string(b.dim(1)) + ")");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n}, 0.0f);
  for (int i = 0; i < m; ++i) {
    const float* arow = a.data.data() + static_cast<size_t>(i) * k;
    float* crow = c.data.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b.data.data() + static_cast<size_t>(j) * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require(w.ndim() == 2, "linear: weight must be rank-2 [out,in]");
  require(x.ndim() >= 1, "linear: input must have at least one axis");
  const int in = x.dim(x.ndim() - 1);
  require(in == w.dim(1), "linear: input feature dim " + std::to_string(in) +
                              " != weight in dim " + std::to_string(w.dim(1)));
  const int out = w.dim(0);
  const size_t rows = x.size() / static_cast<size_t>(in);
  if (bias)
    require(bias->ndim() == 1 && bias->dim(0) == out,
            "linear: bias dim must equal out features");

  std::vector<int> oshape = x.shape;
  oshape.back() = out;
  Tensor y(oshape, 0.0f);

  // One transposed copy of the weight turns every row into a saxpy gemm.
  std::vector<float> wt(static_cast<size_t>(in) * out);
  for (int o = 0; o < out; ++o)
    for (int p = 0; p < in; ++p)
      wt[static_cast<size_t>(p) * out + o] = w.data[static_cast<size_t>(o) * in + p];

  if (bias) {
    for (size_t r = 0; r < rows; ++r)
      std::copy(bias->data.begin(), bias->data.end(),
                y.data.begin() + static_cast<long>(r * out));
  }
  gemm_acc(x.data.data(), wt.data(), y.data.data(), static_cast<int>(rows), in,
           out);
  macs::add(rows * static_cast<unsigned long long>(out) * in);
  return y;
}

// --- convolutions ----------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad, int groups) {
  require(x.ndim() == 4, "conv2d: input must be [B,C,H,W], got " + shape_str(x.shape));
  require(w.ndim() == 4, "conv2d: weight must be [Cout,Cin/g,k,k], got " + shape_str(w.shape));
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), Cw = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(kh >= 1 && kw >= 1, "conv2d: kernel size must be >= 1");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: pad must be >= 0");
  require(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
          "conv2d: channels not divisible by groups");
  require(Cw == Cin / groups,
          "conv2d: weight channel dim " + std::to_string(Cw) +
              " != Cin/groups = " + std::to_string(Cin / groups));
  require(H + 2 * pad >= kh, "conv2d: H+2*pad (" + std::to_string(H + 2 * pad) +
                                 ") smaller than kernel " + std::to_string(kh));
  require(W + 2 * pad >= kw, "conv2d: W+2*pad (" + std::to_string(W + 2 * pad) +
                                 ") smaller than kernel " + std::to_string(kw));
  if (bias)
    require(bias->ndim() == 1 && bias->dim(0) == Cout,
            "conv2d: bias dim must equal Cout");

  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  const int cpg_in = Cin / groups, cpg_out = Cout / groups;
  const int K = cpg_in * kh * kw;

  Tensor y({B, Cout, OH, OW}, 0.0f);

  // 1x1 stride-1 convolutions multiply the weight matrix straight into the
  // channel-major image; no im2col copy needed.
  if (kh == 1 && kw == 1 && stride == 1 && pad == 0 && groups == 1) {
    const int hw = H * W;
    for (int b = 0; b < B; ++b) {
      const float* xb = x.data.data() + static_cast<size_t>(b) * Cin * hw;
      float* yb = y.data.data() + static_cast<size_t>(b) * Cout * hw;
      gemm_acc(w.data.data(), xb, yb, Cout, Cin, hw);
      if (bias)
        for (int co = 0; co < Cout; ++co) {
          const float bv = bias->data[co];
          float* yrow = yb + static_cast<size_t>(co) * hw;
          for (int i = 0; i < hw; ++i) yrow[i] += bv;
        }
    }
    macs::add(static_cast<unsigned long long>(B) * Cout * Cin * hw);
    return y;
  }

  std::vector<float> col(static_cast<size_t>(K) * OH * OW);

  for (int b = 0; b < B; ++b) {
    for (int g = 0; g < groups; ++g) {
      // im2col for this (image, group)
      float* cp = col.data();
      for (int ci = 0; ci < cpg_in; ++ci) {
        const float* xc = x.data.data() +
                          ((static_cast<size_t>(b) * Cin + g * cpg_in + ci) * H) * W;
        for (int dy = 0; dy < kh; ++dy) {
          for (int dx = 0; dx < kw; ++dx) {
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride + dy - pad;
              if (iy < 0 || iy >= H) {
                std::memset(cp, 0, sizeof(float) * OW);
                cp += OW;
                continue;
              }
              const float* xrow = xc + static_cast<size_t>(iy) * W;
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * stride + dx - pad;
                cp[ox] = (ix >= 0 && ix < W) ? xrow[ix] : 0.0f;
              }
              cp += OW;
            }
          }
        }
      }
      float* yg = y.data.data() +
                  ((static_cast<size_t>(b) * Cout + g * cpg_out) * OH) * OW;
      const float* wg = w.data.data() + static_cast<size_t>(g) * cpg_out * K;
      gemm_acc(wg, col.data(), yg, cpg_out, K, OH * OW);
      if (bias) {
        for (int co = 0; co < cpg_out; ++co) {
          const float bv = bias->data[g * cpg_out + co];
          float* yrow = yg + static_cast<size_t>(co) * OH * OW;
          for (int i = 0; i < OH * OW; ++i) yrow[i] += bv;
        }
      }
    }
  }
  macs::add(static_cast<unsigned long long>(B) * Cout * K * OH * OW);
  return y;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, int pad,
              int groups) {
  require(x.ndim() == 3, "conv1d: input must be [B,C,L], got " + shape_str(x.shape));
  require(w.ndim() == 3, "conv1d: weight must be [Cout,Cin/g,k]");
  const int B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int Cout = w.dim(0), Cw = w.dim(1), k = w.dim(2);
  require(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
          "conv1d: channels not divisible by groups");
  require(Cw == Cin / groups, "conv1d: weight channel dim mismatch");
  require(L + 2 * pad >= k, "conv1d: L+2*pad smaller than kernel");
  const int OL = L + 2 * pad - k + 1;
  const int cpg_in = Cin / groups, cpg_out = Cout / groups;

  Tensor y({B, Cout, OL}, 0.0f);
  for (int b = 0; b < B; ++b) {
    for (int g = 0; g < groups; ++g) {
      for (int co = 0; co < cpg_out; ++co) {
        const int oc = g * cpg_out + co;
        float* yv = y.data.data() + (static_cast<size_t>(b) * Cout + oc) * OL;
        const float bv = bias ? bias->data[oc] : 0.0f;
        for (int i = 0; i < OL; ++i) yv[i] = bv;
        for (int ci = 0; ci < cpg_in; ++ci) {
          const float* xv =
              x.data.data() + (static_cast<size_t>(b) * Cin + g * cpg_in + ci) * L;
          const float* wv =
              w.data.data() + (static_cast<size_t>(oc) * cpg_in + ci) * k;
          for (int t = 0; t < k; ++t) {
            const float wt = wv[t];
            const int lo = std::max(0, pad - t);
            const int hi = std::min(OL, L + pad - t);
            for (int i = lo; i < hi; ++i) yv[i] += wt * xv[i + t - pad];
          }
        }
      }
    }
  }
  macs::add(static_cast<unsigned long long>(B) * Cout * cpg_in * k * OL);
  return y;
}

// --- normalization ---------------------------------------------------------

BatchNormResult batchnorm(const Tensor& x) {
  require(x.ndim() == 4, "batchnorm: input must be [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t n = static_cast<size_t>(B) * H * W;
  require(n >= 2, "batchnorm: needs B*H*W >= 2 per channel");
  constexpr double kEps = 1e-5;

  BatchNormResult out;
  out.y = Tensor(x.shape, 0.0f);
  out.sigma.resize(static_cast<size_t>(C));
  const size_t plane = static_cast<size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* xv = x.data.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        sum += xv[i];
        sq += static_cast<double>(xv[i]) * xv[i];
      }
    }
    const double mean = sum / static_cast<double>(n);
    double var = sq / static_cast<double>(n) - mean * mean;
    if (var < 0.0) var = 0.0;
    const double sigma = std::sqrt(var + kEps);
    out.sigma[static_cast<size_t>(c)] = static_cast<float>(sigma);
    const float m = static_cast<float>(mean);
    const float inv = static_cast<float>(1.0 / sigma);
    for (int b = 0; b < B; ++b) {
      const float* xv = x.data.data() + (static_cast<size_t>(b) * C + c) * plane;
      float* yv = out.y.data.data() + (static_cast<size_t>(b) * C + c) * plane;
      for (size_t i = 0; i < plane; ++i) yv[i] = (xv[i] - m) * inv;
    }
  }
  return out;
}

Tensor layernorm(const Tensor& x) {
  require(x.ndim() >= 1, "layernorm: needs at least one axis");
  const int n = x.dim(x.ndim() - 1);
  constexpr double kEps = 1e-5;
  Tensor y(x.shape, 0.0f);
  const size_t rows = x.size() / static_cast<size_t>(n);
  for (size_t r = 0; r < rows; ++r) {
    const float* xv = x.data.data() + r * n;
    float* yv = y.data.data() + r * n;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      sum += xv[i];
      sq += static_cast<double>(xv[i]) * xv[i];
    }
    const double mean = sum / n;
    double var = sq / n - mean * mean;
    if (var < 0.0) var = 0.0;
    const float m = static_cast<float>(mean);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + kEps));
    for (int i = 0; i < n; ++i) yv[i] = (xv[i] - m) * inv;
  }
  return y;
}

// --- elementwise -----------------------------------------------------------

namespace {
template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.shape, 0.0f);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  return y;
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  return map(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
}

Tensor silu(const Tensor& x) {
  return map(x, [](float v) { return v / (1.0f + std::exp(-v)); });
}

Tensor tanh_op(const Tensor& x) {
  return map(x, [](float v) { return std::tanh(v); });
}

Tensor relu(const Tensor& x) {
  return map(x, [](float v) { return v > 0.0f ? v : 0.0f; });
}

Tensor gelu(const Tensor& x) {
  return map(x, [](float v) {
    return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
  });
}

Tensor softmax(const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.ndim(),
          "softmax: axis " + std::to_string(axis) + " out of range for " +
              shape_str(x.shape));
  const int n = x.dim(axis);
  size_t inner = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<size_t>(x.dim(i));
  size_t outer = x.size() / (static_cast<size_t>(n) * inner);

  Tensor y(x.shape, 0.0f);
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * n * inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (int i = 0; i < n; ++i) mx = std::max(mx, x.data[base + i * inner]);
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const float e = std::exp(x.data[base + i * inner] - mx);
        y.data[base + i * inner] = e;
        sum += e;
      }
      const float inv = static_cast<float>(1.0 / sum);
      for (int i = 0; i < n; ++i) y.data[base + i * inner] *= inv;
    }
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "add: shapes differ: " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
  Tensor y(a.shape, 0.0f);
  for (size_t i = 0; i < a.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "mul: shapes differ: " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
  Tensor y(a.shape, 0.0f);
  for (size_t i = 0; i < a.size(); ++i) y.data[i] = a.data[i] * b.data[i];
  return y;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Tensor& first = parts.front();
  require(axis >= 0 && axis < first.ndim(),
          "concat: axis " + std::to_string(axis) + " out of range");
  std::vector<int> oshape = first.shape;
  int total = 0;
  for (const Tensor& p : parts) {
    require(p.ndim() == first.ndim(), "concat: rank mismatch");
    for (int i = 0; i < first.ndim(); ++i)
      if (i != axis)
        require(p.dim(i) == first.dim(i),
                "concat: dimension " + std::to_string(i) + " differs");
    total += p.dim(axis);
  }
  oshape[static_cast<size_t>(axis)] = total;

  size_t inner = 1;
  for (int i = axis + 1; i < first.ndim(); ++i) inner *= static_cast<size_t>(first.dim(i));
  size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(first.dim(i));

  Tensor y(oshape, 0.0f);
  const size_t ostride = static_cast<size_t>(total) * inner;
  size_t off = 0;
  for (const Tensor& p : parts) {
    const size_t pstride = static_cast<size_t>(p.dim(axis)) * inner;
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(y.data.data() + o * ostride + off,
                  p.data.data() + o * pstride, pstride * sizeof(float));
    off += pstride;
  }
  return y;
}

std::vector<Tensor> split(const Tensor& x, int axis, int parts) {
  require(axis >= 0 && axis < x.ndim(),
          "split: axis " + std::to_string(axis) + " out of range");
  require(parts >= 1 && x.dim(axis) % parts == 0,
          "split: axis size " + std::to_string(x.dim(axis)) +
              " not divisible into " + std::to_string(parts) + " parts");
  const int seg = x.dim(axis) / parts;
  size_t inner = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<size_t>(x.dim(i));
  size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(x.dim(i));

  std::vector<int> oshape = x.shape;
  oshape[static_cast<size_t>(axis)] = seg;
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(parts));
  const size_t xstride = static_cast<size_t>(x.dim(axis)) * inner;
  const size_t pstride = static_cast<size_t>(seg) * inner;
  for (int p = 0; p < parts; ++p) {
    Tensor t(oshape, 0.0f);
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(t.data.data() + o * pstride,
                  x.data.data() + o * xstride + p * pstride,
                  pstride * sizeof(float));
    out.push_back(std::move(t));
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad) {
  require(x.ndim() == 4, "maxpool2d: input must be [B,C,H,W]");
  require(k >= 1 && stride >= 1 && pad >= 0, "maxpool2d: bad window parameters");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H + 2 * pad >= k && W + 2 * pad >= k,
          "maxpool2d: window larger than padded input");
  const int OH = (H + 2 * pad - k) / stride + 1;
  const int OW = (W + 2 * pad - k) / stride + 1;
  Tensor y({B, C, OH, OW}, 0.0f);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float* xp = x.data.data() + (static_cast<size_t>(b) * C + c) * H * W;
      float* yp = y.data.data() + (static_cast<size_t>(b) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          float m = -std::numeric_limits<float>::infinity();
          for (int dy = 0; dy < k; ++dy) {
            const int iy = oy * stride + dy - pad;
            if (iy < 0 || iy >= H) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int ix = ox * stride + dx - pad;
              if (ix < 0 || ix >= W) continue;
              m = std::max(m, xp[static_cast<size_t>(iy) * W + ix]);
            }
          }
          yp[static_cast<size_t>(oy) * OW + ox] = m;
        }
    }
  return y;
}

Tensor avgpool_global(const Tensor& x) {
  require(x.ndim() == 4, "avgpool_global: input must be [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Tensor y({B, C}, 0.0f);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float* xp = x.data.data() + (static_cast<size_t>(b) * C + c) * plane;
      double s = 0.0;
      for (size_t i = 0; i < plane; ++i) s += xp[i];
      y.data[static_cast<size_t>(b) * C + c] =
          static_cast<float>(s / static_cast<double>(plane));
    }
  return y;
}

float frobenius_norm(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data) s += static_cast<double>(v) * v;
  return static_cast<float>(std::sqrt(s));
}

}  // namespace evnas
