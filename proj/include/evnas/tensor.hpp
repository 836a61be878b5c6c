#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace evnas {

// Error thrown on malformed shapes/axes. The message names the offending
// dimension or axis.
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major float32 tensor. Immutable by convention once built:
// every op returns a fresh tensor and never aliases its inputs.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f);
  static Tensor from(std::vector<int> s, std::vector<float> values);

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  std::size_t size() const { return data.size(); }

  // Element count implied by a shape vector.
  static std::size_t numel(const std::vector<int>& s);

  // 4-d accessors for [B,C,H,W] layouts, used heavily by the blocks.
  float at4(int b, int c, int h, int w) const {
    return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  float& at4(int b, int c, int h, int w) {
    return data[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool all_finite() const;
};

// Deterministic random source: std::mt19937_64 (a named, fully specified
// generator) with Box-Muller for standard normals. Identical seeds give
// identical streams on every conforming platform; no std distribution
// objects are used because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0,n) via rejection sampling.
  std::uint64_t bounded(std::uint64_t n);

  // Standard normal via Box-Muller; pairs are cached.
  double normal();
  float normal_f() { return static_cast<float>(normal()); }

  // Tensor of iid standard normals.
  Tensor normal_tensor(std::vector<int> shape, float scale = 1.0f);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream splitting: decorrelates substreams drawn from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// MAC accounting. When enabled (thread-local), every op that applies
// stored weights to data adds its multiply count. Multiplies where both
// operands depend on the input (e.g. attention QK^T) and normalization
// or bias arithmetic are not counted.
namespace macs {
void enable();
void disable();
unsigned long long count();
void add(unsigned long long n);
}  // namespace macs

// --- ops ------------------------------------------------------------------

// Cross-correlation, weight layout [Cout, Cin/groups, k, k].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad, int groups = 1);

// 1-d convolution over [B, C, L], weight [Cout, Cin/groups, k], stride 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, int pad,
              int groups = 1);

struct BatchNormResult {
  Tensor y;
  std::vector<float> sigma;  // pre-normalization per-channel std, eps inside sqrt
};

// Score-time batch normalization over (B,H,W) per channel; no learned affine.
BatchNormResult batchnorm(const Tensor& x);

// Per-position normalization over the last axis, eps 1e-5, no affine.
Tensor layernorm(const Tensor& x);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, int parts);

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad);

// [B,C,H,W] -> [B,C] means.
Tensor avgpool_global(const Tensor& x);

// Row-major matrix products. matmul: [m,k]x[k,n]; matmul_nt: [m,k]x[n,k]^T.
// Neither counts MACs (used for activation-activation products); linear does.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x [..., in] * w[out, in]^T + bias -> [..., out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);

float frobenius_norm(const Tensor& x);

}  // namespace evnas
