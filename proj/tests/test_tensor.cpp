#include <cmath>

#include "doctest.h"
#include "evnas/tensor.hpp"

using namespace evnas;

namespace {

// Independent reference: plain six-nested-loop cross-correlation.
Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor* bias,
                        int stride, int pad) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor y({B, Cout, OH, OW}, 0.0f);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias ? bias->data[co] : 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx) {
                const int iy = oy * stride + dy - pad;
                const int ix = ox * stride + dx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(x.at4(b, ci, iy, ix)) *
                       w.data[((static_cast<size_t>(co) * Cin + ci) * kh + dy) * kw + dx];
              }
          y.at4(b, co, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d shape algebra") {
  Rng rng(1);
  Tensor x = rng.normal_tensor({1, 10, 64, 64});
  Tensor w = rng.normal_tensor({16, 10, 3, 3});
  Tensor y = conv2d(x, w, nullptr, 2, 1);
  CHECK(y.shape == std::vector<int>({1, 16, 32, 32}));
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(2);
  Tensor x = rng.normal_tensor({1, 1, 3, 3});
  Tensor w = Tensor::from({1, 1, 1, 1}, {1.0f});
  Tensor y = conv2d(x, w, nullptr, 1, 0);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
  Tensor x({1, 1, 4, 4}, 1.0f);
  Tensor w({1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d(x, w, nullptr, 1, 0);
  CHECK(y.shape == std::vector<int>({1, 1, 2, 2}));
  for (float v : y.data) CHECK(v == doctest::Approx(9.0f));
}

TEST_CASE("conv2d matches the six-loop reference on random inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    const int b = 1 + static_cast<int>(rng.bounded(2));
    const int cin = 1 + static_cast<int>(rng.bounded(8));
    const int cout = 1 + static_cast<int>(rng.bounded(8));
    const int h = 4 + static_cast<int>(rng.bounded(13));
    const int w = 4 + static_cast<int>(rng.bounded(13));
    const int k = 1 + 2 * static_cast<int>(rng.bounded(2));  // 1 or 3
    const int stride = 1 + static_cast<int>(rng.bounded(2));
    const int pad = static_cast<int>(rng.bounded(2));
    Tensor x = rng.normal_tensor({b, cin, h, w});
    Tensor wt = rng.normal_tensor({cout, cin, k, k});
    Tensor bias = rng.normal_tensor({cout});
    Tensor fast = conv2d(x, wt, &bias, stride, pad);
    Tensor ref = conv2d_reference(x, wt, &bias, stride, pad);
    REQUIRE(fast.shape == ref.shape);
    for (size_t i = 0; i < fast.size(); ++i) {
      const float denom = std::max(1.0f, std::abs(ref.data[i]));
      CHECK(std::abs(fast.data[i] - ref.data[i]) / denom < 1e-5f);
    }
  }
}

TEST_CASE("conv2d rejects mismatched shapes with a named dimension") {
  Tensor x({1, 3, 8, 8}, 0.0f);
  Tensor w({4, 2, 3, 3}, 0.0f);
  CHECK_THROWS_WITH_AS(conv2d(x, w, nullptr, 1, 1),
                       doctest::Contains("Cin/groups"), TensorError);
  Tensor w2({4, 3, 9, 9}, 0.0f);
  CHECK_THROWS_AS(conv2d(x, w2, nullptr, 1, 0), TensorError);
}

TEST_CASE("batchnorm symmetric two-point channel") {
  Tensor x = Tensor::from({2, 1, 1, 1}, {-1.0f, 1.0f});
  BatchNormResult r = batchnorm(x);
  CHECK(r.y.data[0] == doctest::Approx(-1.0f).epsilon(1e-4));
  CHECK(r.y.data[1] == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("batchnorm constant channel degenerates to sqrt(eps)") {
  Tensor x({1, 1, 2, 2}, 5.0f);
  BatchNormResult r = batchnorm(x);
  for (float v : r.y.data) CHECK(v == doctest::Approx(0.0f));
  CHECK(r.sigma[0] == doctest::Approx(std::sqrt(1e-5f)));
}

TEST_CASE("batchnorm hand-computed sigma") {
  Tensor x = Tensor::from({2, 1, 1, 1}, {0.0f, 2.0f});
  BatchNormResult r = batchnorm(x);
  CHECK(r.sigma[0] == doctest::Approx(std::sqrt(1.0f + 1e-5f)));
}

TEST_CASE("batchnorm output statistics on random input") {
  Rng rng(7);
  Tensor x = rng.normal_tensor({4, 6, 8, 8}, 3.0f);
  for (float& v : x.data) v += 1.5f;
  BatchNormResult r = batchnorm(x);
  const int C = 6;
  const size_t n = 4 * 8 * 8;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 64; ++i) {
        const float v = r.y.data[((static_cast<size_t>(b) * C + c) * 64) + i];
        sum += v;
        sq += static_cast<double>(v) * v;
      }
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("softmax symmetry and row sums") {
  Tensor x = Tensor::from({2}, {0.0f, 0.0f});
  Tensor y = softmax(x, 0);
  CHECK(y.data[0] == doctest::Approx(0.5f));
  CHECK(y.data[1] == doctest::Approx(0.5f));

  Rng rng(11);
  Tensor r = rng.normal_tensor({5, 7});
  Tensor sm = softmax(r, 1);
  for (int i = 0; i < 5; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += sm.data[static_cast<size_t>(i) * 7 + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("silu at zero and maxpool shape") {
  Tensor x = Tensor::from({1}, {0.0f});
  CHECK(silu(x).data[0] == 0.0f);

  Tensor m({1, 1, 8, 8}, 1.0f);
  CHECK(maxpool2d(m, 5, 1, 2).shape == std::vector<int>({1, 1, 8, 8}));
}

TEST_CASE("layernorm per-position statistics") {
  Rng rng(13);
  Tensor x = rng.normal_tensor({3, 4, 16}, 2.5f);
  Tensor y = layernorm(x);
  for (size_t r = 0; r < 12; ++r) {
    double s = 0.0, sq = 0.0;
    for (int i = 0; i < 16; ++i) {
      const float v = y.data[r * 16 + i];
      s += v;
      sq += static_cast<double>(v) * v;
    }
    CHECK(std::abs(s / 16.0) < 1e-5);
    CHECK(std::abs(sq / 16.0 - s / 16.0 * s / 16.0 - 1.0) < 1e-2);
  }
}

TEST_CASE("frobenius norm") {
  CHECK(frobenius_norm(Tensor({3, 3}, 0.0f)) == 0.0f);
  CHECK(frobenius_norm(Tensor::from({2}, {3.0f, 4.0f})) == doctest::Approx(5.0f));
  CHECK(frobenius_norm(Tensor({2, 2, 2}, 1.0f)) ==
        doctest::Approx(std::sqrt(8.0f)));
}

TEST_CASE("split and concat round-trip") {
  Rng rng(17);
  Tensor x = rng.normal_tensor({2, 6, 3, 3});
  auto parts = split(x, 1, 3);
  CHECK(parts.size() == 3);
  CHECK(parts[0].shape == std::vector<int>({2, 2, 3, 3}));
  Tensor back = concat(parts, 1);
  REQUIRE(back.shape == x.shape);
  for (size_t i = 0; i < x.size(); ++i) CHECK(back.data[i] == x.data[i]);

  CHECK_THROWS_AS(split(x, 1, 4), TensorError);
  CHECK_THROWS_AS(softmax(x, 4), TensorError);
}

TEST_CASE("rng reproducibility over 10k normal samples") {
  Rng a(123456789);
  Rng b(123456789);
  for (int i = 0; i < 10000; ++i) {
    const double va = a.normal(), vb = b.normal();
    REQUIRE(va == vb);
    REQUIRE(std::isfinite(va));
  }
}

TEST_CASE("rng normal moments are plausible") {
  Rng a(42);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = a.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("rng bounded draws are unbiased across a small range") {
  Rng a(99);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) ++counts[a.bounded(5)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("linear and matmul agree with hand values") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor b = Tensor::from({2}, {10.0f, 20.0f});
  Tensor y = linear(x, w, &b);
  CHECK(y.shape == std::vector<int>({2, 2}));
  CHECK(y.data[0] == 11.0f);
  CHECK(y.data[1] == 22.0f);
  CHECK(y.data[2] == 14.0f);
  CHECK(y.data[3] == 25.0f);

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor c = matmul(a, a);
  CHECK(c.data[0] == 7.0f);
  CHECK(c.data[3] == 22.0f);

  Tensor nt = matmul_nt(a, a);  // a * a^T
  CHECK(nt.data[0] == 5.0f);
  CHECK(nt.data[3] == 25.0f);
}

TEST_CASE("determinism: repeated op calls are bit-identical") {
  Rng rng(5);
  Tensor x = rng.normal_tensor({2, 4, 9, 9});
  Tensor w = rng.normal_tensor({6, 4, 3, 3});
  Tensor y1 = conv2d(x, w, nullptr, 2, 1);
  Tensor y2 = conv2d(x, w, nullptr, 2, 1);
  REQUIRE(y1.data == y2.data);
}

TEST_CASE("mac counter tracks conv and linear weight applications") {
  Rng rng(21);
  Tensor x = rng.normal_tensor({1, 10, 64, 64});
  Tensor w = rng.normal_tensor({16, 10, 3, 3});
  macs::enable();
  conv2d(x, w, nullptr, 2, 1);
  CHECK(macs::count() == 1474560ull);  // 16*10*9*32*32
  macs::disable();
}
