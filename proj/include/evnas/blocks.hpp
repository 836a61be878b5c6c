#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "evnas/genome.hpp"
#include "evnas/tensor.hpp"

namespace evnas {

// Thrown when a forward pass produces a non-finite activation. The message
// names the offending block.
class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BlockKind { Stem, Downsample, C2f, MaxViT, Mamba, WaveMLP, ConvLSTM, SPPF };

const char* block_kind_name(BlockKind k);

struct BlockSpec {
  BlockKind kind = BlockKind::Stem;
  int cin = 0;
  int cout = 0;
  int repeats = 1;  // C2f bottlenecks / WaveMLP stacked blocks
  int heads = 1;    // Mamba head groups (MaxViT heads derive from cout)
  int window = 0;   // attention / scan partition size
};

// conv + score-time batchnorm + silu
struct ConvUnitW {
  Tensor w;
  Tensor b;
};

struct StemW {
  ConvUnitW conv;
};

struct C2fW {
  ConvUnitW cv1;
  std::vector<std::array<ConvUnitW, 2>> bottlenecks;
  ConvUnitW cv2;
};

struct AttentionUnitW {
  Tensor qkv_w, qkv_b;    // [3C,C],[3C]
  Tensor proj_w, proj_b;  // [C,C],[C]
  Tensor mlp1_w, mlp1_b;  // [4C,C],[4C]
  Tensor mlp2_w, mlp2_b;  // [C,4C],[C]
};

struct MaxViTW {
  AttentionUnitW window_attn;
  AttentionUnitW grid_attn;
};

struct MambaGroupW {
  Tensor in_w, in_b;    // [2*di, Cg]
  Tensor dw_w, dw_b;    // depthwise conv1d [di,1,3]
  Tensor a;             // [di,16], negative
  Tensor b;             // [di,16]
  Tensor c;             // [di,16]
  Tensor delta;         // [di], softplus gives the timescale
  Tensor out_w, out_b;  // [Cg, di]
};

struct MambaW {
  std::vector<MambaGroupW> groups;
};

struct WaveRepeatW {
  Tensor phase_h, phase_w;          // [C]
  Tensor mixh_wr, mixh_wi, mixh_b;  // [C,5],[C,5],[C]
  Tensor mixw_wr, mixw_wi, mixw_b;
  Tensor fcc_w, fcc_b;              // 1x1 conv [C,C,1,1]
  Tensor mlp1_w, mlp1_b;            // 1x1 conv [4C,C,1,1]
  Tensor mlp2_w, mlp2_b;            // 1x1 conv [C,4C,1,1]
};

struct WaveMLPW {
  std::vector<WaveRepeatW> repeats;
};

struct ConvLSTMW {
  Tensor dw_w, dw_b;  // depthwise 3x3 on concat(x,h): [2C,1,3,3]
  Tensor pw_w, pw_b;  // pointwise to gates: [4C,2C,1,1]
};

struct SPPFW {
  ConvUnitW cv1;  // C -> C/2
  ConvUnitW cv2;  // 2C -> C
};

using BlockWeights =
    std::variant<StemW, C2fW, MaxViTW, MambaW, WaveMLPW, ConvLSTMW, SPPFW>;

struct LayerRecord {
  BlockSpec spec;
  BlockWeights weights;
};

struct ComputeGraph {
  std::vector<LayerRecord> layers;
  int in_channels = 0;
  int height = 0;
  int width = 0;
};

// Per-ConvLSTM (h, c) pairs in graph order; empty means zero state.
struct RecurrentState {
  std::vector<std::pair<Tensor, Tensor>> hc;
};

struct ForwardHooks {
  // Called with each attention matrix [L, L] after softmax.
  std::function<void(const Tensor&)> on_attention;
};

struct ForwardResult {
  Tensor y;
  RecurrentState state;
  // One entry per batchnorm evaluation in execution order: mean over
  // channels of log(sigma).
  std::vector<float> bn_log_sigma_mean;
};

// Backbone assembly: STEM, then per stage [Downsample, Processing,
// ConvLSTM], then SPPF. H and W must be divisible by 32. Deterministic in
// (genome, seed).
ComputeGraph build_graph(const Genome& g, int height, int width,
                         std::uint64_t seed);

ForwardResult forward(const ComputeGraph& graph, const Tensor& x,
                      const RecurrentState* state = nullptr,
                      const ForwardHooks* hooks = nullptr);

struct Cost {
  unsigned long long params = 0;
  unsigned long long macs = 0;
};

// Analytic parameter/MAC totals of the backbone graph; MACs are the weight
// application multiplies of one batch-1 forward at the graph's geometry.
Cost cost(const ComputeGraph& graph);

// Backbone plus the fixed PANET and detection-head template, computed
// analytically from the genome (nothing is materialized).
Cost cost_full_model(const Genome& g, int height, int width);

// Single-block cost at the given input spatial size (batch 1).
Cost block_cost(const BlockSpec& spec, int h_in, int w_in);

// Human-readable layer table with shapes, params, and MACs.
std::string describe(const ComputeGraph& graph);

}  // namespace evnas
