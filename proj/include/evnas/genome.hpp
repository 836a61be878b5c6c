#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evnas/events.hpp"
#include "evnas/tensor.hpp"

namespace evnas {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, size_t pos)
      : std::runtime_error(msg + " at position " + std::to_string(pos)),
        position(pos) {}
  size_t position;
};

enum class BlockType { C2f, MaxViT, Mamba, WaveMLP };

const char* block_name(BlockType b);
std::optional<BlockType> block_from_name(const std::string& name);

// One searchable backbone stage. repeats applies to every block except
// Mamba; heads and head_multiplier apply to Mamba only.
struct LayerGene {
  double multiplier = 1.0;
  BlockType block = BlockType::C2f;
  int repeats = 1;
  int heads = 1;
  double head_multiplier = 1.0;

  bool operator==(const LayerGene&) const = default;
};

constexpr int kNumLayers = 4;

struct Genome {
  Encoding encoding = Encoding::SHIST;
  int stem_ch = 16;
  std::array<LayerGene, kNumLayers> layers;

  bool operator==(const Genome&) const = default;
};

// Domains of every gene. Shrinking a domain restricts sampling, mutation,
// and the analytic design-space count; a single-valued domain freezes the
// gene (mutation skips it).
struct DesignSpace {
  std::vector<Encoding> encodings = {Encoding::VTEI, Encoding::SHIST,
                                     Encoding::MDES, Encoding::TAF};
  std::vector<int> stem_channels = {16, 24, 32, 40, 48};
  std::vector<double> multipliers = {1.0, 1.25, 1.33, 1.50, 1.66, 1.75, 2.00};
  std::vector<BlockType> blocks = {BlockType::C2f, BlockType::MaxViT,
                                   BlockType::Mamba, BlockType::WaveMLP};
  std::vector<int> repeats = {1, 2, 3};
  std::vector<int> heads = {1, 2, 3};
  std::vector<double> head_multipliers = {1.0, 1.25, 1.5, 2.0};
  int num_layers = kNumLayers;  // smaller values only affect size counting

  // Temporal bins per encoding; fixed to five in the reference setup.
  int bins = 5;

  static DesignSpace standard() { return {}; }
  // Encoding frozen to a single choice (search default).
  static DesignSpace frozen_encoding(Encoding e) {
    DesignSpace ds;
    ds.encodings = {e};
    return ds;
  }
};

// Uniform draw of every gene from its domain.
Genome sample_genome(Rng& rng, const DesignSpace& ds = DesignSpace::standard());

// Changes exactly one uniformly chosen mutable gene to a different legal
// value. Changing a block type resamples its dependent genes. Genes whose
// domain holds a single value are not mutable.
Genome mutate_genome(const Genome& g, Rng& rng,
                     const DesignSpace& ds = DesignSpace::standard());

bool genome_valid(const Genome& g, const DesignSpace& ds);

// Exact number of genomes the generator can produce, by the product rule.
// Returns 0 when any required domain is empty.
unsigned long long design_space_size(const DesignSpace& ds);

struct DerivedChannels {
  int input_channels = 0;              // encoder output channels into the STEM
  int stem_out = 0;
  std::array<int, kNumLayers> layer_in{};
  std::array<int, kNumLayers> layer_out{};
  std::array<int, kNumLayers> mamba_heads{};  // 0 for non-Mamba layers
  std::array<int, 4> panet_c2f_out{};         // fixed head cost rule
};

// Nearest multiple of 8, ties rounding up.
int round_to_multiple_of_8(double v);

DerivedChannels derive_channels(const Genome& g, int bins = 5);

// Grammar: ENC|ChN|L1:block,mX.XX,(rN|hN,hmX.X)|...|L4:...
std::string serialize_genome(const Genome& g);
Genome parse_genome(const std::string& text);

}  // namespace evnas
