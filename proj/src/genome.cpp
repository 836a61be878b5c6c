#include "evnas/genome.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace evnas {

const char* block_name(BlockType b) {
  switch (b) {
    case BlockType::C2f: return "c2f";
    case BlockType::MaxViT: return "maxvit";
    case BlockType::Mamba: return "mamba";
    case BlockType::WaveMLP: return "wavemlp";
  }
  return "?";
}

std::optional<BlockType> block_from_name(const std::string& name) {
  if (name == "c2f") return BlockType::C2f;
  if (name == "maxvit") return BlockType::MaxViT;
  if (name == "mamba") return BlockType::Mamba;
  if (name == "wavemlp") return BlockType::WaveMLP;
  return std::nullopt;
}

namespace {

template <typename T>
T pick(Rng& rng, const std::vector<T>& domain) {
  if (domain.empty()) throw TensorError("design space: empty gene domain");
  return domain[rng.bounded(domain.size())];
}

// Uniform choice different from `current`; requires |domain| >= 2.
template <typename T>
T pick_different(Rng& rng, const std::vector<T>& domain, const T& current) {
  std::vector<T> rest;
  for (const T& v : domain)
    if (!(v == current)) rest.push_back(v);
  return pick(rng, rest);
}

template <typename T>
bool contains(const std::vector<T>& domain, const T& v) {
  return std::find(domain.begin(), domain.end(), v) != domain.end();
}

void sample_dependents(LayerGene& gene, Rng& rng, const DesignSpace& ds) {
  if (gene.block == BlockType::Mamba) {
    gene.heads = pick(rng, ds.heads);
    gene.head_multiplier = pick(rng, ds.head_multipliers);
    gene.repeats = 1;
  } else {
    gene.repeats = pick(rng, ds.repeats);
    gene.heads = 1;
    gene.head_multiplier = 1.0;
  }
}

}  // namespace

Genome sample_genome(Rng& rng, const DesignSpace& ds) {
  Genome g;
  g.encoding = pick(rng, ds.encodings);
  g.stem_ch = pick(rng, ds.stem_channels);
  for (LayerGene& gene : g.layers) {
    gene.multiplier = pick(rng, ds.multipliers);
    gene.block = pick(rng, ds.blocks);
    sample_dependents(gene, rng, ds);
  }
  return g;
}

bool genome_valid(const Genome& g, const DesignSpace& ds) {
  if (!contains(ds.encodings, g.encoding)) return false;
  if (!contains(ds.stem_channels, g.stem_ch)) return false;
  for (const LayerGene& gene : g.layers) {
    if (!contains(ds.multipliers, gene.multiplier)) return false;
    if (!contains(ds.blocks, gene.block)) return false;
    if (gene.block == BlockType::Mamba) {
      if (!contains(ds.heads, gene.heads)) return false;
      if (!contains(ds.head_multipliers, gene.head_multiplier)) return false;
    } else {
      if (!contains(ds.repeats, gene.repeats)) return false;
    }
  }
  return true;
}

Genome mutate_genome(const Genome& g, Rng& rng, const DesignSpace& ds) {
  // Mutable gene slots: encoding, stem, and per layer the multiplier, the
  // block type, and the block's dependent genes.
  enum class Slot { Encoding, Stem, Multiplier, Block, Repeats, Heads, HeadMult };
  struct Entry {
    Slot slot;
    int layer;
  };
  std::vector<Entry> slots;
  if (ds.encodings.size() > 1) slots.push_back({Slot::Encoding, -1});
  if (ds.stem_channels.size() > 1) slots.push_back({Slot::Stem, -1});
  for (int i = 0; i < kNumLayers; ++i) {
    if (ds.multipliers.size() > 1) slots.push_back({Slot::Multiplier, i});
    if (ds.blocks.size() > 1) slots.push_back({Slot::Block, i});
    if (g.layers[static_cast<size_t>(i)].block == BlockType::Mamba) {
      if (ds.heads.size() > 1) slots.push_back({Slot::Heads, i});
      if (ds.head_multipliers.size() > 1) slots.push_back({Slot::HeadMult, i});
    } else {
      if (ds.repeats.size() > 1) slots.push_back({Slot::Repeats, i});
    }
  }
  if (slots.empty()) return g;

  Genome out = g;
  const Entry e = slots[rng.bounded(slots.size())];
  switch (e.slot) {
    case Slot::Encoding:
      out.encoding = pick_different(rng, ds.encodings, g.encoding);
      break;
    case Slot::Stem:
      out.stem_ch = pick_different(rng, ds.stem_channels, g.stem_ch);
      break;
    case Slot::Multiplier: {
      LayerGene& gene = out.layers[static_cast<size_t>(e.layer)];
      gene.multiplier = pick_different(rng, ds.multipliers, gene.multiplier);
      break;
    }
    case Slot::Block: {
      LayerGene& gene = out.layers[static_cast<size_t>(e.layer)];
      gene.block = pick_different(rng, ds.blocks, gene.block);
      sample_dependents(gene, rng, ds);
      break;
    }
    case Slot::Repeats: {
      LayerGene& gene = out.layers[static_cast<size_t>(e.layer)];
      gene.repeats = pick_different(rng, ds.repeats, gene.repeats);
      break;
    }
    case Slot::Heads: {
      LayerGene& gene = out.layers[static_cast<size_t>(e.layer)];
      gene.heads = pick_different(rng, ds.heads, gene.heads);
      break;
    }
    case Slot::HeadMult: {
      LayerGene& gene = out.layers[static_cast<size_t>(e.layer)];
      gene.head_multiplier =
          pick_different(rng, ds.head_multipliers, gene.head_multiplier);
      break;
    }
  }
  return out;
}

unsigned long long design_space_size(const DesignSpace& ds) {
  unsigned long long per_layer = 0;
  for (BlockType b : ds.blocks) {
    if (b == BlockType::Mamba)
      per_layer += static_cast<unsigned long long>(ds.heads.size()) *
                   ds.head_multipliers.size();
    else
      per_layer += ds.repeats.size();
  }
  per_layer *= ds.multipliers.size();

  unsigned long long total =
      static_cast<unsigned long long>(ds.encodings.size()) * ds.stem_channels.size();
  for (int i = 0; i < ds.num_layers; ++i) total *= per_layer;
  return total;
}

int round_to_multiple_of_8(double v) {
  // Nearest multiple of 8; exact halves round up.
  const int lo = static_cast<int>(std::floor(v / 8.0)) * 8;
  const int hi = lo + 8;
  const double dlo = v - lo, dhi = hi - v;
  if (dlo < dhi) return lo;
  return hi;
}

DerivedChannels derive_channels(const Genome& g, int bins) {
  DerivedChannels dc;
  dc.input_channels = encoding_channels(g.encoding, bins);
  dc.stem_out = g.stem_ch;
  int prev = g.stem_ch;
  int prev_mamba_heads = 0;
  for (int i = 0; i < kNumLayers; ++i) {
    const LayerGene& gene = g.layers[static_cast<size_t>(i)];
    dc.layer_in[static_cast<size_t>(i)] = prev;
    const int out = round_to_multiple_of_8(gene.multiplier * prev);
    dc.layer_out[static_cast<size_t>(i)] = out;
    if (gene.block == BlockType::Mamba) {
      int h;
      if (prev_mamba_heads > 0)
        h = static_cast<int>(std::lround(gene.head_multiplier * prev_mamba_heads));
      else
        h = gene.heads;
      if (h < 1) h = 1;
      dc.mamba_heads[static_cast<size_t>(i)] = h;
      prev_mamba_heads = h;
    }
    prev = out;
  }
  dc.panet_c2f_out = {8 * g.stem_ch, 4 * g.stem_ch, 8 * g.stem_ch,
                      16 * g.stem_ch};
  return dc;
}

// --- string grammar ----------------------------------------------------------

namespace {

std::string fmt_mult(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_hm(double v) {
  // 1.0 -> "1.0", 1.25 -> "1.25"
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s.size() >= 2 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

class Cursor {
 public:
  explicit Cursor(const std::string& s) : s_(s) {}

  bool done() const { return pos_ >= s_.size(); }
  size_t pos() const { return pos_; }

  std::string until(char delim) {
    size_t end = s_.find(delim, pos_);
    if (end == std::string::npos) end = s_.size();
    std::string tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    return tok;
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c)
      throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  bool try_consume(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

 private:
  const std::string& s_;
  size_t pos_ = 0;
};

int parse_int(const std::string& tok, size_t at) {
  if (tok.empty()) throw ParseError("expected integer", at);
  size_t pos = 0;
  int v;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + tok + "'", at);
  }
  if (pos != tok.size()) throw ParseError("bad integer '" + tok + "'", at);
  return v;
}

double parse_decimal(const std::string& tok, size_t at) {
  if (tok.empty()) throw ParseError("expected decimal", at);
  size_t pos = 0;
  double v;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad decimal '" + tok + "'", at);
  }
  if (pos != tok.size()) throw ParseError("bad decimal '" + tok + "'", at);
  return v;
}

// Snap a parsed decimal to the canonical domain value it prints as, so that
// parse(serialize(g)) == g bit-exactly.
double snap(double v, const std::vector<double>& domain) {
  for (double d : domain)
    if (std::abs(d - v) < 5e-3) return d;
  return v;
}

}  // namespace

std::string serialize_genome(const Genome& g) {
  std::string out = encoding_name(g.encoding);
  out += "|Ch" + std::to_string(g.stem_ch);
  for (int i = 0; i < kNumLayers; ++i) {
    const LayerGene& gene = g.layers[static_cast<size_t>(i)];
    out += "|L" + std::to_string(i + 1) + ":" + block_name(gene.block) +
           ",m" + fmt_mult(gene.multiplier);
    if (gene.block == BlockType::Mamba)
      out += ",h" + std::to_string(gene.heads) + ",hm" + fmt_hm(gene.head_multiplier);
    else
      out += ",r" + std::to_string(gene.repeats);
  }
  return out;
}

Genome parse_genome(const std::string& text) {
  static const DesignSpace kDomains;  // canonical value snapping
  Cursor c(text);
  Genome g;

  const size_t enc_at = c.pos();
  const std::string enc = c.until('|');
  const auto encoding = encoding_from_name(enc);
  if (!encoding) throw ParseError("unknown encoding '" + enc + "'", enc_at);
  g.encoding = *encoding;

  c.expect('|');
  const size_t ch_at = c.pos();
  std::string ch = c.until('|');
  if (ch.size() < 3 || ch[0] != 'C' || ch[1] != 'h')
    throw ParseError("expected ChN", ch_at);
  g.stem_ch = parse_int(ch.substr(2), ch_at + 2);

  for (int i = 0; i < kNumLayers; ++i) {
    c.expect('|');
    const size_t tag_at = c.pos();
    const std::string tag = "L" + std::to_string(i + 1);
    for (char t : tag) {
      if (!c.try_consume(t))
        throw ParseError("expected layer tag " + tag, tag_at);
    }
    c.expect(':');

    LayerGene& gene = g.layers[static_cast<size_t>(i)];
    const size_t blk_at = c.pos();
    const std::string blk = c.until(',');
    const auto block = block_from_name(blk);
    if (!block) throw ParseError("unknown block '" + blk + "'", blk_at);
    gene.block = *block;

    c.expect(',');
    const size_t m_at = c.pos();
    if (!c.try_consume('m')) throw ParseError("expected multiplier mX.XX", m_at);
    gene.multiplier =
        snap(parse_decimal(c.until(','), m_at + 1), kDomains.multipliers);

    c.expect(',');
    const size_t p_at = c.pos();
    if (gene.block == BlockType::Mamba) {
      if (!c.try_consume('h')) throw ParseError("expected heads hN", p_at);
      gene.heads = parse_int(c.until(','), p_at + 1);
      c.expect(',');
      const size_t hm_at = c.pos();
      if (!c.try_consume('h') || !c.try_consume('m'))
        throw ParseError("expected head multiplier hmX.X", hm_at);
      gene.head_multiplier =
          snap(parse_decimal(c.until('|'), hm_at + 2), kDomains.head_multipliers);
      gene.repeats = 1;
    } else {
      if (!c.try_consume('r')) throw ParseError("expected repeats rN", p_at);
      gene.repeats = parse_int(c.until('|'), p_at + 1);
      gene.heads = 1;
      gene.head_multiplier = 1.0;
    }
  }
  if (!c.done()) throw ParseError("trailing input", c.pos());
  return g;
}

}  // namespace evnas
