#include "evnas/events.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace evnas {

namespace {

int polarity_index(std::int8_t p) { return p < 0 ? 0 : 1; }

std::uint64_t bin_of(std::uint64_t t, std::uint64_t t_a, std::uint64_t t_b,
                     int bins) {
  // floor((t - t_a) * B / (t_b - t_a)), clamped to the top bin.
  const std::uint64_t num = (t - t_a) * static_cast<std::uint64_t>(bins);
  std::uint64_t b = num / (t_b - t_a);
  if (b >= static_cast<std::uint64_t>(bins)) b = static_cast<std::uint64_t>(bins) - 1;
  return b;
}

}  // namespace

void EventWindow::validate() const {
  if (t_b <= t_a) throw IoError("EventWindow: t_b must exceed t_a");
  if (width <= 0 || height <= 0)
    throw IoError("EventWindow: sensor geometry must be positive");
  std::uint64_t prev = t_a;
  for (size_t i = 0; i < events.size(); ++i) {
    const EventRecord& e = events[i];
    if (e.t_us < t_a || e.t_us >= t_b)
      throw IoError("EventWindow: event " + std::to_string(i) +
                    " timestamp outside [t_a, t_b)");
    if (e.t_us < prev)
      throw IoError("EventWindow: event " + std::to_string(i) +
                    " breaks time ordering");
    if (e.x >= width || e.y >= height)
      throw IoError("EventWindow: event " + std::to_string(i) +
                    " outside sensor geometry");
    if (e.p != 1 && e.p != -1)
      throw IoError("EventWindow: event " + std::to_string(i) +
                    " has polarity outside {-1,+1}");
    prev = e.t_us;
  }
}

const char* encoding_name(Encoding e) {
  switch (e) {
    case Encoding::VTEI: return "VTEI";
    case Encoding::MDES: return "MDES";
    case Encoding::SHIST: return "SHIST";
    case Encoding::TAF: return "TAF";
  }
  return "?";
}

std::optional<Encoding> encoding_from_name(const std::string& name) {
  std::string u;
  for (char c : name) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "VTEI") return Encoding::VTEI;
  if (u == "MDES") return Encoding::MDES;
  if (u == "SHIST") return Encoding::SHIST;
  if (u == "TAF") return Encoding::TAF;
  return std::nullopt;
}

int encoding_channels(Encoding e, int bins) {
  switch (e) {
    case Encoding::VTEI:
    case Encoding::MDES:
      return bins;
    case Encoding::SHIST:
    case Encoding::TAF:
      return 2 * bins;
  }
  return bins;
}

EncodedTensor encode_vtei(const EventWindow& w, int bins) {
  if (bins < 1) throw IoError("encode_vtei: bins must be >= 1");
  w.validate();
  EncodedTensor out;
  out.format = Encoding::VTEI;
  out.bins = bins;
  out.tensor = Tensor({bins, w.height, w.width}, 0.0f);
  const size_t plane = static_cast<size_t>(w.height) * w.width;
  for (const EventRecord& e : w.events) {
    const std::uint64_t b = bin_of(e.t_us, w.t_a, w.t_b, bins);
    out.tensor.data[b * plane + static_cast<size_t>(e.y) * w.width + e.x] =
        static_cast<float>(e.p);
  }
  return out;
}

EncodedTensor encode_mdes(const EventWindow& w, int bins) {
  if (bins < 1) throw IoError("encode_mdes: bins must be >= 1");
  w.validate();
  EncodedTensor out;
  out.format = Encoding::MDES;
  out.bins = bins;
  out.tensor = Tensor({bins, w.height, w.width}, 0.0f);
  const size_t n_total = w.events.size();
  const size_t plane = static_cast<size_t>(w.height) * w.width;
  for (int b = 0; b < bins; ++b) {
    const size_t n_b = b < 63 ? n_total >> b : 0;  // floor(N / 2^b)
    // Replay the last n_b events in order; the final write per pixel wins.
    float* stack = out.tensor.data.data() + static_cast<size_t>(b) * plane;
    for (size_t i = n_total - n_b; i < n_total; ++i) {
      const EventRecord& e = w.events[i];
      stack[static_cast<size_t>(e.y) * w.width + e.x] = e.p > 0 ? 255.0f : 127.0f;
    }
  }
  return out;
}

EncodedTensor encode_shist(const EventWindow& w, int bins) {
  if (bins < 1) throw IoError("encode_shist: bins must be >= 1");
  w.validate();
  EncodedTensor out;
  out.format = Encoding::SHIST;
  out.bins = bins;
  out.tensor = Tensor({2 * bins, w.height, w.width}, 0.0f);
  const size_t plane = static_cast<size_t>(w.height) * w.width;
  for (const EventRecord& e : w.events) {
    const std::uint64_t tau = bin_of(e.t_us, w.t_a, w.t_b, bins);
    const size_t ch = static_cast<size_t>(polarity_index(e.p)) * bins + tau;
    float& cell = out.tensor.data[ch * plane + static_cast<size_t>(e.y) * w.width + e.x];
    if (cell < 255.0f) cell += 1.0f;
  }
  return out;
}

TafEncoder::TafEncoder(int width, int height, int depth)
    : width_(width), height_(height), depth_(depth) {
  if (width <= 0 || height <= 0) throw IoError("TafEncoder: bad geometry");
  if (depth < 1) throw IoError("TafEncoder: depth must be >= 1");
  fifo_.resize(static_cast<size_t>(width) * height * 2);
}

EncodedTensor TafEncoder::push_window(const EventWindow& w) {
  w.validate();
  if (w.width != width_ || w.height != height_)
    throw IoError("TafEncoder: window geometry differs from encoder geometry");
  if (any_pushed_ && w.t_a < last_t_b_)
    throw IoError("TafEncoder: window [" + std::to_string(w.t_a) + "," +
                  std::to_string(w.t_b) + ") pushed out of order");
  any_pushed_ = true;
  last_t_b_ = w.t_b;

  for (const EventRecord& e : w.events) {
    std::deque<std::uint64_t>& q =
        fifo_[2 * (static_cast<size_t>(e.y) * width_ + e.x) +
              static_cast<size_t>(polarity_index(e.p))];
    q.push_front(e.t_us);
    if (q.size() > static_cast<size_t>(depth_)) q.pop_back();
  }

  EncodedTensor out;
  out.format = Encoding::TAF;
  out.bins = depth_;
  out.tensor = Tensor({2 * depth_, w.height, w.width}, -1.0f);
  const size_t plane = static_cast<size_t>(w.height) * w.width;
  const double span = static_cast<double>(w.t_b - w.t_a);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      for (int pi = 0; pi < 2; ++pi) {
        const std::deque<std::uint64_t>& q =
            fifo_[2 * (static_cast<size_t>(y) * width_ + x) + static_cast<size_t>(pi)];
        for (size_t j = 0; j < q.size(); ++j) {
          // Raw age can exceed 1 for events retained from earlier windows;
          // a/(1+a) keeps the cell domain at [0,1) while preserving order.
          const double a = static_cast<double>(w.t_b - q[j]) / span;
          const size_t ch = static_cast<size_t>(pi) * depth_ + j;
          out.tensor.data[ch * plane + static_cast<size_t>(y) * width_ + x] =
              static_cast<float>(a / (1.0 + a));
        }
      }
    }
  }
  return out;
}

// --- event file I/O ---------------------------------------------------------

namespace {

constexpr char kCsvHeader[] = "t_us,x,y,p";

class CsvEventReader : public EventReader {
 public:
  explicit CsvEventReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in_, header)) throw IoError(path + ": empty file, expected header");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != kCsvHeader)
      throw IoError(path + ":1: bad header '" + header + "', expected '" +
                    kCsvHeader + "'");
    line_ = 1;
  }

  std::optional<EventRecord> next() override {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return parse(line);
    }
    return std::nullopt;
  }

 private:
  EventRecord parse(const std::string& line) {
    std::array<std::string, 4> f;
    size_t start = 0, idx = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (idx >= 4) fail("too many fields");
        f[idx++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (idx != 4) fail("expected 4 fields");
    EventRecord e;
    try {
      size_t pos = 0;
      e.t_us = std::stoull(f[0], &pos);
      if (pos != f[0].size()) fail("bad t_us");
      unsigned long xv = std::stoul(f[1], &pos);
      if (pos != f[1].size() || xv > 0xFFFF) fail("bad x");
      e.x = static_cast<std::uint16_t>(xv);
      unsigned long yv = std::stoul(f[2], &pos);
      if (pos != f[2].size() || yv > 0xFFFF) fail("bad y");
      e.y = static_cast<std::uint16_t>(yv);
      long pv = std::stol(f[3], &pos);
      if (pos != f[3].size()) fail("bad p");
      if (pv != 1 && pv != -1) fail("polarity must be 1 or -1");
      e.p = static_cast<std::int8_t>(pv);
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      fail("unparsable field");
    }
    return e;
  }

  [[noreturn]] void fail(const std::string& why) {
    throw IoError(path_ + ":" + std::to_string(line_) + ": " + why);
  }

  std::string path_;
  std::ifstream in_;
  size_t line_ = 0;
};

constexpr size_t kEvtRecordSize = 16;

class EvtEventReader : public EventReader {
 public:
  explicit EvtEventReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
  }

  std::optional<EventRecord> next() override {
    unsigned char buf[kEvtRecordSize];
    in_.read(reinterpret_cast<char*>(buf), kEvtRecordSize);
    const std::streamsize got = in_.gcount();
    if (got == 0) return std::nullopt;
    if (got != static_cast<std::streamsize>(kEvtRecordSize))
      throw IoError(path_ + ": truncated record at byte offset " +
                    std::to_string(offset_));
    EventRecord e;
    std::uint64_t t = 0;
    for (int i = 7; i >= 0; --i) t = (t << 8) | buf[i];
    e.t_us = t;
    e.x = static_cast<std::uint16_t>(buf[8] | (buf[9] << 8));
    e.y = static_cast<std::uint16_t>(buf[10] | (buf[11] << 8));
    e.p = static_cast<std::int8_t>(buf[12]);
    if (e.p != 1 && e.p != -1)
      throw IoError(path_ + ": invalid polarity at byte offset " +
                    std::to_string(offset_ + 12));
    if (buf[13] != 0 || buf[14] != 0 || buf[15] != 0)
      throw IoError(path_ + ": nonzero padding at byte offset " +
                    std::to_string(offset_ + 13));
    offset_ += kEvtRecordSize;
    return e;
  }

 private:
  std::string path_;
  std::ifstream in_;
  size_t offset_ = 0;
};

}  // namespace

std::unique_ptr<EventReader> open_events(const std::string& path,
                                         EventFileFormat format) {
  if (format == EventFileFormat::Csv)
    return std::make_unique<CsvEventReader>(path);
  return std::make_unique<EvtEventReader>(path);
}

void write_events(const std::vector<EventRecord>& events,
                  const std::string& path, EventFileFormat format) {
  std::ofstream out(path, format == EventFileFormat::Evt
                              ? std::ios::binary
                              : std::ios::out);
  if (!out) throw IoError("cannot open " + path + " for writing");
  if (format == EventFileFormat::Csv) {
    out << kCsvHeader << "\n";
    for (const EventRecord& e : events)
      out << e.t_us << "," << e.x << "," << e.y << "," << static_cast<int>(e.p)
          << "\n";
  } else {
    for (const EventRecord& e : events) {
      unsigned char buf[kEvtRecordSize] = {0};
      for (int i = 0; i < 8; ++i)
        buf[i] = static_cast<unsigned char>((e.t_us >> (8 * i)) & 0xFF);
      buf[8] = static_cast<unsigned char>(e.x & 0xFF);
      buf[9] = static_cast<unsigned char>(e.x >> 8);
      buf[10] = static_cast<unsigned char>(e.y & 0xFF);
      buf[11] = static_cast<unsigned char>(e.y >> 8);
      buf[12] = static_cast<unsigned char>(e.p);
      out.write(reinterpret_cast<const char*>(buf), kEvtRecordSize);
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<EventRecord> read_all_events(const std::string& path,
                                         EventFileFormat format) {
  auto reader = open_events(path, format);
  std::vector<EventRecord> out;
  while (auto e = reader->next()) out.push_back(*e);
  return out;
}

void window_split(EventReader& reader, std::uint64_t t_window_us, int width,
                  int height, const std::function<void(EventWindow&&)>& sink) {
  if (t_window_us == 0) throw IoError("window_split: window must be positive");
  std::optional<EventRecord> pending = reader.next();
  if (!pending) return;

  std::uint64_t start = (pending->t_us / t_window_us) * t_window_us;
  EventWindow cur;
  cur.t_a = start;
  cur.t_b = start + t_window_us;
  cur.width = width;
  cur.height = height;

  while (pending) {
    if (pending->t_us < cur.t_a)
      throw IoError("window_split: input events out of time order");
    if (pending->t_us < cur.t_b) {
      cur.events.push_back(*pending);
      pending = reader.next();
      continue;
    }
    sink(std::move(cur));
    cur = EventWindow{};
    cur.t_a = start + t_window_us;
    start = cur.t_a;
    cur.t_b = start + t_window_us;
    cur.width = width;
    cur.height = height;
  }
  sink(std::move(cur));
}

void write_tensor(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(t.ndim()));
  for (int d : t.shape) put_u32(static_cast<std::uint32_t>(d));
  for (float v : t.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
  if (!out) throw IoError("write failed for " + path);
}

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto get_u32 = [&]() -> std::uint32_t {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IoError(path + ": truncated tensor file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t ndim = get_u32();
  if (ndim == 0 || ndim > 8) throw IoError(path + ": implausible tensor rank");
  std::vector<int> shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(get_u32());
  Tensor t(shape, 0.0f);
  for (float& v : t.data) {
    const std::uint32_t bits = get_u32();
    std::memcpy(&v, &bits, 4);
  }
  return t;
}

}  // namespace evnas
