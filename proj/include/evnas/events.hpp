#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evnas/tensor.hpp"

namespace evnas {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// One sensor event: microsecond timestamp, pixel, polarity (+1/-1).
struct EventRecord {
  std::uint64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  bool operator==(const EventRecord&) const = default;
};

// Time-ordered slice of a stream over the half-open window [t_a, t_b).
struct EventWindow {
  std::vector<EventRecord> events;
  std::uint64_t t_a = 0;
  std::uint64_t t_b = 0;
  int width = 0;
  int height = 0;

  // Throws IoError if any event violates the window bounds, ordering,
  // or sensor geometry.
  void validate() const;
};

enum class Encoding { VTEI, MDES, SHIST, TAF };

const char* encoding_name(Encoding e);
std::optional<Encoding> encoding_from_name(const std::string& name);

// Channel count of the dense tensor produced for `bins` temporal bins.
int encoding_channels(Encoding e, int bins);

struct EncodedTensor {
  Encoding format = Encoding::VTEI;
  int bins = 0;
  Tensor tensor;  // [B,H,W] for VTEI/MDES, [2T,H,W] for SHIST, [2K,H,W] for TAF
};

// Ternary volume: cell [bin,y,x] holds the polarity of the last event that
// fell in that bin, 0 if none.
EncodedTensor encode_vtei(const EventWindow& w, int bins);

// Mixed-density stacks: stack b keeps the last floor(N/2^(b-1)) events,
// last event per pixel wins; 255 positive, 127 negative, 0 absent.
EncodedTensor encode_mdes(const EventWindow& w, int bins);

// Per-(polarity, time-bin) counts, channel = p_idx*T + tau, saturating at
// 255. p_idx is 0 for -1 and 1 for +1.
EncodedTensor encode_shist(const EventWindow& w, int bins);

// Sliding FIFO encoder: per (pixel, polarity) queue of depth K persisting
// across pushed windows. Output channel p_idx*K + j holds the normalized age
// of the j-th most recent stored event (j=0 newest) squashed to [0,1) via
// a/(1+a), and -1 for empty slots. Windows must be pushed in time order.
class TafEncoder {
 public:
  TafEncoder(int width, int height, int depth);

  EncodedTensor push_window(const EventWindow& w);

  int depth() const { return depth_; }

 private:
  int width_;
  int height_;
  int depth_;
  bool any_pushed_ = false;
  std::uint64_t last_t_b_ = 0;
  // Newest-first timestamps, two queues per pixel (index 2*(y*W+x)+p_idx).
  std::vector<std::deque<std::uint64_t>> fifo_;
};

enum class EventFileFormat { Csv, Evt };

// Streaming readers; they never load the whole file.
class EventReader {
 public:
  virtual ~EventReader() = default;
  // Returns the next record, or nullopt at end of stream.
  virtual std::optional<EventRecord> next() = 0;
};

std::unique_ptr<EventReader> open_events(const std::string& path,
                                         EventFileFormat format);
void write_events(const std::vector<EventRecord>& events,
                  const std::string& path, EventFileFormat format);
std::vector<EventRecord> read_all_events(const std::string& path,
                                         EventFileFormat format);

// Splits a stream into consecutive half-open windows of t_window_us,
// aligned to the floor multiple of t_window_us at the first event. Empty
// windows between sparse activity are emitted. The sink is called once per
// window in time order.
void window_split(EventReader& reader, std::uint64_t t_window_us, int width,
                  int height, const std::function<void(EventWindow&&)>& sink);

// Simple shape-then-data float32 tensor file, little-endian.
void write_tensor(const Tensor& t, const std::string& path);
Tensor read_tensor(const std::string& path);

}  // namespace evnas
