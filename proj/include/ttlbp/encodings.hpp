#pragma once

// Input pipelines: direct encoding of static images, event-stream to frame
// conversion, IDX and event-CSV files, and a seeded synthetic dataset.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ttlbp/tensor.hpp"
#include "ttlbp/topology.hpp"

namespace ttlbp {

struct Event {
  std::int64_t t_us = 0;
  std::uint32_t x = 0;  // column
  std::uint32_t y = 0;  // row
  std::uint8_t p = 0;   // polarity, 0 or 1
  bool operator==(const Event&) const = default;
};

struct EventStream {
  std::vector<Event> events;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t label = 0;
  bool operator==(const EventStream&) const = default;
};

// Binary occupancy frames, stored [T][polarity][row][col].
struct FrameSequence {
  Tensor frames;
  std::int64_t dt_us = 0;
  std::size_t label = 0;

  std::size_t steps() const { return frames.dim(0); }
  Real at(std::size_t t, std::size_t p, std::size_t y, std::size_t x) const;
};

// Stable sort by timestamp and shift so the earliest event is at t = 0.
EventStream normalize_stream(const EventStream& stream);

// Frame t, channel p, pixel (y, x) is 1 iff some polarity-p event at (x, y)
// falls in [t*dt, (t+1)*dt) after normalization. Short streams leave trailing
// frames empty. Throws DataError for events outside the sensor.
FrameSequence dvs_to_frames(const EventStream& stream, std::int64_t dt_us, std::size_t T);

// Average-pools every frame by `factor` (factor must divide H and W); values
// become occupancy fractions in [0, 1].
Tensor downsample_frames(const Tensor& frames, std::size_t factor);

struct DirectEncoding {
  Tensor frame;             // same shape as the input image
  bool normalized = false;  // input was outside [0, 1] and got min-max scaled
};

// The layer-0 input for direct encoding: the image itself, presented
// unchanged at every step.
DirectEncoding direct_encode_input(const Tensor& image);

// ---------------------------------------------------------------------------
// IDX files (big-endian dims, MNIST family).

struct IdxArray {
  std::uint8_t type = 0x08;  // 0x08 u8, 0x09 i8, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> payload;  // raw big-endian element bytes

  std::size_t element_size() const;
  std::size_t count() const;
  std::vector<Real> values() const;
  bool operator==(const IdxArray&) const = default;
};

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxArray& array);
IdxArray load_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// u8 IDX from values in [0, 255] (rounded).
IdxArray make_idx_u8(std::vector<std::size_t> dims, const std::vector<Real>& values);

struct LabeledImages {
  Shape3 shape;
  std::vector<Tensor> images;  // each [c*h*w], intensities in [0, 1]
  std::vector<std::size_t> labels;
};

// Images file [N x H x W] or [N x C x H x W]; u8 intensities are divided by 255.
LabeledImages load_idx_dataset(const std::filesystem::path& images,
                               const std::filesystem::path& labels);

// ---------------------------------------------------------------------------
// Event CSV: optional "# sensor=HxW" and "# label=N" lines, then the header
// "t_us,x,y,p" and one event per line.

EventStream parse_event_csv(const std::string& text);
std::string format_event_csv(const EventStream& stream);
EventStream load_event_csv(const std::filesystem::path& path);
void write_event_csv(const std::filesystem::path& path, const EventStream& stream);

// ---------------------------------------------------------------------------
// Synthetic dataset: one random binary template per class plus Gaussian
// pixel noise, clipped to [0, 1]. The event form emits, for every step and
// pixel, an ON event with probability equal to the noisy intensity and an OFF
// event with probability `noise` / 2.

struct SynthSpec {
  std::size_t num_classes = 2;
  Shape3 shape{1, 8, 8};
  std::size_t T = 10;
  std::size_t samples_per_class = 32;
  Real noise = 0.2;
  Real template_density = 0.5;
  std::int64_t dt_us = 1000;
  std::uint64_t seed = 0;
};

struct SynthDataset {
  std::vector<Tensor> templates;  // per class, [c*h*w]
  std::vector<Tensor> images;     // frame form, [c*h*w]
  std::vector<EventStream> streams;
  std::vector<std::size_t> labels;
};

SynthDataset synth_patterns(const SynthSpec& spec);

}  // namespace ttlbp
