#include "ttlbp/encodings.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ttlbp/error.hpp"
#include "ttlbp/rng.hpp"

namespace ttlbp {

Real FrameSequence::at(std::size_t t, std::size_t p, std::size_t y, std::size_t x) const {
  const std::size_t h = frames.dim(2), w = frames.dim(3);
  return frames[((t * 2 + p) * h + y) * w + x];
}

EventStream normalize_stream(const EventStream& stream) {
  EventStream out = stream;
  std::ranges::stable_sort(out.events, {}, &Event::t_us);
  if (!out.events.empty()) {
    const std::int64_t t0 = out.events.front().t_us;
    for (auto& e : out.events) e.t_us -= t0;
  }
  return out;
}

FrameSequence dvs_to_frames(const EventStream& stream, std::int64_t dt_us, std::size_t T) {
  if (dt_us <= 0) throw ConfigError("window length dt must be positive");
  if (T < 1) throw ConfigError("frame count T must be at least 1");
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw DataError("event " + std::to_string(i) + " at (x=" + std::to_string(e.x) +
                      ", y=" + std::to_string(e.y) + ") outside " +
                      std::to_string(stream.height) + "x" + std::to_string(stream.width) +
                      " sensor");
    }
    if (e.p > 1) throw DataError("event " + std::to_string(i) + " has polarity " +
                                 std::to_string(e.p));
  }
  const EventStream norm = normalize_stream(stream);
  FrameSequence seq;
  seq.dt_us = dt_us;
  seq.label = stream.label;
  seq.frames = Tensor({T, 2, stream.height, stream.width});
  for (const Event& e : norm.events) {
    const auto window = static_cast<std::size_t>(e.t_us / dt_us);
    if (window >= T) break;
    seq.frames[((window * 2 + e.p) * stream.height + e.y) * stream.width + e.x] = 1.0;
  }
  return seq;
}

Tensor downsample_frames(const Tensor& frames, std::size_t factor) {
  if (frames.rank() != 4) throw ShapeError("frames must be [T x C x H x W]");
  const std::size_t T = frames.dim(0), C = frames.dim(1), H = frames.dim(2), W = frames.dim(3);
  if (factor < 1 || H % factor || W % factor) {
    throw ConfigError("downsampling factor " + std::to_string(factor) + " does not divide " +
                      std::to_string(H) + "x" + std::to_string(W));
  }
  const std::size_t h = H / factor, w = W / factor;
  Tensor out({T, C, h, w});
  const Real inv = 1.0 / static_cast<Real>(factor * factor);
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        out[(tc * h + y / factor) * w + x / factor] += inv * frames[(tc * H + y) * W + x];
      }
    }
  }
  return out;
}

DirectEncoding direct_encode_input(const Tensor& image) {
  DirectEncoding enc{image, false};
  if (image.empty()) return enc;
  const auto [lo, hi] = std::ranges::minmax(image.values());
  if (lo >= 0.0 && hi <= 1.0) return enc;
  enc.normalized = true;
  const Real span = hi - lo;
  for (auto& v : enc.frame.raw()) v = span > 0.0 ? (v - lo) / span : 0.0;
  return enc;
}

// ---------------------------------------------------------------------------
// IDX

std::size_t IdxArray::element_size() const {
  switch (type) {
    case 0x08:
    case 0x09:
      return 1;
    case 0x0B:
      return 2;
    case 0x0C:
    case 0x0D:
      return 4;
    case 0x0E:
      return 8;
    default:
      throw DataError("unknown IDX element type 0x" + std::to_string(type));
  }
}

std::size_t IdxArray::count() const { return Tensor::count(dims); }

namespace {

std::uint64_t read_be(const std::uint8_t* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

void write_be(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n) {
  for (std::size_t i = n; i-- > 0;) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

std::vector<Real> IdxArray::values() const {
  const std::size_t es = element_size();
  std::vector<Real> out(count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint64_t raw = read_be(payload.data() + i * es, es);
    switch (type) {
      case 0x08:
        out[i] = static_cast<Real>(raw);
        break;
      case 0x09:
        out[i] = static_cast<std::int8_t>(raw);
        break;
      case 0x0B:
        out[i] = static_cast<std::int16_t>(raw);
        break;
      case 0x0C:
        out[i] = static_cast<std::int32_t>(raw);
        break;
      case 0x0D:
        out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(raw));
        break;
      case 0x0E:
        out[i] = std::bit_cast<double>(raw);
        break;
    }
  }
  return out;
}

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) {
    throw ParseError("IDX header truncated: expected 4 bytes, found " +
                         std::to_string(bytes.size()),
                     bytes.size());
  }
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("IDX magic must start with two zero bytes", 0);
  IdxArray a;
  a.type = bytes[2];
  try {
    (void)a.element_size();
  } catch (const DataError&) {
    throw ParseError("unknown IDX element type " + std::to_string(bytes[2]), 2);
  }
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw ParseError("IDX file declares zero dimensions", 3);
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw ParseError("IDX dimension table truncated: expected " + std::to_string(header) +
                         " header bytes, found " + std::to_string(bytes.size()),
                     bytes.size());
  }
  for (std::size_t d = 0; d < ndims; ++d) a.dims.push_back(read_be(bytes.data() + 4 + 4 * d, 4));
  const std::size_t expected = a.count() * a.element_size();
  const std::size_t actual = bytes.size() - header;
  if (actual < expected) {
    throw ParseError("IDX payload truncated: expected " + std::to_string(expected) +
                         " bytes, found " + std::to_string(actual),
                     bytes.size());
  }
  if (actual > expected) {
    throw ParseError("IDX file has " + std::to_string(actual - expected) +
                         " trailing bytes after the payload",
                     header + expected);
  }
  a.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return a;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
  if (a.dims.empty() || a.dims.size() > 255) throw DataError("IDX needs 1..255 dimensions");
  if (a.payload.size() != a.count() * a.element_size()) {
    throw DataError("IDX payload size does not match its dimensions");
  }
  std::vector<std::uint8_t> out{0, 0, a.type, static_cast<std::uint8_t>(a.dims.size())};
  for (auto d : a.dims) write_be(out, d, 4);
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  return out;
}

IdxArray load_idx(const std::filesystem::path& path) {
  try {
    return parse_idx(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  const auto bytes = serialize_idx(array);
  write_file(path, bytes.data(), bytes.size());
}

IdxArray make_idx_u8(std::vector<std::size_t> dims, const std::vector<Real>& values) {
  IdxArray a;
  a.type = 0x08;
  a.dims = std::move(dims);
  if (values.size() != a.count()) throw ShapeError("IDX value count does not match dims");
  a.payload.reserve(values.size());
  for (Real v : values) {
    a.payload.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
  }
  return a;
}

LabeledImages load_idx_dataset(const std::filesystem::path& images,
                               const std::filesystem::path& labels) {
  const IdxArray img = load_idx(images);
  const IdxArray lab = load_idx(labels);
  if (lab.dims.size() != 1) throw DataError(labels.string() + ": labels must be one-dimensional");
  LabeledImages out;
  if (img.dims.size() == 3) {
    out.shape = {1, img.dims[1], img.dims[2]};
  } else if (img.dims.size() == 4) {
    out.shape = {img.dims[1], img.dims[2], img.dims[3]};
  } else {
    throw DataError(images.string() + ": images must be [N x H x W] or [N x C x H x W]");
  }
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) {
    throw DataError("image count " + std::to_string(n) + " differs from label count " +
                    std::to_string(lab.dims[0]));
  }
  const auto values = img.values();
  const Real scale = img.type == 0x08 ? 1.0 / 255.0 : 1.0;
  const std::size_t flat = out.shape.flat();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Real> v(values.begin() + static_cast<std::ptrdiff_t>(i * flat),
                        values.begin() + static_cast<std::ptrdiff_t>((i + 1) * flat));
    for (auto& x : v) x *= scale;
    out.images.emplace_back(std::vector<std::size_t>{flat}, std::move(v));
  }
  for (Real y : lab.values()) {
    if (y < 0) throw DataError(labels.string() + ": negative label");
    out.labels.push_back(static_cast<std::size_t>(y));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Event CSV

namespace {

constexpr std::string_view kCsvHeader = "t_us,x,y,p";

template <typename T>
T parse_field(std::string_view field, std::size_t offset, const char* name) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw ParseError("event CSV: bad " + std::string(name) + " field '" + std::string(field) + "'",
                     offset);
  }
  return value;
}

}  // namespace

EventStream parse_event_csv(const std::string& text) {
  EventStream s;
  bool header_seen = false;
  bool sensor_given = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t offset = pos;
    pos = eol + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.starts_with("sensor=")) {
        const auto dims = body.substr(7);
        const auto x = dims.find('x');
        if (x == std::string_view::npos) throw ParseError("event CSV: sensor must be HxW", offset);
        s.height = parse_field<std::size_t>(dims.substr(0, x), offset, "sensor height");
        s.width = parse_field<std::size_t>(dims.substr(x + 1), offset, "sensor width");
        sensor_given = true;
      } else if (body.starts_with("label=")) {
        s.label = parse_field<std::size_t>(body.substr(6), offset, "label");
      }
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader) {
        throw ParseError("event CSV: expected header '" + std::string(kCsvHeader) + "', found '" +
                             std::string(line) + "'",
                         offset);
      }
      header_seen = true;
      continue;
    }
    std::string_view fields[4];
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = f < 3 ? line.find(',', start) : line.size();
      if (comma == std::string_view::npos) {
        throw ParseError("event CSV: expected 4 fields in '" + std::string(line) + "'", offset);
      }
      fields[f] = line.substr(start, comma - start);
      start = comma + 1;
    }
    if (fields[3].find(',') != std::string_view::npos) {
      throw ParseError("event CSV: too many fields in '" + std::string(line) + "'", offset);
    }
    Event e;
    e.t_us = parse_field<std::int64_t>(fields[0], offset, "t_us");
    e.x = parse_field<std::uint32_t>(fields[1], offset, "x");
    e.y = parse_field<std::uint32_t>(fields[2], offset, "y");
    const auto p = parse_field<unsigned>(fields[3], offset, "p");
    if (p > 1) throw ParseError("event CSV: polarity must be 0 or 1", offset);
    e.p = static_cast<std::uint8_t>(p);
    if (sensor_given && (e.x >= s.width || e.y >= s.height)) {
      throw ParseError("event CSV: event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                           ") outside the declared sensor",
                       offset);
    }
    s.events.push_back(e);
  }
  if (!text.empty() && !header_seen && !s.events.empty()) {
    throw ParseError("event CSV: missing header", 0);
  }
  if (!sensor_given) {
    for (const auto& e : s.events) {
      s.width = std::max<std::size_t>(s.width, e.x + 1);
      s.height = std::max<std::size_t>(s.height, e.y + 1);
    }
  }
  return s;
}

std::string format_event_csv(const EventStream& s) {
  std::ostringstream os;
  os << "# sensor=" << s.height << 'x' << s.width << '\n';
  os << "# label=" << s.label << '\n';
  os << kCsvHeader << '\n';
  for (const auto& e : s.events) {
    os << e.t_us << ',' << e.x << ',' << e.y << ',' << static_cast<unsigned>(e.p) << '\n';
  }
  return os.str();
}

EventStream load_event_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_event_csv(std::string(bytes.begin(), bytes.end()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_event_csv(const std::filesystem::path& path, const EventStream& stream) {
  const std::string text = format_event_csv(stream);
  write_file(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// Synthetic patterns

SynthDataset synth_patterns(const SynthSpec& spec) {
  if (spec.num_classes < 1 || spec.samples_per_class < 1 || spec.shape.flat() == 0 ||
      spec.T < 1) {
    throw ConfigError("synthetic dataset needs classes, samples, pixels and steps");
  }
  if (spec.noise < 0.0) throw ConfigError("noise must be non-negative");
  const std::size_t flat = spec.shape.flat();
  const std::size_t hw = spec.shape.h * spec.shape.w;
  SynthDataset ds;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    Rng rng(derive_seed(spec.seed, 0x7e3ULL, c));
    Tensor t({flat});
    for (auto& v : t.raw()) v = rng.bernoulli(spec.template_density) ? 1.0 : 0.0;
    ds.templates.push_back(std::move(t));
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng rng(derive_seed(spec.seed, 0x5a3ULL, c, i));
      Tensor img({flat});
      for (std::size_t j = 0; j < flat; ++j) {
        img[j] = std::clamp(ds.templates[c][j] + spec.noise * rng.normal(), 0.0, 1.0);
      }
      EventStream es;
      es.height = spec.shape.h;
      es.width = spec.shape.w;
      es.label = c;
      for (std::size_t t = 0; t < spec.T; ++t) {
        std::vector<Event> step;
        for (std::size_t px = 0; px < hw; ++px) {
          Real intensity = 0.0;
          for (std::size_t ch = 0; ch < spec.shape.c; ++ch) intensity += img[ch * hw + px];
          intensity /= static_cast<Real>(spec.shape.c);
          const auto y = static_cast<std::uint32_t>(px / spec.shape.w);
          const auto x = static_cast<std::uint32_t>(px % spec.shape.w);
          const auto base = static_cast<std::int64_t>(t) * spec.dt_us;
          if (rng.bernoulli(intensity)) {
            step.push_back({base + static_cast<std::int64_t>(
                                       rng.below(static_cast<std::uint64_t>(spec.dt_us))),
                            x, y, 1});
          }
          if (rng.bernoulli(0.5 * spec.noise)) {
            step.push_back({base + static_cast<std::int64_t>(
                                       rng.below(static_cast<std::uint64_t>(spec.dt_us))),
                            x, y, 0});
          }
        }
        std::ranges::stable_sort(step, {}, &Event::t_us);
        es.events.insert(es.events.end(), step.begin(), step.end());
      }
      ds.images.push_back(std::move(img));
      ds.streams.push_back(std::move(es));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace ttlbp
