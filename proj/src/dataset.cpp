#include "ttlbp/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ttlbp/error.hpp"

namespace ttlbp {

using json = nlohmann::json;

void Dataset::validate() const {
  const std::size_t per_sample = shape.flat() * (steps == 0 ? 1 : steps);
  if (samples.size() != labels.size()) throw DataError("sample and label counts differ");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != per_sample) {
      throw DataError("sample " + std::to_string(i) + " has " +
                      std::to_string(samples[i].size()) + " values, expected " +
                      std::to_string(per_sample));
    }
    if (labels[i] >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                      " out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

namespace {

void add_static(Dataset& d, const Tensor& image, std::size_t label,
                std::vector<std::string>& warnings) {
  const DirectEncoding enc = direct_encode_input(image);
  if (enc.normalized) {
    warnings.push_back("sample " + std::to_string(d.samples.size()) +
                       " had intensities outside [0, 1]; min-max normalized");
  }
  d.samples.push_back(enc.frame.raw());
  d.labels.push_back(label);
}

Dataset from_images(const LabeledImages& li, std::size_t num_classes,
                    std::vector<std::string>& warnings) {
  Dataset d;
  d.shape = li.shape;
  d.num_classes = num_classes;
  for (std::size_t i = 0; i < li.images.size(); ++i) {
    add_static(d, li.images[i], li.labels[i], warnings);
  }
  d.validate();
  return d;
}

Dataset from_streams(const std::vector<EventStream>& streams, std::int64_t dt_us, std::size_t T,
                     std::size_t downsample, std::size_t num_classes) {
  Dataset d;
  d.num_classes = num_classes;
  d.steps = T;
  for (const auto& s : streams) {
    Tensor frames = dvs_to_frames(s, dt_us, T).frames;
    if (downsample > 1) frames = downsample_frames(frames, downsample);
    const Shape3 shape{frames.dim(1), frames.dim(2), frames.dim(3)};
    if (d.samples.empty()) {
      d.shape = shape;
    } else if (!(shape == d.shape)) {
      throw DataError("event streams have different sensor sizes");
    }
    d.samples.push_back(frames.raw());
    d.labels.push_back(s.label);
  }
  d.validate();
  return d;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DatasetSplit synthetic_split(SynthSpec spec, std::size_t test_per_class, bool as_events) {
  const std::size_t train_per_class = spec.samples_per_class;
  spec.samples_per_class = train_per_class + test_per_class;
  const SynthDataset all = synth_patterns(spec);
  DatasetSplit split;
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < all.labels.size(); ++i) {
    (i % spec.samples_per_class < train_per_class ? train_idx : test_idx).push_back(i);
  }
  auto build = [&](const std::vector<std::size_t>& idx) {
    if (as_events) {
      std::vector<EventStream> streams;
      for (auto i : idx) streams.push_back(all.streams[i]);
      return from_streams(streams, spec.dt_us, spec.T, 1, spec.num_classes);
    }
    Dataset d;
    d.shape = spec.shape;
    d.num_classes = spec.num_classes;
    for (auto i : idx) add_static(d, all.images[i], all.labels[i], split.warnings);
    d.validate();
    return d;
  };
  split.train = build(train_idx);
  split.test = build(test_idx);
  return split;
}

DatasetSplit parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what(), e.byte);
  }
  try {
    const std::string format = j.at("format").get<std::string>();
    if (format == "synthetic") {
      SynthSpec s;
      s.num_classes = j.value("num_classes", s.num_classes);
      if (j.contains("shape")) {
        const auto sh = j.at("shape").get<std::vector<std::size_t>>();
        if (sh.size() != 3) throw DataError("synthetic shape must be [c, h, w]");
        s.shape = {sh[0], sh[1], sh[2]};
      }
      s.T = j.value("T", s.T);
      s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
      s.noise = j.value("noise", s.noise);
      s.template_density = j.value("template_density", s.template_density);
      s.dt_us = j.value("dt_us", s.dt_us);
      s.seed = j.value("seed", s.seed);
      const std::string encoding = j.value("encoding", std::string("frames"));
      if (encoding != "frames" && encoding != "events") {
        throw DataError("synthetic encoding must be 'frames' or 'events'");
      }
      return synthetic_split(s, j.value("test_samples_per_class", std::size_t{0}),
                             encoding == "events");
    }
    const std::size_t num_classes = j.at("num_classes").get<std::size_t>();
    DatasetSplit split;
    if (format == "idx") {
      auto part = [&](const char* key) {
        if (!j.contains(key)) return Dataset{};
        const auto& p = j.at(key);
        const auto li = load_idx_dataset(base_dir / p.at("images").get<std::string>(),
                                         base_dir / p.at("labels").get<std::string>());
        return from_images(li, num_classes, split.warnings);
      };
      split.train = part("train");
      split.test = part("test");
      return split;
    }
    if (format == "events") {
      const auto dt_us = static_cast<std::int64_t>(j.at("dt_ms").get<double>() * 1000.0);
      const std::size_t T = j.at("T").get<std::size_t>();
      const std::size_t down = j.value("downsample", std::size_t{1});
      auto part = [&](const char* key) {
        if (!j.contains(key)) return Dataset{};
        std::vector<EventStream> streams;
        for (const auto& entry : j.at(key)) {
          EventStream s = load_event_csv(base_dir / entry.at("file").get<std::string>());
          if (entry.contains("label")) s.label = entry.at("label").get<std::size_t>();
          streams.push_back(std::move(s));
        }
        return from_streams(streams, dt_us, T, down, num_classes);
      };
      split.train = part("train");
      split.test = part("test");
      return split;
    }
    throw DataError("unknown dataset format '" + format + "' (expected idx|events|synthetic)");
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset manifest: ") + e.what());
  }
}

DatasetSplit load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path), path.parent_path());
}

BatchInput make_batch(const Dataset& data, std::span<const std::size_t> indices, std::size_t T) {
  const std::size_t flat = data.shape.flat();
  const std::size_t batch = indices.size();
  if (data.steps == 0) {
    Tensor frame({batch, flat});
    for (std::size_t b = 0; b < batch; ++b) {
      std::ranges::copy(data.samples.at(indices[b]), frame.row(b).begin());
    }
    return BatchInput::direct(std::move(frame));
  }
  if (data.steps < T) {
    throw ShapeError("dataset sequences span " + std::to_string(data.steps) + " steps, T=" +
                     std::to_string(T));
  }
  std::vector<Tensor> frames(T, Tensor({batch, flat}));
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& s = data.samples.at(indices[b]);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy_n(s.begin() + static_cast<std::ptrdiff_t>(t * flat), flat,
                  frames[t].row(b).begin());
    }
  }
  return BatchInput::sequence(std::move(frames));
}

std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.labels.at(i));
  return out;
}

}  // namespace ttlbp
