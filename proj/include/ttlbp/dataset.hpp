#pragma once

// In-memory labeled datasets and the manifest files that describe them.
//
// Manifest JSON (paths relative to the manifest):
//   {"format": "idx", "num_classes": 47,
//    "train": {"images": "...", "labels": "..."}, "test": {...}}
//   {"format": "events", "num_classes": 11, "dt_ms": 20, "T": 60, "downsample": 1,
//    "train": [{"file": "a.csv", "label": 3}, ...], "test": [...]}
//   {"format": "synthetic", "num_classes": 2, "shape": [1, 8, 8], "T": 10,
//    "samples_per_class": 32, "test_samples_per_class": 16, "noise": 0.2,
//    "seed": 7, "encoding": "frames" | "events", "dt_us": 1000}

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ttlbp/encodings.hpp"
#include "ttlbp/engine.hpp"

namespace ttlbp {

struct Dataset {
  Shape3 shape;             // per-step input shape
  std::size_t num_classes = 0;
  std::size_t steps = 0;    // 0: static images fed by direct encoding
  std::vector<std::vector<Real>> samples;  // flat, or steps * flat for sequences
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  // Throws DataError for inconsistent sizes or labels out of range.
  void validate() const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

DatasetSplit load_manifest(const std::filesystem::path& path);
DatasetSplit parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);

// Frames or events form of synth_patterns with spec.samples_per_class
// training and `test_per_class` test samples per class.
DatasetSplit synthetic_split(SynthSpec spec, std::size_t test_per_class, bool as_events);

// Batch of the samples at `indices`; sequences must span at least T steps.
BatchInput make_batch(const Dataset& data, std::span<const std::size_t> indices, std::size_t T);
std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace ttlbp
