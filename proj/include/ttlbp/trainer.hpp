#pragma once

// Epoch driver around train_batch, plus the JSON / CSV artifacts it emits:
// effective config, per-epoch metrics, timing, and checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ttlbp/dataset.hpp"
#include "ttlbp/engine.hpp"

namespace ttlbp {

// Canonical JSON of a config; key order is fixed so the hash is stable.
std::string config_to_json(const TrainConfig& c);
// Fields missing from the JSON keep the values already in `base`.
TrainConfig config_from_json(const std::string& text, TrainConfig base = {});
// FNV-1a 64 over config_to_json; `threads` is excluded since results do not
// depend on it.
std::uint64_t config_hash(const TrainConfig& c);

struct EpochMetrics {
  std::size_t epoch = 0;
  Real learning_rate = 0.0;
  std::vector<Real> block_loss;  // mean over the epoch's batches
  Real train_accuracy = 0.0;     // clean pass over the training set after the epoch
  Real test_accuracy = -1.0;     // -1 when there is no test set
  std::size_t updates = 0;
  double wall_seconds = 0.0;
};

struct TrainRun {
  std::vector<EpochMetrics> epochs;
  WeightSet weights;
  OpCounters counters;  // accumulated over the last epoch
};

using EpochCallback = std::function<void(const EpochMetrics&, const WeightSet&)>;

// Weights are initialized from the config seed unless `initial` is given
// (resuming); epochs run from `first_epoch` to `epochs - 1`. Throws
// DivergenceError on a non-finite loss or weight.
TrainRun train(const Network& net, const DatasetSplit& data, const TrainConfig& config,
               std::size_t epochs, const EpochCallback& on_epoch = {},
               const WeightSet* initial = nullptr, std::size_t first_epoch = 0);

Real evaluate(const Network& net, const WeightSet& weights, const Dataset& data,
              const TrainConfig& config);

// Metrics CSV: a "# config=<json>" line, a header, then one row per epoch.
// Numbers use %.17g so the file is a pure function of the run.
std::string metrics_header(std::size_t blocks);
std::string format_metrics_row(const EpochMetrics& m);

struct MetricsTable {
  std::string config_json;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};
MetricsTable parse_metrics_csv(const std::string& text);

struct Checkpoint {
  std::size_t epoch = 0;  // epochs completed
  TrainConfig config;
  NetworkArch arch;
  WeightSet weights;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on version or config-hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_real(double v);

}  // namespace ttlbp
