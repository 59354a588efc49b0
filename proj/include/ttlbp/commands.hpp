#pragma once

// The work behind each CLI subcommand. Every command writes its artifacts and
// returns a summary; failures surface as ttlbp::Error subclasses, which the
// CLI maps onto exit codes (ConfigError / ArchitectureError: usage, 2;
// anything else: 1).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ttlbp/costmodel.hpp"
#include "ttlbp/gradcheck.hpp"
#include "ttlbp/trainer.hpp"

namespace ttlbp {

// `requested` worker threads (0: all hardware threads), capped by the
// TTLBP_THREADS environment variable when it is set.
std::size_t resolve_threads(std::size_t requested);

// "T" / "all" or a positive integer. Lists are comma separated.
std::size_t parse_k(const std::string& text, std::size_t T);
std::size_t parse_n(const std::string& text, std::size_t trainable_layers);
std::vector<std::size_t> parse_k_list(const std::string& text, std::size_t T);
std::vector<std::size_t> parse_n_list(const std::string& text, std::size_t trainable_layers);
// "trainable", "random" or "both".
std::vector<ClassifierMode> parse_modes(const std::string& text);

// Comment lines ("# ...") are kept verbatim without the "# " prefix; cells
// are split on commas with no quoting.
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // Index of `name`; throws DataError when absent.
  std::size_t column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);

// --------------------------------------------------------------------------
// train: config.json, metrics.csv, timing.csv, checkpoint.json in out_dir;
// divergence.json instead of finishing when the loss or a weight goes
// non-finite (the DivergenceError is rethrown).

struct TrainSpec {
  std::filesystem::path arch_path;
  std::filesystem::path data_path;
  std::filesystem::path out_dir;
  TrainConfig config;
  std::size_t epochs = 50;
};

TrainRun cmd_train(const TrainSpec& spec, std::ostream& log);

// --------------------------------------------------------------------------
// gradcheck

struct GradcheckSummary {
  std::vector<GradcheckCase> cases;
  SeedCheck seed;
  Real seed_tolerance = 1e-6;
  bool passed() const;
};

GradcheckSummary cmd_gradcheck(const std::vector<NetworkArch>& archs,
                               const GradcheckOptions& options, std::size_t fd_instances,
                               std::ostream& report);

// --------------------------------------------------------------------------
// estimate-cost

struct AccuracyEntry {
  std::size_t k = 0;
  std::size_t n = 0;
  ClassifierMode mode = ClassifierMode::Trainable;
  Real accuracy = 0.0;
};

// CSV with header "k,n,classifier,accuracy"; classifier is trainable|random.
std::vector<AccuracyEntry> parse_accuracy_csv(const std::string& text);

struct EstimateSpec {
  NetworkArch arch;
  std::size_t T = 1;
  std::size_t batch_size = 128;
  std::vector<std::size_t> ks;
  std::vector<std::size_t> ns;
  std::vector<ClassifierMode> modes{ClassifierMode::Trainable};
  Real alpha = 0.2;  // uniform input spike density
  CostConventions conventions;
  std::vector<AccuracyEntry> accuracies;
};

struct EstimateRow {
  std::size_t k = 0;
  std::size_t n = 0;
  ClassifierMode mode = ClassifierMode::Trainable;
  bool baseline = false;  // k = T, n = all trainable layers
  CostReport report;
  NormalizedCosts ratios;
  std::optional<Real> accuracy;
  std::optional<Real> accuracy_loss;
  std::optional<Real> fom;
};

// One row per (mode, n, k) in the given order; each mode's BPTT row is added
// in front when the grid lacks it.
std::vector<EstimateRow> estimate_table(const EstimateSpec& spec);
std::string estimate_csv(const std::vector<EstimateRow>& rows);
std::string estimate_json(const std::vector<EstimateRow>& rows);

// Accuracy drop against the baseline, as a fraction; negative when the
// configuration beats BPTT.
Real accuracy_loss(Real accuracy, Real baseline_accuracy);

// --------------------------------------------------------------------------
// sweep: trains every (k, n, mode) cell plus each mode's BPTT cell, joins the
// final accuracy with the cost estimate and ranks by FoM. Cells that fail are
// reported and ranked last; the sweep carries on.

struct SweepSpec {
  std::filesystem::path arch_path;
  std::filesystem::path data_path;
  std::filesystem::path out_dir;
  TrainConfig base;  // k, n and classifier_mode are set per cell
  std::vector<std::size_t> ks;
  std::vector<std::size_t> ns;
  std::vector<ClassifierMode> modes{ClassifierMode::Trainable};
  std::size_t epochs = 10;
  std::optional<Real> alpha;  // uniform density; densities measured in training when unset
  std::size_t workers = 1;    // cells trained concurrently
};

struct SweepRow {
  std::size_t k = 0;
  std::size_t n = 0;
  ClassifierMode mode = ClassifierMode::Trainable;
  bool baseline = false;
  std::string error;  // empty on success
  Real accuracy = 0.0;
  Real accuracy_loss = 0.0;
  NormalizedCosts ratios;
  Real fom = 0.0;
  std::size_t rank = 0;  // 1-based
  bool best = false;     // smallest FoM overall
};

// Sorts by FoM, then smaller k, then smaller n, then trainable before random;
// failed rows go last. Fills rank and best.
void rank_sweep(std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& header_comment);

std::vector<SweepRow> cmd_sweep(const SweepSpec& spec, std::ostream& log);

// --------------------------------------------------------------------------
// convert-dvs: event CSV to a u8 IDX file of shape [T, 2, H, W] holding
// round(255 * occupancy).

struct ConvertSpec {
  std::filesystem::path input;
  std::filesystem::path output;
  std::int64_t dt_us = 20000;
  std::size_t T = 60;
  std::size_t downsample = 1;
};

struct ConvertSummary {
  std::size_t events = 0;
  std::size_t occupied = 0;  // nonzero frame cells
  std::size_t label = 0;
  std::vector<std::string> warnings;
};

ConvertSummary cmd_convert_dvs(const ConvertSpec& spec);

}  // namespace ttlbp
