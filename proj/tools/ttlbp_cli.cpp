// ttlbp: train, check, and cost spiking networks under temporally truncated
// local backpropagation.
//
//   ttlbp train         --arch A --data D [--k K] [--n N] [--epochs E] --out DIR
//   ttlbp gradcheck     [--arch A] [--T 4] [--k 1,2,T] [--n 1,2,all] [--corrupt]
//   ttlbp estimate-cost --arch A [--k LIST] [--n LIST] [--classifier both] [--format json]
//   ttlbp sweep         --arch A --data D --k LIST --n LIST --out DIR
//   ttlbp convert-dvs   --in events.csv --out frames.idx --dt-ms 20 --T 60
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ttlbp/commands.hpp"
#include "ttlbp/error.hpp"

namespace {

using namespace ttlbp;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Training flags shared by train and sweep. Unset flags leave the config-file
// or built-in value alone.
struct TrainFlags {
  std::string config_file;
  std::optional<std::size_t> T;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> momentum;
  std::optional<double> dropout;
  std::optional<double> surrogate_width;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_file, "JSON file of training settings")
        ->check(CLI::ExistingFile);
    app.add_option("--T", T, "time steps per sample (default: the architecture's time_steps)");
    app.add_option("--batch-size", batch_size, "samples per batch");
    app.add_option("--lr", lr, "initial learning rate");
    app.add_option("--momentum", momentum, "SGD momentum");
    app.add_option("--dropout", dropout, "dropout rate after conv/fc layers");
    app.add_option("--surrogate-width", surrogate_width, "surrogate gradient width a");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads (0: all; capped by TTLBP_THREADS)");
  }

  // k and n are left at 0 when neither the file nor a flag sets them.
  TrainConfig resolve(const NetworkArch& arch) const {
    TrainConfig c;
    c.k = 0;
    c.n = 0;
    c.T = 0;
    if (!config_file.empty()) c = config_from_json(read_file(config_file), c);
    if (T) c.T = *T;
    if (c.T == 0) c.T = arch.time_steps;
    if (c.T == 0) throw ConfigError("--T is required: the architecture file gives no time_steps");
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.learning_rate = *lr;
    if (momentum) c.momentum = *momentum;
    if (dropout) c.dropout_rate = *dropout;
    if (surrogate_width) c.lif.a = *surrogate_width;
    if (seed) c.seed = *seed;
    c.threads = resolve_threads(threads);
    return c;
  }
};

ClassifierMode single_mode(const std::string& text) {
  const auto modes = parse_modes(text);
  if (modes.size() != 1) throw ConfigError("--classifier must be trainable or random here");
  return modes.front();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ttlbp: spiking network training and cost estimation"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a network and log per-epoch metrics");
  std::string arch_path, data_path, out_dir = "runs/train";
  std::string k_text, n_text, classifier;
  std::size_t epochs = 50;
  TrainFlags train_flags;
  train_cmd->add_option("--arch", arch_path, "architecture JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_path, "dataset manifest JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--k", k_text, "truncation interval (integer or T; default T)");
  train_cmd->add_option("--n", n_text, "trainable layers per block (integer or all; default all)");
  train_cmd->add_option("--epochs", epochs, "epochs to run")->capture_default_str();
  train_cmd->add_option("--classifier", classifier, "local classifiers")
      ->check(CLI::IsMember({"trainable", "random"}));
  train_cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  train_flags.add_to(*train_cmd);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare backward gradients with the oracle");
  std::string grad_arch, grad_k = "1,2,T", grad_n = "1,2,all", grad_out;
  GradcheckOptions gopt;
  std::size_t fd_instances = 100;
  bool corrupt = false;
  grad_cmd->add_option("--arch", grad_arch, "architecture JSON (default: built-in toy nets)")
      ->check(CLI::ExistingFile);
  grad_cmd->add_option("--T", gopt.T, "time steps")->capture_default_str();
  grad_cmd->add_option("--k", grad_k, "k values")->capture_default_str();
  grad_cmd->add_option("--n", grad_n, "n values")->capture_default_str();
  grad_cmd->add_option("--batch-size", gopt.batch, "batch size")->capture_default_str();
  grad_cmd->add_option("--dropout", gopt.dropout_rate, "dropout rate")->capture_default_str();
  grad_cmd->add_option("--gain", gopt.gain, "weight scale on top of the default init")
      ->capture_default_str();
  grad_cmd->add_option("--surrogate-width", gopt.lif.a, "surrogate gradient width a")
      ->capture_default_str();
  grad_cmd->add_option("--seed", gopt.seed, "seed")->capture_default_str();
  grad_cmd->add_option("--tolerance", gopt.tolerance, "max relative error")->capture_default_str();
  grad_cmd->add_option("--fd-instances", fd_instances, "random seed-error instances")
      ->capture_default_str();
  grad_cmd->add_flag("--corrupt", corrupt,
                     "drop the temporal potential term from the backward pass (negative control)");
  grad_cmd->add_option("--out", grad_out, "also write the report to this file");

  // estimate-cost
  auto* est_cmd = app.add_subcommand("estimate-cost", "analytical training cost per (k, n)");
  std::string est_arch, est_k = "1,2,5,10,T", est_n = "1,2,all", est_classifier = "trainable";
  std::string est_format = "csv", est_out, accuracy_file;
  std::optional<std::size_t> est_T;
  std::size_t est_batch = 128;
  double alpha = 0.2;
  bool end_single = false;
  est_cmd->add_option("--arch", est_arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  est_cmd->add_option("--T", est_T, "time steps (default: the architecture's time_steps)");
  est_cmd->add_option("--k", est_k, "k values; values above T are dropped")->capture_default_str();
  est_cmd->add_option("--n", est_n, "n values")->capture_default_str();
  est_cmd->add_option("--batch-size", est_batch, "batch size N_b")->capture_default_str();
  est_cmd->add_option("--alpha", alpha, "input spike density of every layer")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  est_cmd->add_option("--classifier", est_classifier, "trainable, random or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"trainable", "random", "both"}));
  est_cmd->add_option("--accuracy", accuracy_file, "CSV k,n,classifier,accuracy for FoM")
      ->check(CLI::ExistingFile);
  est_cmd->add_flag("--end-reduction-single-block", end_single,
                    "apply the interval-end read reduction to n=all too");
  est_cmd->add_option("--format", est_format, "csv or json")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "json"}));
  est_cmd->add_option("--out", est_out, "output file (default: stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "train a (k, n) grid and rank it by FoM");
  std::string sw_arch, sw_data, sw_out = "runs/sweep", sw_k = "1,2,T", sw_n = "1,all";
  std::string sw_classifier = "trainable";
  std::size_t sw_epochs = 10;
  std::optional<double> sw_alpha;
  TrainFlags sweep_flags;
  sweep_cmd->add_option("--arch", sw_arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", sw_data, "dataset manifest JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--k", sw_k, "k values")->capture_default_str();
  sweep_cmd->add_option("--n", sw_n, "n values")->capture_default_str();
  sweep_cmd->add_option("--classifier", sw_classifier, "trainable, random or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"trainable", "random", "both"}));
  sweep_cmd->add_option("--epochs", sw_epochs, "epochs per cell")->capture_default_str();
  sweep_cmd->add_option("--alpha", sw_alpha,
                        "uniform spike density for costs (default: measured in training)")
      ->check(CLI::Range(0.0, 1.0));
  sweep_cmd->add_option("--out", sw_out, "output directory")->capture_default_str();
  sweep_flags.add_to(*sweep_cmd);

  // convert-dvs
  auto* conv_cmd = app.add_subcommand("convert-dvs", "event CSV to binary frames (u8 IDX)");
  ConvertSpec cspec;
  std::string conv_in, conv_out;
  double dt_ms = 20.0;
  conv_cmd->add_option("--in", conv_in, "event CSV")->required()->check(CLI::ExistingFile);
  conv_cmd->add_option("--out", conv_out, "output IDX file")->required();
  conv_cmd->add_option("--dt-ms", dt_ms, "window length in milliseconds")->capture_default_str();
  conv_cmd->add_option("--T", cspec.T, "number of frames")->capture_default_str();
  conv_cmd->add_option("--downsample", cspec.downsample, "spatial pooling factor")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      const NetworkArch arch = load_arch(arch_path);
      TrainConfig cfg = train_flags.resolve(arch);
      if (!k_text.empty()) cfg.k = parse_k(k_text, cfg.T);
      if (!n_text.empty()) cfg.n = parse_n(n_text, arch.trainable_layer_count());
      if (cfg.k == 0) cfg.k = cfg.T;
      if (cfg.n == 0) cfg.n = arch.trainable_layer_count();
      if (!classifier.empty()) cfg.classifier_mode = single_mode(classifier);
      const TrainRun run = cmd_train({arch_path, data_path, out_dir, cfg, epochs}, std::cerr);
      const auto& last = run.epochs.back();
      std::cout << "final train_acc " << last.train_accuracy;
      if (last.test_accuracy >= 0.0) std::cout << " test_acc " << last.test_accuracy;
      std::cout << "\nwrote " << out_dir << "/{config.json,metrics.csv,timing.csv,checkpoint.json}\n";
      return kExitOk;
    }

    if (*grad_cmd) {
      std::vector<NetworkArch> archs =
          grad_arch.empty() ? gradcheck_toy_archs() : std::vector{load_arch(grad_arch)};
      gopt.ks = parse_k_list(grad_k, gopt.T);
      // "all" becomes the largest value; run_gradcheck clamps n per architecture.
      gopt.ns = parse_n_list(grad_n, std::numeric_limits<std::size_t>::max());
      gopt.fault.drop_temporal_potential_term = corrupt;
      std::ostringstream report;
      const GradcheckSummary total = cmd_gradcheck(archs, gopt, fd_instances, report);
      std::cout << report.str();
      if (!grad_out.empty()) {
        std::ofstream f(grad_out, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + grad_out);
        f << report.str();
      }
      const bool ok = total.passed();
      std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
      return ok ? kExitOk : kExitFailure;
    }

    if (*est_cmd) {
      EstimateSpec spec;
      spec.arch = load_arch(est_arch);
      spec.T = est_T ? *est_T : spec.arch.time_steps;
      if (spec.T == 0) throw ConfigError("--T is required: the architecture file gives no time_steps");
      spec.batch_size = est_batch;
      spec.alpha = alpha;
      spec.modes = parse_modes(est_classifier);
      spec.conventions.end_reduction_for_single_block = end_single;
      for (std::size_t k : parse_k_list(est_k, spec.T)) {
        if (k <= spec.T && std::find(spec.ks.begin(), spec.ks.end(), k) == spec.ks.end()) {
          spec.ks.push_back(k);
        }
      }
      std::sort(spec.ks.rbegin(), spec.ks.rend());
      spec.ns = parse_n_list(est_n, spec.arch.trainable_layer_count());
      std::sort(spec.ns.rbegin(), spec.ns.rend());
      spec.ns.erase(std::unique(spec.ns.begin(), spec.ns.end()), spec.ns.end());
      for (std::size_t n : spec.ns) {
        if (n > spec.arch.trainable_layer_count()) {
          throw ConfigError("n=" + std::to_string(n) + " exceeds the " +
                            std::to_string(spec.arch.trainable_layer_count()) +
                            " trainable layers");
        }
      }
      if (!accuracy_file.empty()) spec.accuracies = parse_accuracy_csv(read_file(accuracy_file));
      const auto rows = estimate_table(spec);
      const std::string text = est_format == "json" ? estimate_json(rows) : estimate_csv(rows);
      if (est_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(est_out, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + est_out);
        f << text;
      }
      return kExitOk;
    }

    if (*sweep_cmd) {
      const NetworkArch arch = load_arch(sw_arch);
      SweepSpec spec;
      spec.arch_path = sw_arch;
      spec.data_path = sw_data;
      spec.out_dir = sw_out;
      spec.base = sweep_flags.resolve(arch);
      spec.ks = parse_k_list(sw_k, spec.base.T);
      spec.ns = parse_n_list(sw_n, arch.trainable_layer_count());
      spec.modes = parse_modes(sw_classifier);
      spec.epochs = sw_epochs;
      spec.alpha = sw_alpha;
      spec.workers = spec.base.threads;
      spec.base.k = spec.base.T;
      spec.base.n = arch.trainable_layer_count();
      const auto rows = cmd_sweep(spec, std::cerr);
      std::cout << sweep_csv(rows, "");
      return kExitOk;
    }

    if (*conv_cmd) {
      if (!(dt_ms > 0.0)) throw ConfigError("--dt-ms must be positive");
      cspec.input = conv_in;
      cspec.output = conv_out;
      cspec.dt_us = static_cast<std::int64_t>(std::llround(dt_ms * 1000.0));
      const ConvertSummary s = cmd_convert_dvs(cspec);
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "converted " << s.events << " events into " << cspec.T << " frames ("
                << s.occupied << " occupied cells), label " << s.label << " -> " << conv_out
                << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArchitectureError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
