#include "ttlbp/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ttlbp/error.hpp"

namespace ttlbp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t parse_positive(const std::string& text, const char* what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || v == 0 || text.front() == '-') {
    throw ConfigError(std::string(what) + " must be a positive integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::string mode_name(ClassifierMode m) {
  return m == ClassifierMode::Trainable ? "trainable" : "random";
}

std::string cell_error_text(std::string msg) {
  for (char& c : msg) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return msg;
}

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
  std::size_t threads = requested;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("TTLBP_THREADS"); cap && *cap) {
    threads = std::min(threads, parse_positive(cap, "TTLBP_THREADS"));
  }
  return threads;
}

std::size_t parse_k(const std::string& text, std::size_t T) {
  if (text == "T") return T;
  return parse_positive(text, "k");
}

std::size_t parse_n(const std::string& text, std::size_t trainable_layers) {
  if (text == "all") return trainable_layers;
  return parse_positive(text, "n");
}

std::vector<std::size_t> parse_k_list(const std::string& text, std::size_t T) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_k(item, T));
  if (out.empty()) throw ConfigError("empty k list");
  return out;
}

std::vector<std::size_t> parse_n_list(const std::string& text, std::size_t trainable_layers) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_n(item, trainable_layers));
  if (out.empty()) throw ConfigError("empty n list");
  return out;
}

std::vector<ClassifierMode> parse_modes(const std::string& text) {
  if (text == "both") return {ClassifierMode::Trainable, ClassifierMode::FrozenRandom};
  if (text == "trainable") return {ClassifierMode::Trainable};
  if (text == "random") return {ClassifierMode::FrozenRandom};
  throw ConfigError("classifier must be trainable, random or both; got '" + text + "'");
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DataError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      t.comments.push_back(line.substr(line.starts_with("# ") ? 2 : 1));
      continue;
    }
    auto cells = split(line, ',');
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw ParseError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(t.columns.size()),
                       line_offset);
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.columns.empty()) throw ParseError("CSV has no header", 0);
  return t;
}

// ---------------------------------------------------------------------------
// train

TrainRun cmd_train(const TrainSpec& spec, std::ostream& log) {
  const NetworkArch arch = load_arch(spec.arch_path);
  const TrainConfig& cfg = spec.config;
  cfg.validate(arch);
  if (spec.epochs == 0) throw ConfigError("epochs must be positive");
  const Network net = build_network(arch, cfg.n, cfg.classifier_mode);
  const DatasetSplit data = load_manifest(spec.data_path);
  for (const auto& w : data.warnings) log << "warning: " << w << '\n';

  fs::create_directories(spec.out_dir);
  const json effective{{"config", json::parse(config_to_json(cfg))},
                       {"config_hash", hex64(config_hash(cfg))},
                       {"arch", json::parse(arch_to_json(arch))},
                       {"data", spec.data_path.string()},
                       {"epochs", spec.epochs},
                       {"threads", cfg.threads}};
  write_text(spec.out_dir / "config.json", effective.dump(2) + "\n");

  const fs::path metrics_path = spec.out_dir / "metrics.csv";
  const fs::path timing_path = spec.out_dir / "timing.csv";
  const fs::path checkpoint_path = spec.out_dir / "checkpoint.json";
  std::string metrics =
      "# config=" + config_to_json(cfg) + "\n" + metrics_header(net.plan.size()) + "\n";
  std::string timing = "epoch,wall_seconds\n";
  write_text(metrics_path, metrics);
  std::size_t completed = 0;

  auto on_epoch = [&](const EpochMetrics& m, const WeightSet& w) {
    metrics += format_metrics_row(m) + "\n";
    timing += std::to_string(m.epoch) + "," + format_real(m.wall_seconds) + "\n";
    write_text(metrics_path, metrics);
    write_text(timing_path, timing);
    save_checkpoint(checkpoint_path, Checkpoint{m.epoch + 1, cfg, arch, w});
    completed = m.epoch + 1;
    log << "epoch " << m.epoch << "  lr " << format_real(m.learning_rate) << "  loss";
    for (Real l : m.block_loss) log << ' ' << sci(l);
    log << "  train_acc " << m.train_accuracy;
    if (m.test_accuracy >= 0.0) log << "  test_acc " << m.test_accuracy;
    log << "  (" << m.wall_seconds << " s)\n";
  };

  try {
    return train(net, data, cfg, spec.epochs, on_epoch);
  } catch (const DivergenceError& e) {
    const json snapshot{
        {"error", e.what()},
        {"epochs_completed", completed},
        {"last_good_checkpoint", completed ? json(checkpoint_path.filename().string()) : json()},
        {"config", json::parse(config_to_json(cfg))},
        {"hint", "lower the learning rate or raise the surrogate width"}};
    write_text(spec.out_dir / "divergence.json", snapshot.dump(2) + "\n");
    log << "diverged: " << e.what() << "\nsnapshot written to "
        << (spec.out_dir / "divergence.json").string() << '\n';
    throw;
  }
}

// ---------------------------------------------------------------------------
// gradcheck

bool GradcheckSummary::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; }) &&
         seed.max_rel_error <= seed_tolerance;
}

GradcheckSummary cmd_gradcheck(const std::vector<NetworkArch>& archs,
                               const GradcheckOptions& options, std::size_t fd_instances,
                               std::ostream& report) {
  GradcheckSummary s;
  report << "arch,k,n,max_rel_error,nonzero,total,status,location\n";
  for (const auto& arch : archs) {
    for (auto& c : run_gradcheck(arch, options)) {
      report << c.arch << ',' << c.k << ',' << c.n << ',' << sci(c.max_rel_error) << ','
             << c.nonzero << ',' << c.total << ',' << (c.passed ? "PASS" : "FAIL") << ','
             << (c.passed ? c.worst : c.first_failure) << '\n';
      s.cases.push_back(std::move(c));
    }
  }
  s.seed = seed_finite_difference_check(fd_instances, options.seed);
  report << "# seed error vs central differences: " << s.seed.instances << " instances, max "
         << "relative error " << sci(s.seed.max_rel_error) << ' '
         << (s.seed.max_rel_error <= s.seed_tolerance ? "PASS" : "FAIL") << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// estimate-cost

std::vector<AccuracyEntry> parse_accuracy_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const std::size_t ck = t.column("k"), cn = t.column("n"), cm = t.column("classifier"),
                    ca = t.column("accuracy");
  std::vector<AccuracyEntry> out;
  for (const auto& row : t.rows) {
    AccuracyEntry e;
    e.k = parse_positive(row[ck], "k");
    e.n = parse_positive(row[cn], "n");
    const auto modes = parse_modes(row[cm]);
    if (modes.size() != 1) throw DataError("accuracy rows need one classifier mode");
    e.mode = modes.front();
    try {
      e.accuracy = std::stod(row[ca]);
    } catch (const std::exception&) {
      throw DataError("bad accuracy '" + row[ca] + "'");
    }
    out.push_back(e);
  }
  return out;
}

Real accuracy_loss(Real accuracy, Real baseline_accuracy) { return baseline_accuracy - accuracy; }

std::vector<EstimateRow> estimate_table(const EstimateSpec& spec) {
  const std::size_t all = spec.arch.trainable_layer_count();
  auto inputs = [&](std::size_t k, std::size_t n, ClassifierMode mode) {
    CostInputs in =
        uniform_sparsity(build_network(spec.arch, n, mode), k, spec.T, spec.batch_size, spec.alpha);
    in.conventions = spec.conventions;
    return in;
  };
  auto find_accuracy = [&](std::size_t k, std::size_t n,
                           ClassifierMode mode) -> std::optional<Real> {
    for (const auto& e : spec.accuracies) {
      if (e.k == k && e.n == n && e.mode == mode) return e.accuracy;
    }
    return std::nullopt;
  };

  std::vector<EstimateRow> rows;
  for (ClassifierMode mode : spec.modes) {
    const CostReport base = estimate(inputs(spec.T, all, mode));
    const auto base_acc = find_accuracy(spec.T, all, mode);
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t n : spec.ns) {
      for (std::size_t k : spec.ks) cells.emplace_back(k, n);
    }
    if (std::find(cells.begin(), cells.end(), std::pair{spec.T, all}) == cells.end()) {
      cells.insert(cells.begin(), {spec.T, all});
    }
    for (auto [k, n] : cells) {
      EstimateRow r;
      r.k = k;
      r.n = n;
      r.mode = mode;
      r.baseline = k == spec.T && n == all;
      r.report = r.baseline ? base : estimate(inputs(k, n, mode));
      r.ratios = normalize(r.report, base);
      r.accuracy = find_accuracy(k, n, mode);
      if (r.accuracy && base_acc) {
        r.accuracy_loss = accuracy_loss(*r.accuracy, *base_acc);
        r.fom = fom(*r.accuracy_loss, r.ratios);
      }
      rows.push_back(r);
    }
  }
  return rows;
}

std::string estimate_csv(const std::vector<EstimateRow>& rows) {
  std::string out =
      "k,n,classifier,baseline,mode,memory_cost,reads_forward,writes_forward,"
      "reads_backward_mid,writes_backward_mid,reads_backward_end,writes_backward_end,"
      "additions_forward,additions_backward,macs_backward,total_reads,total_writes,"
      "total_mem_access,total_additions,total_macs,mc_ratio,ma_ratio,add_ratio,mac_ratio,"
      "accuracy,accuracy_loss,fom\n";
  auto opt = [](const std::optional<Real>& v) { return v ? format_real(*v) : std::string(); };
  for (const auto& r : rows) {
    const CostReport& c = r.report;
    out += std::to_string(r.k) + "," + std::to_string(r.n) + "," + mode_name(r.mode) + "," +
           (r.baseline ? "1" : "0") + "," + c.mode;
    for (Real v : {c.memory_cost, c.reads_forward, c.writes_forward, c.reads_backward_mid,
                   c.writes_backward_mid, c.reads_backward_end, c.writes_backward_end,
                   c.additions_forward, c.additions_backward, c.macs_backward, c.total_reads,
                   c.total_writes, c.total_mem_access(), c.total_additions, c.total_macs,
                   r.ratios.memory, r.ratios.mem_access, r.ratios.additions, r.ratios.macs}) {
      out += "," + format_real(v);
    }
    out += "," + opt(r.accuracy) + "," + opt(r.accuracy_loss) + "," + opt(r.fom) + "\n";
  }
  return out;
}

std::string estimate_json(const std::vector<EstimateRow>& rows) {
  json arr = json::array();
  auto opt = [](const std::optional<Real>& v) { return v ? json(*v) : json(); };
  for (const auto& r : rows) {
    const CostReport& c = r.report;
    arr.push_back({{"k", r.k},
                   {"n", r.n},
                   {"classifier", mode_name(r.mode)},
                   {"baseline", r.baseline},
                   {"mode", c.mode},
                   {"memory_cost", c.memory_cost},
                   {"per_step",
                    {{"reads_forward", c.reads_forward},
                     {"writes_forward", c.writes_forward},
                     {"reads_backward_mid", c.reads_backward_mid},
                     {"writes_backward_mid", c.writes_backward_mid},
                     {"reads_backward_end", c.reads_backward_end},
                     {"writes_backward_end", c.writes_backward_end},
                     {"additions_forward", c.additions_forward},
                     {"additions_backward", c.additions_backward},
                     {"macs_backward", c.macs_backward}}},
                   {"totals",
                    {{"reads", c.total_reads},
                     {"writes", c.total_writes},
                     {"mem_access", c.total_mem_access()},
                     {"additions", c.total_additions},
                     {"macs", c.total_macs}}},
                   {"ratios",
                    {{"memory", r.ratios.memory},
                     {"mem_access", r.ratios.mem_access},
                     {"additions", r.ratios.additions},
                     {"macs", r.ratios.macs}}},
                   {"accuracy", opt(r.accuracy)},
                   {"accuracy_loss", opt(r.accuracy_loss)},
                   {"fom", opt(r.fom)}});
  }
  return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// sweep

void rank_sweep(std::vector<SweepRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const bool ok_a = a.error.empty(), ok_b = b.error.empty();
    if (ok_a != ok_b) return ok_a;
    if (ok_a && a.fom != b.fom) return a.fom < b.fom;
    if (a.k != b.k) return a.k < b.k;
    if (a.n != b.n) return a.n < b.n;
    return a.mode == ClassifierMode::Trainable && b.mode != ClassifierMode::Trainable;
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].rank = i + 1;
    rows[i].best = i == 0 && rows[i].error.empty();
  }
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& header_comment) {
  std::string out;
  if (!header_comment.empty()) out += "# " + header_comment + "\n";
  out +=
      "rank,k,n,classifier,baseline,accuracy,accuracy_loss,mc_ratio,ma_ratio,add_ratio,"
      "mac_ratio,fom,best,status\n";
  for (const auto& r : rows) {
    out += std::to_string(r.rank) + "," + std::to_string(r.k) + "," + std::to_string(r.n) + "," +
           mode_name(r.mode) + "," + (r.baseline ? "1" : "0");
    if (r.error.empty()) {
      for (Real v : {r.accuracy, r.accuracy_loss, r.ratios.memory, r.ratios.mem_access,
                     r.ratios.additions, r.ratios.macs, r.fom}) {
        out += "," + format_real(v);
      }
      out += std::string(",") + (r.best ? "1" : "0") + ",ok\n";
    } else {
      out += ",,,,,,,,0,error: " + cell_error_text(r.error) + "\n";
    }
  }
  return out;
}

std::vector<SweepRow> cmd_sweep(const SweepSpec& spec, std::ostream& log) {
  const NetworkArch arch = load_arch(spec.arch_path);
  const std::size_t all = arch.trainable_layer_count();
  const std::size_t T = spec.base.T;
  if (spec.epochs == 0) throw ConfigError("epochs must be positive");
  for (std::size_t k : spec.ks) {
    if (k == 0 || k > T) throw ConfigError("k=" + std::to_string(k) + " outside [1, T]");
  }
  for (std::size_t n : spec.ns) {
    if (n == 0 || n > all) {
      throw ConfigError("n=" + std::to_string(n) + " outside [1, " + std::to_string(all) + "]");
    }
  }
  const DatasetSplit data = load_manifest(spec.data_path);
  for (const auto& w : data.warnings) log << "warning: " << w << '\n';

  struct Cell {
    SweepRow row;
    CostReport cost;
  };
  std::vector<Cell> cells;
  for (ClassifierMode mode : spec.modes) {
    std::vector<std::pair<std::size_t, std::size_t>> grid{{T, all}};
    for (std::size_t n : spec.ns) {
      for (std::size_t k : spec.ks) {
        if (std::find(grid.begin(), grid.end(), std::pair{k, n}) == grid.end()) {
          grid.emplace_back(k, n);
        }
      }
    }
    for (auto [k, n] : grid) {
      Cell c;
      c.row.k = k;
      c.row.n = n;
      c.row.mode = mode;
      c.row.baseline = k == T && n == all;
      cells.push_back(c);
    }
  }

  fs::create_directories(spec.out_dir / "cells");
  const std::size_t workers = std::max<std::size_t>(1, std::min(spec.workers, cells.size()));
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};

  auto run_cell = [&](Cell& cell) {
    SweepRow& r = cell.row;
    const std::string name =
        "k" + std::to_string(r.k) + "_n" + std::to_string(r.n) + "_" + mode_name(r.mode);
    try {
      TrainConfig cfg = spec.base;
      cfg.k = r.k;
      cfg.n = r.n;
      cfg.classifier_mode = r.mode;
      if (workers > 1) cfg.threads = 1;
      cfg.validate(arch);
      const Network net = build_network(arch, r.n, r.mode);
      const fs::path dir = spec.out_dir / "cells" / name;
      fs::create_directories(dir);
      std::string metrics =
          "# config=" + config_to_json(cfg) + "\n" + metrics_header(net.plan.size()) + "\n";
      const TrainRun run = train(net, data, cfg, spec.epochs, [&](const EpochMetrics& m, const WeightSet&) {
        metrics += format_metrics_row(m) + "\n";
      });
      write_text(dir / "metrics.csv", metrics);
      const EpochMetrics& last = run.epochs.back();
      r.accuracy = last.test_accuracy >= 0.0 ? last.test_accuracy : last.train_accuracy;
      CostInputs in = spec.alpha
                          ? uniform_sparsity(net, r.k, T, cfg.batch_size, *spec.alpha)
                          : measured_sparsity(net, r.k, T, cfg.batch_size, run.counters);
      cell.cost = estimate(in);
      std::lock_guard lock(log_mutex);
      log << "cell " << name << ": accuracy " << r.accuracy << '\n';
    } catch (const std::exception& e) {
      r.error = e.what();
      std::lock_guard lock(log_mutex);
      log << "cell " << name << " failed: " << e.what() << '\n';
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
    });
  }
  for (auto& t : pool) t.join();

  // FoM needs the baseline of the same classifier mode.
  std::map<ClassifierMode, const Cell*> baseline;
  for (const auto& c : cells) {
    if (c.row.baseline) baseline[c.row.mode] = &c;
  }
  std::vector<SweepRow> rows;
  for (auto& c : cells) {
    SweepRow r = c.row;
    const Cell* base = baseline.at(r.mode);
    if (r.error.empty() && !base->row.error.empty()) {
      r.error = "baseline cell failed: " + base->row.error;
    }
    if (r.error.empty()) {
      r.ratios = normalize(c.cost, base->cost);
      r.accuracy_loss = accuracy_loss(r.accuracy, base->row.accuracy);
      r.fom = fom(r.accuracy_loss, r.ratios);
    }
    rows.push_back(r);
  }
  rank_sweep(rows);

  json header{{"config", json::parse(config_to_json(spec.base))},
              {"epochs", spec.epochs},
              {"ks", spec.ks},
              {"ns", spec.ns},
              {"sparsity", spec.alpha ? json(*spec.alpha) : json("measured")}};
  write_text(spec.out_dir / "sweep.csv", sweep_csv(rows, "sweep=" + header.dump()));
  return rows;
}

// ---------------------------------------------------------------------------
// convert-dvs

ConvertSummary cmd_convert_dvs(const ConvertSpec& spec) {
  ConvertSummary s;
  if (spec.dt_us <= 0) throw ConfigError("dt must be positive");
  if (spec.T == 0) throw ConfigError("T must be positive");
  if (spec.downsample == 0) throw ConfigError("downsample must be positive");
  const EventStream stream = load_event_csv(spec.input);
  s.events = stream.events.size();
  s.label = stream.label;
  if (stream.events.empty()) {
    s.warnings.push_back("no events in " + spec.input.string() + "; writing " +
                         std::to_string(spec.T) + " empty frames");
  }
  Tensor frames = dvs_to_frames(stream, spec.dt_us, spec.T).frames;
  if (spec.downsample > 1) frames = downsample_frames(frames, spec.downsample);
  std::vector<Real> values(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    values[i] = 255.0 * frames[i];
    s.occupied += frames[i] != 0.0;
  }
  write_idx(spec.output, make_idx_u8(frames.shape(), values));
  return s;
}

}  // namespace ttlbp
