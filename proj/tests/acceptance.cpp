// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every tolerance and time budget below is a hard limit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ttlbp/commands.hpp"
#include "ttlbp/error.hpp"
#include "ttlbp/rng.hpp"

using namespace ttlbp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> slurp_bytes(const fs::path& p) {
  const std::string s = slurp(p);
  return {s.begin(), s.end()};
}

const std::string kSrc = TTLBP_SOURCE_DIR;

NetworkArch arch_file(const std::string& name) { return load_arch(kSrc + "/archs/" + name); }

TrainConfig toy_config(std::size_t T, std::size_t k, std::size_t n, Real dropout) {
  TrainConfig c;
  c.T = T;
  c.k = k;
  c.n = n;
  c.batch_size = 4;
  c.dropout_rate = dropout;
  c.lif = GradcheckOptions{}.lif;
  return c;
}

std::vector<std::size_t> toy_labels(std::size_t batch, std::size_t classes) {
  std::vector<std::size_t> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = (i * 7 + 1) % classes;
  return y;
}

Real worst_error(const std::vector<GradSet>& a, const std::vector<GradSet>& b) {
  Real worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    for (std::size_t l = 0; l < a[i].layers.size(); ++l) {
      worst = std::max(worst, max_relative_error(a[i].layers[l], b[i].layers[l]));
    }
    for (std::size_t c = 0; c < a[i].classifiers.size(); ++c) {
      worst = std::max(worst, max_relative_error(a[i].classifiers[c], b[i].classifiers[c]));
    }
  }
  return worst;
}

std::size_t nonzero(const GradSet& g) {
  std::size_t n = 0;
  for (const auto* list : {&g.layers, &g.classifiers}) {
    for (const auto& t : *list) {
      for (Real v : t.values()) n += v != 0.0;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------

Outcome reduction_identity() {
  Outcome o;
  const std::size_t T = 6, B = 4;
  Real worst = 0.0;
  for (const auto& arch : gradcheck_toy_archs()) {
    const std::size_t all = arch.trainable_layer_count();
    const Network net = build_network(arch, all);
    const auto y = toy_labels(B, arch.num_classes);
    for (Real dropout : {0.0, 0.2}) {
      const TrainConfig cfg = toy_config(T, T, all, dropout);
      const WeightSet w = gradcheck_weights(net, 2, 1.0);
      const auto in = gradcheck_input(T, B, net.in_size(0), 0x51);
      const auto engine = interval_gradients(in, y, w, net, cfg, 0x77);
      const GradSet reference = reference_bptt_gradients(in, y, w, net, cfg, 0x77);
      const auto oracle = oracle_bptt_grad(in, y, w, net, cfg, 0x77);
      o.require(engine.size() == 1 && engine[0] == reference,
                arch.name + ": not bitwise equal to reference BPTT");
      o.require(nonzero(reference) > 0, arch.name + ": vacuous (all-zero) gradients");
      worst = std::max(worst, worst_error(engine, oracle));

      // Same statement for whole training steps: three updates in lockstep.
      WeightSet a = w, b = w;
      for (std::uint64_t batch = 0; batch < 3; ++batch) {
        const auto xin = gradcheck_input(T, B, net.in_size(0), 0x100 + batch);
        train_batch(xin, y, a, net, cfg, batch, 0.05);
        reference_bptt_train_batch(xin, y, b, net, cfg, batch, 0.05);
      }
      o.require(a == b, arch.name + ": training trajectory diverges from reference BPTT");
    }
  }
  o.require(worst <= 1e-10, "oracle error " + fmt("%.3g", worst));
  o.detail = "max rel err vs oracle " + fmt("%.2e", worst) + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome oracle_grid() {
  Outcome o;
  GradcheckOptions opt;
  opt.T = 6;
  opt.tolerance = 1e-10;
  Real worst = 0.0;
  std::size_t cases = 0;
  for (Real dropout : {0.0, 0.2}) {
    opt.dropout_rate = dropout;
    for (const auto& arch : gradcheck_toy_archs()) {
      for (const auto& c : run_gradcheck(arch, opt)) {
        ++cases;
        worst = std::max(worst, c.max_rel_error);
        o.require(c.passed, c.arch + " k=" + std::to_string(c.k) + " n=" + std::to_string(c.n) +
                                " at " + c.first_failure);
        o.require(c.nonzero > 0, c.arch + ": vacuous case");
      }
    }
  }
  o.detail = std::to_string(cases) + " cases, max rel err " + fmt("%.2e", worst) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome isolation() {
  Outcome o;
  const std::size_t T = 6, B = 4, k = 2;
  std::size_t block_checks = 0, interval_checks = 0;
  for (const auto& arch : gradcheck_toy_archs()) {
    const Network net = build_network(arch, 1);
    const TrainConfig cfg = toy_config(T, k, 1, 0.2);
    const WeightSet w = gradcheck_weights(net, 2, 1.0);
    const auto in = gradcheck_input(T, B, net.in_size(0), 0x51);
    const auto y = toy_labels(B, arch.num_classes);
    const auto base = interval_gradients(in, y, w, net, cfg, 0x77);

    // Block isolation: silencing block b's loss touches nothing outside b.
    for (std::size_t b = 0; b < net.plan.size(); ++b) {
      const std::vector<std::size_t> zeroed{b};
      const auto g = interval_gradients(in, y, w, net, cfg, 0x77, {}, zeroed);
      const Block& blk = net.plan.blocks[b];
      bool others_same = true, own_zero = true;
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
          const bool inside = l >= blk.first && l <= blk.last;
          if (inside) {
            own_zero &= nonzero(GradSet{{g[i].layers[l]}, {}}) == 0;
          } else {
            others_same &= g[i].layers[l] == base[i].layers[l];
          }
        }
        for (std::size_t c = 0; c < net.plan.size(); ++c) {
          if (c == b) {
            own_zero &= nonzero(GradSet{{}, {g[i].classifiers[c]}}) == 0;
          } else {
            others_same &= g[i].classifiers[c] == base[i].classifiers[c];
          }
        }
      }
      o.require(others_same, arch.name + ": zeroing block " + std::to_string(b) +
                                 " changed another block");
      o.require(own_zero, arch.name + ": block " + std::to_string(b) + " kept a gradient");
      ++block_checks;
    }

    // Temporal truncation: perturbing interval i+1 leaves interval i alone.
    bool any_effect = false;
    for (std::size_t i = 0; i + 1 < cfg.num_intervals(); ++i) {
      std::vector<Tensor> frames;
      Rng rng(0xabc + i);
      for (std::size_t t = 0; t < T; ++t) {
        Tensor f = in.at(t);
        if (t >= (i + 1) * k && t < (i + 2) * k) {
          for (auto& v : f.raw()) v = rng.uniform();
        }
        frames.push_back(std::move(f));
      }
      const auto g = interval_gradients(BatchInput::sequence(std::move(frames)), y, w, net, cfg,
                                        0x77);
      for (std::size_t j = 0; j <= i; ++j) {
        o.require(g[j] == base[j], arch.name + ": interval " + std::to_string(j) +
                                       " changed when interval " + std::to_string(i + 1) +
                                       " was perturbed");
      }
      any_effect |= !(g[i + 1] == base[i + 1]);
      ++interval_checks;
    }
    o.require(any_effect, arch.name + ": perturbations never reached the perturbed interval");
  }
  o.detail = std::to_string(block_checks) + " block and " + std::to_string(interval_checks) +
             " interval perturbations, bitwise" + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome seed_error() {
  Outcome o;
  const auto check = seed_finite_difference_check(100, 0x5eed, 1e-6);
  o.require(check.instances == 100, "wrong instance count");
  o.require(check.max_rel_error <= 1e-6, "error " + fmt("%.3g", check.max_rel_error));
  o.detail = "100 instances, max rel err " + fmt("%.2e", check.max_rel_error) +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

constexpr std::size_t kCostBatch = 128;
constexpr Real kCostAlpha = 0.2;

CostReport cost_of(const NetworkArch& arch, std::size_t n, std::size_t k,
                   ClassifierMode mode = ClassifierMode::Trainable) {
  return estimate(uniform_sparsity(build_network(arch, n, mode), k, arch.time_steps, kCostBatch,
                                   kCostAlpha));
}

Outcome cost_figures() {
  Outcome o;
  std::string detail;
  for (const char* f : {"lenet1.json", "lenet2.json", "alexnet.json"}) {
    const NetworkArch arch = arch_file(f);
    const std::size_t T = arch.time_steps, all = arch.trainable_layer_count();
    const Real ratio = cost_of(arch, 1, T).total_macs / cost_of(arch, all, T).total_macs;
    const std::string name = arch.name;
    detail += name + " " + fmt("%.4f", ratio) + " ";
    if (std::string(f) == "lenet1.json") {
      o.require(std::abs(ratio - 0.28) <= 0.05, name + " MAC ratio " + fmt("%.4f", ratio));
    } else {
      o.require(ratio <= 0.01, name + " MAC ratio " + fmt("%.4f", ratio));
    }
    // MACs do not depend on k or on the classifier mode.
    for (std::size_t n : {std::size_t{1}, std::size_t{2}, all}) {
      const Real ref = cost_of(arch, n, T).macs_backward;
      for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{10}, T}) {
        for (auto mode : {ClassifierMode::Trainable, ClassifierMode::FrozenRandom}) {
          o.require(cost_of(arch, n, k, mode).macs_backward == ref,
                    name + " MACs vary at k=" + std::to_string(k) + " n=" + std::to_string(n));
        }
      }
    }
  }
  o.detail = "LBP1 normalized MACs: " + detail + "(k/mode invariant)" +
             (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome cost_structure() {
  Outcome o;
  const NetworkArch lenet = arch_file("lenet1.json");
  const std::size_t T = lenet.time_steps, all = lenet.trainable_layer_count();

  // Affine in k: equal slopes over (1, 5) and (5, 10) to machine precision.
  const Network bp = build_network(lenet, all);
  auto mc_bptt = [&](std::size_t k) {
    return memory_cost(uniform_sparsity(bp, k, T, kCostBatch, kCostAlpha), MemoryMode::BPTT);
  };
  const Real s1 = (mc_bptt(5) - mc_bptt(1)) / 4.0;
  const Real s2 = (mc_bptt(10) - mc_bptt(5)) / 5.0;
  o.require(std::abs(s1 - s2) <= 1e-12 * std::abs(s1), "BPTT memory not affine in k");

  // BP - LBP gap at k = 2 and k = 10 on the same inputs.
  const Network lbp1 = build_network(lenet, 1);
  auto gap = [&](std::size_t k) {
    const auto in = uniform_sparsity(lbp1, k, T, kCostBatch, kCostAlpha);
    return memory_cost(in, MemoryMode::BPTT) - memory_cost(in, MemoryMode::Local);
  };
  o.require(gap(2) == gap(10), "memory gap differs: " + fmt("%.17g", gap(2)) + " vs " +
                                   fmt("%.17g", gap(10)));
  o.require(gap(2) > 0.0, "local memory not below BPTT");

  // Memory-access reduction of LBP1 over BP at k=1, per classifier mode.
  auto reduction = [&](ClassifierMode mode) {
    return 1.0 - cost_of(lenet, 1, 1, mode).total_mem_access() /
                     cost_of(lenet, all, 1, mode).total_mem_access();
  };
  const Real trainable = reduction(ClassifierMode::Trainable);
  const Real random = reduction(ClassifierMode::FrozenRandom);
  o.require(std::abs(trainable - 0.23) <= 0.10, "trainable reduction " + fmt("%.4f", trainable));
  o.require(std::abs(random - 0.29) <= 0.10, "random reduction " + fmt("%.4f", random));
  o.detail = "slope " + fmt("%.6g", s1) + ", gap " + fmt("%.6g", gap(2)) + " at k=2 and k=10, " +
             "MA reduction " + fmt("%.1f%%", 100 * trainable) + " trainable / " +
             fmt("%.1f%%", 100 * random) + " random" + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

struct SmokeRun {
  Real best = 0.0;
  Real final = 0.0;
  std::size_t first_epoch_at_95 = 0;  // 1-based; 0 if never reached
  double seconds = 0.0;
};

SmokeRun smoke(const NetworkArch& arch, const DatasetSplit& data, std::size_t k, std::size_t n,
               ClassifierMode mode) {
  TrainConfig cfg = config_from_json(slurp(kSrc + "/configs/smoke.json"));
  cfg.k = k;
  cfg.n = n;
  cfg.classifier_mode = mode;
  cfg.threads = 1;
  const Network net = build_network(arch, n, mode);
  SmokeRun r;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainRun run = train(net, data, cfg, 50, [&](const EpochMetrics& m, const WeightSet&) {
    r.best = std::max(r.best, m.train_accuracy);
    if (r.first_epoch_at_95 == 0 && m.train_accuracy >= 0.95) r.first_epoch_at_95 = m.epoch + 1;
  });
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.final = run.epochs.back().train_accuracy;
  return r;
}

Outcome training_smoke() {
  Outcome o;
  const NetworkArch arch = arch_file("toy.json");
  const DatasetSplit data = load_manifest(kSrc + "/data/synth_smoke.json");
  const std::size_t T = config_from_json(slurp(kSrc + "/configs/smoke.json")).T;
  const std::size_t all = arch.trainable_layer_count();
  o.require(data.train.shape == Shape3{1, 8, 8} && data.train.num_classes == 2 && T == 10,
            "smoke data is not 2-class 1x8x8 with T=10");

  std::string detail;
  struct Cell {
    const char* name;
    std::size_t k, n;
  };
  for (const Cell& c : {Cell{"(T,all)", T, all}, Cell{"(2,1)", 2, 1}}) {
    const SmokeRun r = smoke(arch, data, c.k, c.n, ClassifierMode::Trainable);
    o.require(r.first_epoch_at_95 > 0, std::string(c.name) + " best " + fmt("%.3f", r.best));
    o.require(r.seconds < 60.0, std::string(c.name) + " took " + fmt("%.1f s", r.seconds));
    detail += std::string(c.name) + " 95% at epoch " + std::to_string(r.first_epoch_at_95) +
              " (" + fmt("%.1f s", r.seconds) + "), ";
  }
  const SmokeRun trainable = smoke(arch, data, T, 1, ClassifierMode::Trainable);
  const SmokeRun frozen = smoke(arch, data, T, 1, ClassifierMode::FrozenRandom);
  o.require(frozen.final < trainable.final, "frozen " + fmt("%.4f", frozen.final) +
                                                " not below trainable " +
                                                fmt("%.4f", trainable.final));
  o.detail = detail + "(T,1) final " + fmt("%.4f", trainable.final) + " trainable vs " +
             fmt("%.4f", frozen.final) + " random" + (o.detail.empty() ? "" : "; " + o.detail);
  return o;
}

Outcome encodings() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "ttlbp_acceptance" / "encodings";
  fs::create_directories(dir);

  // Single event at t=0, (x=3, y=4), polarity 1; dt 20 ms, T=2.
  EventStream one;
  one.height = 8;
  one.width = 8;
  one.events = {{0, 3, 4, 1}};
  const FrameSequence f = dvs_to_frames(one, 20000, 2);
  std::size_t set = 0;
  for (Real v : f.frames.values()) set += v != 0.0;
  o.require(f.at(0, 1, 4, 3) == 1.0 && set == 1, "single event misplaced");

  // Duplicates.
  const SynthDataset synth = [] {
    SynthSpec s;
    s.samples_per_class = 3;
    s.seed = 4;
    return synth_patterns(s);
  }();
  for (const auto& stream : synth.streams) {
    EventStream doubled = stream;
    doubled.events.insert(doubled.events.end(), stream.events.begin(), stream.events.end());
    o.require(dvs_to_frames(doubled, 1000, 10).frames == dvs_to_frames(stream, 1000, 10).frames,
              "duplicate events changed the frames");
  }

  // Direct encoding is time invariant.
  const DirectEncoding enc = direct_encode_input(synth.images[0]);
  Tensor row({1, enc.frame.size()}, enc.frame.raw());
  const BatchInput direct = BatchInput::direct(row);
  bool same = true;
  for (std::size_t t = 1; t < 20; ++t) same &= direct.at(t) == direct.at(0);
  o.require(same && direct.at(0).raw() == synth.images[0].raw(), "direct encoding varies in time");

  // IDX byte-exact round trip through disk, u8 and f64.
  std::vector<Real> pixels(6 * 5 * 4);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<Real>(i * 37 % 256);
  for (const IdxArray& a : {make_idx_u8({6, 5, 4}, pixels), [&] {
         IdxArray d;
         d.type = 0x0E;
         d.dims = {3};
         d.payload = {0x3f, 0xf0, 0, 0, 0, 0, 0, 0, 0xc0, 0, 0, 0, 0, 0, 0, 0,
                      0x7f, 0xef, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
         return d;
       }()}) {
    write_idx(dir / "a.idx", a);
    const auto bytes = slurp_bytes(dir / "a.idx");
    write_idx(dir / "b.idx", load_idx(dir / "a.idx"));
    o.require(bytes == slurp_bytes(dir / "b.idx") && serialize_idx(parse_idx(bytes)) == bytes,
              "IDX round trip not byte exact");
  }

  // Event CSV byte-exact round trip.
  for (const auto& stream : synth.streams) {
    write_event_csv(dir / "a.csv", stream);
    const std::string text = slurp(dir / "a.csv");
    write_event_csv(dir / "b.csv", load_event_csv(dir / "a.csv"));
    o.require(text == slurp(dir / "b.csv") && load_event_csv(dir / "a.csv") == stream,
              "event CSV round trip not byte exact");
  }
  o.detail = "single event, duplicates, direct encoding, IDX and CSV round trips" +
             (o.detail.empty() ? std::string() : "; " + o.detail);
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "ttlbp_acceptance" / "determinism";
  fs::remove_all(root);
  TrainSpec spec;
  spec.arch_path = kSrc + "/archs/toy.json";
  spec.data_path = kSrc + "/data/synth_smoke.json";
  spec.config = config_from_json(slurp(kSrc + "/configs/smoke.json"));
  spec.config.k = 3;
  spec.config.n = 1;
  spec.config.dropout_rate = 0.1;
  spec.epochs = 3;
  std::ostringstream log;
  std::vector<fs::path> dirs;
  for (std::size_t threads : {1, 1, 2, 4}) {
    spec.out_dir = root / ("run" + std::to_string(dirs.size()) + "_t" + std::to_string(threads));
    spec.config.threads = threads;
    cmd_train(spec, log);
    dirs.push_back(spec.out_dir);
  }
  for (const char* file : {"metrics.csv", "checkpoint.json"}) {
    const std::string ref = slurp(dirs[0] / file);
    o.require(!ref.empty(), std::string(file) + " missing");
    for (std::size_t i = 1; i < dirs.size(); ++i) {
      o.require(slurp(dirs[i] / file) == ref,
                std::string(file) + " differs in " + dirs[i].filename().string());
    }
  }
  o.detail = "metrics.csv and checkpoint.json identical over reruns at 1, 2 and 4 threads" +
             (o.detail.empty() ? std::string() : "; " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_seconds;  // 0: no time limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"reduction identity", 10.0, reduction_identity},
      {"oracle grid", 30.0, oracle_grid},
      {"isolation", 0.0, isolation},
      {"seed error vs finite differences", 0.0, seed_error},
      {"cost figures", 5.0, cost_figures},
      {"cost structure", 0.0, cost_structure},
      {"training smoke", 0.0, training_smoke},
      {"encodings", 0.0, encodings},
      {"determinism", 0.0, determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f s", c.budget_seconds) + " budget";
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
