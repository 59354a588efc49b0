#include "ttlbp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "ttlbp/error.hpp"
#include "ttlbp/rng.hpp"

namespace ttlbp {

using json = nlohmann::json;

namespace {

json config_json(const TrainConfig& c) {
  return json{{"k", c.k},
              {"n", c.n},
              {"T", c.T},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"dropout_rate", c.dropout_rate},
              {"lr_decay", {{"factor", c.lr_decay.factor}, {"every_epochs", c.lr_decay.every_epochs}}},
              {"lif", {{"tau", c.lif.tau}, {"u_th", c.lif.u_th}, {"theta", c.lif.theta}, {"a", c.lif.a}}},
              {"classifier_mode", to_string(c.classifier_mode)},
              {"seed", c.seed}};
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool finite(const WeightSet& w) {
  auto ok = [](const std::vector<Tensor>& ts) {
    for (const auto& t : ts) {
      for (Real v : t.values()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  };
  return ok(w.layers) && ok(w.classifiers);
}

json tensors_json(const std::vector<Tensor>& ts) {
  json arr = json::array();
  for (const auto& t : ts) arr.push_back({{"shape", t.shape()}, {"data", t.raw()}});
  return arr;
}

std::vector<Tensor> tensors_from(const json& arr) {
  std::vector<Tensor> out;
  for (const auto& t : arr) {
    auto shape = t.at("shape").get<std::vector<std::size_t>>();
    auto data = t.at("data").get<std::vector<Real>>();
    if (shape.empty() && data.empty()) {
      out.emplace_back();  // pooling layer or frozen classifier velocity
    } else {
      out.emplace_back(std::move(shape), std::move(data));
    }
  }
  return out;
}

}  // namespace

std::string config_to_json(const TrainConfig& c) { return config_json(c).dump(); }

TrainConfig config_from_json(const std::string& text, TrainConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config JSON: ") + e.what(), e.byte);
  }
  try {
    c.k = j.value("k", c.k);
    c.n = j.value("n", c.n);
    c.T = j.value("T", c.T);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    if (j.contains("lr_decay")) {
      const auto& d = j.at("lr_decay");
      c.lr_decay.factor = d.value("factor", c.lr_decay.factor);
      c.lr_decay.every_epochs = d.value("every_epochs", c.lr_decay.every_epochs);
    }
    if (j.contains("lif")) {
      const auto& l = j.at("lif");
      c.lif.tau = l.value("tau", c.lif.tau);
      c.lif.u_th = l.value("u_th", c.lif.u_th);
      c.lif.theta = l.value("theta", c.lif.theta);
      c.lif.a = l.value("a", c.lif.a);
    }
    if (j.contains("classifier_mode")) {
      c.classifier_mode = classifier_mode_from_string(j.at("classifier_mode").get<std::string>());
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  return c;
}

std::uint64_t config_hash(const TrainConfig& c) { return fnv1a(config_to_json(c)); }

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Real evaluate(const Network& net, const WeightSet& weights, const Dataset& data,
              const TrainConfig& config) {
  if (data.size() == 0) return -1.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < data.size(); first += config.batch_size) {
    const std::size_t last = std::min(data.size(), first + config.batch_size);
    idx.resize(last - first);
    std::iota(idx.begin(), idx.end(), first);
    const auto pred =
        predict(make_batch(data, idx, config.T), weights, net, config.lif, config.T, config.threads);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == data.labels[idx[i]];
  }
  return static_cast<Real>(correct) / static_cast<Real>(data.size());
}

TrainRun train(const Network& net, const DatasetSplit& data, const TrainConfig& config,
               std::size_t epochs, const EpochCallback& on_epoch, const WeightSet* initial,
               std::size_t first_epoch) {
  config.validate(net.arch);
  const Dataset& train_set = data.train;
  train_set.validate();
  if (train_set.size() == 0) throw DataError("training set is empty");
  if (train_set.shape.flat() != net.in_size(0)) {
    throw ShapeError("dataset samples have shape " + std::to_string(train_set.shape.c) + "x" +
                     std::to_string(train_set.shape.h) + "x" + std::to_string(train_set.shape.w) +
                     ", network expects " + std::to_string(net.arch.input_shape.c) + "x" +
                     std::to_string(net.arch.input_shape.h) + "x" +
                     std::to_string(net.arch.input_shape.w));
  }
  if (train_set.num_classes > net.num_classes()) {
    throw DataError("dataset has more classes than the network outputs");
  }

  TrainRun run;
  run.weights = initial ? *initial : init_weights(net, derive_seed(config.seed, 0x1417ULL));
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = first_epoch; epoch < epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr_schedule(epoch, config.learning_rate, config.lr_decay);
    m.block_loss.assign(net.plan.size(), 0.0);
    run.counters = OpCounters::for_network(net);

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, 0x5f1eULL, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }

    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch_index) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + first, last - first);
      const auto labels = batch_labels(train_set, idx);
      const BatchResult r =
          train_batch(make_batch(train_set, idx, config.T), labels, run.weights, net, config,
                      derive_seed(config.seed, 0xba7cULL, epoch, batch_index), m.learning_rate);
      for (std::size_t b = 0; b < r.block_loss.size(); ++b) {
        if (!std::isfinite(r.block_loss[b])) {
          throw DivergenceError("non-finite loss in block " + std::to_string(b) + " at epoch " +
                                std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
        }
        m.block_loss[b] += r.block_loss[b] * static_cast<Real>(idx.size());
      }
      if (!finite(run.weights)) {
        throw DivergenceError("non-finite weight after epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_index) + " (learning rate " +
                              format_real(m.learning_rate) + ")");
      }
      m.updates += r.updates;
      run.counters.add(r.counters);
    }
    for (Real& v : m.block_loss) v /= static_cast<Real>(order.size());
    m.train_accuracy = evaluate(net, run.weights, train_set, config);
    m.test_accuracy = evaluate(net, run.weights, data.test, config);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    run.epochs.push_back(m);
    if (on_epoch) on_epoch(m, run.weights);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Metrics CSV

std::string metrics_header(std::size_t blocks) {
  std::string h = "epoch,lr";
  for (std::size_t b = 0; b < blocks; ++b) h += ",loss_block" + std::to_string(b);
  h += ",train_acc,test_acc,updates";
  return h;
}

std::string format_metrics_row(const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch) + "," + format_real(m.learning_rate);
  for (Real v : m.block_loss) row += "," + format_real(v);
  row += "," + format_real(m.train_accuracy) + "," + format_real(m.test_accuracy) + "," +
         std::to_string(m.updates);
  return row;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  MetricsTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    if (line.starts_with("# config=")) {
      t.config_json = line.substr(9);
      continue;
    }
    if (line.front() == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw ParseError("metrics CSV: row has " + std::to_string(cells.size()) + " cells, header " +
                           std::to_string(t.columns.size()),
                       line_offset);
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty()) {
        throw ParseError("metrics CSV: bad number '" + c + "'", line_offset);
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ParseError("metrics CSV: missing header", 0);
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j{{"version", kCheckpointVersion},
         {"epoch", ckpt.epoch},
         {"config_hash", config_hash(ckpt.config)},
         {"config", json::parse(config_to_json(ckpt.config))},
         {"arch", json::parse(arch_to_json(ckpt.arch))},
         {"classifier_mode", to_string(ckpt.weights.classifier_mode)},
         {"layers", tensors_json(ckpt.weights.layers)},
         {"classifiers", tensors_json(ckpt.weights.classifiers)},
         {"layer_velocity", tensors_json(ckpt.weights.layer_velocity)},
         {"classifier_velocity", tensors_json(ckpt.weights.classifier_velocity)}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(path.string() + ": unsupported checkpoint version");
    }
    Checkpoint c;
    c.epoch = j.at("epoch").get<std::size_t>();
    c.config = config_from_json(j.at("config").dump());
    if (config_hash(c.config) != j.at("config_hash").get<std::uint64_t>()) {
      throw DataError(path.string() + ": config hash mismatch");
    }
    c.arch = parse_arch(j.at("arch").dump());
    c.weights.classifier_mode = classifier_mode_from_string(j.at("classifier_mode").get<std::string>());
    c.weights.layers = tensors_from(j.at("layers"));
    c.weights.classifiers = tensors_from(j.at("classifiers"));
    c.weights.layer_velocity = tensors_from(j.at("layer_velocity"));
    c.weights.classifier_velocity = tensors_from(j.at("classifier_velocity"));
    return c;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace ttlbp
