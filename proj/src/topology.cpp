#include "ttlbp/topology.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ttlbp/error.hpp"
#include "ttlbp/rng.hpp"

namespace ttlbp {

using nlohmann::json;

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::AvgPool: return "AvgPool";
    case LayerKind::FullyConnected: return "FC";
  }
  return "?";
}

std::string to_string(ClassifierMode mode) {
  return mode == ClassifierMode::Trainable ? "trainable" : "random";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "Conv" || s == "conv") return LayerKind::Conv;
  if (s == "AvgPool" || s == "avgpool" || s == "pool") return LayerKind::AvgPool;
  if (s == "FC" || s == "fc" || s == "FullyConnected") return LayerKind::FullyConnected;
  throw ArchitectureError("unknown layer kind '" + s + "'");
}

ClassifierMode classifier_mode_from_string(const std::string& s) {
  if (s == "trainable") return ClassifierMode::Trainable;
  if (s == "random" || s == "frozen") return ClassifierMode::FrozenRandom;
  throw ConfigError("unknown classifier mode '" + s + "' (expected trainable|random)");
}

std::size_t NetworkArch::trainable_layer_count() const {
  std::size_t count = 0;
  for (const auto& l : layers) count += l.trainable() ? 1 : 0;
  return count;
}

namespace {

std::string layer_label(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

std::size_t window_out(std::size_t in, std::size_t kernel, std::size_t stride,
                       std::size_t pad, std::size_t i, const LayerSpec& l) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw ArchitectureError(layer_label(i, l) + ": kernel " + std::to_string(kernel) +
                            " exceeds padded input extent " + std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

}  // namespace

std::vector<Shape3> infer_shapes(const NetworkArch& arch) {
  if (arch.layers.empty()) throw ArchitectureError("architecture has no layers");
  if (arch.num_classes == 0) throw ArchitectureError("num_classes must be positive");
  if (arch.input_shape.flat() == 0) throw ArchitectureError("input shape has a zero dimension");

  std::vector<Shape3> shapes;
  Shape3 in = arch.input_shape;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    if (l.size == 0) throw ArchitectureError(layer_label(i, l) + ": size must be positive");
    Shape3 out;
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::AvgPool: {
        if (l.kernel == 0 || l.stride == 0) {
          throw ArchitectureError(layer_label(i, l) + ": kernel and stride must be >= 1");
        }
        if (l.kind == LayerKind::AvgPool && l.padding != 0) {
          throw ArchitectureError(layer_label(i, l) + ": pooling takes no padding");
        }
        if (l.kind == LayerKind::AvgPool && l.size != in.c) {
          throw ArchitectureError(layer_label(i, l) + ": pooling keeps " +
                                  std::to_string(in.c) + " channels, spec says " +
                                  std::to_string(l.size));
        }
        out.c = l.size;
        out.h = window_out(in.h, l.kernel, l.stride, l.padding, i, l);
        out.w = window_out(in.w, l.kernel, l.stride, l.padding, i, l);
        break;
      }
      case LayerKind::FullyConnected:
        if (l.kernel != 0 || l.stride != 0 || l.padding != 0) {
          throw ArchitectureError(layer_label(i, l) + ": fully connected layers take no kernel");
        }
        out = Shape3{l.size, 1, 1};
        break;
    }
    if (out.flat() == 0) {
      throw ArchitectureError(layer_label(i, l) + ": inferred a zero dimension");
    }
    shapes.push_back(out);
    in = out;
  }
  return shapes;
}

std::size_t BlockPlan::block_of(std::size_t layer) const {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (layer >= blocks[b].first && layer <= blocks[b].last) return b;
  }
  throw ContractViolation("layer " + std::to_string(layer) + " is not in any block");
}

BlockPlan partition_blocks(const NetworkArch& arch, std::size_t n, ClassifierMode mode) {
  const std::size_t trainable = arch.trainable_layer_count();
  if (n < 1 || n > trainable) {
    throw ConfigError("block length n=" + std::to_string(n) + " outside [1, " +
                      std::to_string(trainable) + "]");
  }
  BlockPlan plan;
  plan.classifier_mode = mode;
  plan.n = n;
  std::size_t first = 0;
  std::size_t in_block = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (arch.layers[i].trainable()) {
      if (in_block == n) {
        plan.blocks.push_back(Block{first, i - 1});
        first = i;
        in_block = 0;
      }
      ++in_block;
    }
  }
  plan.blocks.push_back(Block{first, arch.layers.size() - 1});
  for (const auto& b : plan.blocks) plan.classifier_at.push_back(b.last);
  return plan;
}

const Shape3& Network::input_shape_of(std::size_t layer) const {
  return layer == 0 ? arch.input_shape : shapes.at(layer - 1);
}

std::vector<std::size_t> Network::weight_shape(std::size_t layer) const {
  const LayerSpec& l = arch.layers.at(layer);
  switch (l.kind) {
    case LayerKind::Conv:
      return {l.size, input_shape_of(layer).c, l.kernel, l.kernel};
    case LayerKind::FullyConnected:
      return {l.size, in_size(layer)};
    case LayerKind::AvgPool:
      return {};
  }
  return {};
}

std::vector<std::size_t> Network::classifier_weight_shape(std::size_t block) const {
  return {arch.num_classes, classifier_in_size(block)};
}

Network build_network(const NetworkArch& arch, std::size_t n, ClassifierMode mode) {
  Network net;
  net.arch = arch;
  net.shapes = infer_shapes(arch);
  net.plan = partition_blocks(arch, n, mode);
  return net;
}

Real init_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<Real>(fan_in));
}

namespace {

Tensor uniform_tensor(const std::vector<std::size_t>& shape, std::size_t fan_in, Rng& rng) {
  Tensor t(shape);
  const Real b = init_bound(fan_in);
  for (auto& v : t.values()) v = rng.uniform(-b, b);
  return t;
}

std::size_t fan_in_of(const std::vector<std::size_t>& shape) {
  return Tensor::count(shape) / shape.at(0);
}

}  // namespace

ClassifierWeights attach_classifiers(const Network& net, std::uint64_t seed) {
  ClassifierWeights out;
  for (std::size_t b = 0; b < net.plan.size(); ++b) {
    Rng rng(derive_seed(seed, 0xc1a55ULL, b));
    const auto shape = net.classifier_weight_shape(b);
    out.weights.push_back(uniform_tensor(shape, fan_in_of(shape), rng));
    out.velocity.push_back(net.plan.classifier_mode == ClassifierMode::Trainable
                               ? Tensor(shape)
                               : Tensor());
  }
  return out;
}

WeightSet init_weights(const Network& net, std::uint64_t seed) {
  WeightSet ws;
  ws.classifier_mode = net.plan.classifier_mode;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto shape = net.weight_shape(l);
    if (shape.empty()) {
      ws.layers.emplace_back();
      ws.layer_velocity.emplace_back();
      continue;
    }
    Rng rng(derive_seed(seed, 0x1a7e5ULL, l));
    ws.layers.push_back(uniform_tensor(shape, fan_in_of(shape), rng));
    ws.layer_velocity.emplace_back(shape);
  }
  auto cls = attach_classifiers(net, seed);
  ws.classifiers = std::move(cls.weights);
  if (ws.classifier_mode == ClassifierMode::Trainable) {
    ws.classifier_velocity = std::move(cls.velocity);
  }
  return ws;
}

NetworkArch parse_arch(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("architecture JSON: ") + e.what(), e.byte);
  }
  NetworkArch arch;
  try {
    arch.name = j.value("name", std::string{});
    const auto in = j.at("input_shape").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw ArchitectureError("input_shape must be [channels, height, width]");
    arch.input_shape = Shape3{in[0], in[1], in[2]};
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.size = lj.at("size").get<std::size_t>();
      if (l.kind != LayerKind::FullyConnected) {
        l.kernel = lj.at("kernel").get<std::size_t>();
        l.stride = lj.at("stride").get<std::size_t>();
        l.padding = lj.value("padding", std::size_t{0});
      }
      arch.layers.push_back(l);
    }
    arch.num_classes = j.at("num_classes").get<std::size_t>();
    arch.time_steps = j.value("time_steps", std::size_t{0});
  } catch (const json::exception& e) {
    throw ArchitectureError(std::string("architecture JSON: ") + e.what());
  }
  infer_shapes(arch);
  return arch;
}

NetworkArch load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open architecture file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch(ss.str());
}

std::string arch_to_json(const NetworkArch& arch) {
  json j;
  if (!arch.name.empty()) j["name"] = arch.name;
  j["input_shape"] = {arch.input_shape.c, arch.input_shape.h, arch.input_shape.w};
  j["layers"] = json::array();
  for (const auto& l : arch.layers) {
    json lj{{"kind", to_string(l.kind)}, {"size", l.size}};
    if (l.kind != LayerKind::FullyConnected) {
      lj["kernel"] = l.kernel;
      lj["stride"] = l.stride;
      if (l.padding) lj["padding"] = l.padding;
    }
    j["layers"].push_back(lj);
  }
  j["num_classes"] = arch.num_classes;
  if (arch.time_steps) j["time_steps"] = arch.time_steps;
  return j.dump(2);
}

}  // namespace ttlbp
