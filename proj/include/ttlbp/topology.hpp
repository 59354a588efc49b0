#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ttlbp/tensor.hpp"

namespace ttlbp {

enum class LayerKind { Conv, AvgPool, FullyConnected };
enum class ClassifierMode { Trainable, FrozenRandom };

std::string to_string(LayerKind kind);
std::string to_string(ClassifierMode mode);
LayerKind layer_kind_from_string(const std::string& s);
ClassifierMode classifier_mode_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  std::size_t size = 0;  // output channels (Conv/AvgPool) or neurons (FC)
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t padding = 0;  // Conv only; zero padding on each border

  bool trainable() const noexcept { return kind != LayerKind::AvgPool; }
  bool operator==(const LayerSpec&) const = default;
};

struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t flat() const noexcept { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

struct NetworkArch {
  std::string name;
  Shape3 input_shape;
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;
  std::size_t time_steps = 0;  // suggested T; 0 when the file gives none

  std::size_t trainable_layer_count() const;
};

// Per-layer output shapes. Conv/AvgPool spatial output is
// floor((in + 2*pad - kernel)/stride) + 1; FC collapses to [neurons x 1 x 1].
std::vector<Shape3> infer_shapes(const NetworkArch& arch);

// Contiguous layer ranges [first, last] trained by one local classifier.
struct Block {
  std::size_t first = 0;
  std::size_t last = 0;
  bool operator==(const Block&) const = default;
};

struct BlockPlan {
  std::vector<Block> blocks;
  std::vector<std::size_t> classifier_at;  // == blocks[b].last
  ClassifierMode classifier_mode = ClassifierMode::Trainable;
  std::size_t n = 0;

  std::size_t block_of(std::size_t layer) const;
  std::size_t size() const noexcept { return blocks.size(); }
};

// Groups layers into blocks of `n` trainable (Conv/FC) layers. Pooling layers
// join the block of the preceding trainable layer; the last block takes any
// remainder.
BlockPlan partition_blocks(const NetworkArch& arch, std::size_t n,
                           ClassifierMode mode = ClassifierMode::Trainable);

// Architecture plus derived shapes and block plan; what the engine and the
// cost model consume.
struct Network {
  NetworkArch arch;
  std::vector<Shape3> shapes;
  BlockPlan plan;

  std::size_t num_layers() const noexcept { return arch.layers.size(); }
  const Shape3& input_shape_of(std::size_t layer) const;
  std::size_t in_size(std::size_t layer) const { return input_shape_of(layer).flat(); }
  std::size_t out_size(std::size_t layer) const { return shapes.at(layer).flat(); }
  std::size_t classifier_in_size(std::size_t block) const {
    return out_size(plan.classifier_at.at(block));
  }
  std::size_t num_classes() const noexcept { return arch.num_classes; }
  // Shape of the weight tensor of `layer`; empty for pooling layers.
  std::vector<std::size_t> weight_shape(std::size_t layer) const;
  std::vector<std::size_t> classifier_weight_shape(std::size_t block) const;
};

Network build_network(const NetworkArch& arch, std::size_t n,
                      ClassifierMode mode = ClassifierMode::Trainable);

struct WeightSet {
  std::vector<Tensor> layers;       // empty tensor for AvgPool layers
  std::vector<Tensor> classifiers;  // one per block
  std::vector<Tensor> layer_velocity;
  std::vector<Tensor> classifier_velocity;  // empty when classifiers are frozen
  ClassifierMode classifier_mode = ClassifierMode::Trainable;

  bool operator==(const WeightSet&) const = default;
};

struct ClassifierWeights {
  std::vector<Tensor> weights;
  std::vector<Tensor> velocity;
};

// Half-width of the fan-in scaled uniform initialization.
Real init_bound(std::size_t fan_in);

// One fully connected LIF readout of N_c neurons per block, reading the
// flattened spikes of the block's last layer.
ClassifierWeights attach_classifiers(const Network& net, std::uint64_t seed);

WeightSet init_weights(const Network& net, std::uint64_t seed);

NetworkArch load_arch(const std::filesystem::path& path);
NetworkArch parse_arch(const std::string& json_text);
std::string arch_to_json(const NetworkArch& arch);

}  // namespace ttlbp
