#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ttlbp/neuron.hpp"
#include "ttlbp/tensor.hpp"
#include "ttlbp/topology.hpp"

namespace ttlbp {

struct LrDecay {
  Real factor = 0.5;
  std::size_t every_epochs = 20;
};

struct TrainConfig {
  std::size_t k = 1;  // truncation interval length, in steps
  std::size_t n = 1;  // trainable layers per local block
  std::size_t T = 1;  // time steps per sample
  std::size_t batch_size = 32;
  Real learning_rate = 0.1;
  Real momentum = 0.9;
  Real dropout_rate = 0.0;
  LrDecay lr_decay;
  LifParams lif;
  ClassifierMode classifier_mode = ClassifierMode::Trainable;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // worker threads for the per-sample phases

  void validate(const NetworkArch& arch) const;
  std::size_t num_intervals() const { return (T + k - 1) / k; }
};

// Layer-0 input for a batch: either one frame repeated at every step (direct
// encoding of static images) or one frame per step (converted event streams).
// Frames are [batch x input features].
class BatchInput {
 public:
  static BatchInput direct(Tensor frame);
  static BatchInput sequence(std::vector<Tensor> frames);

  const Tensor& at(std::size_t t) const;
  std::size_t batch() const;
  std::size_t feature_size() const;
  // Number of distinct frames; 0 for direct encoding.
  std::size_t steps() const { return is_static_ ? 0 : frames_.size(); }

 private:
  std::vector<Tensor> frames_;
  bool is_static_ = true;
};

// Neuron states of the whole network for one batch.
struct NetworkState {
  std::vector<LayerState> layers;
  std::vector<LayerState> classifiers;  // one per block

  static NetworkState reset(const Network& net, std::size_t batch);
  bool operator==(const NetworkState&) const = default;
};

// Forward record of one truncation interval; steps[j] holds the states after
// global step t_begin + j.
struct IntervalHistory {
  std::size_t t_begin = 0;
  std::vector<NetworkState> steps;
};

// Multiplicative dropout masks, [batch x neurons] per layer, held fixed over
// one interval. Empty tensors mean "no dropout" (pooling layers, rate 0).
struct DropoutMasks {
  std::vector<Tensor> layers;

  bool active(std::size_t layer) const {
    return layer < layers.size() && !layers[layer].empty();
  }
};

DropoutMasks make_dropout_masks(const Network& net, Real rate, std::uint64_t seed,
                                std::size_t batch);

// Seed of the dropout masks of interval `interval` within a batch.
std::uint64_t interval_mask_seed(std::uint64_t batch_seed, std::size_t interval);

struct GradSet {
  std::vector<Tensor> layers;
  std::vector<Tensor> classifiers;

  static GradSet zeros_like(const WeightSet& w);
  void add(const GradSet& other);
  bool operator==(const GradSet&) const = default;
};

// Event counters gathered while simulating; feed the cost model's sparsity
// inputs and its addition-count cross-check.
struct OpCounters {
  std::vector<std::uint64_t> layer_adds;       // nonzero synaptic taps per layer
  std::vector<std::uint64_t> classifier_adds;  // per block
  std::vector<std::uint64_t> layer_input_nonzero;
  std::vector<std::uint64_t> layer_input_total;
  std::vector<std::uint64_t> classifier_input_nonzero;
  std::vector<std::uint64_t> classifier_input_total;

  static OpCounters for_network(const Network& net);
  void add(const OpCounters& other);
  // Fraction of nonzero inputs seen by each layer / classifier.
  std::vector<Real> layer_input_density() const;
  std::vector<Real> classifier_input_density() const;
};

// Advances every layer and every block classifier one LIF step for samples
// [first, last) and returns the new states in place. Layer 0 receives the real
// valued frame directly; deeper layers and classifiers see the dropout-masked
// spikes of the layer below.
void forward_step(NetworkState& state, const WeightSet& weights, const Tensor& input_t,
                  const Network& net, const DropoutMasks& masks, const LifParams& lif,
                  std::size_t first, std::size_t last, OpCounters* counters = nullptr);

// Convenience overload over the whole batch.
void forward_step(NetworkState& state, const WeightSet& weights, const Tensor& input_t,
                  const Network& net, const DropoutMasks& masks, const LifParams& lif,
                  OpCounters* counters = nullptr);

// Rate-coded MSE between a one-hot target and each classifier neuron's firing
// rate over the interval, averaged over the batch. `spikes` holds one
// [batch x N_c] tensor per step.
Real compute_loss(std::span<const Tensor> spikes, std::span<const std::size_t> labels);
Real sample_loss(std::span<const Tensor> spikes, std::size_t sample, std::size_t label);

// dL/ds_c(t) for the batch-mean loss; identical for every t of the interval.
Tensor classifier_seed_error(std::span<const Tensor> spikes,
                             std::span<const std::size_t> labels);

// Test-only switches that deliberately break the backward pass so gradient
// checks can prove they detect errors.
struct BackwardFault {
  bool drop_temporal_potential_term = false;
};

// Reverse pass over one interval: iterates the steps from the interval end
// back to its start and the layers of each block from top to bottom, and
// accumulates weight gradients into `grads`. Potential errors start at zero
// after the interval end and never cross a block boundary.
void backward_interval(const IntervalHistory& history, const BatchInput& input,
                       const WeightSet& weights, const Network& net,
                       const DropoutMasks& masks, const LifParams& lif,
                       std::span<const Tensor> classifier_seeds, GradSet& grads,
                       std::size_t threads = 1, BackwardFault fault = {});

// Heavy-ball update: v <- m v + g, w <- w - lr v. Frozen classifiers are skipped.
void sgd_momentum_step(WeightSet& weights, const GradSet& grads, Real lr, Real momentum);

Real lr_schedule(std::size_t epoch, Real lr0, const LrDecay& decay = {});

struct BatchResult {
  std::vector<Real> block_loss;  // mean over intervals of the batch-mean loss
  std::vector<std::size_t> predictions;
  std::size_t correct = 0;
  std::size_t updates = 0;
  OpCounters counters;
};

// One batch of the interval-wise TT-LBP algorithm. States are reset at entry
// and carried across intervals; weights update once per interval.
BatchResult train_batch(const BatchInput& input, std::span<const std::size_t> labels,
                        WeightSet& weights, const Network& net, const TrainConfig& config,
                        std::uint64_t batch_seed, Real learning_rate);

// Same forward and backward schedule as train_batch but without weight
// updates; returns one gradient set per interval.
std::vector<GradSet> interval_gradients(const BatchInput& input,
                                        std::span<const std::size_t> labels,
                                        const WeightSet& weights, const Network& net,
                                        const TrainConfig& config, std::uint64_t batch_seed,
                                        BackwardFault fault = {},
                                        std::span<const std::size_t> zeroed_blocks = {});

// Output-classifier spike counts over `steps` with no dropout; argmax with
// ties broken by summed membrane potential, then by the lower class index.
std::vector<std::size_t> predict(const BatchInput& input, const WeightSet& weights,
                                 const Network& net, const LifParams& lif, std::size_t steps,
                                 std::size_t threads = 1);

}  // namespace ttlbp
