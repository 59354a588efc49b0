#pragma once

// Test oracles for the backward pass.
//
// oracle_bptt_grad differentiates the unrolled network in forward mode: for
// each weight it pushes a tangent through every step and every layer of the
// recorded graph and reads off dL/dw at the classifiers. It shares no code
// with the reverse recursion in the engine, and builds its own dense matrices
// for the layer maps.
//
// reference_bptt_* is a plain full-window, single-loss BPTT trainer written
// against the shared layer kernels; it is the baseline TT-LBP must reduce to.

#include <cstdint>
#include <span>
#include <vector>

#include "ttlbp/engine.hpp"

namespace ttlbp {

struct OracleLimits {
  std::size_t max_layers = 3;
  std::size_t max_steps = 6;
  std::size_t max_neurons = 64;
  std::size_t max_batch = 4;
};

// Throws ConfigError naming the violated bound.
void check_oracle_size(const Network& net, std::size_t T, std::size_t batch,
                       const OracleLimits& limits = {});

// One gradient set per truncation interval, with the same state carry-over,
// dropout masks, truncation and block-isolation rules as interval_gradients.
std::vector<GradSet> oracle_bptt_grad(const BatchInput& input,
                                      std::span<const std::size_t> labels,
                                      const WeightSet& weights, const Network& net,
                                      const TrainConfig& config, std::uint64_t batch_seed,
                                      const OracleLimits& limits = {});

// Full-window BPTT gradient of the output classifier's loss. `net` must be a
// single-block network (n = all trainable layers).
GradSet reference_bptt_gradients(const BatchInput& input, std::span<const std::size_t> labels,
                                 const WeightSet& weights, const Network& net,
                                 const TrainConfig& config, std::uint64_t batch_seed);

// One BPTT update; returns the output loss.
Real reference_bptt_train_batch(const BatchInput& input, std::span<const std::size_t> labels,
                                WeightSet& weights, const Network& net,
                                const TrainConfig& config, std::uint64_t batch_seed,
                                Real learning_rate);

}  // namespace ttlbp
