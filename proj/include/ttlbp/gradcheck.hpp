#pragma once

// Gradient checking drivers shared by the CLI and the test suites: the
// engine's interval gradients against the forward-mode oracle over a (k, n)
// grid, and the classifier seed error against central differences of the
// loss.

#include <cstdint>
#include <string>
#include <vector>

#include "ttlbp/oracle.hpp"

namespace ttlbp {

// Small nets inside the oracle limits: three FC layers; Conv -> AvgPool -> FC;
// two padded, strided convs and an FC.
std::vector<NetworkArch> gradcheck_toy_archs();

// init_weights scaled by `gain` and shifted by +0.05, so toy nets spike and
// their potentials visit the surrogate window.
WeightSet gradcheck_weights(const Network& net, std::uint64_t seed, Real gain);

// Seeded uniform [0, 1) frame per step.
BatchInput gradcheck_input(std::size_t T, std::size_t batch, std::size_t features,
                           std::uint64_t seed);

struct GradcheckOptions {
  std::size_t T = 4;
  std::size_t batch = 4;
  // Empty lists mean {1, 2, T} and {1, 2, all}.
  std::vector<std::size_t> ks;
  std::vector<std::size_t> ns;
  Real dropout_rate = 0.0;
  Real gain = 1.0;
  LifParams lif{0.9, 0.5, 0.5, 2.0};
  std::uint64_t seed = 2;
  Real tolerance = 1e-8;
  BackwardFault fault;
};

struct GradcheckCase {
  std::string arch;
  std::size_t k = 0;
  std::size_t n = 0;
  Real max_rel_error = 0.0;
  std::string worst;          // location of the largest error
  std::string first_failure;  // earliest (interval, tensor) above tolerance, if any
  std::size_t nonzero = 0;    // oracle entries that are not exactly zero
  std::size_t total = 0;
  bool passed = false;
};

// One case per distinct (k, n) after clamping n to the trainable layer count.
std::vector<GradcheckCase> run_gradcheck(const NetworkArch& arch, const GradcheckOptions& opt);

struct SeedCheck {
  std::size_t instances = 0;
  Real max_rel_error = 0.0;
};

// classifier_seed_error against central differences of the loss in every
// spike entry, over random (N_c, K, batch, spikes, labels) instances.
SeedCheck seed_finite_difference_check(std::size_t instances, std::uint64_t seed,
                                       Real step = 1e-6);

}  // namespace ttlbp
