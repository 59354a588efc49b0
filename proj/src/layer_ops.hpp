#pragma once

// Per-sample linear maps between layers (conv, average pool, dense) and their
// transposes. Shared by the TT-LBP engine and the reference BPTT trainer so
// that both paths perform identical floating-point operations.

#include <cstdint>
#include <span>

#include "ttlbp/topology.hpp"

namespace ttlbp::detail {

struct LinearMap {
  LayerKind kind;
  Shape3 in;
  Shape3 out;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static LinearMap for_layer(const Network& net, std::size_t layer);
  static LinearMap for_classifier(const Network& net, std::size_t block);
};

// out = A x. Returns the number of additions an event-driven implementation
// performs, i.e. the count of nonzero input taps.
std::uint64_t forward(const LinearMap& m, std::span<const Real> weights,
                      std::span<const Real> x, std::span<Real> out);

// back = A^T g (overwrites `back`).
void transpose(const LinearMap& m, std::span<const Real> weights,
               std::span<const Real> g, std::span<Real> back);

// dW += g (outer) x, following A's sparsity pattern. No-op for pooling.
void accumulate_weight_grad(const LinearMap& m, std::span<const Real> g,
                            std::span<const Real> x, std::span<Real> dW);

}  // namespace ttlbp::detail
