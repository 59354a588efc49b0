#pragma once

#include <string>
#include <vector>

#include "ttlbp/tensor.hpp"

namespace ttlbp {

// Leaky integrate-and-fire parameters, all in potential units except `tau`
// which is the per-step multiplicative leak.
struct LifParams {
  Real tau = 0.9;
  Real u_th = 0.5;
  Real theta = 0.5;  // soft-reset amount; defaults to u_th
  Real a = 0.5;      // surrogate window width

  // Throws ConfigError when any invariant fails.
  void validate() const;
};

// Membrane potentials and spikes for one layer, [batch x neurons].
struct LayerState {
  Tensor u;
  Tensor s;

  bool operator==(const LayerState&) const = default;
};

LayerState reset_state(const std::vector<std::size_t>& shape);

// u' = tau*u + input - theta*s (previous step's spike), s' = [u' > u_th].
// `layer` names the caller's layer in shape errors.
LayerState lif_step(const LayerState& prev, const Tensor& synaptic_input,
                    const LifParams& params, const std::string& layer = "layer");

// In-place variant used by the engine hot loop; same arithmetic as lif_step.
void lif_step_inplace(std::span<Real> u, std::span<Real> s,
                      std::span<const Real> synaptic_input, const LifParams& params);

// Rectangular pseudo-derivative of the spike function: 1/a inside the open
// window |u - u_th| < a/2, zero elsewhere.
Tensor surrogate_grad(const Tensor& u, const LifParams& params);

inline Real surrogate_grad(Real u, const LifParams& p) {
  const Real d = u - p.u_th;
  return (d < 0 ? -d : d) < 0.5 * p.a ? 1.0 / p.a : 0.0;
}

}  // namespace ttlbp
