#pragma once

// Elementwise pieces of the spike-error / potential-error recursion shared by
// the TT-LBP engine and the reference BPTT path.

#include <span>

#include "ttlbp/engine.hpp"
#include "ttlbp/neuron.hpp"

namespace ttlbp::detail {

// delta = spatial + (-theta) * gamma_next
// gamma = delta * surrogate(u) + tau * gamma_next
inline void potential_error(std::span<const Real> spatial, std::span<const Real> gamma_next,
                            std::span<const Real> u, const LifParams& lif,
                            std::span<Real> gamma, const BackwardFault& fault) {
  const Real neg_theta = -lif.theta;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const Real delta = spatial[i] + neg_theta * gamma_next[i];
    const Real temporal = fault.drop_temporal_potential_term ? 0.0 : lif.tau * gamma_next[i];
    gamma[i] = delta * surrogate_grad(u[i], lif) + temporal;
  }
}

// In-place dropout gating of a spike error: back *= mask.
inline void apply_mask(std::span<Real> back, const DropoutMasks& masks, std::size_t layer,
                       std::size_t sample) {
  if (!masks.active(layer)) return;
  const auto m = masks.layers[layer].row(sample);
  for (std::size_t i = 0; i < back.size(); ++i) back[i] *= m[i];
}

// Spikes of `layer` as seen by the next layer: masked copy into `buf`, or the
// raw row when the layer has no dropout.
inline std::span<const Real> masked_spikes(const NetworkState& st, const DropoutMasks& masks,
                                           std::size_t layer, std::size_t sample,
                                           std::vector<Real>& buf) {
  const auto s = st.layers[layer].s.row(sample);
  if (!masks.active(layer)) return s;
  const auto m = masks.layers[layer].row(sample);
  buf.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) buf[i] = s[i] * m[i];
  return buf;
}

}  // namespace ttlbp::detail
