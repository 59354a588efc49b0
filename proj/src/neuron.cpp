#include "ttlbp/neuron.hpp"

#include "ttlbp/error.hpp"

namespace ttlbp {

void LifParams::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("LIF leak tau must lie in [0, 1], got " + std::to_string(tau));
  }
  if (!(a > 0.0)) {
    throw ConfigError("surrogate width a must be positive, got " + std::to_string(a));
  }
  if (!(u_th > 0.0)) {
    throw ConfigError("threshold u_th must be positive, got " + std::to_string(u_th));
  }
}

LayerState reset_state(const std::vector<std::size_t>& shape) {
  return LayerState{Tensor(shape), Tensor(shape)};
}

void lif_step_inplace(std::span<Real> u, std::span<Real> s,
                      std::span<const Real> synaptic_input, const LifParams& p) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Real v = p.tau * u[i] + synaptic_input[i] - p.theta * s[i];
    u[i] = v;
    s[i] = v > p.u_th ? 1.0 : 0.0;
  }
}

LayerState lif_step(const LayerState& prev, const Tensor& synaptic_input,
                    const LifParams& params, const std::string& layer) {
  if (!prev.u.same_shape(prev.s) || !prev.u.same_shape(synaptic_input)) {
    throw ShapeError(layer + ": state " + shape_to_string(prev.u.shape()) +
                     ", spikes " + shape_to_string(prev.s.shape()) +
                     " and synaptic input " +
                     shape_to_string(synaptic_input.shape()) + " must match");
  }
  LayerState next = prev;
  lif_step_inplace(next.u.values(), next.s.values(), synaptic_input.values(), params);
  return next;
}

Tensor surrogate_grad(const Tensor& u, const LifParams& params) {
  if (!(params.a > 0.0)) {
    throw ConfigError("surrogate width a must be positive");
  }
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = surrogate_grad(u[i], params);
  return out;
}

}  // namespace ttlbp
