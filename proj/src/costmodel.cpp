#include "ttlbp/costmodel.hpp"

#include <algorithm>

#include "ttlbp/error.hpp"

namespace ttlbp {

void CostInputs::validate() const {
  if (T < 1) throw ConfigError("T must be at least 1");
  if (k < 1 || k > T) {
    throw ConfigError("truncation length k=" + std::to_string(k) + " outside [1, T=" +
                      std::to_string(T) + "]");
  }
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (alpha.size() != net.num_layers() || alpha_c.size() != net.plan.size()) {
    throw ConfigError("need one input density per layer and per classifier");
  }
  auto in_unit = [](Real a) { return a >= 0.0 && a <= 1.0; };
  if (!std::ranges::all_of(alpha, in_unit) || !std::ranges::all_of(alpha_c, in_unit)) {
    throw DataError("input densities must lie in [0, 1]");
  }
  if (workspace < 0.0) throw ConfigError("workspace constant must be non-negative");
}

CostInputs uniform_sparsity(const Network& net, std::size_t k, std::size_t T,
                            std::size_t batch_size, Real alpha) {
  CostInputs in;
  in.net = net;
  in.k = k;
  in.T = T;
  in.batch_size = batch_size;
  in.alpha.assign(net.num_layers(), alpha);
  in.alpha_c.assign(net.plan.size(), alpha);
  in.validate();
  return in;
}

CostInputs measured_sparsity(const Network& net, std::size_t k, std::size_t T,
                             std::size_t batch_size, const OpCounters& counters) {
  CostInputs in = uniform_sparsity(net, k, T, batch_size, 1.0);
  const auto a = counters.layer_input_density();
  const auto ac = counters.classifier_input_density();
  if (a.size() != in.alpha.size() || ac.size() != in.alpha_c.size()) {
    throw ConfigError("counters were gathered on a different network");
  }
  in.alpha = a;
  in.alpha_c = ac;
  in.validate();
  return in;
}

namespace {

Real neurons(const CostInputs& in, std::size_t layer) {
  return static_cast<Real>(in.batch_size) * static_cast<Real>(in.net.out_size(layer));
}

Real weights_of(const Network& net, std::size_t layer) {
  const auto shape = net.weight_shape(layer);
  return shape.empty() ? 0.0 : static_cast<Real>(Tensor::count(shape));
}

bool frozen(const CostInputs& in) {
  return in.net.plan.classifier_mode == ClassifierMode::FrozenRandom;
}

// |W_c| as seen by the traffic and addition models: frozen classifiers are
// regenerated on chip and never touch memory.
Real classifier_weight_traffic(const CostInputs& in, std::size_t block) {
  return frozen(in) ? 0.0 : static_cast<Real>(Tensor::count(in.net.classifier_weight_shape(block)));
}

Real classifier_neurons(const CostInputs& in) {
  return static_cast<Real>(in.batch_size) * static_cast<Real>(in.net.num_classes());
}

}  // namespace

Real weight_count(const Network& net) {
  Real total = 0.0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) total += weights_of(net, l);
  for (std::size_t b = 0; b < net.plan.size(); ++b) {
    total += static_cast<Real>(Tensor::count(net.classifier_weight_shape(b)));
  }
  return total;
}

Real synaptic_ops(const Network& net, std::size_t layer, std::size_t batch_size) {
  const LayerSpec& spec = net.arch.layers.at(layer);
  const Real w = weights_of(net, layer);
  const Real u = static_cast<Real>(batch_size) * static_cast<Real>(net.out_size(layer));
  switch (spec.kind) {
    case LayerKind::Conv:
      return w * u / static_cast<Real>(net.shapes[layer].c);
    case LayerKind::FullyConnected:
      return w * u / static_cast<Real>(net.out_size(layer));
    case LayerKind::AvgPool:
      return 0.0;
  }
  return 0.0;
}

Real graph_cost_per_step(const CostInputs& in) {
  in.validate();
  Real units = 0.0;
  for (std::size_t l = 0; l < in.net.num_layers(); ++l) units += neurons(in, l);
  units += static_cast<Real>(in.net.plan.size()) * classifier_neurons(in);
  return units * in.conventions.graph.per_neuron();
}

Real local_graph_cost(const CostInputs& in) {
  in.validate();
  Real largest = 0.0;
  for (const Block& b : in.net.plan.blocks) {
    Real units = classifier_neurons(in);
    for (std::size_t l = b.first; l <= b.last; ++l) units += neurons(in, l);
    largest = std::max(largest, units);
  }
  return largest * in.conventions.graph.per_neuron();
}

Real memory_cost(const CostInputs& in, MemoryMode mode) {
  const Real graph = graph_cost_per_step(in);
  const Real k = static_cast<Real>(in.k);
  const Real fixed = weight_count(in.net) + in.workspace;
  if (mode == MemoryMode::BPTT) return k * graph + fixed;
  return (k - 1.0) * graph + local_graph_cost(in) + fixed;
}

AccessCounts mem_access_forward(const CostInputs& in) {
  in.validate();
  AccessCounts c;
  for (std::size_t bi = 0; bi < in.net.plan.size(); ++bi) {
    const Block& b = in.net.plan.blocks[bi];
    for (std::size_t l = b.first; l <= b.last; ++l) {
      c.reads += weights_of(in.net, l) + neurons(in, l);
      c.writes += neurons(in, l);
    }
    c.reads += classifier_weight_traffic(in, bi) + classifier_neurons(in);
    c.writes += classifier_neurons(in);
  }
  return c;
}

AccessCounts mem_access_backward(const CostInputs& in, BackwardPosition position) {
  in.validate();
  AccessCounts c;
  for (std::size_t bi = 0; bi < in.net.plan.size(); ++bi) {
    const Block& b = in.net.plan.blocks[bi];
    const Real wc = classifier_weight_traffic(in, bi);
    const Real uc = classifier_neurons(in);
    for (std::size_t l = b.first; l <= b.last; ++l) {
      const Real w = weights_of(in.net, l);
      const Real u = neurons(in, l);
      const Real w_above = l < b.last ? weights_of(in.net, l + 1) : 0.0;
      if (position == BackwardPosition::Mid) {
        c.reads += w + 2.0 * u + w_above;
      } else if (l < b.last) {
        c.reads += w_above + u;
      }
      c.writes += w + u;
    }
    c.reads += position == BackwardPosition::Mid ? 2.0 * wc + 3.0 * uc : wc;
    c.writes += wc + uc;
  }
  return c;
}

OpCounts additions(const CostInputs& in) {
  in.validate();
  OpCounts c;
  const Real nb = static_cast<Real>(in.batch_size);
  const Real nc = static_cast<Real>(in.net.num_classes());
  for (std::size_t bi = 0; bi < in.net.plan.size(); ++bi) {
    const Block& b = in.net.plan.blocks[bi];
    for (std::size_t l = b.first; l <= b.last; ++l) {
      c.forward += in.alpha[l] * synaptic_ops(in.net, l, in.batch_size);
      c.backward += 2.0 * neurons(in, l) + nb * in.alpha[l] * weights_of(in.net, l);
    }
    const Real wc = static_cast<Real>(Tensor::count(in.net.classifier_weight_shape(bi)));
    const Real uc = classifier_neurons(in);
    c.forward += in.alpha_c[bi] * wc * uc / nc;
    c.backward += 2.0 * uc + nb * in.alpha_c[bi] * classifier_weight_traffic(in, bi);
  }
  return c;
}

Real macs(const CostInputs& in) {
  in.validate();
  Real total = 0.0;
  const Real nc = static_cast<Real>(in.net.num_classes());
  for (std::size_t bi = 0; bi < in.net.plan.size(); ++bi) {
    const Block& b = in.net.plan.blocks[bi];
    for (std::size_t l = b.first + 1; l <= b.last; ++l) {
      total += synaptic_ops(in.net, l, in.batch_size);
    }
    const Real wc = static_cast<Real>(Tensor::count(in.net.classifier_weight_shape(bi)));
    total += wc * classifier_neurons(in) / nc;
  }
  return total;
}

CostReport estimate(const CostInputs& in) {
  in.validate();
  const bool local = in.net.plan.size() > 1;
  CostReport r;
  r.mode = local ? "local" : "bptt";
  r.memory_cost = memory_cost(in, local ? MemoryMode::Local : MemoryMode::BPTT);

  const AccessCounts fwd = mem_access_forward(in);
  const AccessCounts mid = mem_access_backward(in, BackwardPosition::Mid);
  const AccessCounts end =
      local || in.conventions.end_reduction_for_single_block
          ? mem_access_backward(in, BackwardPosition::IntervalEnd)
          : mid;
  r.reads_forward = fwd.reads;
  r.writes_forward = fwd.writes;
  r.reads_backward_mid = mid.reads;
  r.writes_backward_mid = mid.writes;
  r.reads_backward_end = end.reads;
  r.writes_backward_end = end.writes;

  const OpCounts adds = additions(in);
  r.additions_forward = adds.forward;
  r.additions_backward = adds.backward;
  r.macs_backward = macs(in);

  for (std::size_t t0 = 0; t0 < in.T; t0 += in.k) {
    const Real steps = static_cast<Real>(std::min(in.k, in.T - t0));
    r.total_reads += steps * fwd.reads + (steps - 1.0) * mid.reads + end.reads;
    r.total_writes += steps * fwd.writes + (steps - 1.0) * mid.writes + end.writes;
  }
  const Real T = static_cast<Real>(in.T);
  r.total_additions = T * (adds.forward + adds.backward);
  r.total_macs = T * r.macs_backward;
  return r;
}

NormalizedCosts normalize(const CostReport& r, const CostReport& baseline) {
  auto ratio = [](Real a, Real b) {
    if (b == 0.0) throw ContractViolation("baseline cost is zero; cannot normalize");
    return a / b;
  };
  return {ratio(r.memory_cost, baseline.memory_cost),
          ratio(r.total_mem_access(), baseline.total_mem_access()),
          ratio(r.total_additions, baseline.total_additions),
          ratio(r.total_macs, baseline.total_macs)};
}

Real fom(Real accuracy_loss, const NormalizedCosts& c) {
  return accuracy_loss + 0.25 * (c.memory + c.mem_access + c.additions + c.macs);
}

}  // namespace ttlbp
