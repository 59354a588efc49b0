#pragma once

// Analytical cost of one training batch iteration: graph memory, external
// memory traffic, additions, MACs, and the figure of merit that combines them.
//
// Units: memory_cost counts tensor elements; traffic counts element
// transfers; op counts are per element. All counts are returned as doubles
// because the larger architectures exceed 2^32 per step.

#include <string>
#include <vector>

#include "ttlbp/engine.hpp"
#include "ttlbp/topology.hpp"

namespace ttlbp {

// Element-sets kept per layer per step in the computational graph.
struct GraphConvention {
  Real states = 2.0;         // u, s
  Real intermediates = 2.0;  // synaptic input, pre-threshold potential
  Real gradients = 1.0;      // potential error
  Real per_neuron() const { return states + intermediates + gradients; }
};

struct CostConventions {
  GraphConvention graph;
  // Apply the reduced interval-end read count to single-block (plain BP)
  // plans too. Off by default: the reduction models a block top that need
  // not fetch upper-layer errors, which only local blocks have.
  bool end_reduction_for_single_block = false;
};

struct CostInputs {
  Network net;
  std::size_t k = 1;
  std::size_t T = 1;
  std::size_t batch_size = 1;
  std::vector<Real> alpha;    // input density of each layer, [0,1]
  std::vector<Real> alpha_c;  // input density of each block classifier
  Real workspace = 0.0;       // C
  CostConventions conventions;

  // Throws ConfigError for k outside [1, T], DataError for densities outside [0,1].
  void validate() const;
};

// Same density everywhere.
CostInputs uniform_sparsity(const Network& net, std::size_t k, std::size_t T,
                            std::size_t batch_size, Real alpha);

// Densities harvested from an instrumented run.
CostInputs measured_sparsity(const Network& net, std::size_t k, std::size_t T,
                             std::size_t batch_size, const OpCounters& counters);

enum class MemoryMode { BPTT, Local };
enum class BackwardPosition { Mid, IntervalEnd };

struct AccessCounts {
  Real reads = 0.0;
  Real writes = 0.0;
};

struct OpCounts {
  Real forward = 0.0;
  Real backward = 0.0;
};

// Per-step graph size over all layers and classifiers.
Real graph_cost_per_step(const CostInputs& in);
// Graph of the largest block (layers plus its classifier).
Real local_graph_cost(const CostInputs& in);
// Element count of every weight tensor, classifiers included.
Real weight_count(const Network& net);

Real memory_cost(const CostInputs& in, MemoryMode mode);

// Per time step, summed over blocks.
AccessCounts mem_access_forward(const CostInputs& in);
AccessCounts mem_access_backward(const CostInputs& in, BackwardPosition position);

// Per time step.
OpCounts additions(const CostInputs& in);
Real macs(const CostInputs& in);

// Synaptic operation count M of one layer: |W||U|/C_o for Conv, |W||U|/N for
// FC, 0 for pooling.
Real synaptic_ops(const Network& net, std::size_t layer, std::size_t batch_size);

struct CostReport {
  std::string mode;  // "bptt" or "local"
  Real memory_cost = 0.0;
  Real reads_forward = 0.0;
  Real writes_forward = 0.0;
  Real reads_backward_mid = 0.0;
  Real writes_backward_mid = 0.0;
  Real reads_backward_end = 0.0;
  Real writes_backward_end = 0.0;
  Real additions_forward = 0.0;
  Real additions_backward = 0.0;
  Real macs_backward = 0.0;
  // Per batch iteration (all ceil(T/k) intervals).
  Real total_reads = 0.0;
  Real total_writes = 0.0;
  Real total_additions = 0.0;
  Real total_macs = 0.0;

  Real total_mem_access() const { return total_reads + total_writes; }
};

// Local mode whenever the plan has more than one block.
CostReport estimate(const CostInputs& in);

struct NormalizedCosts {
  Real memory = 1.0;
  Real mem_access = 1.0;
  Real additions = 1.0;
  Real macs = 1.0;
};

NormalizedCosts normalize(const CostReport& r, const CostReport& baseline);

// accuracy_loss + (MC + MA + ADD + MAC) / 4; smaller is better.
Real fom(Real accuracy_loss, const NormalizedCosts& c);

}  // namespace ttlbp
