#include <cmath>

#include "doctest.h"
#include "toy.hpp"
#include "ttlbp/costmodel.hpp"
#include "ttlbp/error.hpp"

using namespace ttlbp;

namespace {

// Single FC layer 4 -> 2 with two classes, so the classifier is 2 -> 2.
Network fc_4_2(ClassifierMode mode = ClassifierMode::Trainable) {
  NetworkArch a;
  a.input_shape = {4, 1, 1};
  a.layers = {{LayerKind::FullyConnected, 2, 0, 0, 0}};
  a.num_classes = 2;
  return build_network(a, 1, mode);
}

Network arch_net(const char* file, std::size_t n,
                 ClassifierMode mode = ClassifierMode::Trainable) {
  return build_network(load_arch(std::string(TTLBP_SOURCE_DIR "/archs/") + file), n, mode);
}

}  // namespace

TEST_CASE("mem_access_forward: FC 4->2 by hand") {
  const auto in = uniform_sparsity(fc_4_2(), 1, 1, 1, 1.0);
  const auto c = mem_access_forward(in);
  CHECK(c.reads == 16.0);  // (8 + 2) + (4 + 2)
  CHECK(c.writes == 4.0);
}

TEST_CASE("mem_access_backward: two-layer block by hand") {
  // FC 3 -> 4 -> 2, two classes, N_b = 1, one block.
  NetworkArch a;
  a.input_shape = {3, 1, 1};
  a.layers = {{LayerKind::FullyConnected, 4, 0, 0, 0}, {LayerKind::FullyConnected, 2, 0, 0, 0}};
  a.num_classes = 2;
  const auto in = uniform_sparsity(build_network(a, 2), 2, 2, 1, 1.0);
  // |W1| = 12, |U1| = 4, |W2| = 8, |U2| = 2, |Wc| = 4, |Uc| = 2.
  const auto mid = mem_access_backward(in, BackwardPosition::Mid);
  CHECK(mid.reads == (12 + 8 + 8) + (8 + 4) + (8 + 6));
  CHECK(mid.writes == (12 + 4) + (8 + 2) + (4 + 2));
  const auto end = mem_access_backward(in, BackwardPosition::IntervalEnd);
  CHECK(end.reads == (8 + 4) + 4);
  CHECK(end.writes == mid.writes);
}

TEST_CASE("mem_access_backward: interval-end reads strictly below mid reads") {
  for (const char* f : {"lenet1.json", "lenet2.json", "alexnet.json"}) {
    for (std::size_t n : {1, 2}) {
      const auto in = uniform_sparsity(arch_net(f, n), 1, 10, 16, 0.3);
      CHECK(mem_access_backward(in, BackwardPosition::IntervalEnd).reads <
            mem_access_backward(in, BackwardPosition::Mid).reads);
    }
  }
}

TEST_CASE("estimate: k=1 uses only interval-end backward steps") {
  const auto in = uniform_sparsity(arch_net("lenet1.json", 1), 1, 6, 8, 0.2);
  const auto r = estimate(in);
  CHECK(r.total_reads == doctest::Approx(6.0 * (r.reads_forward + r.reads_backward_end)));
  CHECK(r.total_writes == doctest::Approx(6.0 * (r.writes_forward + r.writes_backward_end)));
}

TEST_CASE("estimate: totals follow the per-interval composition") {
  const auto in = uniform_sparsity(arch_net("lenet1.json", 2), 8, 20, 4, 0.2);
  const auto r = estimate(in);
  // Intervals of 8, 8, 4 steps.
  const Real expect = 20 * r.reads_forward + (7 + 7 + 3) * r.reads_backward_mid +
                      3 * r.reads_backward_end;
  CHECK(r.total_reads == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("additions: hand examples") {
  const auto dense = uniform_sparsity(fc_4_2(), 1, 1, 1, 1.0);
  const Real classifier_fwd = 4.0 * 2.0 / 2.0;
  CHECK(additions(dense).forward == 8.0 + classifier_fwd);

  const auto silent = uniform_sparsity(fc_4_2(), 1, 1, 1, 0.0);
  const auto adds = additions(silent);
  CHECK(adds.forward == 0.0);
  CHECK(adds.backward == 2.0 * 2 + 2.0 * 2);

  CHECK_THROWS_AS(uniform_sparsity(fc_4_2(), 1, 1, 1, 1.5), DataError);
}

TEST_CASE("macs: classifier term only for single-layer blocks") {
  const auto in = uniform_sparsity(fc_4_2(), 1, 1, 3, 0.5);
  CHECK(macs(in) == 4.0 * (3.0 * 2.0) / 2.0);
}

TEST_CASE("macs: invariant to k, sparsity and classifier mode") {
  for (const char* f : {"lenet1.json", "alexnet.json"}) {
    for (std::size_t n : {1, 2}) {
      const Real ref = macs(uniform_sparsity(arch_net(f, n), 1, 20, 8, 0.2));
      for (std::size_t k : {2, 5, 20}) {
        for (Real alpha : {0.0, 0.7}) {
          for (auto mode : {ClassifierMode::Trainable, ClassifierMode::FrozenRandom}) {
            CHECK(macs(uniform_sparsity(arch_net(f, n, mode), k, 20, 8, alpha)) == ref);
          }
        }
      }
    }
  }
}

TEST_CASE("memory_cost: linear in k with constant local gap") {
  const Network bp = arch_net("lenet1.json", 4);
  const Network lbp = arch_net("lenet1.json", 1);
  auto mc = [](const Network& net, std::size_t k, MemoryMode m) {
    return memory_cost(uniform_sparsity(net, k, 20, 32, 0.2), m);
  };
  // Halving k halves the graph term once weights and workspace are removed.
  const Real fixed = weight_count(bp);
  CHECK(mc(bp, 10, MemoryMode::BPTT) - fixed ==
        doctest::Approx(2.0 * (mc(bp, 5, MemoryMode::BPTT) - fixed)).epsilon(1e-15));

  const auto in1 = uniform_sparsity(lbp, 1, 20, 32, 0.2);
  CHECK(memory_cost(in1, MemoryMode::Local) == local_graph_cost(in1) + weight_count(lbp));

  // Both modes on the same inputs share the per-step graph, so the gap is
  // the whole graph minus the largest block's graph at every k.
  const Real gap = graph_cost_per_step(in1) - local_graph_cost(in1);
  for (std::size_t k : {2, 10, 20}) {
    CHECK(mc(lbp, k, MemoryMode::BPTT) - mc(lbp, k, MemoryMode::Local) == doctest::Approx(gap));
    CHECK(mc(lbp, k, MemoryMode::Local) <= mc(lbp, k, MemoryMode::BPTT));
  }
}

TEST_CASE("cost model: doubling the batch doubles neuron terms only") {
  const Network net = arch_net("lenet1.json", 1);
  const auto a = uniform_sparsity(net, 5, 20, 16, 0.2);
  const auto b = uniform_sparsity(net, 5, 20, 32, 0.2);
  CHECK(graph_cost_per_step(b) == 2.0 * graph_cost_per_step(a));
  CHECK(macs(b) == 2.0 * macs(a));
  CHECK(memory_cost(b, MemoryMode::Local) - weight_count(net) ==
        doctest::Approx(2.0 * (memory_cost(a, MemoryMode::Local) - weight_count(net))));
}

TEST_CASE("cost model: frozen classifiers never cost more") {
  for (const char* f : {"lenet1.json", "lenet2.json", "alexnet.json"}) {
    for (std::size_t k : {1, 5}) {
      const auto t = estimate(uniform_sparsity(arch_net(f, 1), k, 20, 8, 0.2));
      const auto r =
          estimate(uniform_sparsity(arch_net(f, 1, ClassifierMode::FrozenRandom), k, 20, 8, 0.2));
      CHECK(r.memory_cost <= t.memory_cost);
      CHECK(r.total_reads < t.total_reads);
      CHECK(r.total_writes < t.total_writes);
      CHECK(r.total_additions < t.total_additions);
      CHECK(r.total_macs <= t.total_macs);
    }
  }
}

TEST_CASE("cost model: validation") {
  const Network net = fc_4_2();
  CHECK_THROWS_AS(uniform_sparsity(net, 0, 4, 1, 0.5), ConfigError);
  CHECK_THROWS_AS(uniform_sparsity(net, 5, 4, 1, 0.5), ConfigError);
  auto in = uniform_sparsity(net, 1, 4, 1, 0.5);
  in.alpha_c = {-0.1};
  CHECK_THROWS_AS(estimate(in), DataError);
}

TEST_CASE("normalize and fom") {
  CHECK(fom(0.0, NormalizedCosts{}) == 1.0);
  CHECK(fom(0.02, {0.2, 0.6, 1.0, 0.01}) == doctest::Approx(0.4725).epsilon(1e-15));
  CHECK(fom(0.03, {0.2, 0.6, 1.0, 0.01}) > fom(0.02, {0.2, 0.6, 1.0, 0.01}));
  CHECK(fom(0.02, {0.2, 0.6, 1.0, 0.02}) > fom(0.02, {0.2, 0.6, 1.0, 0.01}));

  const auto base = estimate(uniform_sparsity(arch_net("lenet1.json", 4), 20, 20, 8, 0.2));
  const auto self = normalize(base, base);
  CHECK(self.memory == 1.0);
  CHECK(self.mem_access == 1.0);
  CHECK(self.additions == 1.0);
  CHECK(self.macs == 1.0);
  CHECK_THROWS_AS(normalize(base, CostReport{}), ContractViolation);
}

TEST_CASE("additions: model agrees with the engine's counted synaptic events") {
  // The model counts every k x k tap of a padded conv; the engine only sees
  // taps that land inside the input. With dense input the two differ by
  // exactly the in-bounds fraction of taps.
  for (const auto& arch : gradcheck_toy_archs()) {
    CAPTURE(arch.name);
    const Network net = build_network(arch, 1);
    const WeightSet w = gradcheck_weights(net, 2, 1.0);
    const std::size_t B = 4, T = 5;
    const auto in = gradcheck_input(T, B, net.in_size(0), 7);
    NetworkState st = NetworkState::reset(net, B);
    OpCounters counters = OpCounters::for_network(net);
    for (std::size_t t = 0; t < T; ++t) {
      forward_step(st, w, in.at(t), net, DropoutMasks{}, LifParams{}, &counters);
    }
    const auto ci = measured_sparsity(net, T, T, B, counters);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const LayerSpec& spec = arch.layers[l];
      Real model = ci.alpha[l] * synaptic_ops(net, l, B) * static_cast<Real>(T);
      if (spec.kind == LayerKind::Conv && spec.padding > 0) {
        if (l > 0) continue;  // spiking inputs are not spatially uniform
        const Shape3& src = net.input_shape_of(l);
        const Shape3& dst = net.shapes[l];
        std::size_t inside = 0;
        for (std::size_t oy = 0; oy < dst.h; ++oy) {
          for (std::size_t ox = 0; ox < dst.w; ++ox) {
            for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
              for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                const long y = static_cast<long>(oy * spec.stride + ky) - static_cast<long>(spec.padding);
                const long x = static_cast<long>(ox * spec.stride + kx) - static_cast<long>(spec.padding);
                inside += y >= 0 && x >= 0 && y < static_cast<long>(src.h) && x < static_cast<long>(src.w);
              }
            }
          }
        }
        const Real fraction = static_cast<Real>(inside) /
                              static_cast<Real>(dst.h * dst.w * spec.kernel * spec.kernel);
        model *= fraction;
      }
      CAPTURE(l);
      CHECK(static_cast<Real>(counters.layer_adds[l]) == doctest::Approx(model).epsilon(1e-12));
    }
    for (std::size_t b = 0; b < net.plan.size(); ++b) {
      const Real wc = static_cast<Real>(Tensor::count(net.classifier_weight_shape(b)));
      const Real model = ci.alpha_c[b] * wc * static_cast<Real>(B * T);
      CHECK(static_cast<Real>(counters.classifier_adds[b]) == doctest::Approx(model).epsilon(1e-12));
    }
  }
}

TEST_CASE("LBP1 MAC reduction on the bundled architectures") {
  auto ratio = [](const char* f) {
    const NetworkArch arch = load_arch(std::string(TTLBP_SOURCE_DIR "/archs/") + f);
    const auto bp = estimate(uniform_sparsity(build_network(arch, arch.trainable_layer_count()),
                                              20, 20, 128, 0.2));
    const auto lbp1 = estimate(uniform_sparsity(build_network(arch, 1), 20, 20, 128, 0.2));
    return lbp1.total_macs / bp.total_macs;
  };
  CHECK(ratio("lenet1.json") == doctest::Approx(0.28).epsilon(0.05 / 0.28));
  CHECK(ratio("lenet2.json") <= 0.01);
  CHECK(ratio("alexnet.json") <= 0.01);
}
