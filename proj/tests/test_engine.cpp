#include <cmath>
#include <vector>

#include "doctest.h"
#include "toy.hpp"
#include "ttlbp/error.hpp"
#include "ttlbp/oracle.hpp"
#include "ttlbp/rng.hpp"

using namespace ttlbp;

namespace {

// Spikes for `steps` steps of a batch-1 classifier with N_c neurons.
std::vector<Tensor> constant_spikes(std::size_t steps, std::vector<Real> row) {
  const std::size_t nc = row.size();
  return std::vector<Tensor>(steps, Tensor({1, nc}, std::move(row)));
}

// One input feature -> FC(1) -> classifier of two neurons.
struct SingleNeuron {
  Network net;
  WeightSet w;
  BatchInput input = BatchInput::direct(Tensor({1, 1}, {1.0}));
  TrainConfig cfg;

  SingleNeuron() {
    NetworkArch a;
    a.input_shape = {1, 1, 1};
    a.layers = {{LayerKind::FullyConnected, 1, 0, 0, 0}};
    a.num_classes = 2;
    net = build_network(a, 1);
    w = init_weights(net, 0);
    w.layers[0] = Tensor({1, 1}, {0.6});
    w.classifiers[0] = Tensor({2, 1}, {1.0, 0.2});
    cfg = toy::config(2, 2, 1);
    cfg.batch_size = 1;
    cfg.lif = {0.9, 0.5, 0.5, 2.0};
  }
};

bool all_zero(const GradSet& g) {
  for (const auto* list : {&g.layers, &g.classifiers}) {
    for (const auto& t : *list) {
      for (Real v : t.values()) {
        if (v != 0.0) return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("compute_loss: rate-coded MSE examples") {
  const std::vector<std::size_t> y{3};
  std::vector<Real> silent(10, 0.0);
  CHECK(compute_loss(constant_spikes(5, silent), y) == doctest::Approx(0.1).epsilon(1e-15));

  // Nine off-target neurons each contribute (0 - 1)^2 / 10.
  std::vector<Real> all(10, 1.0);
  CHECK(compute_loss(constant_spikes(5, all), y) == doctest::Approx(0.9).epsilon(1e-15));

  std::vector<Real> exact(10, 0.0);
  exact[3] = 1.0;
  CHECK(compute_loss(constant_spikes(5, exact), y) == 0.0);

  CHECK_THROWS_AS(compute_loss(std::vector<Tensor>{}, y), ContractViolation);
}

TEST_CASE("classifier_seed_error: analytic derivative of the rate MSE") {
  const std::vector<std::size_t> y{3};
  const auto seed = classifier_seed_error(constant_spikes(5, std::vector<Real>(10, 0.0)), y);
  REQUIRE(seed.shape() == std::vector<std::size_t>{1, 10});
  CHECK(seed[3] == doctest::Approx(-0.04).epsilon(1e-15));
  for (std::size_t j = 0; j < 10; ++j) {
    if (j != 3) CHECK(seed[j] == 0.0);
  }

  std::vector<Real> exact(10, 0.0);
  exact[3] = 1.0;
  const Tensor matched = classifier_seed_error(constant_spikes(5, exact), y);
  for (Real v : matched.values()) CHECK(v == 0.0);
}

TEST_CASE("classifier_seed_error agrees with central differences") {
  const auto check = seed_finite_difference_check(100, 11);
  CHECK(check.instances == 100);
  CHECK(check.max_rel_error <= 1e-6);
}

TEST_CASE("sgd_momentum_step: heavy-ball recursion") {
  NetworkArch a;
  a.input_shape = {1, 1, 1};
  a.layers = {{LayerKind::FullyConnected, 1, 0, 0, 0}};
  a.num_classes = 1;
  const Network net = build_network(a, 1);
  WeightSet w = init_weights(net, 0);
  w.layers[0][0] = 1.0;
  w.classifiers[0][0] = 1.0;
  GradSet g = GradSet::zeros_like(w);
  g.layers[0][0] = 2.0;

  SUBCASE("two constant steps move 0.1g then 0.19g") {
    sgd_momentum_step(w, g, 0.1, 0.9);
    CHECK(w.layers[0][0] == doctest::Approx(1.0 - 0.2).epsilon(1e-15));
    sgd_momentum_step(w, g, 0.1, 0.9);
    CHECK(w.layers[0][0] == doctest::Approx(1.0 - 0.2 - 0.38).epsilon(1e-15));
    CHECK(w.classifiers[0][0] == 1.0);
  }
  SUBCASE("zero momentum is plain SGD") {
    sgd_momentum_step(w, g, 0.1, 0.0);
    sgd_momentum_step(w, g, 0.1, 0.0);
    CHECK(w.layers[0][0] == doctest::Approx(1.0 - 0.4).epsilon(1e-15));
  }
  SUBCASE("zero gradient lets velocity decay geometrically") {
    sgd_momentum_step(w, g, 0.1, 0.5);
    const GradSet zero = GradSet::zeros_like(w);
    Real prev_v = w.layer_velocity[0][0];
    for (int i = 0; i < 40; ++i) {
      sgd_momentum_step(w, zero, 0.1, 0.5);
      CHECK(w.layer_velocity[0][0] == doctest::Approx(0.5 * prev_v).epsilon(1e-15));
      prev_v = w.layer_velocity[0][0];
    }
    // Limit of the geometric series: 1 - 0.1 * 2 * (1 + 0.5 + 0.25 + ...) = 0.6.
    CHECK(w.layers[0][0] == doctest::Approx(0.6).epsilon(1e-9));
  }
}

TEST_CASE("lr_schedule: halves every 20 epochs") {
  CHECK(lr_schedule(0, 0.1) == 0.1);
  CHECK(lr_schedule(19, 0.1) == 0.1);
  CHECK(lr_schedule(20, 0.1) == 0.05);
  CHECK(lr_schedule(45, 0.1) == 0.025);
}

TEST_CASE("TrainConfig::validate bounds") {
  const auto arch = toy::dense3();
  auto c = toy::config(4, 2, 1);
  CHECK_NOTHROW(c.validate(arch));
  c.k = 0;
  CHECK_THROWS_AS(c.validate(arch), ConfigError);
  c.k = 5;
  CHECK_THROWS_AS(c.validate(arch), ConfigError);
  c = toy::config(4, 2, 4);
  CHECK_THROWS_AS(c.validate(arch), ConfigError);
  c = toy::config(4, 2, 1);
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(arch), ConfigError);
  c = toy::config(4, 2, 1);
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(arch), ConfigError);
}

TEST_CASE("train_batch: interval count and update count") {
  const auto arch = toy::dense3();
  const Network net = build_network(arch, 1);
  const auto y = toy::labels(4, arch.num_classes);

  SUBCASE("T=20, k=8 gives intervals of 8, 8, 4") {
    auto cfg = toy::config(20, 8, 1);
    CHECK(cfg.num_intervals() == 3);
    const auto in = gradcheck_input(20, 4, net.in_size(0), 5);
    WeightSet w = gradcheck_weights(net, 2, 1.0);
    const auto r = train_batch(in, y, w, net, cfg, 9, 0.01);
    CHECK(r.updates == 3);
    CHECK(interval_gradients(in, y, gradcheck_weights(net, 2, 1.0), net, cfg, 9).size() == 3);
  }
  SUBCASE("k=T gives a single update") {
    auto cfg = toy::config(6, 6, 1);
    const auto in = gradcheck_input(6, 4, net.in_size(0), 5);
    WeightSet w = gradcheck_weights(net, 2, 1.0);
    CHECK(train_batch(in, y, w, net, cfg, 9, 0.01).updates == 1);
  }
  SUBCASE("label out of range") {
    auto cfg = toy::config(4, 2, 1);
    const auto in = gradcheck_input(4, 4, net.in_size(0), 5);
    WeightSet w = gradcheck_weights(net, 2, 1.0);
    const std::vector<std::size_t> bad{0, 1, 2, 3};
    CHECK_THROWS_AS(train_batch(in, bad, w, net, cfg, 9, 0.01), DataError);
  }
}

TEST_CASE("train_batch: frozen classifiers never change") {
  const auto arch = toy::conv3();
  auto cfg = toy::config(6, 2, 1);
  cfg.classifier_mode = ClassifierMode::FrozenRandom;
  const Network net = build_network(arch, 1, ClassifierMode::FrozenRandom);
  WeightSet w = gradcheck_weights(net, 2, 1.0);
  const auto before = w.classifiers;
  const auto layers_before = w.layers;
  const auto y = toy::labels(4, arch.num_classes);
  for (std::uint64_t b = 0; b < 5; ++b) {
    train_batch(gradcheck_input(6, 4, net.in_size(0), b), y, w, net, cfg, b, 0.05);
  }
  CHECK(w.classifiers == before);
  CHECK_FALSE(w.layers == layers_before);
}

TEST_CASE("make_dropout_masks: keep fraction and scaling") {
  NetworkArch a;
  a.input_shape = {1, 1, 1};
  a.layers = {{LayerKind::FullyConnected, 5000, 0, 0, 0}};
  a.num_classes = 2;
  const Network net = build_network(a, 1);

  const auto none = make_dropout_masks(net, 0.0, 1, 4);
  CHECK_FALSE(none.active(0));

  const auto m = make_dropout_masks(net, 0.2, 1, 4);
  REQUIRE(m.active(0));
  std::size_t kept = 0;
  for (Real v : m.layers[0].values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    kept += v != 0.0;
  }
  const Real n = static_cast<Real>(m.layers[0].size());
  const Real sigma = std::sqrt(n * 0.8 * 0.2);
  CHECK(std::abs(static_cast<Real>(kept) - 0.8 * n) < 3.0 * sigma);

  // Masks are a function of the interval seed alone, so every step of an
  // interval sees the same mask while different intervals draw fresh ones.
  CHECK(make_dropout_masks(net, 0.2, interval_mask_seed(7, 1), 4).layers ==
        make_dropout_masks(net, 0.2, interval_mask_seed(7, 1), 4).layers);
  CHECK_FALSE(make_dropout_masks(net, 0.2, interval_mask_seed(7, 0), 4).layers ==
              make_dropout_masks(net, 0.2, interval_mask_seed(7, 1), 4).layers);
  CHECK_THROWS_AS(make_dropout_masks(net, 1.0, 1, 4), ConfigError);
}

TEST_CASE("forward_step: zero weights never spike") {
  const Network net = build_network(toy::conv_padded(), 1);
  WeightSet w = init_weights(net, 0);
  for (auto& t : w.layers) t.fill(0.0);
  for (auto& t : w.classifiers) t.fill(0.0);
  NetworkState st = NetworkState::reset(net, 2);
  const Tensor x({2, net.in_size(0)}, 1.0);
  for (int t = 0; t < 6; ++t) {
    forward_step(st, w, x, net, DropoutMasks{}, LifParams{});
    for (const auto& l : st.layers) {
      for (Real v : l.s.values()) CHECK(v == 0.0);
    }
    for (const auto& c : st.classifiers) {
      for (Real v : c.s.values()) CHECK(v == 0.0);
    }
  }
  CHECK_THROWS_AS(forward_step(st, w, Tensor({2, 3}), net, DropoutMasks{}, LifParams{}),
                  ShapeError);
}

TEST_CASE("forward_step: single FC neuron matches the scalar simulation") {
  NetworkArch a;
  a.input_shape = {1, 1, 1};
  a.layers = {{LayerKind::FullyConnected, 1, 0, 0, 0}};
  a.num_classes = 1;
  const Network net = build_network(a, 1);
  WeightSet w = init_weights(net, 0);
  w.layers[0][0] = 1.0;
  NetworkState st = NetworkState::reset(net, 1);
  const Tensor x({1, 1}, {0.3});
  const Real expect_s[] = {0, 1, 0, 1, 0};
  for (int t = 0; t < 5; ++t) {
    forward_step(st, w, x, net, DropoutMasks{}, LifParams{});
    CHECK(st.layers[0].s[0] == expect_s[t]);
  }
  CHECK(st.layers[0].u[0] == doctest::Approx(0.32353).epsilon(1e-12));
}

TEST_CASE("gradients: single-neuron hand expansion") {
  // Forward with x=1, w=0.6, v=(1.0, 0.2): the layer fires at both steps,
  // classifier neuron 0 fires at both, neuron 1 at neither. For target 1 the
  // seeds are (+0.5, -0.5) per step and every potential sits in the
  // surrogate window (height 0.5), so
  //   dL/dv0 = 0.5 * (0.5 + 0.5 * (0.9 + 1 - 0.5 * 0.5)) = 0.6625,
  //   dL/dv1 = -0.6625, dL/dw = 0.33.
  SingleNeuron s;
  const std::vector<std::size_t> y{1};
  for (const auto& g : {interval_gradients(s.input, y, s.w, s.net, s.cfg, 0),
                        oracle_bptt_grad(s.input, y, s.w, s.net, s.cfg, 0)}) {
    REQUIRE(g.size() == 1);
    CHECK(g[0].classifiers[0][0] == doctest::Approx(0.6625).epsilon(1e-14));
    CHECK(g[0].classifiers[0][1] == doctest::Approx(-0.6625).epsilon(1e-14));
    CHECK(g[0].layers[0][0] == doctest::Approx(0.33).epsilon(1e-14));
  }

  // Target 0 is already matched, so every seed is zero.
  const std::vector<std::size_t> matched{0};
  CHECK(all_zero(interval_gradients(s.input, matched, s.w, s.net, s.cfg, 0)[0]));
  CHECK(all_zero(oracle_bptt_grad(s.input, matched, s.w, s.net, s.cfg, 0)[0]));
}

TEST_CASE("oracle: without leak or reset every step is independent") {
  // With tau = theta = 0 and a static input every step repeats the first, so
  // the gradient over T steps equals the single-step gradient.
  for (const auto& arch : gradcheck_toy_archs()) {
    CAPTURE(arch.name);
    const Network net = build_network(arch, arch.trainable_layer_count());
    const WeightSet w = gradcheck_weights(net, 2, 1.0);
    Rng rng(3);
    Tensor frame({4, net.in_size(0)});
    for (auto& v : frame.raw()) v = rng.uniform();
    const auto in = BatchInput::direct(frame);
    const auto y = toy::labels(4, arch.num_classes);
    auto cfg = toy::config(4, 4, arch.trainable_layer_count());
    cfg.lif.tau = 0.0;
    cfg.lif.theta = 0.0;
    auto one = cfg;
    one.T = one.k = 1;
    const auto many = oracle_bptt_grad(in, y, w, net, cfg, 0);
    const auto single = oracle_bptt_grad(in, y, w, net, one, 0);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      CHECK(max_relative_error(many[0].layers[l], single[0].layers[l]) < 1e-12);
    }
    CHECK(max_relative_error(many[0].classifiers[0], single[0].classifiers[0]) < 1e-12);
  }
}

TEST_CASE("oracle refuses oversized networks") {
  const Network big = build_network(load_arch(TTLBP_SOURCE_DIR "/archs/lenet1.json"), 4);
  CHECK_THROWS_AS(check_oracle_size(big, 4, 2), ConfigError);
  const Network toy_net = build_network(toy::dense3(), 3);
  CHECK_THROWS_AS(check_oracle_size(toy_net, 7, 2), ConfigError);
  CHECK_THROWS_AS(check_oracle_size(toy_net, 4, 5), ConfigError);
  CHECK_NOTHROW(check_oracle_size(toy_net, 6, 4));
}

TEST_CASE("engine gradients match the oracle with dropout active") {
  GradcheckOptions opt;
  opt.dropout_rate = 0.2;
  opt.T = 5;
  for (const auto& arch : gradcheck_toy_archs()) {
    for (const auto& c : run_gradcheck(arch, opt)) {
      CAPTURE(c.arch);
      CAPTURE(c.k);
      CAPTURE(c.n);
      CAPTURE(c.worst);
      CHECK(c.max_rel_error <= 1e-10);
      CHECK(c.nonzero > 0);
    }
  }
}

TEST_CASE("gradient check detects a broken backward pass") {
  GradcheckOptions opt;
  opt.fault.drop_temporal_potential_term = true;
  opt.ks = {4};
  opt.ns = {1};
  const auto cases = run_gradcheck(toy::dense3(), opt);
  REQUIRE(cases.size() == 1);
  CHECK_FALSE(cases[0].passed);
  CHECK(cases[0].first_failure.find("interval 0") != std::string::npos);
}

TEST_CASE("reference BPTT: training trajectory is bitwise identical over three batches") {
  for (const auto& arch : gradcheck_toy_archs()) {
    CAPTURE(arch.name);
    const std::size_t all = arch.trainable_layer_count();
    const Network net = build_network(arch, all);
    auto cfg = toy::config(6, 6, all);
    cfg.dropout_rate = 0.2;
    WeightSet a = gradcheck_weights(net, 2, 1.0);
    WeightSet b = a;
    const auto y = toy::labels(4, arch.num_classes);
    for (std::uint64_t batch = 0; batch < 3; ++batch) {
      const auto in = gradcheck_input(6, 4, net.in_size(0), 100 + batch);
      const auto r = train_batch(in, y, a, net, cfg, batch, 0.05);
      const Real loss = reference_bptt_train_batch(in, y, b, net, cfg, batch, 0.05);
      CHECK(r.block_loss.back() == loss);
      CHECK(a == b);
    }
  }
}

TEST_CASE("train_batch: result independent of thread count") {
  const auto arch = toy::conv3();
  const Network net = build_network(arch, 1);
  const auto y = std::vector<std::size_t>{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1};
  const auto in = gradcheck_input(6, y.size(), net.in_size(0), 17);
  auto cfg = toy::config(6, 2, 1);
  cfg.batch_size = y.size();
  cfg.dropout_rate = 0.1;
  WeightSet w1 = gradcheck_weights(net, 2, 1.0);
  WeightSet w4 = w1;
  const auto r1 = train_batch(in, y, w1, net, cfg, 3, 0.05);
  cfg.threads = 4;
  const auto r4 = train_batch(in, y, w4, net, cfg, 3, 0.05);
  CHECK(w1 == w4);
  CHECK(r1.block_loss == r4.block_loss);
  CHECK(r1.predictions == r4.predictions);
}
