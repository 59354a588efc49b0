#include "ttlbp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ttlbp/rng.hpp"

namespace ttlbp {

std::vector<NetworkArch> gradcheck_toy_archs() {
  NetworkArch dense;
  dense.name = "toy-dense3";
  dense.input_shape = {1, 4, 4};
  dense.layers = {{LayerKind::FullyConnected, 12, 0, 0, 0},
                  {LayerKind::FullyConnected, 10, 0, 0, 0},
                  {LayerKind::FullyConnected, 8, 0, 0, 0}};
  dense.num_classes = 3;

  NetworkArch conv;
  conv.name = "toy-conv3";
  conv.input_shape = {1, 6, 6};
  conv.layers = {{LayerKind::Conv, 2, 3, 1, 0},
                 {LayerKind::AvgPool, 2, 2, 2, 0},
                 {LayerKind::FullyConnected, 6, 0, 0, 0}};
  conv.num_classes = 3;

  NetworkArch padded;
  padded.name = "toy-conv-padded";
  padded.input_shape = {2, 5, 5};
  padded.layers = {{LayerKind::Conv, 2, 3, 2, 1},
                   {LayerKind::Conv, 3, 2, 1, 1},
                   {LayerKind::FullyConnected, 5, 0, 0, 0}};
  padded.num_classes = 2;

  return {dense, conv, padded};
}

WeightSet gradcheck_weights(const Network& net, std::uint64_t seed, Real gain) {
  WeightSet w = init_weights(net, seed);
  auto scale = [gain](std::vector<Tensor>& ts) {
    for (auto& t : ts) {
      for (auto& v : t.raw()) v = gain * v + 0.05;
    }
  };
  scale(w.layers);
  scale(w.classifiers);
  return w;
}

BatchInput gradcheck_input(std::size_t T, std::size_t batch, std::size_t features,
                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor x({batch, features});
    for (auto& v : x.raw()) v = rng.uniform();
    frames.push_back(std::move(x));
  }
  return BatchInput::sequence(std::move(frames));
}

namespace {

std::string location(const Network& net, std::size_t interval, bool classifier,
                     std::size_t index, std::size_t element) {
  std::string s = "interval " + std::to_string(interval) + " / ";
  if (classifier) {
    s += "classifier " + std::to_string(index);
  } else {
    s += "layer " + std::to_string(index) + " (" + to_string(net.arch.layers[index].kind) + ")";
  }
  return s + " / element " + std::to_string(element);
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck(const NetworkArch& arch, const GradcheckOptions& opt) {
  const std::size_t all = arch.trainable_layer_count();
  std::vector<std::size_t> ks = opt.ks.empty() ? std::vector<std::size_t>{1, 2, opt.T} : opt.ks;
  std::vector<std::size_t> ns = opt.ns.empty() ? std::vector<std::size_t>{1, 2, all} : opt.ns;
  for (auto& k : ks) k = std::min(k, opt.T);
  for (auto& n : ns) n = std::min(n, all);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  std::vector<GradcheckCase> out;
  for (std::size_t n : ns) {
    const Network net = build_network(arch, n);
    check_oracle_size(net, opt.T, opt.batch);
    const WeightSet w = gradcheck_weights(net, derive_seed(opt.seed, 0x3e1ULL), opt.gain);
    const BatchInput input =
        gradcheck_input(opt.T, opt.batch, net.in_size(0), derive_seed(opt.seed, 0x3e2ULL));
    Rng label_rng(derive_seed(opt.seed, 0x3e3ULL));
    std::vector<std::size_t> labels(opt.batch);
    for (auto& y : labels) y = label_rng.below(arch.num_classes);

    for (std::size_t k : ks) {
      TrainConfig cfg;
      cfg.T = opt.T;
      cfg.k = k;
      cfg.n = n;
      cfg.batch_size = opt.batch;
      cfg.dropout_rate = opt.dropout_rate;
      cfg.lif = opt.lif;
      cfg.seed = opt.seed;
      const std::uint64_t batch_seed = derive_seed(opt.seed, 0x3e4ULL);
      const auto engine = interval_gradients(input, labels, w, net, cfg, batch_seed, opt.fault);
      const auto oracle = oracle_bptt_grad(input, labels, w, net, cfg, batch_seed);

      GradcheckCase c;
      c.arch = arch.name;
      c.k = k;
      c.n = n;
      auto visit = [&](std::size_t iv, bool cls, std::size_t idx, const Tensor& a,
                       const Tensor& b) {
        const RelativeError e = worst_relative_error(a, b);
        for (Real v : b.values()) c.nonzero += v != 0.0;
        c.total += b.size();
        if (e.value > c.max_rel_error || (std::isinf(e.value) && c.worst.empty())) {
          c.max_rel_error = e.value;
          c.worst = location(net, iv, cls, idx, e.index);
        }
        if (c.first_failure.empty() && !(e.value <= opt.tolerance)) {
          c.first_failure = location(net, iv, cls, idx, e.index);
        }
      };
      for (std::size_t iv = 0; iv < engine.size(); ++iv) {
        for (std::size_t l = 0; l < engine[iv].layers.size(); ++l) {
          visit(iv, false, l, engine[iv].layers[l], oracle[iv].layers[l]);
        }
        for (std::size_t b = 0; b < engine[iv].classifiers.size(); ++b) {
          visit(iv, true, b, engine[iv].classifiers[b], oracle[iv].classifiers[b]);
        }
      }
      c.passed = c.first_failure.empty();
      out.push_back(std::move(c));
    }
  }
  return out;
}

SeedCheck seed_finite_difference_check(std::size_t instances, std::uint64_t seed, Real step) {
  SeedCheck result;
  result.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(derive_seed(seed, 0x5eedULL, i));
    const std::size_t classes = 2 + rng.below(9);
    const std::size_t K = 1 + rng.below(6);
    const std::size_t batch = 1 + rng.below(4);
    std::vector<Tensor> spikes;
    for (std::size_t t = 0; t < K; ++t) {
      Tensor s({batch, classes});
      for (auto& v : s.raw()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
      spikes.push_back(std::move(s));
    }
    std::vector<std::size_t> labels(batch);
    for (auto& y : labels) y = rng.below(classes);

    const Tensor seed_error = classifier_seed_error(spikes, labels);
    for (std::size_t t = 0; t < K; ++t) {
      Tensor fd({batch, classes});
      for (std::size_t e = 0; e < fd.size(); ++e) {
        const Real orig = spikes[t].raw()[e];
        spikes[t].raw()[e] = orig + step;
        const Real up = compute_loss(spikes, labels);
        spikes[t].raw()[e] = orig - step;
        const Real down = compute_loss(spikes, labels);
        spikes[t].raw()[e] = orig;
        fd.raw()[e] = (up - down) / (2.0 * step);
      }
      result.max_rel_error =
          std::max(result.max_rel_error, max_relative_error(seed_error, fd));
    }
  }
  return result;
}

}  // namespace ttlbp
