#include "backprop_kernels.hpp"
#include "layer_ops.hpp"
#include "parallel.hpp"
#include "ttlbp/error.hpp"
#include "ttlbp/oracle.hpp"

namespace ttlbp {

namespace {

using detail::LinearMap;

struct FullRun {
  std::vector<NetworkState> history;  // one entry per step, all T steps
  DropoutMasks masks;
  Tensor seed;  // [batch x N_c]
  Real loss = 0.0;
};

FullRun run_forward(const BatchInput& input, std::span<const std::size_t> labels,
                    const WeightSet& weights, const Network& net, const TrainConfig& config,
                    std::uint64_t batch_seed) {
  if (net.plan.size() != 1) {
    throw ConfigError("reference BPTT needs a single-block network (n = all layers)");
  }
  config.validate(net.arch);
  const std::size_t batch = labels.size();
  FullRun run;
  run.masks = make_dropout_masks(net, config.dropout_rate, interval_mask_seed(batch_seed, 0),
                                 batch);
  NetworkState state = NetworkState::reset(net, batch);
  run.history.assign(config.T, state);
  detail::for_each_chunk(batch, config.threads,
                         [&](std::size_t, std::size_t first, std::size_t last) {
                           for (std::size_t t = 0; t < config.T; ++t) {
                             forward_step(state, weights, input.at(t), net, run.masks,
                                          config.lif, first, last);
                             auto& rec = run.history[t];
                             for (std::size_t b = first; b < last; ++b) {
                               for (std::size_t l = 0; l < net.num_layers(); ++l) {
                                 std::ranges::copy(state.layers[l].u.row(b),
                                                   rec.layers[l].u.row(b).begin());
                                 std::ranges::copy(state.layers[l].s.row(b),
                                                   rec.layers[l].s.row(b).begin());
                               }
                               std::ranges::copy(state.classifiers[0].u.row(b),
                                                 rec.classifiers[0].u.row(b).begin());
                               std::ranges::copy(state.classifiers[0].s.row(b),
                                                 rec.classifiers[0].s.row(b).begin());
                             }
                           }
                         });
  std::vector<Tensor> out_spikes;
  for (const auto& st : run.history) out_spikes.push_back(st.classifiers[0].s);
  run.loss = compute_loss(out_spikes, labels);
  run.seed = classifier_seed_error(out_spikes, labels);
  return run;
}

// Unrolled reverse sweep: classifier, then layers L-1 .. 0, for t = T-1 .. 0.
void sweep_sample(std::size_t b, const FullRun& run, const BatchInput& input,
                  const WeightSet& weights, const Network& net, const LifParams& lif,
                  GradSet& grads) {
  const std::size_t L = net.num_layers();
  const std::size_t nc = net.num_classes();
  const std::size_t top = L - 1;
  const auto cmap = LinearMap::for_classifier(net, 0);
  const BackwardFault none;

  std::vector<Real> gc(nc, 0.0), gc_prev(nc, 0.0);
  std::vector<std::vector<Real>> g(L), g_prev(L), err(L);
  for (std::size_t l = 0; l < L; ++l) {
    g[l].assign(net.out_size(l), 0.0);
    g_prev[l].assign(net.out_size(l), 0.0);
    err[l].assign(net.out_size(l), 0.0);
  }
  std::vector<Real> buf;

  for (std::size_t t = run.history.size(); t-- > 0;) {
    const NetworkState& st = run.history[t];
    detail::potential_error(run.seed.row(b), gc_prev, st.classifiers[0].u.row(b), lif, gc, none);
    detail::accumulate_weight_grad(cmap, gc, detail::masked_spikes(st, run.masks, top, b, buf),
                                   grads.classifiers[0].values());
    detail::transpose(cmap, weights.classifiers[0].values(), gc, err[top]);
    detail::apply_mask(err[top], run.masks, top, b);
    gc_prev = gc;

    for (std::size_t l = L; l-- > 0;) {
      detail::potential_error(err[l], g_prev[l], st.layers[l].u.row(b), lif, g[l], none);
      const auto map = LinearMap::for_layer(net, l);
      if (net.arch.layers[l].trainable()) {
        const auto src =
            l == 0 ? input.at(t).row(b) : detail::masked_spikes(st, run.masks, l - 1, b, buf);
        detail::accumulate_weight_grad(map, g[l], src, grads.layers[l].values());
      }
      if (l > 0) {
        detail::transpose(map, weights.layers[l].values(), g[l], err[l - 1]);
        detail::apply_mask(err[l - 1], run.masks, l - 1, b);
      }
      std::swap(g[l], g_prev[l]);
    }
  }
}

GradSet backward(const FullRun& run, const BatchInput& input, const WeightSet& weights,
                 const Network& net, const TrainConfig& config, std::size_t batch) {
  std::vector<GradSet> partial(detail::chunk_count(batch), GradSet::zeros_like(weights));
  detail::for_each_chunk(batch, config.threads,
                         [&](std::size_t c, std::size_t first, std::size_t last) {
                           for (std::size_t b = first; b < last; ++b) {
                             sweep_sample(b, run, input, weights, net, config.lif, partial[c]);
                           }
                         });
  GradSet grads = GradSet::zeros_like(weights);
  for (const auto& p : partial) grads.add(p);
  return grads;
}

}  // namespace

GradSet reference_bptt_gradients(const BatchInput& input, std::span<const std::size_t> labels,
                                 const WeightSet& weights, const Network& net,
                                 const TrainConfig& config, std::uint64_t batch_seed) {
  const FullRun run = run_forward(input, labels, weights, net, config, batch_seed);
  return backward(run, input, weights, net, config, labels.size());
}

Real reference_bptt_train_batch(const BatchInput& input, std::span<const std::size_t> labels,
                                WeightSet& weights, const Network& net,
                                const TrainConfig& config, std::uint64_t batch_seed,
                                Real learning_rate) {
  const FullRun run = run_forward(input, labels, weights, net, config, batch_seed);
  const GradSet grads = backward(run, input, weights, net, config, labels.size());
  sgd_momentum_step(weights, grads, learning_rate, config.momentum);
  return run.loss;
}

}  // namespace ttlbp
