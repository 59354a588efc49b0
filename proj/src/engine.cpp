#include "ttlbp/engine.hpp"

#include <algorithm>
#include <cmath>

#include "backprop_kernels.hpp"
#include "layer_ops.hpp"
#include "parallel.hpp"
#include "ttlbp/error.hpp"
#include "ttlbp/rng.hpp"

namespace ttlbp {

using detail::LinearMap;

void TrainConfig::validate(const NetworkArch& arch) const {
  lif.validate();
  if (T < 1) throw ConfigError("T must be at least 1");
  if (k < 1 || k > T) {
    throw ConfigError("truncation length k=" + std::to_string(k) + " outside [1, T=" +
                      std::to_string(T) + "]");
  }
  const std::size_t trainable = arch.trainable_layer_count();
  if (n < 1 || n > trainable) {
    throw ConfigError("block length n=" + std::to_string(n) + " outside [1, " +
                      std::to_string(trainable) + "]");
  }
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (lr_decay.every_epochs < 1) throw ConfigError("lr decay period must be positive");
}

// ---------------------------------------------------------------------------

BatchInput BatchInput::direct(Tensor frame) {
  if (frame.rank() != 2) throw ShapeError("direct input must be [batch x features]");
  BatchInput in;
  in.frames_.push_back(std::move(frame));
  in.is_static_ = true;
  return in;
}

BatchInput BatchInput::sequence(std::vector<Tensor> frames) {
  if (frames.empty()) throw ShapeError("input sequence has no frames");
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front()) || f.rank() != 2) {
      throw ShapeError("input frames must share one [batch x features] shape");
    }
  }
  BatchInput in;
  in.frames_ = std::move(frames);
  in.is_static_ = false;
  return in;
}

const Tensor& BatchInput::at(std::size_t t) const {
  if (is_static_) return frames_.front();
  if (t >= frames_.size()) {
    throw ContractViolation("input sequence has " + std::to_string(frames_.size()) +
                            " frames, step " + std::to_string(t) + " requested");
  }
  return frames_[t];
}

std::size_t BatchInput::batch() const { return frames_.front().dim(0); }
std::size_t BatchInput::feature_size() const { return frames_.front().dim(1); }

NetworkState NetworkState::reset(const Network& net, std::size_t batch) {
  NetworkState st;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    st.layers.push_back(reset_state({batch, net.out_size(l)}));
  }
  for (std::size_t b = 0; b < net.plan.size(); ++b) {
    st.classifiers.push_back(reset_state({batch, net.num_classes()}));
  }
  return st;
}

DropoutMasks make_dropout_masks(const Network& net, Real rate, std::uint64_t seed,
                                std::size_t batch) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  DropoutMasks masks;
  masks.layers.resize(net.num_layers());
  if (rate == 0.0) return masks;
  const Real keep = 1.0 - rate;
  const Real scale = 1.0 / keep;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!net.arch.layers[l].trainable()) continue;
    Tensor m({batch, net.out_size(l)});
    for (std::size_t b = 0; b < batch; ++b) {
      Rng rng(derive_seed(seed, l, b));
      for (auto& v : m.row(b)) v = rng.bernoulli(keep) ? scale : 0.0;
    }
    masks.layers[l] = std::move(m);
  }
  return masks;
}

std::uint64_t interval_mask_seed(std::uint64_t batch_seed, std::size_t interval) {
  return derive_seed(batch_seed, 0xd20fULL, interval);
}

GradSet GradSet::zeros_like(const WeightSet& w) {
  GradSet g;
  for (const auto& t : w.layers) g.layers.emplace_back(t.shape());
  for (const auto& t : w.classifiers) g.classifiers.emplace_back(t.shape());
  return g;
}

void GradSet::add(const GradSet& other) {
  auto add_all = [](std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
    }
  };
  add_all(layers, other.layers);
  add_all(classifiers, other.classifiers);
}

OpCounters OpCounters::for_network(const Network& net) {
  OpCounters c;
  c.layer_adds.assign(net.num_layers(), 0);
  c.layer_input_nonzero.assign(net.num_layers(), 0);
  c.layer_input_total.assign(net.num_layers(), 0);
  c.classifier_adds.assign(net.plan.size(), 0);
  c.classifier_input_nonzero.assign(net.plan.size(), 0);
  c.classifier_input_total.assign(net.plan.size(), 0);
  return c;
}

void OpCounters::add(const OpCounters& o) {
  auto add_all = [](std::vector<std::uint64_t>& dst, const std::vector<std::uint64_t>& src) {
    if (dst.size() < src.size()) dst.resize(src.size(), 0);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };
  add_all(layer_adds, o.layer_adds);
  add_all(classifier_adds, o.classifier_adds);
  add_all(layer_input_nonzero, o.layer_input_nonzero);
  add_all(layer_input_total, o.layer_input_total);
  add_all(classifier_input_nonzero, o.classifier_input_nonzero);
  add_all(classifier_input_total, o.classifier_input_total);
}

namespace {

std::vector<Real> density(const std::vector<std::uint64_t>& nz,
                          const std::vector<std::uint64_t>& total) {
  std::vector<Real> out(nz.size(), 0.0);
  for (std::size_t i = 0; i < nz.size(); ++i) {
    if (total[i]) out[i] = static_cast<Real>(nz[i]) / static_cast<Real>(total[i]);
  }
  return out;
}

std::uint64_t count_nonzero(std::span<const Real> v) {
  return static_cast<std::uint64_t>(
      std::count_if(v.begin(), v.end(), [](Real x) { return x != 0.0; }));
}

}  // namespace

std::vector<Real> OpCounters::layer_input_density() const {
  return density(layer_input_nonzero, layer_input_total);
}

std::vector<Real> OpCounters::classifier_input_density() const {
  return density(classifier_input_nonzero, classifier_input_total);
}

// ---------------------------------------------------------------------------
// Forward

void forward_step(NetworkState& state, const WeightSet& weights, const Tensor& input_t,
                  const Network& net, const DropoutMasks& masks, const LifParams& lif,
                  std::size_t first, std::size_t last, OpCounters* counters) {
  if (input_t.rank() != 2 || input_t.dim(1) != net.in_size(0)) {
    throw ShapeError("layer 0 input " + shape_to_string(input_t.shape()) +
                     " does not match input shape with " + std::to_string(net.in_size(0)) +
                     " features");
  }
  if (input_t.dim(0) != state.layers.front().u.dim(0)) {
    throw ShapeError("input batch " + std::to_string(input_t.dim(0)) +
                     " differs from state batch " +
                     std::to_string(state.layers.front().u.dim(0)));
  }
  std::vector<Real> src_buf;
  std::vector<Real> syn;
  for (std::size_t b = first; b < last; ++b) {
    std::size_t block = 0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto map = LinearMap::for_layer(net, l);
      const std::span<const Real> src =
          l == 0 ? input_t.row(b) : detail::masked_spikes(state, masks, l - 1, b, src_buf);
      syn.assign(net.out_size(l), 0.0);
      const auto adds = detail::forward(map, weights.layers[l].values(), src, syn);
      if (counters) {
        counters->layer_adds[l] += adds;
        counters->layer_input_nonzero[l] += count_nonzero(src);
        counters->layer_input_total[l] += src.size();
      }
      auto& ls = state.layers[l];
      lif_step_inplace(ls.u.row(b), ls.s.row(b), syn, lif);

      if (block < net.plan.size() && net.plan.classifier_at[block] == l) {
        const auto cmap = LinearMap::for_classifier(net, block);
        const auto csrc = detail::masked_spikes(state, masks, l, b, src_buf);
        syn.assign(net.num_classes(), 0.0);
        const auto cadds = detail::forward(cmap, weights.classifiers[block].values(), csrc, syn);
        if (counters) {
          counters->classifier_adds[block] += cadds;
          counters->classifier_input_nonzero[block] += count_nonzero(csrc);
          counters->classifier_input_total[block] += csrc.size();
        }
        auto& cs = state.classifiers[block];
        lif_step_inplace(cs.u.row(b), cs.s.row(b), syn, lif);
        ++block;
      }
    }
  }
}

void forward_step(NetworkState& state, const WeightSet& weights, const Tensor& input_t,
                  const Network& net, const DropoutMasks& masks, const LifParams& lif,
                  OpCounters* counters) {
  forward_step(state, weights, input_t, net, masks, lif, 0, input_t.dim(0), counters);
}

// ---------------------------------------------------------------------------
// Loss

namespace {

void check_history(std::span<const Tensor> spikes, std::span<const std::size_t> labels) {
  if (spikes.empty()) throw ContractViolation("loss needs at least one step of history");
  if (spikes.front().rank() != 2 || spikes.front().dim(0) != labels.size()) {
    throw ShapeError("classifier history batch does not match label count");
  }
}

Real sample_rate(std::span<const Tensor> spikes, std::size_t sample, std::size_t i) {
  Real count = 0.0;
  for (const auto& s : spikes) count += s.row(sample)[i];
  return count / static_cast<Real>(spikes.size());
}

}  // namespace

Real sample_loss(std::span<const Tensor> spikes, std::size_t sample, std::size_t label) {
  const std::size_t nc = spikes.front().dim(1);
  if (label >= nc) throw DataError("label " + std::to_string(label) + " out of range");
  Real acc = 0.0;
  for (std::size_t i = 0; i < nc; ++i) {
    const Real y = i == label ? 1.0 : 0.0;
    const Real d = y - sample_rate(spikes, sample, i);
    acc += d * d;
  }
  return acc / static_cast<Real>(nc);
}

Real compute_loss(std::span<const Tensor> spikes, std::span<const std::size_t> labels) {
  check_history(spikes, labels);
  Real total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) total += sample_loss(spikes, b, labels[b]);
  return total / static_cast<Real>(labels.size());
}

Tensor classifier_seed_error(std::span<const Tensor> spikes,
                             std::span<const std::size_t> labels) {
  check_history(spikes, labels);
  const std::size_t batch = labels.size();
  const std::size_t nc = spikes.front().dim(1);
  const Real scale = -2.0 / (static_cast<Real>(nc) * static_cast<Real>(spikes.size()) *
                             static_cast<Real>(batch));
  Tensor seed({batch, nc});
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= nc) throw DataError("label " + std::to_string(labels[b]) + " out of range");
    auto row = seed.row(b);
    for (std::size_t i = 0; i < nc; ++i) {
      const Real y = i == labels[b] ? 1.0 : 0.0;
      row[i] = scale * (y - sample_rate(spikes, b, i));
    }
  }
  return seed;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Reverse sweep of one sample through one interval.
void backward_sample(std::size_t b, const IntervalHistory& history, const BatchInput& input,
                     const WeightSet& weights, const Network& net, const DropoutMasks& masks,
                     const LifParams& lif, std::span<const Tensor> seeds, GradSet& grads,
                     const BackwardFault& fault) {
  const std::size_t L = net.num_layers();
  const std::size_t nb = net.plan.size();
  const std::size_t nc = net.num_classes();

  std::vector<std::vector<Real>> g_next(L), g_cur(L), spatial(L);
  for (std::size_t l = 0; l < L; ++l) {
    g_next[l].assign(net.out_size(l), 0.0);
    g_cur[l].assign(net.out_size(l), 0.0);
    spatial[l].assign(net.out_size(l), 0.0);
  }
  std::vector<std::vector<Real>> gc_next(nb, std::vector<Real>(nc, 0.0));
  std::vector<Real> gc_cur(nc, 0.0);
  std::vector<Real> src_buf;

  for (std::size_t j = history.steps.size(); j-- > 0;) {
    const NetworkState& st = history.steps[j];
    const std::size_t t = history.t_begin + j;
    for (std::size_t bi = nb; bi-- > 0;) {
      const Block& blk = net.plan.blocks[bi];
      const std::size_t top = blk.last;

      // Classifier: seeded by the loss, fed back through its own leak/reset.
      detail::potential_error(seeds[bi].row(b), gc_next[bi], st.classifiers[bi].u.row(b), lif,
                              gc_cur, fault);
      const auto cmap = LinearMap::for_classifier(net, bi);
      const auto csrc = detail::masked_spikes(st, masks, top, b, src_buf);
      detail::accumulate_weight_grad(cmap, gc_cur, csrc, grads.classifiers[bi].values());
      detail::transpose(cmap, weights.classifiers[bi].values(), gc_cur, spatial[top]);
      detail::apply_mask(spatial[top], masks, top, b);
      gc_next[bi] = gc_cur;

      for (std::size_t l = top + 1; l-- > blk.first;) {
        detail::potential_error(spatial[l], g_next[l], st.layers[l].u.row(b), lif, g_cur[l],
                                fault);
        const auto map = LinearMap::for_layer(net, l);
        if (net.arch.layers[l].trainable()) {
          const std::span<const Real> src =
              l == 0 ? input.at(t).row(b) : detail::masked_spikes(st, masks, l - 1, b, src_buf);
          detail::accumulate_weight_grad(map, g_cur[l], src, grads.layers[l].values());
        }
        // Spatial stop: nothing flows below the block's first layer.
        if (l > blk.first) {
          detail::transpose(map, weights.layers[l].values(), g_cur[l], spatial[l - 1]);
          detail::apply_mask(spatial[l - 1], masks, l - 1, b);
        }
        std::swap(g_next[l], g_cur[l]);
      }
    }
  }
}

}  // namespace

void backward_interval(const IntervalHistory& history, const BatchInput& input,
                       const WeightSet& weights, const Network& net,
                       const DropoutMasks& masks, const LifParams& lif,
                       std::span<const Tensor> classifier_seeds, GradSet& grads,
                       std::size_t threads, BackwardFault fault) {
  if (history.steps.empty()) throw ContractViolation("backward pass over an empty interval");
  if (classifier_seeds.size() != net.plan.size()) {
    throw ContractViolation("need one classifier seed per block");
  }
  const std::size_t batch = history.steps.front().layers.front().u.dim(0);
  std::vector<GradSet> partial(detail::chunk_count(batch), GradSet::zeros_like(weights));
  detail::for_each_chunk(batch, threads, [&](std::size_t c, std::size_t first, std::size_t last) {
    for (std::size_t b = first; b < last; ++b) {
      backward_sample(b, history, input, weights, net, masks, lif, classifier_seeds, partial[c],
                      fault);
    }
  });
  for (const auto& p : partial) grads.add(p);
}

// ---------------------------------------------------------------------------
// Optimizer

void sgd_momentum_step(WeightSet& weights, const GradSet& grads, Real lr, Real momentum) {
  auto step = [&](Tensor& w, Tensor& v, const Tensor& g) {
    if (w.empty()) return;
    if (!w.same_shape(g) || !v.same_shape(w)) {
      throw ShapeError("optimizer shapes disagree: weight " + shape_to_string(w.shape()) +
                       ", gradient " + shape_to_string(g.shape()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  };
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    step(weights.layers[l], weights.layer_velocity[l], grads.layers[l]);
  }
  if (weights.classifier_mode == ClassifierMode::FrozenRandom) return;
  for (std::size_t b = 0; b < weights.classifiers.size(); ++b) {
    step(weights.classifiers[b], weights.classifier_velocity[b], grads.classifiers[b]);
  }
}

Real lr_schedule(std::size_t epoch, Real lr0, const LrDecay& decay) {
  const auto drops = static_cast<Real>(epoch / decay.every_epochs);
  return lr0 * std::pow(decay.factor, drops);
}

// ---------------------------------------------------------------------------
// Batch driver

namespace {

struct RunOptions {
  WeightSet* mutable_weights = nullptr;  // null: gradients only
  Real learning_rate = 0.0;
  BackwardFault fault;
  std::span<const std::size_t> zeroed_blocks;
  std::vector<GradSet>* collect = nullptr;
};

void check_batch(const BatchInput& input, std::span<const std::size_t> labels,
                 const Network& net, const TrainConfig& config) {
  if (input.batch() != labels.size()) {
    throw ShapeError("input batch " + std::to_string(input.batch()) + " but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (input.feature_size() != net.in_size(0)) {
    throw ShapeError("input frames carry " + std::to_string(input.feature_size()) +
                     " features, network expects " + std::to_string(net.in_size(0)));
  }
  if (input.steps() != 0 && input.steps() < config.T) {
    throw ShapeError("input spans " + std::to_string(input.steps()) + " steps, T=" +
                     std::to_string(config.T));
  }
  for (auto y : labels) {
    if (y >= net.num_classes()) {
      throw DataError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(net.num_classes()) + " classes");
    }
  }
}

BatchResult run_batch(const BatchInput& input, std::span<const std::size_t> labels,
                      const WeightSet& weights, const Network& net, const TrainConfig& config,
                      std::uint64_t batch_seed, const RunOptions& opt) {
  config.validate(net.arch);
  check_batch(input, labels, net, config);
  const std::size_t batch = labels.size();
  const std::size_t nb = net.plan.size();
  const std::size_t nc = net.num_classes();
  const std::size_t chunks = detail::chunk_count(batch);

  BatchResult result;
  result.block_loss.assign(nb, 0.0);
  result.counters = OpCounters::for_network(net);
  std::vector<OpCounters> chunk_counters(chunks, OpCounters::for_network(net));

  NetworkState state = NetworkState::reset(net, batch);
  Tensor out_counts({batch, nc});
  Tensor out_potential({batch, nc});

  for (std::size_t iv = 0; iv < config.num_intervals(); ++iv) {
    const std::size_t t0 = iv * config.k;
    const std::size_t steps = std::min(config.k, config.T - t0);
    const DropoutMasks masks =
        make_dropout_masks(net, config.dropout_rate, interval_mask_seed(batch_seed, iv), batch);

    IntervalHistory history;
    history.t_begin = t0;
    history.steps.assign(steps, state);
    std::vector<Tensor> seeds(nb, Tensor({batch, nc}));
    std::vector<std::vector<Real>> losses(nb, std::vector<Real>(batch, 0.0));
    std::vector<GradSet> partial(chunks, GradSet::zeros_like(weights));

    detail::for_each_chunk(batch, config.threads, [&](std::size_t c, std::size_t first,
                                                      std::size_t last) {
      for (std::size_t j = 0; j < steps; ++j) {
        forward_step(state, weights, input.at(t0 + j), net, masks, config.lif, first, last,
                     &chunk_counters[c]);
        auto& rec = history.steps[j];
        for (std::size_t l = 0; l < state.layers.size(); ++l) {
          std::ranges::copy(state.layers[l].u.row(first).data(),
                            state.layers[l].u.row(last - 1).data() + state.layers[l].u.row_size(),
                            rec.layers[l].u.row(first).data());
          std::ranges::copy(state.layers[l].s.row(first).data(),
                            state.layers[l].s.row(last - 1).data() + state.layers[l].s.row_size(),
                            rec.layers[l].s.row(first).data());
        }
        for (std::size_t bi = 0; bi < nb; ++bi) {
          for (std::size_t b = first; b < last; ++b) {
            std::ranges::copy(state.classifiers[bi].u.row(b), rec.classifiers[bi].u.row(b).begin());
            std::ranges::copy(state.classifiers[bi].s.row(b), rec.classifiers[bi].s.row(b).begin());
          }
        }
        const auto& out = state.classifiers.back();
        for (std::size_t b = first; b < last; ++b) {
          for (std::size_t i = 0; i < nc; ++i) {
            out_counts.row(b)[i] += out.s.row(b)[i];
            out_potential.row(b)[i] += out.u.row(b)[i];
          }
        }
      }

      // Per-block loss and its seed error for this chunk of samples.
      const Real scale = -2.0 / (static_cast<Real>(nc) * static_cast<Real>(steps) *
                                 static_cast<Real>(batch));
      for (std::size_t bi = 0; bi < nb; ++bi) {
        const bool zeroed = std::ranges::find(opt.zeroed_blocks, bi) != opt.zeroed_blocks.end();
        for (std::size_t b = first; b < last; ++b) {
          auto seed_row = seeds[bi].row(b);
          Real loss = 0.0;
          for (std::size_t i = 0; i < nc; ++i) {
            Real count = 0.0;
            for (std::size_t j = 0; j < steps; ++j) count += history.steps[j].classifiers[bi].s.row(b)[i];
            const Real rate = count / static_cast<Real>(steps);
            const Real y = i == labels[b] ? 1.0 : 0.0;
            loss += (y - rate) * (y - rate);
            seed_row[i] = zeroed ? 0.0 : scale * (y - rate);
          }
          losses[bi][b] = loss / static_cast<Real>(nc);
        }
      }

      for (std::size_t b = first; b < last; ++b) {
        backward_sample(b, history, input, weights, net, masks, config.lif, seeds, partial[c],
                        opt.fault);
      }
    });

    GradSet grads = GradSet::zeros_like(weights);
    for (const auto& p : partial) grads.add(p);

    for (std::size_t bi = 0; bi < nb; ++bi) {
      Real sum = 0.0;
      for (Real v : losses[bi]) sum += v;
      result.block_loss[bi] += sum / static_cast<Real>(batch);
    }
    if (opt.collect) opt.collect->push_back(grads);
    if (opt.mutable_weights) {
      sgd_momentum_step(*opt.mutable_weights, grads, opt.learning_rate, config.momentum);
      ++result.updates;
    }
  }

  for (Real& v : result.block_loss) v /= static_cast<Real>(config.num_intervals());
  for (const auto& c : chunk_counters) result.counters.add(c);

  result.predictions.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < nc; ++i) {
      const Real ci = out_counts.row(b)[i], cb = out_counts.row(b)[best];
      if (ci > cb || (ci == cb && out_potential.row(b)[i] > out_potential.row(b)[best])) best = i;
    }
    result.predictions[b] = best;
    result.correct += best == labels[b];
  }
  return result;
}

}  // namespace

BatchResult train_batch(const BatchInput& input, std::span<const std::size_t> labels,
                        WeightSet& weights, const Network& net, const TrainConfig& config,
                        std::uint64_t batch_seed, Real learning_rate) {
  RunOptions opt;
  opt.mutable_weights = &weights;
  opt.learning_rate = learning_rate;
  return run_batch(input, labels, weights, net, config, batch_seed, opt);
}

std::vector<GradSet> interval_gradients(const BatchInput& input,
                                        std::span<const std::size_t> labels,
                                        const WeightSet& weights, const Network& net,
                                        const TrainConfig& config, std::uint64_t batch_seed,
                                        BackwardFault fault,
                                        std::span<const std::size_t> zeroed_blocks) {
  std::vector<GradSet> out;
  RunOptions opt;
  opt.fault = fault;
  opt.zeroed_blocks = zeroed_blocks;
  opt.collect = &out;
  run_batch(input, labels, weights, net, config, batch_seed, opt);
  return out;
}

std::vector<std::size_t> predict(const BatchInput& input, const WeightSet& weights,
                                 const Network& net, const LifParams& lif, std::size_t steps,
                                 std::size_t threads) {
  const std::size_t batch = input.batch();
  const std::size_t nc = net.num_classes();
  NetworkState state = NetworkState::reset(net, batch);
  const DropoutMasks none;
  Tensor counts({batch, nc});
  Tensor potential({batch, nc});
  detail::for_each_chunk(batch, threads, [&](std::size_t, std::size_t first, std::size_t last) {
    for (std::size_t t = 0; t < steps; ++t) {
      forward_step(state, weights, input.at(t), net, none, lif, first, last);
      const auto& out = state.classifiers.back();
      for (std::size_t b = first; b < last; ++b) {
        for (std::size_t i = 0; i < nc; ++i) {
          counts.row(b)[i] += out.s.row(b)[i];
          potential.row(b)[i] += out.u.row(b)[i];
        }
      }
    }
  });
  std::vector<std::size_t> pred(batch, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 1; i < nc; ++i) {
      const Real ci = counts.row(b)[i], cb = counts.row(b)[pred[b]];
      if (ci > cb || (ci == cb && potential.row(b)[i] > potential.row(b)[pred[b]])) pred[b] = i;
    }
  }
  return pred;
}

}  // namespace ttlbp
