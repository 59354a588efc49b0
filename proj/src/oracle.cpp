#include "ttlbp/oracle.hpp"

#include <algorithm>
#include <utility>

#include "ttlbp/error.hpp"

namespace ttlbp {

void check_oracle_size(const Network& net, std::size_t T, std::size_t batch,
                       const OracleLimits& limits) {
  auto refuse = [](const std::string& what) {
    throw ConfigError("network too large for the unrolled oracle: " + what);
  };
  if (net.num_layers() > limits.max_layers) {
    refuse(std::to_string(net.num_layers()) + " layers > " + std::to_string(limits.max_layers));
  }
  if (T > limits.max_steps) {
    refuse("T=" + std::to_string(T) + " > " + std::to_string(limits.max_steps));
  }
  if (batch > limits.max_batch) {
    refuse("batch " + std::to_string(batch) + " > " + std::to_string(limits.max_batch));
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (net.out_size(l) > limits.max_neurons) {
      refuse("layer " + std::to_string(l) + " has " + std::to_string(net.out_size(l)) +
             " neurons > " + std::to_string(limits.max_neurons));
    }
  }
}

namespace {

// Dense matrix of one layer map plus, for every weight element, the matrix
// entries it occupies (shared-weight convolutions occupy many).
struct Dense {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> a;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> entries;

  Real at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  void matvec(std::span<const Real> x, std::span<Real> y) const {
    for (std::size_t r = 0; r < rows; ++r) {
      Real acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += a[r * cols + c] * x[c];
      y[r] = acc;
    }
  }
};

Dense dense_fc(const Tensor& w, std::size_t rows, std::size_t cols) {
  Dense d{rows, cols, std::vector<Real>(w.raw()), {}};
  d.entries.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) d.entries[r * cols + c].emplace_back(r, c);
  }
  return d;
}

Dense dense_layer(const Network& net, const WeightSet& weights, std::size_t l) {
  const LayerSpec& spec = net.arch.layers[l];
  const Shape3 in = net.input_shape_of(l);
  const Shape3 out = net.shapes[l];
  if (spec.kind == LayerKind::FullyConnected) {
    return dense_fc(weights.layers[l], out.flat(), in.flat());
  }
  Dense d{out.flat(), in.flat(), std::vector<Real>(out.flat() * in.flat(), 0.0), {}};
  const auto k = static_cast<std::ptrdiff_t>(spec.kernel);
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  if (spec.kind == LayerKind::Conv) d.entries.resize(weights.layers[l].size());
  for (std::size_t co = 0; co < out.c; ++co) {
    for (std::size_t oy = 0; oy < out.h; ++oy) {
      for (std::size_t ox = 0; ox < out.w; ++ox) {
        const std::size_t r = (co * out.h + oy) * out.w + ox;
        const std::size_t ci_first = spec.kind == LayerKind::Conv ? 0 : co;
        const std::size_t ci_last = spec.kind == LayerKind::Conv ? in.c : co + 1;
        for (std::size_t ci = ci_first; ci < ci_last; ++ci) {
          for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride + ky - pad;
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride + kx - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(in.h) ||
                  ix >= static_cast<std::ptrdiff_t>(in.w)) {
                continue;
              }
              const std::size_t c = (ci * in.h + static_cast<std::size_t>(iy)) * in.w +
                                    static_cast<std::size_t>(ix);
              if (spec.kind == LayerKind::AvgPool) {
                d.a[r * d.cols + c] = 1.0 / static_cast<Real>(spec.kernel * spec.kernel);
              } else {
                const std::size_t widx =
                    ((co * in.c + ci) * spec.kernel + static_cast<std::size_t>(ky)) * spec.kernel +
                    static_cast<std::size_t>(kx);
                d.a[r * d.cols + c] = weights.layers[l][widx];
                d.entries[widx].emplace_back(r, c);
              }
            }
          }
        }
      }
    }
  }
  return d;
}

struct StepRecord {
  std::vector<std::vector<Real>> u, s;    // per layer
  std::vector<std::vector<Real>> cu, cs;  // per classifier
};

void lif(std::vector<Real>& u, std::vector<Real>& s, const std::vector<Real>& syn,
         const LifParams& p) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = p.tau * u[i] + syn[i] - p.theta * s[i];
    s[i] = u[i] > p.u_th ? 1.0 : 0.0;
  }
}

std::vector<Real> masked(const std::vector<Real>& s, const DropoutMasks& masks, std::size_t l,
                         std::size_t b) {
  std::vector<Real> out(s);
  if (masks.active(l)) {
    const auto m = masks.layers[l].row(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] * m[i];
  }
  return out;
}

}  // namespace

std::vector<GradSet> oracle_bptt_grad(const BatchInput& input,
                                      std::span<const std::size_t> labels,
                                      const WeightSet& weights, const Network& net,
                                      const TrainConfig& config, std::uint64_t batch_seed,
                                      const OracleLimits& limits) {
  config.validate(net.arch);
  check_oracle_size(net, config.T, labels.size(), limits);
  const std::size_t L = net.num_layers();
  const std::size_t nb = net.plan.size();
  const std::size_t nc = net.num_classes();
  const std::size_t batch = labels.size();
  const LifParams& p = config.lif;

  std::vector<Dense> layers;
  for (std::size_t l = 0; l < L; ++l) layers.push_back(dense_layer(net, weights, l));
  std::vector<Dense> classifiers;
  for (std::size_t b = 0; b < nb; ++b) {
    classifiers.push_back(dense_fc(weights.classifiers[b], nc, net.classifier_in_size(b)));
  }

  // Per-sample state carried across intervals.
  std::vector<StepRecord> carry(batch);
  for (auto& c : carry) {
    for (std::size_t l = 0; l < L; ++l) {
      c.u.emplace_back(net.out_size(l), 0.0);
      c.s.emplace_back(net.out_size(l), 0.0);
    }
    c.cu.assign(nb, std::vector<Real>(nc, 0.0));
    c.cs.assign(nb, std::vector<Real>(nc, 0.0));
  }

  std::vector<GradSet> result;
  for (std::size_t iv = 0; iv < config.num_intervals(); ++iv) {
    const std::size_t t0 = iv * config.k;
    const std::size_t K = std::min(config.k, config.T - t0);
    const DropoutMasks masks = make_dropout_masks(net, config.dropout_rate,
                                                  interval_mask_seed(batch_seed, iv), batch);
    GradSet grads = GradSet::zeros_like(weights);

    for (std::size_t b = 0; b < batch; ++b) {
      // Record the interval.
      std::vector<StepRecord> rec;
      StepRecord cur = carry[b];
      for (std::size_t j = 0; j < K; ++j) {
        const auto x = input.at(t0 + j).row(b);
        std::size_t block = 0;
        for (std::size_t l = 0; l < L; ++l) {
          const std::vector<Real> src =
              l == 0 ? std::vector<Real>(x.begin(), x.end()) : masked(cur.s[l - 1], masks, l - 1, b);
          std::vector<Real> syn(layers[l].rows);
          layers[l].matvec(src, syn);
          lif(cur.u[l], cur.s[l], syn, p);
          if (block < nb && net.plan.blocks[block].last == l) {
            std::vector<Real> csyn(nc);
            classifiers[block].matvec(masked(cur.s[l], masks, l, b), csyn);
            lif(cur.cu[block], cur.cs[block], csyn, p);
            ++block;
          }
        }
        rec.push_back(cur);
      }
      carry[b] = cur;

      // dL_b / d s_c(t) for each block's classifier; the same at every step.
      std::vector<std::vector<Real>> coef(nb, std::vector<Real>(nc));
      for (std::size_t bi = 0; bi < nb; ++bi) {
        for (std::size_t i = 0; i < nc; ++i) {
          Real count = 0.0;
          for (std::size_t j = 0; j < K; ++j) count += rec[j].cs[bi][i];
          const Real y = i == labels[b] ? 1.0 : 0.0;
          const Real rate = count / static_cast<Real>(K);
          coef[bi][i] = -2.0 * (y - rate) /
                        (static_cast<Real>(nc) * static_cast<Real>(K) * static_cast<Real>(batch));
        }
      }

      // Pushes a unit tangent of one weight through the interval's graph.
      // `first` is the layer owning the weight (or the block top for a
      // classifier weight); only the owning block's loss is differentiated.
      auto tangent = [&](std::size_t bi, std::size_t first, bool classifier_weight,
                         const std::vector<std::pair<std::size_t, std::size_t>>& entries) {
        const std::size_t top = net.plan.blocks[bi].last;
        std::vector<std::vector<Real>> du(L), ds(L);
        for (std::size_t l = first; l <= top; ++l) {
          du[l].assign(net.out_size(l), 0.0);
          ds[l].assign(net.out_size(l), 0.0);
        }
        std::vector<Real> dcu(nc, 0.0), dcs(nc, 0.0);
        Real dL = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
          const StepRecord& r = rec[j];
          auto source = [&](std::size_t l) {
            if (l == 0) {
              const auto x = input.at(t0 + j).row(b);
              return std::vector<Real>(x.begin(), x.end());
            }
            return masked(r.s[l - 1], masks, l - 1, b);
          };
          if (!classifier_weight) {
            for (std::size_t l = first; l <= top; ++l) {
              std::vector<Real> dI(net.out_size(l), 0.0);
              if (l == first) {
                const auto src = source(l);
                for (auto [row, col] : entries) dI[row] += src[col];
              } else {
                layers[l].matvec(masked(ds[l - 1], masks, l - 1, b), dI);
              }
              for (std::size_t i = 0; i < dI.size(); ++i) {
                du[l][i] = p.tau * du[l][i] + dI[i] - p.theta * ds[l][i];
                ds[l][i] = surrogate_grad(r.u[l][i], p) * du[l][i];
              }
            }
          }
          std::vector<Real> dIc(nc, 0.0);
          if (classifier_weight) {
            const auto src = masked(r.s[top], masks, top, b);
            for (auto [row, col] : entries) dIc[row] += src[col];
          } else {
            classifiers[bi].matvec(masked(ds[top], masks, top, b), dIc);
          }
          for (std::size_t i = 0; i < nc; ++i) {
            dcu[i] = p.tau * dcu[i] + dIc[i] - p.theta * dcs[i];
            dcs[i] = surrogate_grad(r.cu[bi][i], p) * dcu[i];
            dL += coef[bi][i] * dcs[i];
          }
        }
        return dL;
      };

      for (std::size_t l = 0; l < L; ++l) {
        if (!net.arch.layers[l].trainable()) continue;
        const std::size_t bi = net.plan.block_of(l);
        auto& g = grads.layers[l];
        for (std::size_t w = 0; w < g.size(); ++w) {
          g[w] += tangent(bi, l, false, layers[l].entries[w]);
        }
      }
      for (std::size_t bi = 0; bi < nb; ++bi) {
        auto& g = grads.classifiers[bi];
        for (std::size_t w = 0; w < g.size(); ++w) {
          g[w] += tangent(bi, net.plan.blocks[bi].last, true, classifiers[bi].entries[w]);
        }
      }
    }
    result.push_back(std::move(grads));
  }
  return result;
}

}  // namespace ttlbp
