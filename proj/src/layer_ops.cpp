#include "layer_ops.hpp"

#include <algorithm>

namespace ttlbp::detail {

LinearMap LinearMap::for_layer(const Network& net, std::size_t layer) {
  const LayerSpec& l = net.arch.layers.at(layer);
  LinearMap m{l.kind, net.input_shape_of(layer), net.shapes.at(layer)};
  if (l.kind != LayerKind::FullyConnected) {
    m.kernel = l.kernel;
    m.stride = l.stride;
    m.padding = l.padding;
  }
  return m;
}

LinearMap LinearMap::for_classifier(const Network& net, std::size_t block) {
  return LinearMap{LayerKind::FullyConnected,
                   net.shapes.at(net.plan.classifier_at.at(block)),
                   Shape3{net.num_classes(), 1, 1}};
}

namespace {

// Input coordinate for output `o` and kernel tap `k`; false when it lands in
// the zero padding.
inline bool tap(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
                std::size_t extent, std::size_t& i) {
  const std::size_t p = o * stride + k;
  if (p < pad) return false;
  i = p - pad;
  return i < extent;
}

}  // namespace

std::uint64_t forward(const LinearMap& m, std::span<const Real> w,
                      std::span<const Real> x, std::span<Real> out) {
  std::uint64_t adds = 0;
  switch (m.kind) {
    case LayerKind::FullyConnected: {
      const std::size_t n_in = m.in.flat();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const Real* row = w.data() + i * n_in;
        Real acc = 0.0;
        for (std::size_t j = 0; j < n_in; ++j) {
          acc += row[j] * x[j];
          adds += x[j] != 0.0;
        }
        out[i] = acc;
      }
      break;
    }
    case LayerKind::Conv: {
      const std::size_t k = m.kernel;
      for (std::size_t co = 0; co < m.out.c; ++co) {
        for (std::size_t oy = 0; oy < m.out.h; ++oy) {
          for (std::size_t ox = 0; ox < m.out.w; ++ox) {
            Real acc = 0.0;
            for (std::size_t ci = 0; ci < m.in.c; ++ci) {
              const Real* wk = w.data() + ((co * m.in.c + ci) * k) * k;
              const Real* xc = x.data() + ci * m.in.h * m.in.w;
              for (std::size_t ky = 0; ky < k; ++ky) {
                std::size_t iy;
                if (!tap(oy, ky, m.stride, m.padding, m.in.h, iy)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  std::size_t ix;
                  if (!tap(ox, kx, m.stride, m.padding, m.in.w, ix)) continue;
                  const Real v = xc[iy * m.in.w + ix];
                  acc += wk[ky * k + kx] * v;
                  adds += v != 0.0;
                }
              }
            }
            out[(co * m.out.h + oy) * m.out.w + ox] = acc;
          }
        }
      }
      break;
    }
    case LayerKind::AvgPool: {
      const std::size_t k = m.kernel;
      const Real inv_area = 1.0 / static_cast<Real>(k * k);
      for (std::size_t c = 0; c < m.out.c; ++c) {
        const Real* xc = x.data() + c * m.in.h * m.in.w;
        for (std::size_t oy = 0; oy < m.out.h; ++oy) {
          for (std::size_t ox = 0; ox < m.out.w; ++ox) {
            Real acc = 0.0;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const Real v = xc[(oy * m.stride + ky) * m.in.w + ox * m.stride + kx];
                acc += inv_area * v;
              }
            }
            out[(c * m.out.h + oy) * m.out.w + ox] = acc;
          }
        }
      }
      break;
    }
  }
  return adds;
}

void transpose(const LinearMap& m, std::span<const Real> w,
               std::span<const Real> g, std::span<Real> back) {
  std::fill(back.begin(), back.end(), 0.0);
  switch (m.kind) {
    case LayerKind::FullyConnected: {
      const std::size_t n_in = m.in.flat();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real gi = g[i];
        if (gi == 0.0) continue;
        const Real* row = w.data() + i * n_in;
        for (std::size_t j = 0; j < n_in; ++j) back[j] += gi * row[j];
      }
      break;
    }
    case LayerKind::Conv: {
      const std::size_t k = m.kernel;
      for (std::size_t co = 0; co < m.out.c; ++co) {
        for (std::size_t oy = 0; oy < m.out.h; ++oy) {
          for (std::size_t ox = 0; ox < m.out.w; ++ox) {
            const Real go = g[(co * m.out.h + oy) * m.out.w + ox];
            if (go == 0.0) continue;
            for (std::size_t ci = 0; ci < m.in.c; ++ci) {
              const Real* wk = w.data() + ((co * m.in.c + ci) * k) * k;
              Real* bc = back.data() + ci * m.in.h * m.in.w;
              for (std::size_t ky = 0; ky < k; ++ky) {
                std::size_t iy;
                if (!tap(oy, ky, m.stride, m.padding, m.in.h, iy)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  std::size_t ix;
                  if (!tap(ox, kx, m.stride, m.padding, m.in.w, ix)) continue;
                  bc[iy * m.in.w + ix] += go * wk[ky * k + kx];
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::AvgPool: {
      const std::size_t k = m.kernel;
      const Real inv_area = 1.0 / static_cast<Real>(k * k);
      for (std::size_t c = 0; c < m.out.c; ++c) {
        Real* bc = back.data() + c * m.in.h * m.in.w;
        for (std::size_t oy = 0; oy < m.out.h; ++oy) {
          for (std::size_t ox = 0; ox < m.out.w; ++ox) {
            const Real go = g[(c * m.out.h + oy) * m.out.w + ox];
            if (go == 0.0) continue;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                bc[(oy * m.stride + ky) * m.in.w + ox * m.stride + kx] += go * inv_area;
              }
            }
          }
        }
      }
      break;
    }
  }
}

void accumulate_weight_grad(const LinearMap& m, std::span<const Real> g,
                            std::span<const Real> x, std::span<Real> dW) {
  switch (m.kind) {
    case LayerKind::FullyConnected: {
      const std::size_t n_in = m.in.flat();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real gi = g[i];
        if (gi == 0.0) continue;
        Real* row = dW.data() + i * n_in;
        for (std::size_t j = 0; j < n_in; ++j) row[j] += gi * x[j];
      }
      break;
    }
    case LayerKind::Conv: {
      const std::size_t k = m.kernel;
      for (std::size_t co = 0; co < m.out.c; ++co) {
        for (std::size_t oy = 0; oy < m.out.h; ++oy) {
          for (std::size_t ox = 0; ox < m.out.w; ++ox) {
            const Real go = g[(co * m.out.h + oy) * m.out.w + ox];
            if (go == 0.0) continue;
            for (std::size_t ci = 0; ci < m.in.c; ++ci) {
              Real* dk = dW.data() + ((co * m.in.c + ci) * k) * k;
              const Real* xc = x.data() + ci * m.in.h * m.in.w;
              for (std::size_t ky = 0; ky < k; ++ky) {
                std::size_t iy;
                if (!tap(oy, ky, m.stride, m.padding, m.in.h, iy)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  std::size_t ix;
                  if (!tap(ox, kx, m.stride, m.padding, m.in.w, ix)) continue;
                  dk[ky * k + kx] += go * xc[iy * m.in.w + ix];
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::AvgPool:
      break;
  }
}

}  // namespace ttlbp::detail
