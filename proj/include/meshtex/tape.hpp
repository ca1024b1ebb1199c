// Reverse-mode differentiation over dense tensors.
//
// Define-by-run: every operation appends a node whose closure pulls the
// output gradient back into its parents. Creation order is a topological
// order, so backward() is a single reverse sweep with additive fan-out.
// A tape is single-threaded and supports one backward pass; independent
// tapes may run in parallel.
//
// Every forward op validates that its output is finite and throws
// NumericalError otherwise. Ops whose parents are all constants produce
// constants (nothing is recorded), which is how no-grad evaluation works.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/face_graph.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

enum class Act { relu, leaky_relu, sigmoid, tanh_ };

namespace detail {

template <typename S>
Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> arr(Tensor<S>& t) {
  return {t.ptr(), static_cast<Eigen::Index>(t.size())};
}

template <typename S>
Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> arr(const Tensor<S>& t) {
  return {t.ptr(), static_cast<Eigen::Index>(t.size())};
}

template <typename S>
S stable_sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

}  // namespace detail

template <typename S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Registers a leaf that will receive gradient. The returned tensor shares
  // storage with the input.
  Tensor<S> watch(const Tensor<S>& t) {
    Tensor<S> out = t;
    out.node = recording_ ? add_node(nullptr) : -1;
    return out;
  }

  // Runs the reverse sweep from a scalar loss. Gradients of watched leaves
  // are readable through grad() afterwards.
  void backward(const Tensor<S>& loss) {
    if (loss.node < 0) {
      throw ShapeError("backward: loss is not recorded on this tape");
    }
    if (loss.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " +
                       shape_str(loss.shape));
    }
    grads_.assign(nodes_.size(), Tensor<S>{});
    accumulate(loss.node, Tensor<S>::full(loss.shape, S(1)));
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (grads_[i].data && nodes_[i].pull) {
        nodes_[i].pull(grads_[i]);
      }
    }
  }

  // Gradient of a watched tensor; zeros if nothing flowed into it.
  Tensor<S> grad(const Tensor<S>& t) const {
    if (t.node < 0 || static_cast<std::size_t>(t.node) >= grads_.size() ||
        !grads_[t.node].data) {
      return Tensor<S>::zeros(t.shape);
    }
    return grads_[t.node];
  }

  // Additive gradient accumulation (fan-out sums).
  void accumulate(int node, Tensor<S>&& g) {
    if (node < 0) return;
    Tensor<S>& slot = grads_[node];
    if (!slot.data) {
      slot = std::move(g);
    } else {
      detail::arr(slot) += detail::arr(g);
    }
  }

  // ---- operations -------------------------------------------------------

  Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("add", a, b);
    Tensor<S> out = Tensor<S>::zeros(a.shape);
    detail::arr(out) = detail::arr(a) + detail::arr(b);
    const int pa = a.node, pb = b.node;
    return record("add", out, {pa, pb}, [this, pa, pb](const Tensor<S>& g) {
      accumulate(pa, g.detached_copy());
      accumulate(pb, g.detached_copy());
    });
  }

  Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("sub", a, b);
    Tensor<S> out = Tensor<S>::zeros(a.shape);
    detail::arr(out) = detail::arr(a) - detail::arr(b);
    const int pa = a.node, pb = b.node;
    return record("sub", out, {pa, pb}, [this, pa, pb](const Tensor<S>& g) {
      accumulate(pa, g.detached_copy());
      if (pb >= 0) {
        Tensor<S> gb = Tensor<S>::zeros(g.shape);
        detail::arr(gb) = -detail::arr(g);
        accumulate(pb, std::move(gb));
      }
    });
  }

  Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("mul", a, b);
    Tensor<S> out = Tensor<S>::zeros(a.shape);
    detail::arr(out) = detail::arr(a) * detail::arr(b);
    const int pa = a.node, pb = b.node;
    auto sa = a.data, sb = b.data;
    return record("mul", out, {pa, pb},
                  [this, pa, pb, sa, sb](const Tensor<S>& g) {
                    if (pa >= 0) {
                      Tensor<S> ga = Tensor<S>::zeros(g.shape);
                      for (std::size_t i = 0; i < g.size(); ++i)
                        (*ga.data)[i] = (*g.data)[i] * (*sb)[i];
                      accumulate(pa, std::move(ga));
                    }
                    if (pb >= 0) {
                      Tensor<S> gb = Tensor<S>::zeros(g.shape);
                      for (std::size_t i = 0; i < g.size(); ++i)
                        (*gb.data)[i] = (*g.data)[i] * (*sa)[i];
                      accumulate(pb, std::move(gb));
                    }
                  });
  }

  Tensor<S> scale(const Tensor<S>& a, S c) {
    Tensor<S> out = Tensor<S>::zeros(a.shape);
    detail::arr(out) = detail::arr(a) * c;
    const int pa = a.node;
    return record("scale", out, {pa}, [this, pa, c](const Tensor<S>& g) {
      Tensor<S> ga = Tensor<S>::zeros(g.shape);
      detail::arr(ga) = detail::arr(g) * c;
      accumulate(pa, std::move(ga));
    });
  }

  // A (m x k) . B (k x n) -> (m x n).
  //
  // Deliberately a plain fixed-order loop rather than a GEMM call: every
  // tape.matmul site is small (dense layers over faces, GCN weight
  // transforms), and a fixed k-order accumulation makes each output row a
  // pure function of its input row contents. Blocked GEMM kernels can
  // round identical rows differently depending on their position, which
  // would break bit-exact permutation equivariance of the generator. The
  // heavy image-path GEMMs live inside conv2d and are unaffected.
  Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
      throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) +
                       " x " + shape_str(b.shape));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<S> out = Tensor<S>::zeros({m, n});
    plain_gemm(a.ptr(), b.ptr(), out.ptr(), m, k, n, false, false);
    const int pa = a.node, pb = b.node;
    auto sa = a.data, sb = b.data;
    return record(
        "matmul", out, {pa, pb},
        [this, pa, pb, sa, sb, m, k, n](const Tensor<S>& g) {
          if (pa >= 0) {
            Tensor<S> ga = Tensor<S>::zeros({m, k});
            // dA = g . B^T
            plain_gemm(g.ptr(), sb->data(), ga.ptr(), m, n, k, false, true);
            accumulate(pa, std::move(ga));
          }
          if (pb >= 0) {
            Tensor<S> gb = Tensor<S>::zeros({k, n});
            // dB = A^T . g
            plain_gemm(sa->data(), g.ptr(), gb.ptr(), k, m, n, true, false);
            accumulate(pb, std::move(gb));
          }
        });
  }

  // M (r x c) + row vector v (c), broadcast over rows.
  Tensor<S> add_rowvec(const Tensor<S>& m, const Tensor<S>& v) {
    if (m.ndim() != 2 || v.size() != static_cast<std::size_t>(m.cols())) {
      throw ShapeError("add_rowvec: " + shape_str(m.shape) + " + " +
                       shape_str(v.shape));
    }
    const int r = m.rows(), c = m.cols();
    Tensor<S> out = Tensor<S>::zeros(m.shape);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) + (*v.data)[j];
    const int pm = m.node, pv = v.node;
    return record("add_rowvec", out, {pm, pv},
                  [this, pm, pv, r, c](const Tensor<S>& g) {
                    accumulate(pm, g.detached_copy());
                    if (pv >= 0) {
                      Tensor<S> gv = Tensor<S>::zeros({c});
                      for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j)
                          (*gv.data)[j] += g.at(i, j);
                      accumulate(pv, std::move(gv));
                    }
                  });
  }

  // x (C x H x W) + b (C), broadcast over the spatial plane.
  Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
    if (x.ndim() != 3 || b.size() != static_cast<std::size_t>(x.dim(0))) {
      throw ShapeError("add_channel_bias: " + shape_str(x.shape) + " + " +
                       shape_str(b.shape));
    }
    const int C = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor<S> out = Tensor<S>::zeros(x.shape);
    for (int ch = 0; ch < C; ++ch) {
      const S bias = (*b.data)[ch];
      for (std::size_t i = 0; i < plane; ++i)
        (*out.data)[ch * plane + i] = (*x.data)[ch * plane + i] + bias;
    }
    const int px = x.node, pb = b.node;
    return record("add_channel_bias", out, {px, pb},
                  [this, px, pb, C, plane](const Tensor<S>& g) {
                    accumulate(px, g.detached_copy());
                    if (pb >= 0) {
                      Tensor<S> gb = Tensor<S>::zeros({C});
                      for (int ch = 0; ch < C; ++ch) {
                        S s = S(0);
                        for (std::size_t i = 0; i < plane; ++i)
                          s += (*g.data)[ch * plane + i];
                        (*gb.data)[ch] = s;
                      }
                      accumulate(pb, std::move(gb));
                    }
                  });
  }

  Tensor<S> activation(const Tensor<S>& x, Act kind, S slope = S(0.2)) {
    Tensor<S> out = Tensor<S>::zeros(x.shape);
    switch (kind) {
      case Act::relu:
        for (std::size_t i = 0; i < x.size(); ++i)
          (*out.data)[i] = (*x.data)[i] > S(0) ? (*x.data)[i] : S(0);
        break;
      case Act::leaky_relu:
        for (std::size_t i = 0; i < x.size(); ++i)
          (*out.data)[i] =
              (*x.data)[i] > S(0) ? (*x.data)[i] : slope * (*x.data)[i];
        break;
      case Act::sigmoid:
        for (std::size_t i = 0; i < x.size(); ++i)
          (*out.data)[i] = detail::stable_sigmoid((*x.data)[i]);
        break;
      case Act::tanh_:
        for (std::size_t i = 0; i < x.size(); ++i)
          (*out.data)[i] = std::tanh((*x.data)[i]);
        break;
    }
    const int px = x.node;
    auto sx = x.data, sy = out.data;
    return record(
        "activation", out, {px},
        [this, px, sx, sy, kind, slope](const Tensor<S>& g) {
          Tensor<S> gx = Tensor<S>::zeros(g.shape);
          switch (kind) {
            case Act::relu:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gx.data)[i] = (*sx)[i] > S(0) ? (*g.data)[i] : S(0);
              break;
            case Act::leaky_relu:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gx.data)[i] =
                    (*sx)[i] > S(0) ? (*g.data)[i] : slope * (*g.data)[i];
              break;
            case Act::sigmoid:
              // sigma' = y (1 - y)
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gx.data)[i] = (*g.data)[i] * (*sy)[i] * (S(1) - (*sy)[i]);
              break;
            case Act::tanh_:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gx.data)[i] = (*g.data)[i] * (S(1) - (*sy)[i] * (*sy)[i]);
              break;
          }
          accumulate(px, std::move(gx));
        });
  }

  // Cross-correlation of x (C x H x W) with kernels (O x C x k x k) at the
  // given stride and explicit zero padding. "Same" output size for stride 1
  // needs pad = k/2 with odd k; even kernels require an explicit pad (the
  // DCGAN-style k=4, stride 2, pad 1 halves the plane). Lowered to a single
  // GEMM via im2col; the column matrix is kept for the backward pass.
  Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernels, int stride,
                   int pad) {
    if (x.ndim() != 3 || kernels.ndim() != 4 || kernels.dim(1) != x.dim(0) ||
        kernels.dim(2) != kernels.dim(3)) {
      throw ShapeError("conv2d: input " + shape_str(x.shape) + ", kernels " +
                       shape_str(kernels.shape));
    }
    if (stride < 1 || pad < 0) {
      throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
    }
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int O = kernels.dim(0), k = kernels.dim(2);
    const int Hout = (H + 2 * pad - k) / stride + 1;
    const int Wout = (W + 2 * pad - k) / stride + 1;
    if (H + 2 * pad < k || W + 2 * pad < k) {
      throw ShapeError("conv2d: kernel larger than padded input");
    }
    const int ckk = C * k * k;
    const int P = Hout * Wout;

    Tensor<S> cols = Tensor<S>::zeros({ckk, P});
    im2col(x.ptr(), C, H, W, k, stride, pad, Hout, Wout, cols.ptr());

    Tensor<S> out = Tensor<S>::zeros({O, Hout, Wout});
    Eigen::Map<MatRM<S>> ym(out.ptr(), O, P);
    Eigen::Map<const MatRM<S>> km(kernels.ptr(), O, ckk);
    Eigen::Map<const MatRM<S>> cm(cols.ptr(), ckk, P);
    ym.noalias() = km * cm;

    const int px = x.node, pk = kernels.node;
    auto scols = cols.data, skern = kernels.data;
    return record(
        "conv2d", out, {px, pk},
        [this, px, pk, scols, skern, C, H, W, O, k, stride, pad, Hout, Wout,
         ckk, P](const Tensor<S>& g) {
          Eigen::Map<const MatRM<S>> gm(g.ptr(), O, P);
          if (pk >= 0) {
            Tensor<S> gk = Tensor<S>::zeros({O, C, k, k});
            Eigen::Map<MatRM<S>> gkm(gk.ptr(), O, ckk);
            Eigen::Map<const MatRM<S>> cm(scols->data(), ckk, P);
            gkm.noalias() = gm * cm.transpose();
            accumulate(pk, std::move(gk));
          }
          if (px >= 0) {
            MatRM<S> dcols(ckk, P);
            Eigen::Map<const MatRM<S>> km(skern->data(), O, ckk);
            dcols.noalias() = km.transpose() * gm;
            Tensor<S> gx = Tensor<S>::zeros({C, H, W});
            col2im(dcols.data(), C, H, W, k, stride, pad, Hout, Wout,
                   gx.ptr());
            accumulate(px, std::move(gx));
          }
        });
  }

  // h_out = A_hat . h, where A_hat is the fixed symmetric-normalized
  // adjacency. The addends of every output element are sorted by value
  // before summing so the result is bit-identical under any relabeling of
  // the nodes (the addend multiset is permutation-invariant). The adjacency
  // is captured by reference and must outlive the tape.
  Tensor<S> spmm(const NormalizedAdjacency& adj, const Tensor<S>& h) {
    if (h.ndim() != 2 || h.rows() != adj.num_nodes) {
      throw ShapeError("spmm: features " + shape_str(h.shape) + " vs " +
                       std::to_string(adj.num_nodes) + " nodes");
    }
    Tensor<S> out = spmm_values(adj, h);
    const int ph = h.node;
    const NormalizedAdjacency* padj = &adj;
    return record("spmm", out, {ph}, [this, ph, padj](const Tensor<S>& g) {
      // A_hat is symmetric, so the input gradient is another spmm.
      accumulate(ph, spmm_values(*padj, g));
    });
  }

  // Appends the same copy of z to every row of h: (v x f), (d) -> (v x f+d).
  Tensor<S> replicate_concat(const Tensor<S>& h, const Tensor<S>& z) {
    if (h.ndim() != 2 || z.ndim() != 1) {
      throw ShapeError("replicate_concat: " + shape_str(h.shape) + ", " +
                       shape_str(z.shape));
    }
    const int v = h.rows(), f = h.cols();
    const int d = static_cast<int>(z.size());
    Tensor<S> out = Tensor<S>::zeros({v, f + d});
    for (int i = 0; i < v; ++i) {
      for (int j = 0; j < f; ++j) out.at(i, j) = h.at(i, j);
      for (int j = 0; j < d; ++j) out.at(i, f + j) = (*z.data)[j];
    }
    const int ph = h.node, pz = z.node;
    return record("replicate_concat", out, {ph, pz},
                  [this, ph, pz, v, f, d](const Tensor<S>& g) {
                    if (ph >= 0) {
                      Tensor<S> gh = Tensor<S>::zeros({v, f});
                      for (int i = 0; i < v; ++i)
                        for (int j = 0; j < f; ++j) gh.at(i, j) = g.at(i, j);
                      accumulate(ph, std::move(gh));
                    }
                    if (pz >= 0) {
                      Tensor<S> gz = Tensor<S>::zeros({d});
                      for (int i = 0; i < v; ++i)
                        for (int j = 0; j < d; ++j)
                          (*gz.data)[j] += g.at(i, f + j);
                      accumulate(pz, std::move(gz));
                    }
                  });
  }

  // Per-channel normalization over the spatial plane of a single image
  // (C x H x W), with learnable scale and shift.
  Tensor<S> instance_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                          const Tensor<S>& beta, S eps = S(1e-5)) {
    if (x.ndim() != 3 || gamma.size() != static_cast<std::size_t>(x.dim(0)) ||
        beta.size() != gamma.size()) {
      throw ShapeError("instance_norm: " + shape_str(x.shape));
    }
    const int C = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor<S> out = Tensor<S>::zeros(x.shape);
    auto xhat = std::make_shared<std::vector<S>>(x.size());
    auto inv_std = std::make_shared<std::vector<S>>(C);
    for (int ch = 0; ch < C; ++ch) {
      const S* xc = x.ptr() + ch * plane;
      S mean = S(0);
      for (std::size_t i = 0; i < plane; ++i) mean += xc[i];
      mean /= static_cast<S>(plane);
      S var = S(0);
      for (std::size_t i = 0; i < plane; ++i) {
        const S d = xc[i] - mean;
        var += d * d;
      }
      var /= static_cast<S>(plane);
      const S is = S(1) / std::sqrt(var + eps);
      (*inv_std)[ch] = is;
      const S gm = (*gamma.data)[ch], bt = (*beta.data)[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const S xh = (xc[i] - mean) * is;
        (*xhat)[ch * plane + i] = xh;
        (*out.data)[ch * plane + i] = gm * xh + bt;
      }
    }
    const int px = x.node, pg = gamma.node, pb = beta.node;
    auto sgamma = gamma.data;
    const Shape xshape = x.shape;
    return record(
        "instance_norm", out, {px, pg, pb},
        [this, px, pg, pb, xhat, inv_std, sgamma, C, plane,
         xshape](const Tensor<S>& g) {
          if (pb >= 0) {
            Tensor<S> gb = Tensor<S>::zeros({C});
            for (int ch = 0; ch < C; ++ch) {
              S s = S(0);
              for (std::size_t i = 0; i < plane; ++i)
                s += (*g.data)[ch * plane + i];
              (*gb.data)[ch] = s;
            }
            accumulate(pb, std::move(gb));
          }
          if (pg >= 0) {
            Tensor<S> gg = Tensor<S>::zeros({C});
            for (int ch = 0; ch < C; ++ch) {
              S s = S(0);
              for (std::size_t i = 0; i < plane; ++i)
                s += (*g.data)[ch * plane + i] * (*xhat)[ch * plane + i];
              (*gg.data)[ch] = s;
            }
            accumulate(pg, std::move(gg));
          }
          if (px >= 0) {
            Tensor<S> gx = Tensor<S>::zeros(xshape);
            for (int ch = 0; ch < C; ++ch) {
              const S* gc = g.ptr() + ch * plane;
              const S* xh = xhat->data() + ch * plane;
              S mean_g = S(0), mean_gx = S(0);
              for (std::size_t i = 0; i < plane; ++i) {
                mean_g += gc[i];
                mean_gx += gc[i] * xh[i];
              }
              mean_g /= static_cast<S>(plane);
              mean_gx /= static_cast<S>(plane);
              const S coef = (*sgamma)[ch] * (*inv_std)[ch];
              for (std::size_t i = 0; i < plane; ++i) {
                (*gx.data)[ch * plane + i] =
                    coef * (gc[i] - mean_g - xh[i] * mean_gx);
              }
            }
            accumulate(px, std::move(gx));
          }
        });
  }

  // (C x H x W) -> (C), mean over the spatial plane.
  Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.ndim() != 3) {
      throw ShapeError("global_avg_pool: expected 3-d, got " +
                       shape_str(x.shape));
    }
    const int C = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor<S> out = Tensor<S>::zeros({C});
    for (int ch = 0; ch < C; ++ch) {
      S s = S(0);
      for (std::size_t i = 0; i < plane; ++i) s += (*x.data)[ch * plane + i];
      (*out.data)[ch] = s / static_cast<S>(plane);
    }
    const int px = x.node;
    const Shape xshape = x.shape;
    return record("global_avg_pool", out, {px},
                  [this, px, xshape, C, plane](const Tensor<S>& g) {
                    Tensor<S> gx = Tensor<S>::zeros(xshape);
                    for (int ch = 0; ch < C; ++ch) {
                      const S v = (*g.data)[ch] / static_cast<S>(plane);
                      for (std::size_t i = 0; i < plane; ++i)
                        (*gx.data)[ch * plane + i] = v;
                    }
                    accumulate(px, std::move(gx));
                  });
  }

  Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
      throw ShapeError("reshape: " + shape_str(x.shape) + " -> " +
                       shape_str(shape));
    }
    Tensor<S> out;
    out.shape = std::move(shape);
    out.data = std::make_shared<std::vector<S>>(*x.data);
    const int px = x.node;
    const Shape xshape = x.shape;
    return record("reshape", out, {px},
                  [this, px, xshape](const Tensor<S>& g) {
                    Tensor<S> gx;
                    gx.shape = xshape;
                    gx.data = std::make_shared<std::vector<S>>(*g.data);
                    accumulate(px, std::move(gx));
                  });
  }

  // (H x W x 3) image to (3 x H x W) for the conv stacks.
  Tensor<S> hwc_to_chw(const Tensor<S>& x) {
    if (x.ndim() != 3 || x.dim(2) != 3) {
      throw ShapeError("hwc_to_chw: expected (H,W,3), got " +
                       shape_str(x.shape));
    }
    const int H = x.dim(0), W = x.dim(1);
    Tensor<S> out = Tensor<S>::zeros({3, H, W});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int c = 0; c < 3; ++c)
          (*out.data)[(c * H + i) * W + j] = (*x.data)[(i * W + j) * 3 + c];
    const int px = x.node;
    return record("hwc_to_chw", out, {px},
                  [this, px, H, W](const Tensor<S>& g) {
                    Tensor<S> gx = Tensor<S>::zeros({H, W, 3});
                    for (int i = 0; i < H; ++i)
                      for (int j = 0; j < W; ++j)
                        for (int c = 0; c < 3; ++c)
                          (*gx.data)[(i * W + j) * 3 + c] =
                              (*g.data)[(c * H + i) * W + j];
                    accumulate(px, std::move(gx));
                  });
  }

  Tensor<S> sum_all(const Tensor<S>& x) {
    S s = S(0);
    for (std::size_t i = 0; i < x.size(); ++i) s += (*x.data)[i];
    Tensor<S> out = Tensor<S>::scalar(s);
    const int px = x.node;
    const Shape xshape = x.shape;
    return record("sum_all", out, {px},
                  [this, px, xshape](const Tensor<S>& g) {
                    accumulate(px, Tensor<S>::full(xshape, (*g.data)[0]));
                  });
  }

  Tensor<S> mean_all(const Tensor<S>& x) {
    return scale(sum_all(x), S(1) / static_cast<S>(x.size()));
  }

  // Numerically stable mean binary cross-entropy on logits. Targets are a
  // constant tensor of the same shape with entries in {0, 1}.
  Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
    require_same_shape("bce_with_logits", logits, targets);
    const std::size_t n = logits.size();
    S loss = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      const S x = (*logits.data)[i];
      const S t = (*targets.data)[i];
      loss += std::max(x, S(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<S>(n);
    Tensor<S> out = Tensor<S>::scalar(loss);
    const int px = logits.node;
    auto sx = logits.data, st = targets.data;
    const Shape xshape = logits.shape;
    return record("bce_with_logits", out, {px},
                  [this, px, sx, st, n, xshape](const Tensor<S>& g) {
                    const S go = (*g.data)[0] / static_cast<S>(n);
                    Tensor<S> gx = Tensor<S>::zeros(xshape);
                    for (std::size_t i = 0; i < n; ++i) {
                      (*gx.data)[i] =
                          go * (detail::stable_sigmoid((*sx)[i]) - (*st)[i]);
                    }
                    accumulate(px, std::move(gx));
                  });
  }

  // Mean squared difference, scalar.
  Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("mse", a, b);
    const std::size_t n = a.size();
    S loss = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      const S d = (*a.data)[i] - (*b.data)[i];
      loss += d * d;
    }
    loss /= static_cast<S>(n);
    Tensor<S> out = Tensor<S>::scalar(loss);
    const int pa = a.node, pb = b.node;
    auto sa = a.data, sb = b.data;
    const Shape ashape = a.shape;
    return record("mse", out, {pa, pb},
                  [this, pa, pb, sa, sb, n, ashape](const Tensor<S>& g) {
                    const S go = S(2) * (*g.data)[0] / static_cast<S>(n);
                    if (pa >= 0) {
                      Tensor<S> ga = Tensor<S>::zeros(ashape);
                      for (std::size_t i = 0; i < n; ++i)
                        (*ga.data)[i] = go * ((*sa)[i] - (*sb)[i]);
                      accumulate(pa, std::move(ga));
                    }
                    if (pb >= 0) {
                      Tensor<S> gb = Tensor<S>::zeros(ashape);
                      for (std::size_t i = 0; i < n; ++i)
                        (*gb.data)[i] = -go * ((*sa)[i] - (*sb)[i]);
                      accumulate(pb, std::move(gb));
                    }
                  });
  }

  // Collects k scalar tensors into a (k) vector.
  Tensor<S> stack_scalars(const std::vector<Tensor<S>>& xs) {
    const int k = static_cast<int>(xs.size());
    Tensor<S> out = Tensor<S>::zeros({k});
    std::vector<int> parents(xs.size());
    for (int i = 0; i < k; ++i) {
      if (xs[i].size() != 1) {
        throw ShapeError("stack_scalars: element " + std::to_string(i) +
                         " is not scalar");
      }
      (*out.data)[i] = (*xs[i].data)[0];
      parents[i] = xs[i].node;
    }
    return record("stack_scalars", out, parents,
                  [this, parents](const Tensor<S>& g) {
                    for (std::size_t i = 0; i < parents.size(); ++i) {
                      if (parents[i] >= 0)
                        accumulate(static_cast<int>(parents[i]),
                                   Tensor<S>::scalar((*g.data)[i]));
                    }
                  });
  }

  // Escape hatch for domain ops (the renderer records its scatter backward
  // through this). `pull` receives the output gradient and must call
  // accumulate() on the parent nodes it captured.
  Tensor<S> custom(const std::string& name, Tensor<S> value,
                   const std::vector<int>& parents,
                   std::function<void(const Tensor<S>&)> pull) {
    return record(name.c_str(), value, parents, std::move(pull));
  }

 private:
  struct Node {
    std::function<void(const Tensor<S>&)> pull;
  };

  int add_node(std::function<void(const Tensor<S>&)> pull) {
    nodes_.push_back(Node{std::move(pull)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  static void require_same_shape(const char* op, const Tensor<S>& a,
                                 const Tensor<S>& b) {
    if (!a.same_shape(b)) {
      throw ShapeError(std::string(op) + ": shape mismatch " +
                       shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
  }

  // Finite-checks the output, then registers the node only when recording
  // and at least one parent is watched; otherwise the result is a constant.
  Tensor<S> record(const char* op, Tensor<S>& out,
                   const std::vector<int>& parents,
                   std::function<void(const Tensor<S>&)> pull) {
    if (!out.all_finite()) {
      throw NumericalError(std::string(op) + " produced non-finite values");
    }
    bool any_watched = false;
    for (int p : parents) {
      if (p >= 0) any_watched = true;
    }
    out.node = (recording_ && any_watched) ? add_node(std::move(pull)) : -1;
    return out;
  }

  // C (m x n) = op(A) . op(B) with fixed i,j,k loop order; op transposes
  // the indexing, not the data. A is m x ka (or ka x m when transposed),
  // where ka is the contraction length.
  static void plain_gemm(const S* a, const S* b, S* c, int m, int ka, int n,
                         bool trans_a, bool trans_b) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        S s = S(0);
        for (int t = 0; t < ka; ++t) {
          const S av = trans_a ? a[static_cast<std::size_t>(t) * m + i]
                               : a[static_cast<std::size_t>(i) * ka + t];
          const S bv = trans_b ? b[static_cast<std::size_t>(j) * ka + t]
                               : b[static_cast<std::size_t>(t) * n + j];
          s += av * bv;
        }
        c[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
  }

  static void im2col(const S* x, int C, int H, int W, int k, int stride,
                     int pad, int Hout, int Wout, S* cols) {
    const int P = Hout * Wout;
    for (int c = 0; c < C; ++c) {
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          S* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * P;
          for (int oy = 0; oy < Hout; ++oy) {
            const int iy = oy * stride - pad + ki;
            for (int ox = 0; ox < Wout; ++ox) {
              const int ix = ox * stride - pad + kj;
              row[oy * Wout + ox] =
                  (iy >= 0 && iy < H && ix >= 0 && ix < W)
                      ? x[(static_cast<std::size_t>(c) * H + iy) * W + ix]
                      : S(0);
            }
          }
        }
      }
    }
  }

  static void col2im(const S* cols, int C, int H, int W, int k, int stride,
                     int pad, int Hout, int Wout, S* x) {
    const int P = Hout * Wout;
    for (int c = 0; c < C; ++c) {
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          const S* row =
              cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * P;
          for (int oy = 0; oy < Hout; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Wout; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix < 0 || ix >= W) continue;
              x[(static_cast<std::size_t>(c) * H + iy) * W + ix] +=
                  row[oy * Wout + ox];
            }
          }
        }
      }
    }
  }

  static Tensor<S> spmm_values(const NormalizedAdjacency& adj,
                               const Tensor<S>& h) {
    const int n = adj.num_nodes;
    const int c = h.cols();
    Tensor<S> out = Tensor<S>::zeros({n, c});
    std::vector<S> addends;
    for (int i = 0; i < n; ++i) {
      const auto nb = adj.neighbors_of(i);
      const auto wt = adj.weights_of(i);
      for (int col = 0; col < c; ++col) {
        addends.clear();
        for (std::size_t t = 0; t < nb.size(); ++t) {
          addends.push_back(static_cast<S>(wt[t]) * h.at(nb[t], col));
        }
        std::sort(addends.begin(), addends.end());
        S s = S(0);
        for (S a : addends) s += a;
        out.at(i, col) = s;
      }
    }
    return out;
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<S>> grads_;
  bool recording_;
};

// One graph-convolution application: A_hat . H . W (activation applied by
// the caller). A_hat is fixed per mesh and receives no gradient.
template <typename S>
Tensor<S> gcn_conv(Tape<S>& tape, const NormalizedAdjacency& adj,
                   const Tensor<S>& h, const Tensor<S>& w) {
  return tape.matmul(tape.spmm(adj, h), w);
}

}  // namespace meshtex
