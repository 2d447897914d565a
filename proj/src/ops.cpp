#include "apn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "apn/errors.hpp"

namespace apn {
namespace {

thread_local std::string g_faulty_op;

double backward_sign(const char* op) { return g_faulty_op == op ? -1.0 : 1.0; }

void require_ndim(const Tensor& t, std::size_t n, const char* what) {
  if (t.ndim() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + "-d tensor, got " +
                         shape_string(t.shape()));
  }
}

std::uint64_t hash_mask(const std::vector<bool>& mask) {
  std::uint64_t h = 1469598103934665603ull;
  for (bool b : mask) {
    h ^= b ? 0x5bull : 0x17ull;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void validate_partition(const IndexGroups& groups, std::size_t k) {
  std::vector<int> seen(k, 0);
  for (std::size_t l = 0; l < groups.size(); ++l) {
    if (groups[l].empty()) throw ContractError("attribute group " + std::to_string(l) + " is empty");
    for (std::size_t idx : groups[l]) {
      if (idx >= k) {
        throw ContractError("attribute group index " + std::to_string(idx) + " out of range (K=" +
                            std::to_string(k) + ")");
      }
      if (seen[idx]++) {
        throw ContractError("attribute " + std::to_string(idx) + " appears in more than one group");
      }
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!seen[i]) throw ContractError("attribute " + std::to_string(i) + " is not in any group");
  }
}

namespace ops {

NodeId conv2d(Tape& tape, NodeId input, NodeId kernels, NodeId bias, std::size_t stride,
              std::size_t pad) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(kernels);
  const Tensor& b = tape.value(bias);
  require_ndim(x, 3, "conv2d input");
  require_ndim(w, 4, "conv2d kernels");
  require_ndim(b, 1, "conv2d bias");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw DimensionError("conv2d: kernels expect " + std::to_string(w.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  }
  if (w.dim(3) != k) throw DimensionError("conv2d: kernels must be square");
  if (b.dim(0) != cout) throw DimensionError("conv2d: bias length must equal output channels");
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (k > h + 2 * pad || k > wd + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");

  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
  const std::size_t rows = cin * k * k, cols_n = ho * wo;

  // im2col: cols[r][p], r = (ci*k + ki)*k + kj, p = oy*wo + ox.
  auto cols = std::make_shared<std::vector<double>>(rows * cols_n, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* dst = cols->data() + ((ci * k + ki) * k + kj) * cols_n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ki) - std::ptrdiff_t(pad);
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          const double* src = x.data().data() + (ci * h + std::size_t(iy)) * wd;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kj) - std::ptrdiff_t(pad);
            if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
            dst[oy * wo + ox] = src[ix];
          }
        }
      }

  Tensor out(Shape{cout, ho, wo});
  const double* wp = w.data().data();
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data().data() + co * cols_n;
    std::fill(o, o + cols_n, b[co]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double kv = wp[co * rows + r];
      const double* c = cols->data() + r * cols_n;
      for (std::size_t p = 0; p < cols_n; ++p) o[p] += kv * c[p];
    }
  }

  const Tape* tp = &tape;
  return tape.record(
      std::move(out), {input, kernels, bias},
      [tp, kernels, cols, cin, h, wd, cout, k, ho, wo, stride, pad](
          const Tensor& g, std::span<Tensor* const> grads) {
        const double sign = backward_sign("conv2d");
        const std::size_t rows = cin * k * k, cols_n = ho * wo;
        const double* gp = g.data().data();
        if (Tensor* gb = grads[2]) {
          for (std::size_t co = 0; co < cout; ++co) {
            double s = 0.0;
            for (std::size_t p = 0; p < cols_n; ++p) s += gp[co * cols_n + p];
            (*gb)[co] += sign * s;
          }
        }
        if (Tensor* gw = grads[1]) {
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t r = 0; r < rows; ++r) {
              const double* c = cols->data() + r * cols_n;
              const double* gg = gp + co * cols_n;
              double s = 0.0;
              for (std::size_t p = 0; p < cols_n; ++p) s += gg[p] * c[p];
              (*gw)[co * rows + r] += sign * s;
            }
        }
        if (Tensor* gx = grads[0]) {
          const double* wp = tp->value(kernels).data().data();
          std::vector<double> dcols(rows * cols_n, 0.0);
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t r = 0; r < rows; ++r) {
              const double kv = wp[co * rows + r];
              const double* gg = gp + co * cols_n;
              double* d = dcols.data() + r * cols_n;
              for (std::size_t p = 0; p < cols_n; ++p) d[p] += kv * gg[p];
            }
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const double* src = dcols.data() + ((ci * k + ki) * k + kj) * cols_n;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ki) - std::ptrdiff_t(pad);
                  if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                  double* dst = gx->data().data() + (ci * h + std::size_t(iy)) * wd;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kj) - std::ptrdiff_t(pad);
                    if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                    dst[ix] += sign * src[oy * wo + ox];
                  }
                }
              }
        }
      });
}

NodeId relu(Tape& tape, NodeId x) {
  const Tensor& in = tape.value(x);
  Tensor out(in.shape());
  std::vector<bool> mask(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = in[i] > 0.0;
    out[i] = mask[i] ? in[i] : 0.0;
  }
  tape.note_branch(hash_mask(mask));
  return tape.record(std::move(out), {x},
                     [mask = std::move(mask)](const Tensor& g, std::span<Tensor* const> grads) {
                       if (Tensor* gx = grads[0]) {
                         const double sign = backward_sign("relu");
                         for (std::size_t i = 0; i < g.size(); ++i)
                           if (mask[i]) (*gx)[i] += sign * g[i];
                       }
                     });
}

NodeId chw_to_hwc(Tape& tape, NodeId x) {
  const Tensor& in = tape.value(x);
  require_ndim(in, 3, "chw_to_hwc");
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  Tensor out(Shape{h, w, c});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, j, ci) = in.at(ci, i, j);
  return tape.record(std::move(out), {x},
                     [c, h, w](const Tensor& g, std::span<Tensor* const> grads) {
                       if (Tensor* gx = grads[0]) {
                         const double sign = backward_sign("chw_to_hwc");
                         for (std::size_t ci = 0; ci < c; ++ci)
                           for (std::size_t i = 0; i < h; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               gx->at(ci, i, j) += sign * g.at(i, j, ci);
                       }
                     });
}

NodeId global_avg_pool(Tape& tape, NodeId fmap) {
  const Tensor& f = tape.value(fmap);
  require_ndim(f, 3, "global_avg_pool");
  const std::size_t cells = f.dim(0) * f.dim(1), c = f.dim(2);
  Tensor out(Shape{c});
  for (std::size_t p = 0; p < cells; ++p)
    for (std::size_t ci = 0; ci < c; ++ci) out[ci] += f[p * c + ci];
  out *= 1.0 / double(cells);
  return tape.record(std::move(out), {fmap},
                     [cells, c](const Tensor& g, std::span<Tensor* const> grads) {
                       if (Tensor* gf = grads[0]) {
                         const double scale = backward_sign("global_avg_pool") / double(cells);
                         for (std::size_t p = 0; p < cells; ++p)
                           for (std::size_t ci = 0; ci < c; ++ci) (*gf)[p * c + ci] += scale * g[ci];
                       }
                     });
}

NodeId vec_mat(Tape& tape, NodeId v, NodeId m) {
  const Tensor& vv = tape.value(v);
  const Tensor& mm = tape.value(m);
  require_ndim(vv, 1, "vec_mat vector");
  require_ndim(mm, 2, "vec_mat matrix");
  if (mm.dim(0) != vv.dim(0)) {
    throw DimensionError("vec_mat: " + shape_string(vv.shape()) + " x " + shape_string(mm.shape()));
  }
  const std::size_t c = mm.dim(0), k = mm.dim(1);
  Tensor out(Shape{k});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += vv[i] * mm.at(i, j);
  const Tape* tp = &tape;
  return tape.record(std::move(out), {v, m},
                     [tp, v, m, c, k](const Tensor& g, std::span<Tensor* const> grads) {
                       const double sign = backward_sign("vec_mat");
                       const Tensor& vv = tp->value(v);
                       const Tensor& mm = tp->value(m);
                       if (Tensor* gv = grads[0]) {
                         for (std::size_t i = 0; i < c; ++i) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < k; ++j) s += mm.at(i, j) * g[j];
                           (*gv)[i] += sign * s;
                         }
                       }
                       if (Tensor* gm = grads[1]) {
                         for (std::size_t i = 0; i < c; ++i)
                           for (std::size_t j = 0; j < k; ++j) gm->at(i, j) += sign * vv[i] * g[j];
                       }
                     });
}

NodeId mat_vec(Tape& tape, NodeId m, NodeId v) {
  const Tensor& mm = tape.value(m);
  const Tensor& vv = tape.value(v);
  require_ndim(mm, 2, "mat_vec matrix");
  require_ndim(vv, 1, "mat_vec vector");
  if (mm.dim(1) != vv.dim(0)) {
    throw DimensionError("mat_vec: " + shape_string(mm.shape()) + " x " + shape_string(vv.shape()));
  }
  const std::size_t n = mm.dim(0), k = mm.dim(1);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += mm.at(i, j) * vv[j];
    out[i] = s;
  }
  const Tape* tp = &tape;
  return tape.record(std::move(out), {m, v},
                     [tp, m, v, n, k](const Tensor& g, std::span<Tensor* const> grads) {
                       const double sign = backward_sign("mat_vec");
                       const Tensor& mm = tp->value(m);
                       const Tensor& vv = tp->value(v);
                       if (Tensor* gm = grads[0]) {
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < k; ++j) gm->at(i, j) += sign * g[i] * vv[j];
                       }
                       if (Tensor* gv = grads[1]) {
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < k; ++j) (*gv)[j] += sign * g[i] * mm.at(i, j);
                       }
                     });
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::size_t label) {
  const Tensor& z = tape.value(logits);
  require_ndim(z, 1, "softmax_cross_entropy");
  if (label >= z.size()) {
    throw ContractError("label index " + std::to_string(label) + " out of range for " +
                        std::to_string(z.size()) + " logits");
  }
  const double m = *std::max_element(z.data().begin(), z.data().end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  const double loss = std::log(total) - (z[label] - m);
  return tape.record(Tensor::scalar(loss), {logits},
                     [p = std::move(p), label](const Tensor& g, std::span<Tensor* const> grads) {
                       if (Tensor* gz = grads[0]) {
                         const double s = backward_sign("softmax_cross_entropy") * g[0];
                         for (std::size_t i = 0; i < p.size(); ++i)
                           (*gz)[i] += s * (p[i] - (i == label ? 1.0 : 0.0));
                       }
                     });
}

NodeId fiber_inner_products(Tape& tape, NodeId fmap, NodeId protos) {
  const Tensor& f = tape.value(fmap);
  const Tensor& pr = tape.value(protos);
  require_ndim(f, 3, "similarity feature map");
  require_ndim(pr, 2, "prototype matrix");
  const std::size_t h = f.dim(0), w = f.dim(1), c = f.dim(2), k = pr.dim(0);
  if (pr.dim(1) != c) {
    throw DimensionError("prototype length " + std::to_string(pr.dim(1)) +
                         " does not match feature channels " + std::to_string(c));
  }
  const std::size_t cells = h * w;
  Tensor out(Shape{k, h, w});
  const double* fp = f.data().data();
  const double* pp = pr.data().data();
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t p = 0; p < cells; ++p) {
      double s = 0.0;
      for (std::size_t ci = 0; ci < c; ++ci) s += pp[kk * c + ci] * fp[p * c + ci];
      out[kk * cells + p] = s;
    }
  const Tape* tp = &tape;
  return tape.record(std::move(out), {fmap, protos},
                     [tp, fmap, protos, cells, c, k](const Tensor& g, std::span<Tensor* const> grads) {
                       const double sign = backward_sign("fiber_inner_products");
                       const double* fp = tp->value(fmap).data().data();
                       const double* pp = tp->value(protos).data().data();
                       if (Tensor* gf = grads[0]) {
                         for (std::size_t kk = 0; kk < k; ++kk)
                           for (std::size_t p = 0; p < cells; ++p) {
                             const double gv = sign * g[kk * cells + p];
                             if (gv == 0.0) continue;
                             for (std::size_t ci = 0; ci < c; ++ci) (*gf)[p * c + ci] += gv * pp[kk * c + ci];
                           }
                       }
                       if (Tensor* gp = grads[1]) {
                         for (std::size_t kk = 0; kk < k; ++kk)
                           for (std::size_t p = 0; p < cells; ++p) {
                             const double gv = sign * g[kk * cells + p];
                             if (gv == 0.0) continue;
                             for (std::size_t ci = 0; ci < c; ++ci) (*gp)[kk * c + ci] += gv * fp[p * c + ci];
                           }
                       }
                     });
}

SpatialMax spatial_max(Tape& tape, NodeId maps) {
  const Tensor& m = tape.value(maps);
  require_ndim(m, 3, "spatial_max");
  const std::size_t k = m.dim(0), cells = m.dim(1) * m.dim(2);
  Tensor values(Shape{k});
  std::vector<std::size_t> argmax(k, 0);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* row = m.data().data() + kk * cells;
    std::size_t best = 0;
    for (std::size_t p = 1; p < cells; ++p)
      if (row[p] > row[best]) best = p;
    argmax[kk] = best;
    values[kk] = row[best];
    tape.note_branch(best);
  }
  const NodeId id = tape.record(std::move(values), {maps},
                                [argmax, cells](const Tensor& g, std::span<Tensor* const> grads) {
                                  if (Tensor* gm = grads[0]) {
                                    const double sign = backward_sign("spatial_max");
                                    for (std::size_t kk = 0; kk < argmax.size(); ++kk)
                                      (*gm)[kk * cells + argmax[kk]] += sign * g[kk];
                                  }
                                });
  return SpatialMax{id, std::move(argmax)};
}

NodeId squared_distance(Tape& tape, NodeId a, NodeId b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.size() != bv.size()) {
    throw DimensionError("squared_distance: length " + std::to_string(av.size()) + " vs " +
                         std::to_string(bv.size()));
  }
  std::vector<double> diff(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    diff[i] = av[i] - bv[i];
    s += diff[i] * diff[i];
  }
  return tape.record(Tensor::scalar(s), {a, b},
                     [diff = std::move(diff)](const Tensor& g, std::span<Tensor* const> grads) {
                       const double s = 2.0 * backward_sign("squared_distance") * g[0];
                       if (Tensor* ga = grads[0])
                         for (std::size_t i = 0; i < diff.size(); ++i) (*ga)[i] += s * diff[i];
                       if (Tensor* gb = grads[1])
                         for (std::size_t i = 0; i < diff.size(); ++i) (*gb)[i] -= s * diff[i];
                     });
}

NodeId group_norm_sum(Tape& tape, NodeId protos, const IndexGroups& groups, double eps) {
  const Tensor& pr = tape.value(protos);
  require_ndim(pr, 2, "group_norm_sum");
  const std::size_t k = pr.dim(0), c = pr.dim(1);
  validate_partition(groups, k);
  // norms[l * c + ci] = || P^{S_l}_c ||, smoothed.
  std::vector<double> norms(groups.size() * c);
  double total = 0.0;
  for (std::size_t l = 0; l < groups.size(); ++l)
    for (std::size_t ci = 0; ci < c; ++ci) {
      double s = eps;
      for (std::size_t idx : groups[l]) s += pr.at(idx, ci) * pr.at(idx, ci);
      norms[l * c + ci] = std::sqrt(s);
      total += norms[l * c + ci];
    }
  const Tape* tp = &tape;
  return tape.record(Tensor::scalar(total), {protos},
                     [tp, protos, groups, norms = std::move(norms), c](
                         const Tensor& g, std::span<Tensor* const> grads) {
                       Tensor* gp = grads[0];
                       if (!gp) return;
                       const double s = backward_sign("group_norm_sum") * g[0];
                       const Tensor& pr = tp->value(protos);
                       for (std::size_t l = 0; l < groups.size(); ++l)
                         for (std::size_t ci = 0; ci < c; ++ci) {
                           const double n = norms[l * c + ci];
                           for (std::size_t idx : groups[l]) gp->at(idx, ci) += s * pr.at(idx, ci) / n;
                         }
                     });
}

NodeId compactness(Tape& tape, NodeId maps, std::span<const std::size_t> peaks,
                   bool clamp_negative) {
  const Tensor& m = tape.value(maps);
  require_ndim(m, 3, "compactness");
  const std::size_t k = m.dim(0), h = m.dim(1), w = m.dim(2), cells = h * w;
  if (peaks.size() != k) throw DimensionError("compactness: one peak per map required");
  // Per-cell derivative of the loss w.r.t. the map entry.
  std::vector<double> dweight(k * cells, 0.0);
  std::vector<bool> mask(k * cells, true);
  double total = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    if (peaks[kk] >= cells) throw ContractError("compactness: peak index out of range");
    const double pi = double(peaks[kk] / w), pj = double(peaks[kk] % w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t idx = kk * cells + i * w + j;
        const double d2 = (double(i) - pi) * (double(i) - pi) + (double(j) - pj) * (double(j) - pj);
        const double v = m[idx];
        if (clamp_negative) {
          mask[idx] = v > 0.0;
          if (mask[idx]) total += v * d2;
        } else {
          total += v * d2;
        }
        dweight[idx] = mask[idx] ? d2 : 0.0;
      }
  }
  if (clamp_negative) tape.note_branch(hash_mask(mask));
  return tape.record(Tensor::scalar(total), {maps},
                     [dweight = std::move(dweight)](const Tensor& g, std::span<Tensor* const> grads) {
                       if (Tensor* gm = grads[0]) {
                         const double s = backward_sign("compactness") * g[0];
                         for (std::size_t i = 0; i < dweight.size(); ++i) (*gm)[i] += s * dweight[i];
                       }
                     });
}

NodeId sum(Tape& tape, NodeId x) {
  const Tensor& in = tape.value(x);
  double s = 0.0;
  for (double v : in.data()) s += v;
  return tape.record(Tensor::scalar(s), {x}, [](const Tensor& g, std::span<Tensor* const> grads) {
    if (Tensor* gx = grads[0]) {
      const double s = backward_sign("sum") * g[0];
      for (double& v : gx->data()) v += s;
    }
  });
}

NodeId linear_combination(Tape& tape, std::span<const NodeId> terms,
                          std::span<const double> coeffs) {
  if (terms.empty() || terms.size() != coeffs.size()) {
    throw ContractError("linear_combination: need one coefficient per term");
  }
  Tensor out(tape.value(terms[0]).shape());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const Tensor& v = tape.value(terms[t]);
    require_same_shape(out, v, "linear_combination");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += coeffs[t] * v[i];
  }
  std::vector<double> c(coeffs.begin(), coeffs.end());
  return tape.record(std::move(out), std::vector<NodeId>(terms.begin(), terms.end()),
                     [c = std::move(c)](const Tensor& g, std::span<Tensor* const> grads) {
                       const double sign = backward_sign("linear_combination");
                       for (std::size_t t = 0; t < grads.size(); ++t) {
                         if (!grads[t]) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*grads[t])[i] += sign * c[t] * g[i];
                       }
                     });
}

namespace testing {

ScopedBackwardFault::ScopedBackwardFault(std::string op_name) : previous_(g_faulty_op) {
  g_faulty_op = std::move(op_name);
}

ScopedBackwardFault::~ScopedBackwardFault() { g_faulty_op = previous_; }

}  // namespace testing
}  // namespace ops

Tensor bilinear_upsample(const Tensor& map, std::size_t h_out, std::size_t w_out) {
  require_ndim(map, 2, "bilinear_upsample");
  const std::size_t h = map.dim(0), w = map.dim(1);
  if (h_out < h || w_out < w) throw ContractError("bilinear_upsample: output smaller than input");
  Tensor out(Shape{h_out, w_out});
  // Corner-aligned source coordinate; exact integers land exactly on grid points.
  auto source = [](std::size_t o, std::size_t n_in, std::size_t n_out, std::size_t& lo,
                   std::size_t& hi, double& frac) {
    if (n_out == 1 || n_in == 1) {
      lo = hi = 0;
      frac = 0.0;
      return;
    }
    const std::size_t num = o * (n_in - 1);
    lo = num / (n_out - 1);
    frac = double(num % (n_out - 1)) / double(n_out - 1);
    hi = std::min(lo + 1, n_in - 1);
  };
  for (std::size_t i = 0; i < h_out; ++i) {
    std::size_t y0, y1;
    double fy;
    source(i, h, h_out, y0, y1, fy);
    for (std::size_t j = 0; j < w_out; ++j) {
      std::size_t x0, x1;
      double fx;
      source(j, w, w_out, x0, x1, fx);
      const double a = map.at(y0, x0), b = map.at(y0, x1), c = map.at(y1, x0), d = map.at(y1, x1);
      double v;
      if (fy == 0.0 && fx == 0.0) {
        v = a;
      } else {
        v = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
        // Keep the result inside the hull of its neighbours despite rounding.
        v = std::clamp(v, std::min({a, b, c, d}), std::max({a, b, c, d}));
      }
      out.at(i, j) = v;
    }
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& loss, const Tensor& params,
                        double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Tensor grad(params.shape());
  Tensor probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss(probe);
    probe[i] = orig - h;
    const double down = loss(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace apn
