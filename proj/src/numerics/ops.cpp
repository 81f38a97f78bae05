#include "oreo/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oreo/error.hpp"
#include "oreo/numerics/kernels.hpp"

namespace oreo::num {
namespace {

struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = last;
  return out;
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst) kernels::axpy(1.0, src.ptr(), dst->ptr(), src.size());
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  kernels::axpy(1.0, bv.ptr(), out.ptr(), out.size());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(a), g);
    accumulate(t.grad_buffer(b), g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  kernels::axpy(-1.0, bv.ptr(), out.ptr(), out.size());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(a), g);
    if (Tensor* gb = t.grad_buffer(b)) kernels::axpy(-1.0, g.ptr(), gb->ptr(), g.size());
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  kernels::mul_acc(av.ptr(), bv.ptr(), out.ptr(), out.size());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) kernels::mul_acc(g.ptr(), t.value(b).ptr(), ga->ptr(), g.size());
    if (Tensor* gb = t.grad_buffer(b)) kernels::mul_acc(g.ptr(), t.value(a).ptr(), gb->ptr(), g.size());
  });
}

Var scale(Var x, double s) {
  Tensor out(x.value().shape());
  kernels::axpy(s, x.value().ptr(), out.ptr(), out.size());
  return x.tape().record(std::move(out), {x}, [x, s](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) kernels::axpy(s, g.ptr(), gx->ptr(), g.size());
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(bv.shape()) + " vs input " + shape_str(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::axpy(1.0, bv.ptr(), out.row(r).data(), bv.size());
  return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor& g) {
    accumulate(t.grad_buffer(x), g);
    if (Tensor* gb = t.grad_buffer(bias)) {
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(1.0, g.row(r).data(), gb->ptr(), gb->size());
    }
  });
}

Var mul_cols(Var x, Var v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (vv.size() != xv.cols()) {
    throw ShapeError("mul_cols: vector " + shape_str(vv.shape()) + " vs input " + shape_str(xv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    kernels::mul_acc(xv.row(r).data(), vv.ptr(), out.row(r).data(), vv.size());
  }
  return x.tape().record(std::move(out), {x, v}, [x, v](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& vv = t.value(v);
    if (Tensor* gx = t.grad_buffer(x)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        kernels::mul_acc(g.row(r).data(), vv.ptr(), gx->row(r).data(), vv.size());
      }
    }
    if (Tensor* gv = t.grad_buffer(v)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        kernels::mul_acc(g.row(r).data(), xv.row(r).data(), gv->ptr(), vv.size());
      }
    }
  });
}

Var exp(Var x) {
  Tensor out = x.value();
  for (double& e : out.data()) e = std::exp(e);
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [x, y = std::move(saved)](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) kernels::mul_acc(g.ptr(), y.ptr(), gx->ptr(), g.size());
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& e : out.data()) e = e > 0.0 ? e : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    const Tensor& xv = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += g[i];
    }
  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& e : out.data()) e = 0.5 * e * (1.0 + std::erf(e * std::numbers::sqrt2 / 2.0));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    const Tensor& xv = t.value(x);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
      (*gx)[i] += g[i] * (cdf + z * pdf);
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double e : x.value().data()) s += e;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (double& e : gx->data()) e += g[0];
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var add_n(Tape& tape, std::span<const Var> terms) {
  double s = 0.0;
  for (Var v : terms) {
    if (v.value().size() != 1) throw ShapeError("add_n: terms must be scalars");
    s += v.value()[0];
  }
  std::vector<Var> inputs(terms.begin(), terms.end());
  return tape.record(Tensor::scalar(s), terms, [inputs](Tape& t, const Tensor& g) {
    for (Var v : inputs) {
      if (Tensor* gv = t.grad_buffer(v)) (*gv)[0] += g[0];
    }
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor out(Shape{m, n});
  kernels::gemm_nn(av.ptr(), bv.ptr(), out.ptr(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) kernels::gemm_nt(g.ptr(), t.value(b).ptr(), ga->ptr(), m, n, k);
    if (Tensor* gb = t.grad_buffer(b)) kernels::gemm_tn(t.value(a).ptr(), g.ptr(), gb->ptr(), k, m, n);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_nt");
  require_matrix(bv, "matmul_nt");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) {
    throw ShapeError("matmul_nt: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()) + "^T");
  }
  Tensor out(Shape{m, n});
  kernels::gemm_nt(av.ptr(), bv.ptr(), out.ptr(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) kernels::gemm_nn(g.ptr(), t.value(b).ptr(), ga->ptr(), m, n, k);
    if (Tensor* gb = t.grad_buffer(b)) kernels::gemm_tn(g.ptr(), t.value(a).ptr(), gb->ptr(), n, m, k);
  });
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_matrix(wv, "linear");
  const std::size_t in = wv.dim(0), outw = wv.dim(1), m = xv.rows();
  if (xv.cols() != in || bv.size() != outw) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + ", weight " + shape_str(wv.shape()) +
                     ", bias " + shape_str(bv.shape()));
  }
  Tensor out(with_last(xv.shape(), outw));
  for (std::size_t r = 0; r < m; ++r) std::copy(bv.data().begin(), bv.data().end(), out.row(r).begin());
  kernels::gemm_nn(xv.ptr(), wv.ptr(), out.ptr(), m, in, outw);
  return x.tape().record(std::move(out), {x, w, b}, [x, w, b, m, in, outw](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) kernels::gemm_nt(g.ptr(), t.value(w).ptr(), gx->ptr(), m, outw, in);
    if (Tensor* gw = t.grad_buffer(w)) kernels::gemm_tn(t.value(x).ptr(), g.ptr(), gw->ptr(), in, m, outw);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t r = 0; r < m; ++r) kernels::axpy(1.0, g.row(r).data(), gb->ptr(), outw);
    }
  });
}

Var mlp_project(Var x, Var w1, Var b1, Var w2, Var b2) {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols(), rows = xv.rows();
  if (n == 0) throw ShapeError("layer_norm: empty last axis");
  if (gain.value().size() != n || bias.value().size() != n) {
    throw ShapeError("layer_norm: gain/bias width does not match " + shape_str(xv.shape()));
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = xv.row(r);
    double mu = 0.0;
    for (double e : xr) mu += e;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double e : xr) var += (e - mu) * (e - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    auto hr = xhat.row(r);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      hr[c] = (xr[c] - mu) * inv;
      orow[c] = gv[c] * hr[c] + bv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n, rows](Tape& t,
                                                                                 const Tensor& g) {
        const Tensor& gv = t.value(gain);
        Tensor* gg = t.grad_buffer(gain);
        Tensor* gb = t.grad_buffer(bias);
        Tensor* gx = t.grad_buffer(x);
        std::vector<double> gh(n);
        for (std::size_t r = 0; r < rows; ++r) {
          auto grow = g.row(r);
          auto hr = xhat.row(r);
          if (gg) kernels::mul_acc(grow.data(), hr.data(), gg->ptr(), n);
          if (gb) kernels::axpy(1.0, grow.data(), gb->ptr(), n);
          if (!gx) continue;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            gh[c] = grow[c] * gv[c];
            s1 += gh[c];
            s2 += gh[c] * hr[c];
          }
          const double k = inv_std[r] / static_cast<double>(n);
          auto gxr = gx->row(r);
          for (std::size_t c = 0; c < n; ++c) {
            gxr[c] += k * (static_cast<double>(n) * gh[c] - s1 - hr[c] * s2);
          }
        }
      });
}

Tensor softmax_values(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  if (v.extent == 0) throw ShapeError("softmax: empty axis");
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = x[base];
      for (std::size_t j = 1; j < v.extent; ++j) mx = std::max(mx, x[base + j * v.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < v.extent; ++j) {
        const double e = std::exp(x[base + j * v.inner] - mx);
        out[base + j * v.inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < v.extent; ++j) out[base + j * v.inner] /= s;
    }
  }
  return out;
}

Var softmax(Var x, std::size_t axis) {
  Tensor out = softmax_values(x.value(), axis);
  const AxisView v = axis_view(out.shape(), axis);
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [x, v, y = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dotgy = 0.0;
        for (std::size_t j = 0; j < v.extent; ++j) dotgy += g[base + j * v.inner] * y[base + j * v.inner];
        for (std::size_t j = 0; j < v.extent; ++j) {
          const std::size_t e = base + j * v.inner;
          (*gx)[e] += y[e] * (g[e] - dotgy);
        }
      }
    }
  });
}

Var log_softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisView v = axis_view(xv.shape(), axis);
  if (v.extent == 0) throw ShapeError("log_softmax: empty axis");
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = xv[base];
      for (std::size_t j = 1; j < v.extent; ++j) mx = std::max(mx, xv[base + j * v.inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < v.extent; ++j) s += std::exp(xv[base + j * v.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t j = 0; j < v.extent; ++j) out[base + j * v.inner] = xv[base + j * v.inner] - lse;
    }
  }
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [x, v, y = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double gs = 0.0;
        for (std::size_t j = 0; j < v.extent; ++j) gs += g[base + j * v.inner];
        for (std::size_t j = 0; j < v.extent; ++j) {
          const std::size_t e = base + j * v.inner;
          (*gx)[e] += g[e] - std::exp(y[e]) * gs;
        }
      }
    }
  });
}

Var l1_normalize(Var x, std::size_t axis, Var fallback) {
  const Tensor& xv = x.value();
  const Tensor& fv = fallback.value();
  require_same_shape(xv, fv, "l1_normalize");
  const AxisView v = axis_view(xv.shape(), axis);
  Tensor out(xv.shape());
  // 0 marks a dead slice that takes the fallback.
  std::vector<double> sums(v.outer * v.inner);
  for (double e : xv.data()) {
    if (e < 0.0) throw DomainError("l1_normalize: negative entry " + std::to_string(e));
  }
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double s = 0.0;
      for (std::size_t j = 0; j < v.extent; ++j) s += xv[base + j * v.inner];
      sums[o * v.inner + i] = s;
      for (std::size_t j = 0; j < v.extent; ++j) {
        const std::size_t e = base + j * v.inner;
        out[e] = s > 0.0 ? xv[e] / s : fv[e];
      }
    }
  }
  Tensor saved = out;
  return x.tape().record(
      std::move(out), {x, fallback},
      [x, fallback, v, y = std::move(saved), sums = std::move(sums)](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_buffer(x);
        Tensor* gf = t.grad_buffer(fallback);
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.extent * v.inner + i;
            const double s = sums[o * v.inner + i];
            if (s > 0.0) {
              if (!gx) continue;
              double dotgy = 0.0;
              for (std::size_t j = 0; j < v.extent; ++j) dotgy += g[base + j * v.inner] * y[base + j * v.inner];
              for (std::size_t j = 0; j < v.extent; ++j) {
                const std::size_t e = base + j * v.inner;
                (*gx)[e] += (g[e] - dotgy) / s;
              }
            } else if (gf) {
              for (std::size_t j = 0; j < v.extent; ++j) (*gf)[base + j * v.inner] += g[base + j * v.inner];
            }
          }
        }
      });
}

namespace {

// dst[.., idx[k], ..] += src[.., k, ..]; src extent = idx.size().
void scatter_into(const Tensor& src, const Index& idx, Tensor& dst, std::size_t axis) {
  const AxisView s = axis_view(src.shape(), axis);
  const AxisView d = axis_view(dst.shape(), axis);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      const double* from = src.ptr() + (o * s.extent + k) * s.inner;
      double* to = dst.ptr() + (o * d.extent + idx[k]) * d.inner;
      for (std::size_t i = 0; i < s.inner; ++i) to[i] += from[i];
    }
  }
}

// dst[.., k, ..] += src[.., idx[k], ..]
void gather_into(const Tensor& src, const Index& idx, Tensor& dst, std::size_t axis) {
  const AxisView s = axis_view(src.shape(), axis);
  const AxisView d = axis_view(dst.shape(), axis);
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t k = 0; k < d.extent; ++k) {
      const double* from = src.ptr() + (o * s.extent + idx[k]) * s.inner;
      double* to = dst.ptr() + (o * d.extent + k) * d.inner;
      for (std::size_t i = 0; i < d.inner; ++i) to[i] += from[i];
    }
  }
}

}  // namespace

Var scatter_add(Var src, const Index& idx, std::size_t out_extent, std::size_t axis) {
  const Tensor& sv = src.value();
  const AxisView v = axis_view(sv.shape(), axis);
  if (idx.size() != v.extent) {
    throw ShapeError("scatter_add: " + std::to_string(idx.size()) + " indices for extent " +
                     std::to_string(v.extent));
  }
  for (std::size_t j : idx) {
    if (j >= out_extent) {
      throw IndexError("scatter_add: index " + std::to_string(j) + " >= " + std::to_string(out_extent));
    }
  }
  Shape os = sv.shape();
  os[axis] = out_extent;
  Tensor out(os);
  scatter_into(sv, idx, out, axis);
  return src.tape().record(std::move(out), {src}, [src, idx, axis](Tape& t, const Tensor& g) {
    if (Tensor* gs = t.grad_buffer(src)) gather_into(g, idx, *gs, axis);
  });
}

Var gather(Var x, const Index& idx, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisView v = axis_view(xv.shape(), axis);
  for (std::size_t j : idx) {
    if (j >= v.extent) {
      throw IndexError("gather: index " + std::to_string(j) + " >= " + std::to_string(v.extent));
    }
  }
  Shape os = xv.shape();
  os[axis] = idx.size();
  Tensor out(os);
  gather_into(xv, idx, out, axis);
  return x.tape().record(std::move(out), {x}, [x, idx, axis](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) scatter_into(g, idx, *gx, axis);
  });
}

Var set_rows(Var base, const Index& idx, Var rows) {
  const Tensor& bv = base.value();
  const Tensor& rv = rows.value();
  const std::size_t c = bv.cols();
  if (rv.cols() != c || rv.rows() != idx.size()) {
    throw ShapeError("set_rows: rows " + shape_str(rv.shape()) + " for base " + shape_str(bv.shape()));
  }
  std::vector<char> replaced(bv.rows(), 0);
  for (std::size_t j : idx) {
    if (j >= bv.rows()) throw IndexError("set_rows: row " + std::to_string(j) + " out of range");
    if (replaced[j]) throw IndexError("set_rows: duplicate row " + std::to_string(j));
    replaced[j] = 1;
  }
  Tensor out = bv;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy(rv.row(k).begin(), rv.row(k).end(), out.row(idx[k]).begin());
  }
  return base.tape().record(
      std::move(out), {base, rows},
      [base, rows, idx, replaced = std::move(replaced)](Tape& t, const Tensor& g) {
        if (Tensor* gb = t.grad_buffer(base)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            if (!replaced[r]) kernels::axpy(1.0, g.row(r).data(), gb->row(r).data(), g.cols());
          }
        }
        if (Tensor* gr = t.grad_buffer(rows)) {
          for (std::size_t k = 0; k < idx.size(); ++k) {
            kernels::axpy(1.0, g.row(idx[k]).data(), gr->row(k).data(), g.cols());
          }
        }
      });
}

Var cross_entropy(Var logits, const Index& targets) {
  const Tensor& lv = logits.value();
  const std::size_t n = lv.rows(), c = lv.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy: target count does not match rows");
  if (n == 0) return logits.tape().constant(Tensor::scalar(0.0));
  Tensor p = softmax_values(lv.reshaped(Shape{n, c}), 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= c) throw IndexError("cross_entropy: target out of range");
    // log p via log-sum-exp for accuracy at tiny probabilities
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double e : row) s += std::exp(e - mx);
    loss += -(row[targets[r]] - mx - std::log(s));
  }
  loss /= static_cast<double>(n);
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [logits, targets, p = std::move(p), n](Tape& t, const Tensor& g) {
                                Tensor* gl = t.grad_buffer(logits);
                                if (!gl) return;
                                const double k = g[0] / static_cast<double>(n);
                                for (std::size_t r = 0; r < n; ++r) {
                                  auto pr = p.row(r);
                                  auto gr = gl->row(r);
                                  for (std::size_t j = 0; j < pr.size(); ++j) gr[j] += k * pr[j];
                                  gr[targets[r]] -= k;
                                }
                              });
}

Var soft_cross_entropy(Var logits, const Tensor& target) {
  const Tensor& lv = logits.value();
  if (target.size() != lv.size() || target.cols() != lv.cols()) {
    throw ShapeError("soft_cross_entropy: target " + shape_str(target.shape()) + " vs logits " +
                     shape_str(lv.shape()));
  }
  const std::size_t n = lv.rows(), c = lv.cols();
  Tensor p(Shape{n, c});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double e : row) s += std::exp(e - mx);
    const double lse = mx + std::log(s);
    auto q = target.row(r);
    for (std::size_t j = 0; j < c; ++j) {
      p.at(r, j) = std::exp(row[j] - lse);
      if (q[j] != 0.0) loss -= q[j] * (row[j] - lse);
    }
  }
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [logits, target, p = std::move(p)](Tape& t, const Tensor& g) {
                                Tensor* gl = t.grad_buffer(logits);
                                if (!gl) return;
                                for (std::size_t r = 0; r < p.rows(); ++r) {
                                  auto q = target.row(r);
                                  double qs = 0.0;
                                  for (double e : q) qs += e;
                                  auto pr = p.row(r);
                                  auto gr = gl->row(r);
                                  for (std::size_t j = 0; j < pr.size(); ++j) gr[j] += g[0] * (qs * pr[j] - q[j]);
                                }
                              });
}

namespace {

void copy_cols(const Tensor& src, std::size_t c0, std::size_t w, Tensor& dst) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy_n(src.ptr() + r * src.cols() + c0, w, dst.ptr() + r * w);
  }
}

void add_cols(const Tensor& src, std::size_t c0, Tensor& dst) {
  const std::size_t w = src.cols();
  for (std::size_t r = 0; r < src.rows(); ++r) {
    kernels::axpy(1.0, src.ptr() + r * w, dst.ptr() + r * dst.cols() + c0, w);
  }
}

}  // namespace

Var attention(Var q, Var k, Var v, std::size_t heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  require_same_shape(qv, kv, "attention");
  require_same_shape(qv, vv, "attention");
  const std::size_t n = qv.dim(0), d = qv.dim(1);
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out(Shape{n, d});
  std::vector<Tensor> probs;
  probs.reserve(heads);
  Tensor qh(Shape{n, dh}), kh(Shape{n, dh}), vh(Shape{n, dh});
  for (std::size_t h = 0; h < heads; ++h) {
    copy_cols(qv, h * dh, dh, qh);
    copy_cols(kv, h * dh, dh, kh);
    copy_cols(vv, h * dh, dh, vh);
    Tensor scores(Shape{n, n});
    kernels::gemm_nt(qh.ptr(), kh.ptr(), scores.ptr(), n, dh, n);
    for (double& e : scores.data()) e *= inv;
    Tensor p = softmax_values(scores, 1);
    Tensor oh(Shape{n, dh});
    kernels::gemm_nn(p.ptr(), vh.ptr(), oh.ptr(), n, n, dh);
    add_cols(oh, h * dh, out);
    probs.push_back(std::move(p));
  }
  return q.tape().record(
      std::move(out), {q, k, v},
      [q, k, v, n, dh, heads, inv, probs = std::move(probs)](Tape& t, const Tensor& g) {
        Tensor* gq = t.grad_buffer(q);
        Tensor* gk = t.grad_buffer(k);
        Tensor* gv = t.grad_buffer(v);
        const Tensor& qv = t.value(q);
        const Tensor& kv = t.value(k);
        const Tensor& vv = t.value(v);
        Tensor qh(Shape{n, dh}), kh(Shape{n, dh}), vh(Shape{n, dh}), gh(Shape{n, dh});
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor& p = probs[h];
          copy_cols(g, h * dh, dh, gh);
          copy_cols(vv, h * dh, dh, vh);
          if (gv) {
            Tensor gvh(Shape{n, dh});
            kernels::gemm_tn(p.ptr(), gh.ptr(), gvh.ptr(), n, n, dh);
            add_cols(gvh, h * dh, *gv);
          }
          if (!gq && !gk) continue;
          Tensor gp(Shape{n, n});
          kernels::gemm_nt(gh.ptr(), vh.ptr(), gp.ptr(), n, dh, n);
          // softmax adjoint, then the 1/sqrt(dh) scale
          for (std::size_t r = 0; r < n; ++r) {
            auto pr = p.row(r);
            auto gr = gp.row(r);
            const double s = kernels::dot(pr.data(), gr.data(), n);
            for (std::size_t c = 0; c < n; ++c) gr[c] = pr[c] * (gr[c] - s) * inv;
          }
          copy_cols(qv, h * dh, dh, qh);
          copy_cols(kv, h * dh, dh, kh);
          if (gq) {
            Tensor gqh(Shape{n, dh});
            kernels::gemm_nn(gp.ptr(), kh.ptr(), gqh.ptr(), n, n, dh);
            add_cols(gqh, h * dh, *gq);
          }
          if (gk) {
            Tensor gkh(Shape{n, dh});
            kernels::gemm_tn(gp.ptr(), qh.ptr(), gkh.ptr(), n, n, dh);
            add_cols(gkh, h * dh, *gk);
          }
        }
      });
}

}  // namespace oreo::num
