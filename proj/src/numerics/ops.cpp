// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "numerics/gemm.hpp"

namespace cl4ac::nn {

namespace debug {
namespace {
std::string& fault_slot() {
  static std::string s;
  return s;
}
}  // namespace

const std::vector<std::string>& fault_ops() {
  static const std::vector<std::string> ops = {
      "add", "attention", "avg_pool_2x2", "batch_norm", "binary_cross_entropy", "conv2d",
      "cross_entropy", "dropout", "embedding_lookup", "global_mean", "layer_norm", "linear",
      "log", "matmul", "relu", "sigmoid", "softmax"};
  return ops;
}

void inject_fault(const std::string& op) {
  if (!op.empty() && std::find(fault_ops().begin(), fault_ops().end(), op) == fault_ops().end()) {
    std::string known;
    for (const auto& o : fault_ops()) known += (known.empty() ? "" : ", ") + o;
    throw InputError("unknown op '" + op + "' for fault injection; expected one of: " + known);
  }
  fault_slot() = op;
}
const std::string& injected_fault() { return fault_slot(); }
}  // namespace debug

namespace {

template <typename T>
T fault_factor(const char* op) {
  const std::string& f = debug::injected_fault();
  return (!f.empty() && f == op) ? T(0.5) : T(1);
}

std::size_t last_dim(const Shape& s) {
  if (s.empty()) throw ShapeError("expected rank >= 1, got a scalar");
  return s.back();
}

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

// Splits a shape around `axis` into (outer, len, inner).
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise and reductions
// ---------------------------------------------------------------------------

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  const Shape& as = av.shape();
  const Shape& bs = bv.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw ShapeError("add: " + shape_str(bs) + " does not broadcast to " + shape_str(as));
  }
  const std::size_t inner = bv.size();
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b, inner](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("add");
    const Tensor<T>& g = t.grad(o);
    if (t.requires_grad(a)) {
      auto ga = t.grad(a).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += f * g[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad(b).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += f * g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  check_same(av.shape(), bv.shape(), "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& t, Var o) {
    const Tensor<T>& g = t.grad(o);
    if (t.requires_grad(a)) {
      const Tensor<T>& bv = t.value(b);
      auto ga = t.grad(a).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      const Tensor<T>& av = t.value(a);
      auto gb = t.grad(b).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (auto& x : out.data()) x *= factor;
  return tape.record(std::move(out), tape.requires_grad(a), [a, factor](Tape<T>& t, Var o) {
    const Tensor<T>& g = t.grad(o);
    auto ga = t.grad(a).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
  T s = 0;
  for (T x : tape.value(a).data()) s += x;
  return tape.record(Tensor<T>::scalar(s), tape.requires_grad(a), [a](Tape<T>& t, Var o) {
    const T g = t.grad(o)[0];
    for (auto& x : t.grad(a).data()) x += g;
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var a) {
  const std::size_t n = tape.value(a).size();
  return scale(tape, sum(tape, a), T(1) / static_cast<T>(n));
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr());
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b, m, n, k](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("matmul");
    Tensor<T> g = t.grad(o);
    if (f != T(1)) for (auto& x : g.data()) x *= f;
    if (t.requires_grad(a)) gemm_nt(m, k, n, g.ptr(), t.value(b).ptr(), t.grad(a).ptr());
    if (t.requires_grad(b)) gemm_tn(k, n, m, t.value(a).ptr(), g.ptr(), t.grad(b).ptr());
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const std::size_t in = last_dim(xv.shape());
  if (wv.rank() != 2 || wv.dim(0) != in) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + " with weight " +
                     shape_str(wv.shape()));
  }
  const std::size_t out_dim = wv.dim(1);
  const std::size_t rows = xv.size() / in;
  if (b && (tape.value(*b).rank() != 1 || tape.value(*b).dim(0) != out_dim)) {
    throw ShapeError("linear: bias " + shape_str(tape.value(*b).shape()) + " for width " +
                     std::to_string(out_dim));
  }
  Shape os = xv.shape();
  os.back() = out_dim;
  Tensor<T> out(os);
  gemm_nn(rows, out_dim, in, xv.ptr(), wv.ptr(), out.ptr());
  if (b) {
    const Tensor<T>& bv = tape.value(*b);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += bv[j];
    }
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || (b && tape.requires_grad(*b));
  return tape.record(std::move(out), rg, [x, w, b, rows, in, out_dim](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("linear");
    Tensor<T> g = t.grad(o);
    if (f != T(1)) for (auto& v : g.data()) v *= f;
    if (t.requires_grad(x)) gemm_nt(rows, in, out_dim, g.ptr(), t.value(w).ptr(), t.grad(x).ptr());
    if (t.requires_grad(w)) gemm_tn(in, out_dim, rows, t.value(x).ptr(), g.ptr(), t.grad(w).ptr());
    if (b && t.requires_grad(*b)) {
      auto gb = t.grad(*b).data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v = v < T(0) ? T(0) : v;  // NaN passes through
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("relu");
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T(0)) gx[i] += f * g[i];
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) {
    v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("sigmoid");
    const Tensor<T>& y = t.value(o);
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var log(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) {
    if (!(v > T(0))) throw DomainError("log of non-positive value");
    v = std::log(v);
  }
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("log");
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i] / xv[i];
  });
}

template <typename T>
Var softmax(Tape<T>& tape, Var x, std::size_t axis) {
  const Tensor<T>& xv = tape.value(x);
  const AxisSplit s = split_axis(xv.shape(), axis, "softmax");
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      T z = 0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const T e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  return tape.record(std::move(out), tape.requires_grad(x), [x, s](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("softmax");
    const Tensor<T>& y = t.value(o);
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.len * s.inner + i;
        T dot = 0;
        for (std::size_t j = 0; j < s.len; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          gx[idx] += f * y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, double eps) {
  const Tensor<T>& xv = tape.value(x);
  const std::size_t d = last_dim(xv.shape());
  const std::size_t rows = xv.size() / d;
  if (tape.value(gamma).size() != d || tape.value(beta).size() != d) {
    throw ShapeError("layer_norm: affine parameters do not match width " + std::to_string(d));
  }
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.ptr() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(std::move(out), rg,
                     [x, gamma, beta, d, rows, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("layer_norm");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& gv = t.value(gamma);
    if (t.requires_grad(gamma) || t.requires_grad(beta)) {
      std::vector<T> dg(d, T(0)), db(d, T(0));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          dg[j] += g[r * d + j] * xhat[r * d + j];
          db[j] += g[r * d + j];
        }
      }
      if (t.requires_grad(gamma)) {
        auto gg = t.grad(gamma).data();
        for (std::size_t j = 0; j < d; ++j) gg[j] += f * dg[j];
      }
      if (t.requires_grad(beta)) {
        auto gb = t.grad(beta).data();
        for (std::size_t j = 0; j < d; ++j) gb[j] += f * db[j];
      }
    }
    if (t.requires_grad(x)) {
      auto gx = t.grad(x).data();
      std::vector<T> gh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        T m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < d; ++j) {
          gh[j] = g[r * d + j] * gv[j];
          m1 += gh[j];
          m2 += gh[j] * xhat[r * d + j];
        }
        m1 /= static_cast<T>(d);
        m2 /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          gx[r * d + j] += f * inv_std[r] * (gh[j] - m1 - xhat[r * d + j] * m2);
        }
      }
    }
  });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, Parameter<T>& running_mean,
               Parameter<T>& running_var, bool train, double momentum, double eps) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() < 2) throw ShapeError("batch_norm: expected [B, C, ...], got " + shape_str(xv.shape()));
  const std::size_t batch = xv.dim(0), ch = xv.dim(1);
  const std::size_t spatial = xv.size() / (batch * ch);
  const std::size_t count = batch * spatial;
  if (tape.value(gamma).size() != ch || tape.value(beta).size() != ch ||
      running_mean.value().size() != ch || running_var.value().size() != ch) {
    throw ShapeError("batch_norm: per-channel tensors do not match " + std::to_string(ch) + " channels");
  }
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(ch);
  auto at = [&](std::size_t b, std::size_t c) { return (b * ch + c) * spatial; };
  for (std::size_t c = 0; c < ch; ++c) {
    T mu, var;
    if (train) {
      mu = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) mu += xv[at(b, c) + s];
      mu /= static_cast<T>(count);
      var = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) {
          const T dlt = xv[at(b, c) + s] - mu;
          var += dlt * dlt;
        }
      var /= static_cast<T>(count);
      const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
      const T mom = static_cast<T>(momentum);
      running_mean.value()[c] = (T(1) - mom) * running_mean.value()[c] + mom * mu;
      running_var.value()[c] = (T(1) - mom) * running_var.value()[c] + mom * unbiased;
    } else {
      mu = running_mean.value()[c];
      var = running_var.value()[c];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t idx = at(b, c) + s;
        const T h = (xv[idx] - mu) * is;
        xhat[idx] = h;
        out[idx] = gv[c] * h + bv[c];
      }
    }
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(std::move(out), rg,
                     [x, gamma, beta, batch, ch, spatial, count, train, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("batch_norm");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& gv = t.value(gamma);
    auto at = [&](std::size_t b, std::size_t c) { return (b * ch + c) * spatial; };
    for (std::size_t c = 0; c < ch; ++c) {
      T sg = 0, sgh = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t idx = at(b, c) + s;
          sg += g[idx];
          sgh += g[idx] * xhat[idx];
        }
      }
      if (t.requires_grad(gamma)) t.grad(gamma)[c] += f * sgh;
      if (t.requires_grad(beta)) t.grad(beta)[c] += f * sg;
      if (!t.requires_grad(x)) continue;
      auto gx = t.grad(x).data();
      const T scale_c = gv[c] * inv_std[c];
      if (train) {
        const T m1 = sg / static_cast<T>(count);
        const T m2 = sgh / static_cast<T>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t s = 0; s < spatial; ++s) {
            const std::size_t idx = at(b, c) + s;
            gx[idx] += f * scale_c * (g[idx] - m1 - xhat[idx] * m2);
          }
        }
      } else {
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t s = 0; s < spatial; ++s) {
            const std::size_t idx = at(b, c) + s;
            gx[idx] += f * scale_c * g[idx];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

namespace {

// cols[(c*9 + ky*3 + kx), y*W + x] = img[c, y+ky-1, x+kx-1] (zero outside).
template <typename T>
void im2col3x3(const T* img, std::size_t c_in, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* dst = cols + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          T* drow = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = img + (c * h + static_cast<std::size_t>(sy)) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + static_cast<long>(kx) - 1;
            drow[x] = (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : srow[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t c_in, std::size_t h, std::size_t w, T* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* src = cols + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* irow = img + (c * h + static_cast<std::size_t>(sy)) * w;
          const T* srow = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + static_cast<long>(kx) - 1;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            irow[sx] += srow[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernels) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& kv = tape.value(kernels);
  const bool batched = xv.rank() == 4;
  if (!(batched || xv.rank() == 3)) {
    throw ShapeError("conv2d: input must be [C,H,W] or [B,C,H,W], got " + shape_str(xv.shape()));
  }
  if (kv.rank() != 4 || kv.dim(2) != 3 || kv.dim(3) != 3) {
    throw ShapeError("conv2d: kernels must be [C_out, C_in, 3, 3], got " + shape_str(kv.shape()));
  }
  const std::size_t batch = batched ? xv.dim(0) : 1;
  const std::size_t c_in = xv.dim(batched ? 1 : 0);
  const std::size_t h = xv.dim(batched ? 2 : 1), w = xv.dim(batched ? 3 : 2);
  const std::size_t c_out = kv.dim(0);
  if (kv.dim(1) != c_in) {
    throw ShapeError("conv2d: input has " + std::to_string(c_in) + " channels, kernels expect " +
                     std::to_string(kv.dim(1)));
  }
  const std::size_t hw = h * w, kdim = c_in * 9;
  Shape os = batched ? Shape{batch, c_out, h, w} : Shape{c_out, h, w};
  Tensor<T> out(os);
  std::vector<T> cols(kdim * hw);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col3x3(xv.ptr() + b * c_in * hw, c_in, h, w, cols.data());
    gemm_nn(c_out, hw, kdim, kv.ptr(), cols.data(), out.ptr() + b * c_out * hw);
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(kernels);
  return tape.record(std::move(out), rg,
                     [x, kernels, batch, c_in, c_out, h, w](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("conv2d");
    const std::size_t hw = h * w, kdim = c_in * 9;
    Tensor<T> g = t.grad(o);
    if (f != T(1)) for (auto& v : g.data()) v *= f;
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& kv = t.value(kernels);
    std::vector<T> cols(kdim * hw);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gb = g.ptr() + b * c_out * hw;
      if (t.requires_grad(kernels)) {
        im2col3x3(xv.ptr() + b * c_in * hw, c_in, h, w, cols.data());
        gemm_nt(c_out, kdim, hw, gb, cols.data(), t.grad(kernels).ptr());
      }
      if (t.requires_grad(x)) {
        std::fill(cols.begin(), cols.end(), T(0));
        gemm_tn(kdim, hw, c_out, kv.ptr(), gb, cols.data());
        col2im3x3(cols.data(), c_in, h, w, t.grad(x).ptr() + b * c_in * hw);
      }
    }
  });
}

template <typename T>
Var avg_pool_2x2(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() < 2) throw ShapeError("avg_pool_2x2: rank must be >= 2");
  const std::size_t h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) {
    throw ShapeError("avg_pool_2x2: spatial extent " + shape_str(xv.shape()) + " too small");
  }
  const std::size_t planes = xv.size() / (h * w);
  Shape os = xv.shape();
  os[os.size() - 2] = oh;
  os[os.size() - 1] = ow;
  Tensor<T> out(os);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.ptr() + p * h * w;
    T* dst = out.ptr() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x2 = 0; x2 < ow; ++x2) {
        const T* s0 = src + (2 * y) * w + 2 * x2;
        dst[y * ow + x2] = (s0[0] + s0[1] + s0[w] + s0[w + 1]) * T(0.25);
      }
    }
  }
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, planes, h, w, oh, ow](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("avg_pool_2x2");
    const Tensor<T>& g = t.grad(o);
    T* gx = t.grad(x).ptr();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* gs = g.ptr() + p * oh * ow;
      T* gd = gx + p * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x2 = 0; x2 < ow; ++x2) {
          const T v = f * gs[y * ow + x2] * T(0.25);
          T* d0 = gd + (2 * y) * w + 2 * x2;
          d0[0] += v;
          d0[1] += v;
          d0[w] += v;
          d0[w + 1] += v;
        }
      }
    }
  });
}

template <typename T>
Var global_mean(Tape<T>& tape, Var x, std::size_t axis) {
  const Tensor<T>& xv = tape.value(x);
  const AxisSplit s = split_axis(xv.shape(), axis, "global_mean");
  Shape os;
  for (std::size_t i = 0; i < xv.rank(); ++i)
    if (i != axis) os.push_back(xv.dim(i));
  Tensor<T> out(os);
  const T inv = T(1) / static_cast<T>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      T acc = 0;
      for (std::size_t j = 0; j < s.len; ++j) acc += xv[(o * s.len + j) * s.inner + i];
      out[o * s.inner + i] = acc * inv;
    }
  }
  return tape.record(std::move(out), tape.requires_grad(x), [x, s, inv](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("global_mean");
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const T v = f * g[a * s.inner + i] * inv;
        for (std::size_t j = 0; j < s.len; ++j) gx[(a * s.len + j) * s.inner + i] += v;
      }
    }
  });
}

template <typename T>
Var swap_last_two(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() < 2) throw ShapeError("swap_last_two: rank must be >= 2");
  const std::size_t r = xv.dim(xv.rank() - 2), c = xv.dim(xv.rank() - 1);
  const std::size_t planes = xv.size() / (r * c);
  Shape os = xv.shape();
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  Tensor<T> out(os);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[p * r * c + j * r + i] = xv[p * r * c + i * c + j];
  return tape.record(std::move(out), tape.requires_grad(x), [x, planes, r, c](Tape<T>& t, Var o) {
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[p * r * c + i * c + j] += g[p * r * c + j * r + i];
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, Var o) {
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

template <typename T>
Var embedding_lookup(Tape<T>& tape, Var table, std::span<const int> ids) {
  const Tensor<T>& tv = tape.value(table);
  if (tv.rank() != 2) throw ShapeError("embedding_lookup: table must be [V, D]");
  if (ids.empty()) throw ShapeError("embedding_lookup: no ids");
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ContractError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                          std::to_string(vocab));
    }
    std::copy_n(tv.ptr() + static_cast<std::size_t>(ids[i]) * d, d, out.ptr() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return tape.record(std::move(out), tape.requires_grad(table),
                     [table, d, idv = std::move(idv)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("embedding_lookup");
    const Tensor<T>& g = t.grad(o);
    T* gt = t.grad(table).ptr();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      T* row = gt + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += f * g[i * d + j];
    }
  });
}

template <typename T>
Var select_rows(Tape<T>& tape, Var x, std::span<const std::size_t> rows) {
  const Tensor<T>& xv = tape.value(x);
  const std::size_t d = last_dim(xv.shape());
  const std::size_t n = xv.size() / d;
  if (rows.empty()) throw ShapeError("select_rows: no rows");
  Tensor<T> out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      throw ContractError("row index " + std::to_string(rows[i]) + " out of range " +
                          std::to_string(n));
    }
    std::copy_n(xv.ptr() + rows[i] * d, d, out.ptr() + i * d);
  }
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, d, rv = std::move(rv)](Tape<T>& t, Var o) {
    const Tensor<T>& g = t.grad(o);
    T* gx = t.grad(x).ptr();
    for (std::size_t i = 0; i < rv.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gx[rv[i] * d + j] += g[i * d + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Rng* rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout in training mode needs an rng");
  const Tensor<T>& xv = tape.value(x);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(xv.size());
  for (auto& m : mask) m = uniform01(*rng) < rate ? T(0) : keep_scale;
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return tape.record(std::move(out), tape.requires_grad(x),
                     [x, mask = std::move(mask)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("dropout");
    const Tensor<T>& g = t.grad(o);
    auto gx = t.grad(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

AttentionMask AttentionMask::causal(std::size_t batch, std::size_t len,
                                    std::span<const std::size_t> lengths) {
  AttentionMask m{batch, len, len, std::vector<std::uint8_t>(batch * len * len, 0)};
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t lim = lengths.empty() ? len : lengths[b];
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j <= i && j < lim; ++j) m.allowed[(b * len + i) * len + j] = 1;
  }
  return m;
}

AttentionMask AttentionMask::key_lengths(std::size_t queries, std::size_t keys,
                                         std::span<const std::size_t> lengths) {
  const std::size_t batch = lengths.size();
  AttentionMask m{batch, queries, keys, std::vector<std::uint8_t>(batch * queries * keys, 0)};
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < queries; ++i)
      for (std::size_t j = 0; j < std::min(keys, lengths[b]); ++j)
        m.allowed[(b * queries + i) * keys + j] = 1;
  return m;
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t heads, const AttentionMask* mask) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  const bool batched = qv.rank() == 3;
  if (!(batched || qv.rank() == 2) || kv.rank() != qv.rank() || vv.rank() != qv.rank()) {
    throw ShapeError("attention: q/k/v must all be [m,d] or [B,m,d]");
  }
  const std::size_t batch = batched ? qv.dim(0) : 1;
  const std::size_t m = qv.dim(batched ? 1 : 0), n = kv.dim(batched ? 1 : 0);
  const std::size_t d = last_dim(qv.shape());
  if (last_dim(kv.shape()) != d || last_dim(vv.shape()) != d || vv.dim(batched ? 1 : 0) != n ||
      (batched && (kv.dim(0) != batch || vv.dim(0) != batch))) {
    throw ShapeError("attention: incompatible q " + shape_str(qv.shape()) + ", k " +
                     shape_str(kv.shape()) + ", v " + shape_str(vv.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (mask && (mask->batch != batch || mask->queries != m || mask->keys != n)) {
    throw ShapeError("attention: mask does not match [B, m, n]");
  }
  const std::size_t dk = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
  Tensor<T> out(qv.shape());
  // probs[b][h][i][j]; zero at masked positions.
  std::vector<T> probs(batch * heads * m * n, T(0));
  std::vector<std::size_t> allowed;
  allowed.reserve(n);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* qb = qv.ptr() + b * m * d;
    const T* kb = kv.ptr() + b * n * d;
    const T* vb = vv.ptr() + b * n * d;
    T* ob = out.ptr() + b * m * d;
    for (std::size_t i = 0; i < m; ++i) {
      allowed.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (!mask || mask->at(b, i, j)) allowed.push_back(j);
      if (allowed.empty()) {
        throw DomainError("attention row " + std::to_string(i) + " of batch item " +
                          std::to_string(b) + " has every key masked");
      }
      for (std::size_t h = 0; h < heads; ++h) {
        T* p = probs.data() + ((b * heads + h) * m + i) * n;
        const T* qi = qb + i * d + h * dk;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j : allowed) {
          const T* kj = kb + j * d + h * dk;
          T s = 0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt;
          p[j] = s;
          mx = std::max(mx, s);
        }
        T z = 0;
        for (std::size_t j : allowed) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        for (std::size_t j : allowed) p[j] /= z;
        T* oi = ob + i * d + h * dk;
        for (std::size_t j : allowed) {
          const T* vj = vb + j * d + h * dk;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  const bool rg = tape.requires_grad(q) || tape.requires_grad(k) || tape.requires_grad(v);
  return tape.record(std::move(out), rg,
                     [q, k, v, batch, heads, m, n, d, dk, inv_sqrt,
                      probs = std::move(probs)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("attention");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& qv = t.value(q);
    const Tensor<T>& kv = t.value(k);
    const Tensor<T>& vv = t.value(v);
    T* gq = t.requires_grad(q) ? t.grad(q).ptr() : nullptr;
    T* gk = t.requires_grad(k) ? t.grad(k).ptr() : nullptr;
    T* gv = t.requires_grad(v) ? t.grad(v).ptr() : nullptr;
    std::vector<T> dp(n);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < m; ++i) {
          const T* p = probs.data() + ((b * heads + h) * m + i) * n;
          const T* gi = g.ptr() + (b * m + i) * d + h * dk;
          T dot = 0;
          for (std::size_t j = 0; j < n; ++j) {
            if (p[j] == T(0)) {
              dp[j] = 0;
              continue;
            }
            const T* vj = vv.ptr() + (b * n + j) * d + h * dk;
            T s = 0;
            for (std::size_t c = 0; c < dk; ++c) s += gi[c] * vj[c];
            dp[j] = s;
            dot += p[j] * s;
            if (gv) {
              T* gvj = gv + (b * n + j) * d + h * dk;
              for (std::size_t c = 0; c < dk; ++c) gvj[c] += f * p[j] * gi[c];
            }
          }
          const T* qi = qv.ptr() + (b * m + i) * d + h * dk;
          for (std::size_t j = 0; j < n; ++j) {
            if (p[j] == T(0)) continue;
            const T ds = f * p[j] * (dp[j] - dot) * inv_sqrt;
            const T* kj = kv.ptr() + (b * n + j) * d + h * dk;
            if (gq) {
              T* gqi = gq + (b * m + i) * d + h * dk;
              for (std::size_t c = 0; c < dk; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              T* gkj = gk + (b * n + j) * d + h * dk;
              for (std::size_t c = 0; c < dk; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename T>
Var sequence_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets,
                           std::span<const int> groups, std::size_t n_groups, bool allow_empty) {
  const Tensor<T>& lv = tape.value(logits);
  const std::size_t vocab = last_dim(lv.shape());
  const std::size_t rows = lv.size() / vocab;
  if (targets.size() != rows || groups.size() != rows) {
    throw ShapeError("sequence_cross_entropy: " + std::to_string(rows) + " rows but " +
                     std::to_string(targets.size()) + " targets / " +
                     std::to_string(groups.size()) + " group labels");
  }
  std::vector<std::size_t> counts(n_groups, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || groups[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= vocab) {
      throw ContractError("target id " + std::to_string(targets[r]) + " outside vocabulary");
    }
    if (static_cast<std::size_t>(groups[r]) >= n_groups) throw ContractError("group index out of range");
    ++counts[static_cast<std::size_t>(groups[r])];
  }
  for (std::size_t gi = 0; gi < n_groups; ++gi) {
    if (counts[gi] == 0 && !allow_empty) {
      throw ContractError("cross entropy: every position of sequence " + std::to_string(gi) +
                          " is padded");
    }
  }
  Tensor<T> out({n_groups});
  std::vector<T> lse(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || groups[r] < 0) continue;
    const T* row = lv.ptr() + r * vocab;
    T mx = *std::max_element(row, row + vocab);
    T z = 0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    lse[r] = mx + std::log(z);
    out[static_cast<std::size_t>(groups[r])] += lse[r] - row[targets[r]];
  }
  for (std::size_t gi = 0; gi < n_groups; ++gi)
    if (counts[gi]) out[gi] /= static_cast<T>(counts[gi]);
  std::vector<int> tv(targets.begin(), targets.end()), gv(groups.begin(), groups.end());
  return tape.record(std::move(out), tape.requires_grad(logits),
                     [logits, vocab, rows, tv = std::move(tv), gv = std::move(gv),
                      counts = std::move(counts), lse = std::move(lse)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("cross_entropy");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& lv = t.value(logits);
    T* gl = t.grad(logits).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      if (tv[r] < 0 || gv[r] < 0) continue;
      const auto grp = static_cast<std::size_t>(gv[r]);
      const T coeff = g[grp] / static_cast<T>(counts[grp]);
      if (coeff == T(0)) continue;
      const T* row = lv.ptr() + r * vocab;
      T* grow = gl + r * vocab;
      for (std::size_t j = 0; j < vocab; ++j) grow[j] += f * coeff * std::exp(row[j] - lse[r]);
      grow[tv[r]] -= f * coeff;
    }
  });
}

template <typename T>
Var binary_cross_entropy(Tape<T>& tape, Var p, std::span<const int> labels) {
  const Tensor<T>& pv = tape.value(p);
  if (pv.size() != labels.size()) throw ShapeError("binary_cross_entropy: label count mismatch");
  Tensor<T> out(pv.shape());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!(pv[i] > T(0) && pv[i] < T(1))) {
      throw DomainError("classifier probability " + std::to_string(static_cast<double>(pv[i])) +
                        " outside (0, 1)");
    }
    out[i] = labels[i] ? -std::log(pv[i]) : -std::log(T(1) - pv[i]);
  }
  std::vector<int> lv(labels.begin(), labels.end());
  return tape.record(std::move(out), tape.requires_grad(p),
                     [p, lv = std::move(lv)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("binary_cross_entropy");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& pv = t.value(p);
    auto gp = t.grad(p).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      gp[i] += f * g[i] * (lv[i] ? -T(1) / pv[i] : T(1) / (T(1) - pv[i]));
    }
  });
}

template <typename T>
Var binary_cross_entropy_with_logits(Tape<T>& tape, Var logits, std::span<const int> labels) {
  const Tensor<T>& sv = tape.value(logits);
  if (sv.size() != labels.size()) throw ShapeError("binary_cross_entropy_with_logits: label count mismatch");
  Tensor<T> out(sv.shape());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    const T s = sv[i];
    out[i] = std::max(s, T(0)) - (labels[i] ? s : T(0)) + std::log1p(std::exp(-std::abs(s)));
  }
  std::vector<int> lv(labels.begin(), labels.end());
  return tape.record(std::move(out), tape.requires_grad(logits),
                     [logits, lv = std::move(lv)](Tape<T>& t, Var o) {
    const T f = fault_factor<T>("binary_cross_entropy");
    const Tensor<T>& g = t.grad(o);
    const Tensor<T>& sv = t.value(logits);
    auto gs = t.grad(logits).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = sv[i];
      const T sig = s >= T(0) ? T(1) / (T(1) + std::exp(-s)) : std::exp(s) / (T(1) + std::exp(s));
      gs[i] += f * g[i] * (sig - (lv[i] ? T(1) : T(0)));
    }
  });
}

template <typename T>
Var gated_objective(Tape<T>& tape, std::optional<Var> ce, std::optional<Var> cl,
                    std::span<const int> labels) {
  const std::size_t batch = labels.size();
  if (batch == 0) throw ContractError("gated_objective: empty batch");
  if (!ce && !cl) throw ContractError("gated_objective: neither loss term present");
  if (ce && tape.value(*ce).size() != batch) throw ShapeError("gated_objective: ce size mismatch");
  if (cl && tape.value(*cl).size() != batch) throw ShapeError("gated_objective: cl size mismatch");
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (ce && labels[b] == 0) total += tape.value(*ce)[b];
    if (cl) total += tape.value(*cl)[b];
  }
  total /= static_cast<T>(batch);
  const bool rg = (ce && tape.requires_grad(*ce)) || (cl && tape.requires_grad(*cl));
  std::vector<int> lv(labels.begin(), labels.end());
  return tape.record(Tensor<T>::scalar(total), rg,
                     [ce, cl, batch, lv = std::move(lv)](Tape<T>& t, Var o) {
    const T g = t.grad(o)[0] / static_cast<T>(batch);
    if (ce && t.requires_grad(*ce)) {
      auto gce = t.grad(*ce).data();
      for (std::size_t b = 0; b < batch; ++b)
        if (lv[b] == 0) gce[b] += g;
    }
    if (cl && t.requires_grad(*cl)) {
      auto gcl = t.grad(*cl).data();
      for (std::size_t b = 0; b < batch; ++b) gcl[b] += g;
    }
  });
}

// ---------------------------------------------------------------------------

#define CL4AC_INSTANTIATE_OPS(T)                                                                 \
  template Var add<T>(Tape<T>&, Var, Var);                                                       \
  template Var mul<T>(Tape<T>&, Var, Var);                                                       \
  template Var scale<T>(Tape<T>&, Var, T);                                                       \
  template Var sum<T>(Tape<T>&, Var);                                                            \
  template Var mean<T>(Tape<T>&, Var);                                                           \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                    \
  template Var linear<T>(Tape<T>&, Var, Var, std::optional<Var>);                                \
  template Var relu<T>(Tape<T>&, Var);                                                           \
  template Var sigmoid<T>(Tape<T>&, Var);                                                        \
  template Var log<T>(Tape<T>&, Var);                                                            \
  template Var softmax<T>(Tape<T>&, Var, std::size_t);                                           \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, double);                                   \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, Parameter<T>&, Parameter<T>&, bool,        \
                             double, double);                                                    \
  template Var conv2d<T>(Tape<T>&, Var, Var);                                                    \
  template Var avg_pool_2x2<T>(Tape<T>&, Var);                                                   \
  template Var global_mean<T>(Tape<T>&, Var, std::size_t);                                       \
  template Var swap_last_two<T>(Tape<T>&, Var);                                                  \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                 \
  template Var embedding_lookup<T>(Tape<T>&, Var, std::span<const int>);                         \
  template Var dropout<T>(Tape<T>&, Var, double, Rng*, bool);                                    \
  template Var select_rows<T>(Tape<T>&, Var, std::span<const std::size_t>);                      \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::size_t, const AttentionMask*);         \
  template Var sequence_cross_entropy<T>(Tape<T>&, Var, std::span<const int>,                    \
                                         std::span<const int>, std::size_t, bool);                     \
  template Var binary_cross_entropy<T>(Tape<T>&, Var, std::span<const int>);                     \
  template Var binary_cross_entropy_with_logits<T>(Tape<T>&, Var, std::span<const int>);         \
  template Var gated_objective<T>(Tape<T>&, std::optional<Var>, std::optional<Var>,              \
                                  std::span<const int>);

CL4AC_INSTANTIATE_OPS(float)
CL4AC_INSTANTIATE_OPS(double)

#undef CL4AC_INSTANTIATE_OPS

}  // namespace cl4ac::nn
