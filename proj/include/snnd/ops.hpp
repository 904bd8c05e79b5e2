#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "snnd/error.hpp"
#include "snnd/tensor.hpp"

// Differentiable primitives. Every kernel is written with a fixed loop order
// and no batch-wide reductions inside per-sample math, so the forward values
// of one sample are bitwise identical whether it is evaluated alone or inside
// any batch. That invariant is load-bearing for reproducibility tests; do not
// swap these loops for BLAS-style kernels that block over rows.

namespace snnd {

// Probabilities are clamped to at least this value before any logarithm.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

template <typename S>
inline bool track(std::initializer_list<const TensorT<S>*> inputs) {
  if (!TapeT<S>::active().enabled()) return false;
  for (const TensorT<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace detail

// y = x * W + b with x:[B,Din], W:[Din,Dout], b:[Dout] -> y:[B,Dout].
template <typename S>
TensorT<S> dense(const TensorT<S>& x, const TensorT<S>& w,
                 const TensorT<S>& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
    throw DimError("dense: expected x rank 2, w rank 2, b rank 1");
  const Index batch = x.dim(0), din = x.dim(1);
  const Index dout = w.dim(1);
  if (w.dim(0) != din)
    throw DimError("dense: x columns " + std::to_string(din) +
                   " do not match w rows " + std::to_string(w.dim(0)));
  if (b.dim(0) != dout)
    throw DimError("dense: bias size " + std::to_string(b.dim(0)) +
                   " does not match w columns " + std::to_string(dout));

  TensorT<S> y = TensorT<S>::zeros({batch, dout});
  const S* xv = x.values().data();
  const S* wv = w.values().data();
  const S* bv = b.values().data();
  S* yv = y.values().data();
  for (Index r = 0; r < batch; ++r) {
    S* yrow = yv + r * dout;
    for (Index j = 0; j < dout; ++j) yrow[j] = bv[j];
    const S* xrow = xv + r * din;
    for (Index k = 0; k < din; ++k) {
      const S xk = xrow[k];
      const S* wrow = wv + k * dout;
      for (Index j = 0; j < dout; ++j) yrow[j] += xk * wrow[j];
    }
  }

  if (detail::track<S>({&x, &w, &b})) {
    y.set_requires_grad();
    auto xd = x.ptr(), wd = w.ptr(), bd = b.ptr(), yd = y.ptr();
    TapeT<S>::active().record([xd, wd, bd, yd, batch, din, dout] {
      if (!yd->has_grad()) return;
      const S* gy = yd->grad.data();
      if (xd->requires_grad) {
        S* gx = xd->ensure_grad().data();
        const S* wv2 = wd->values.data();
        for (Index r = 0; r < batch; ++r) {
          const S* gyrow = gy + r * dout;
          S* gxrow = gx + r * din;
          for (Index k = 0; k < din; ++k) {
            S acc = S(0);
            const S* wrow = wv2 + k * dout;
            for (Index j = 0; j < dout; ++j) acc += gyrow[j] * wrow[j];
            gxrow[k] += acc;
          }
        }
      }
      if (wd->requires_grad) {
        S* gw = wd->ensure_grad().data();
        const S* xv2 = xd->values.data();
        for (Index r = 0; r < batch; ++r) {
          const S* xrow = xv2 + r * din;
          const S* gyrow = gy + r * dout;
          for (Index k = 0; k < din; ++k) {
            const S xk = xrow[k];
            S* gwrow = gw + k * dout;
            for (Index j = 0; j < dout; ++j) gwrow[j] += xk * gyrow[j];
          }
        }
      }
      if (bd->requires_grad) {
        S* gb = bd->ensure_grad().data();
        for (Index r = 0; r < batch; ++r) {
          const S* gyrow = gy + r * dout;
          for (Index j = 0; j < dout; ++j) gb[j] += gyrow[j];
        }
      }
    });
  }
  return y;
}

// Softmax over the last dimension at the given temperature:
// p = softmax(z / temperature), computed with max subtraction per row.
template <typename S>
TensorT<S> softmax(const TensorT<S>& z, S temperature = S(1)) {
  if (!(temperature > S(0)))
    throw ParamError("softmax: temperature must be > 0");
  if (z.ndim() < 1) throw DimError("softmax: tensor must have rank >= 1");
  const Index classes = z.dim(z.ndim() - 1);
  const Index rows = z.numel() / classes;

  TensorT<S> p = TensorT<S>::zeros(z.shape());
  const S* zv = z.values().data();
  S* pv = p.values().data();
  for (Index r = 0; r < rows; ++r) {
    const S* zrow = zv + r * classes;
    S* prow = pv + r * classes;
    S m = zrow[0] / temperature;
    for (Index j = 1; j < classes; ++j) m = std::max(m, zrow[j] / temperature);
    S sum = S(0);
    for (Index j = 0; j < classes; ++j) {
      prow[j] = std::exp(zrow[j] / temperature - m);
      sum += prow[j];
    }
    for (Index j = 0; j < classes; ++j) prow[j] /= sum;
  }

  if (detail::track<S>({&z})) {
    p.set_requires_grad();
    auto zd = z.ptr(), pd = p.ptr();
    TapeT<S>::active().record([zd, pd, rows, classes, temperature] {
      if (!pd->has_grad()) return;
      const S* gp = pd->grad.data();
      const S* pv2 = pd->values.data();
      S* gz = zd->ensure_grad().data();
      for (Index r = 0; r < rows; ++r) {
        const S* prow = pv2 + r * classes;
        const S* grow = gp + r * classes;
        S dot = S(0);
        for (Index j = 0; j < classes; ++j) dot += grow[j] * prow[j];
        for (Index j = 0; j < classes; ++j)
          gz[r * classes + j] += prow[j] * (grow[j] - dot) / temperature;
      }
    });
  }
  return p;
}

// Batch-mean negative log likelihood of the true class under
// softmax(logits). Labels must lie in [0, classes).
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits,
                         const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw DimError("cross_entropy: logits must be 2-D");
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch)
    throw DimError("cross_entropy: " + std::to_string(labels.size()) +
                   " labels for batch of " + std::to_string(batch));
  for (Index r = 0; r < batch; ++r)
    if (labels[static_cast<std::size_t>(r)] < 0 ||
        labels[static_cast<std::size_t>(r)] >= classes)
      throw DataError("cross_entropy: label " +
                      std::to_string(labels[static_cast<std::size_t>(r)]) +
                      " outside [0," + std::to_string(classes) + ") at row " +
                      std::to_string(r));

  const S* zv = logits.values().data();
  FlatArray<S> probs(batch * classes);
  S loss = S(0);
  for (Index r = 0; r < batch; ++r) {
    const S* zrow = zv + r * classes;
    S* prow = probs.data() + r * classes;
    S m = zrow[0];
    for (Index j = 1; j < classes; ++j) m = std::max(m, zrow[j]);
    S sum = S(0);
    for (Index j = 0; j < classes; ++j) {
      prow[j] = std::exp(zrow[j] - m);
      sum += prow[j];
    }
    for (Index j = 0; j < classes; ++j) prow[j] /= sum;
    loss += m + std::log(sum) - zrow[labels[static_cast<std::size_t>(r)]];
  }
  loss /= static_cast<S>(batch);

  TensorT<S> out = TensorT<S>::scalar(loss);
  if (detail::track<S>({&logits})) {
    out.set_requires_grad();
    auto zd = logits.ptr(), od = out.ptr();
    TapeT<S>::active().record(
        [zd, od, probs = std::move(probs), labels, batch, classes] {
          if (!od->has_grad()) return;
          const S g = od->grad[0] / static_cast<S>(batch);
          S* gz = zd->ensure_grad().data();
          for (Index r = 0; r < batch; ++r) {
            const int y = labels[static_cast<std::size_t>(r)];
            const S* prow = probs.data() + r * classes;
            for (Index j = 0; j < classes; ++j)
              gz[r * classes + j] +=
                  g * (prow[j] - (j == static_cast<Index>(y) ? S(1) : S(0)));
          }
        });
  }
  return out;
}

// Batch-mean KL(p || q) between rows of two probability tensors. Probabilities
// are clamped to >= 1e-12 before the logarithms; rows of either argument that
// do not sum to 1 within 1e-6 raise a data error. Gradients flow to both
// arguments; detach an argument at the call site to stop one side.
template <typename S>
TensorT<S> kl_divergence(const TensorT<S>& p, const TensorT<S>& q) {
  if (p.ndim() != 2 || !p.same_shape(q))
    throw DimError("kl_divergence: expected two 2-D tensors of equal shape");
  const Index batch = p.dim(0), classes = p.dim(1);
  const auto check_rows = [&](const TensorT<S>& t, const char* name) {
    const S* v = t.values().data();
    for (Index r = 0; r < batch; ++r) {
      S sum = S(0);
      for (Index j = 0; j < classes; ++j) sum += v[r * classes + j];
      if (std::abs(double(sum) - 1.0) > 1e-6)
        throw DataError(std::string("kl_divergence: ") + name + " row " +
                        std::to_string(r) + " sums to " +
                        std::to_string(double(sum)) + ", not 1");
    }
  };
  check_rows(p, "first argument");
  check_rows(q, "second argument");

  const S* pv = p.values().data();
  const S* qv = q.values().data();
  S loss = S(0);
  for (Index r = 0; r < batch; ++r) {
    for (Index j = 0; j < classes; ++j) {
      const S pj = pv[r * classes + j];
      const S qj = qv[r * classes + j];
      loss += pj * (std::log(std::max(pj, S(kProbFloor))) -
                    std::log(std::max(qj, S(kProbFloor))));
    }
  }
  loss /= static_cast<S>(batch);

  TensorT<S> out = TensorT<S>::scalar(loss);
  if (detail::track<S>({&p, &q})) {
    out.set_requires_grad();
    auto pd = p.ptr(), qd = q.ptr(), od = out.ptr();
    TapeT<S>::active().record([pd, qd, od, batch, classes] {
      if (!od->has_grad()) return;
      const S g = od->grad[0] / static_cast<S>(batch);
      const S* pv2 = pd->values.data();
      const S* qv2 = qd->values.data();
      const S floor = S(kProbFloor);
      const Index n = batch * classes;
      if (pd->requires_grad) {
        S* gp = pd->ensure_grad().data();
        for (Index i = 0; i < n; ++i) {
          const S pi = pv2[i], qi = qv2[i];
          const S dpi = (pi > floor ? std::log(pi) + S(1) : std::log(floor)) -
                        std::log(std::max(qi, floor));
          gp[i] += g * dpi;
        }
      }
      if (qd->requires_grad) {
        S* gq = qd->ensure_grad().data();
        for (Index i = 0; i < n; ++i) {
          const S pi = pv2[i], qi = qv2[i];
          if (qi > floor) gq[i] += g * (-pi / qi);
        }
      }
    });
  }
  return out;
}

// Mean over all elements of the squared difference.
template <typename S>
TensorT<S> mse_loss(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b))
    throw DimError("mse_loss: shapes " + detail::shape_str(a.shape()) +
                   " and " + detail::shape_str(b.shape()) + " differ");
  const Index n = a.numel();
  const S* av = a.values().data();
  const S* bv = b.values().data();
  S loss = S(0);
  for (Index i = 0; i < n; ++i) {
    const S d = av[i] - bv[i];
    loss += d * d;
  }
  loss /= static_cast<S>(n);

  TensorT<S> out = TensorT<S>::scalar(loss);
  if (detail::track<S>({&a, &b})) {
    out.set_requires_grad();
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::active().record([ad, bd, od, n] {
      if (!od->has_grad()) return;
      const S g = od->grad[0] * S(2) / static_cast<S>(n);
      const S* av2 = ad->values.data();
      const S* bv2 = bd->values.data();
      if (ad->requires_grad) {
        S* ga = ad->ensure_grad().data();
        for (Index i = 0; i < n; ++i) ga[i] += g * (av2[i] - bv2[i]);
      }
      if (bd->requires_grad) {
        S* gb = bd->ensure_grad().data();
        for (Index i = 0; i < n; ++i) gb[i] -= g * (av2[i] - bv2[i]);
      }
    });
  }
  return out;
}

// Elementwise sum of two tensors of identical shape.
template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b))
    throw DimError("add: shapes " + detail::shape_str(a.shape()) + " and " +
                   detail::shape_str(b.shape()) + " differ");
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  out.values() = a.values() + b.values();
  if (detail::track<S>({&a, &b})) {
    out.set_requires_grad();
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::active().record([ad, bd, od] {
      if (!od->has_grad()) return;
      if (ad->requires_grad) ad->accumulate_grad(od->grad);
      if (bd->requires_grad) bd->accumulate_grad(od->grad);
    });
  }
  return out;
}

// out = c * x for a plain scalar constant c.
template <typename S>
TensorT<S> scale(const TensorT<S>& x, S c) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  out.values() = x.values() * c;
  if (detail::track<S>({&x})) {
    out.set_requires_grad();
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::active().record([xd, od, c] {
      if (!od->has_grad()) return;
      xd->ensure_grad() += od->grad * c;
    });
  }
  return out;
}

// out = leak * h + i, the membrane update kernel. leak is a constant.
template <typename S>
TensorT<S> leaky_add(const TensorT<S>& h, const TensorT<S>& i, S leak) {
  if (!h.same_shape(i))
    throw DimError("leaky_add: shapes " + detail::shape_str(h.shape()) +
                   " and " + detail::shape_str(i.shape()) + " differ");
  TensorT<S> out = TensorT<S>::zeros(h.shape());
  out.values() = h.values() * leak + i.values();
  if (detail::track<S>({&h, &i})) {
    out.set_requires_grad();
    auto hd = h.ptr(), id = i.ptr(), od = out.ptr();
    TapeT<S>::active().record([hd, id, od, leak] {
      if (!od->has_grad()) return;
      if (hd->requires_grad) hd->ensure_grad() += od->grad * leak;
      if (id->requires_grad) id->accumulate_grad(od->grad);
    });
  }
  return out;
}

// Elementwise mean of k tensors of identical shape, accumulated in argument
// order. Used for mean logits and for ensemble teachers.
template <typename S>
TensorT<S> average(const std::vector<TensorT<S>>& xs) {
  if (xs.empty()) throw DimError("average: no tensors given");
  for (const auto& x : xs)
    if (!x.same_shape(xs.front()))
      throw DimError("average: tensors must share one shape");
  TensorT<S> out = TensorT<S>::zeros(xs.front().shape());
  for (const auto& x : xs) out.values() += x.values();
  const S k = static_cast<S>(xs.size());
  out.values() /= k;

  bool needs = false;
  if (TapeT<S>::active().enabled())
    for (const auto& x : xs) needs = needs || x.requires_grad();
  if (needs) {
    out.set_requires_grad();
    std::vector<std::shared_ptr<TensorDataT<S>>> in;
    in.reserve(xs.size());
    for (const auto& x : xs) in.push_back(x.ptr());
    auto od = out.ptr();
    TapeT<S>::active().record([in = std::move(in), od, k] {
      if (!od->has_grad()) return;
      for (const auto& xd : in)
        if (xd->requires_grad) xd->ensure_grad() += od->grad / k;
    });
  }
  return out;
}

// Scalar sum of all elements.
template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
  S s = S(0);
  const S* xv = x.values().data();
  for (Index i = 0; i < x.numel(); ++i) s += xv[i];
  TensorT<S> out = TensorT<S>::scalar(s);
  if (detail::track<S>({&x})) {
    out.set_requires_grad();
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::active().record([xd, od] {
      if (!od->has_grad()) return;
      xd->ensure_grad() += od->grad[0];
    });
  }
  return out;
}

// Copies time slice t of a [T,B,D] tensor into a [B,D] tensor. Backward
// scatters into the matching block.
template <typename S>
TensorT<S> slice_time(const TensorT<S>& x, Index t) {
  if (x.ndim() != 3) throw DimError("slice_time: tensor must be [T,B,D]");
  const Index steps = x.dim(0), batch = x.dim(1), dim = x.dim(2);
  if (t < 0 || t >= steps)
    throw DimError("slice_time: index " + std::to_string(t) +
                   " outside [0," + std::to_string(steps) + ")");
  TensorT<S> out = TensorT<S>::zeros({batch, dim});
  const Index block = batch * dim;
  out.values() = x.values().segment(t * block, block);
  if (detail::track<S>({&x})) {
    out.set_requires_grad();
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::active().record([xd, od, t, block] {
      if (!od->has_grad()) return;
      xd->ensure_grad().segment(t * block, block) += od->grad;
    });
  }
  return out;
}

// Row-wise argmax over a 2-D tensor; ties resolve to the lowest index.
template <typename S>
std::vector<int> argmax_rows(const TensorT<S>& t) {
  if (t.ndim() != 2) throw DimError("argmax_rows: tensor must be 2-D");
  const Index rows = t.dim(0), cols = t.dim(1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  const S* v = t.values().data();
  for (Index r = 0; r < rows; ++r) {
    Index best = 0;
    for (Index j = 1; j < cols; ++j)
      if (v[r * cols + j] > v[r * cols + best]) best = j;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

template <typename S>
void check_finite(const TensorT<S>& t, const char* context) {
  const S* v = t.values().data();
  for (Index i = 0; i < t.numel(); ++i)
    if (!std::isfinite(double(v[i])))
      throw NumericError(std::string(context) +
                         ": non-finite value encountered");
}

}  // namespace snnd
