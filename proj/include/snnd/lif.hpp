#pragma once

#include <cmath>

#include "snnd/error.hpp"
#include "snnd/ops.hpp"
#include "snnd/tensor.hpp"

// Leaky integrate-and-fire neurons with a soft (subtractive) reset.
// Per step: H' = (1 - 1/tau) * H + I, spike S = step(H' - threshold),
// then H <- H' - S * threshold.
//
// Two spike modes share one interface. `hard` emits binary spikes and uses a
// rectangular surrogate for the backward pass only; the reset treats S as a
// constant there, matching how the surrogate is normally applied. `soft`
// replaces the step by the clipped ramp the surrogate is the derivative of,
// and keeps the whole step differentiable (reset included), so finite
// differences agree with the tape end to end. Both modes open the backward
// window on exactly the same membrane condition |H' - threshold| < width/2.

namespace snnd {

struct LifParams {
  Real tau = Real(2);
  Real threshold = Real(1);
  Real surrogate_width = Real(1);
};

enum class SpikeMode { hard, soft };

inline void validate(const LifParams& p) {
  if (!(p.tau > Real(1)))
    throw ConfigError("LifParams: tau must be > 1 for a leaky membrane");
  if (!(p.threshold > Real(0)))
    throw ConfigError("LifParams: threshold must be > 0");
  if (!(p.surrogate_width > Real(0)))
    throw ConfigError("LifParams: surrogate_width must be > 0");
}

// Rectangular surrogate derivative of the spike w.r.t. the membrane:
// 1/width inside the window |h - threshold| < width/2, zero outside.
template <typename S>
FlatArray<S> surrogate_grad(const FlatArray<S>& membrane, S threshold,
                            S width) {
  FlatArray<S> g(membrane.size());
  const S half = width / S(2);
  for (Index i = 0; i < membrane.size(); ++i)
    g[i] = std::abs(membrane[i] - threshold) < half ? S(1) / width : S(0);
  return g;
}

namespace detail {

template <typename S>
TensorT<S> spike_forward(const TensorT<S>& h, S threshold, S width,
                         SpikeMode mode) {
  TensorT<S> out = TensorT<S>::zeros(h.shape());
  const S* hv = h.values().data();
  S* ov = out.values().data();
  const S half = width / S(2);
  for (Index i = 0; i < h.numel(); ++i) {
    if (mode == SpikeMode::soft && std::abs(hv[i] - threshold) < half)
      ov[i] = (hv[i] - threshold) / width + S(0.5);
    else
      ov[i] = hv[i] >= threshold ? S(1) : S(0);
  }
  if (track<S>({&h})) {
    out.set_requires_grad();
    auto hd = h.ptr(), od = out.ptr();
    TapeT<S>::active().record([hd, od, threshold, width] {
      if (!od->has_grad()) return;
      FlatArray<S> win = surrogate_grad<S>(hd->values, threshold, width);
      hd->ensure_grad() += od->grad * win;
    });
  }
  return out;
}

// h_next = h - threshold * s. In hard mode the spike is a constant for the
// backward pass; in soft mode the reset stays differentiable through s.
template <typename S>
TensorT<S> soft_reset(const TensorT<S>& h, const TensorT<S>& s, S threshold,
                      bool grad_through_spike) {
  TensorT<S> out = TensorT<S>::zeros(h.shape());
  out.values() = h.values() - s.values() * threshold;
  if (track<S>({&h, &s})) {
    out.set_requires_grad();
    auto hd = h.ptr(), sd = s.ptr(), od = out.ptr();
    TapeT<S>::active().record([hd, sd, od, threshold, grad_through_spike] {
      if (!od->has_grad()) return;
      if (hd->requires_grad) hd->accumulate_grad(od->grad);
      if (grad_through_spike && sd->requires_grad)
        sd->ensure_grad() -= od->grad * threshold;
    });
  }
  return out;
}

}  // namespace detail

// Binary spikes with the rectangular surrogate backward.
template <typename S>
TensorT<S> spike_hard(const TensorT<S>& membrane, const LifParams& p) {
  return detail::spike_forward(membrane, S(p.threshold),
                               S(p.surrogate_width), SpikeMode::hard);
}

// Clipped-ramp spikes, fully differentiable; values in [0,1]. Test-oriented
// mode whose tape gradient the rectangular surrogate reproduces exactly.
template <typename S>
TensorT<S> spike_soft(const TensorT<S>& membrane, const LifParams& p) {
  return detail::spike_forward(membrane, S(p.threshold),
                               S(p.surrogate_width), SpikeMode::soft);
}

// Membrane trace of one layer for the current batch. Zeroed at every
// sequence start; holds [batch, width] once stepped.
struct LifState {
  Tensor membrane;

  void reset(Index batch, Index width) {
    membrane = Tensor::zeros({batch, width});
  }
};

// One LIF step: integrates `current` into the state's membrane, emits the
// spike tensor, applies the subtractive reset, and stores the new membrane.
inline Tensor lif_step(LifState& state, const Tensor& current,
                       const LifParams& p, SpikeMode mode) {
  const Real leak = Real(1) - Real(1) / p.tau;
  Tensor charged = leaky_add(state.membrane, current, leak);
  Tensor spikes = detail::spike_forward(charged, p.threshold,
                                        p.surrogate_width, mode);
  state.membrane = detail::soft_reset(charged, spikes, p.threshold,
                                      /*grad_through_spike=*/mode ==
                                          SpikeMode::soft);
  return spikes;
}

}  // namespace snnd
