#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "snnd/ops.hpp"
#include "snnd/tensor.hpp"

namespace snnd {

// Compares reverse-mode gradients against central finite differences.
//
// f must rebuild the scalar loss from the current values of `inputs` on every
// call (the checker perturbs those values in place through the shared
// storage). Returns the worst relative error max |fd - ad| / max(1, |fd|)
// over every coordinate of every input. Inputs that do not influence f simply
// check 0 against 0.
template <typename S>
double finite_difference_check(const std::function<TensorT<S>()>& f,
                               std::vector<TensorT<S>> inputs,
                               double eps = 1e-5) {
  auto& tape = TapeT<S>::active();
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  tape.clear();
  const bool was_enabled = tape.enabled();
  tape.set_enabled(true);
  TensorT<S> loss = f();
  tape.backward(loss);
  tape.set_enabled(was_enabled);

  std::vector<FlatArray<S>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad_or_zero());

  NoGradGuardT<S> no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    S* v = inputs[i].values().data();
    for (Index k = 0; k < inputs[i].numel(); ++k) {
      const S orig = v[k];
      v[k] = orig + S(eps);
      const double up = double(f().value());
      v[k] = orig - S(eps);
      const double down = double(f().value());
      v[k] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = double(analytic[i][k]);
      const double rel = std::abs(fd - ad) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace snnd
