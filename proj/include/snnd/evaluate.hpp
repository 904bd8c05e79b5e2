#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snnd/data.hpp"
#include "snnd/network.hpp"
#include "snnd/rng.hpp"

// Inference-time evaluation: truncated-depth accuracy, confidence-gated early
// exit, and input-perturbation robustness. Nothing here ever changes network
// parameters; attacks differentiate the loss w.r.t. the input only.

namespace snnd {

// Accuracy when predictions use the mean of the first t_max logit slices.
Real eval_at(Network& net, const Dataset& data, int t_max,
             Index eval_batch = 256);

struct EarlyExitConfig {
  Real threshold = Real(0.9);  // in (0, 1]
  int max_timesteps = 0;       // 0 means the network's full depth
};

struct EarlyExitResult {
  Real accuracy = Real(0);
  Real avg_timesteps = Real(0);
};

// Per sample, stops at the first t where the softmax of the running mean of
// logit slices 1..t puts at least `threshold` on its top class; predicts that
// class. Samples that never clear the threshold use all max_timesteps slices.
EarlyExitResult early_exit_eval(Network& net, const Dataset& data,
                                const EarlyExitConfig& cfg,
                                Index eval_batch = 256);

enum class AttackKind { gn, fgsm, pgd };

const char* to_string(AttackKind k);
AttackKind attack_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::gn;
  Real epsilon = Real(0);    // max-norm budget for fgsm/pgd
  Real sigma = Real(0);      // noise scale for gn
  int steps = 7;             // pgd iterations
  Real step_size = Real(0);  // pgd step; 0 picks 2.5 * epsilon / steps
  bool random_start = true;  // pgd: start from a random point in the ball
  std::uint64_t seed = 7;    // randomness for gn noise / pgd starts
};

void validate(const AttackConfig& cfg);

// Additive Gaussian noise, clipped to the input bounds. epsilon plays no
// role; sigma alone scales the noise.
Tensor gn_attack(const Tensor& x, Real sigma, std::pair<Real, Real> bounds,
                 Rng& rng);

// One signed gradient step of size epsilon, clipped to the input bounds.
// The loss is the cross entropy of the mean logits.
Tensor fgsm_attack(Network& net, const Tensor& x,
                   const std::vector<int>& labels, Real epsilon,
                   std::pair<Real, Real> bounds);

// Iterated signed gradient steps, each followed by projection onto the
// epsilon max-norm ball around the clean input and clipping to the bounds.
// With one step, no random start, and step_size = epsilon this reproduces
// fgsm bitwise.
Tensor pgd_attack(Network& net, const Tensor& x, const std::vector<int>& labels,
                  const AttackConfig& cfg, std::pair<Real, Real> bounds,
                  Rng& rng);

struct RobustRow {
  std::string attack;  // "clean", "gn", "fgsm", "pgd"
  Real epsilon = Real(0);
  Real sigma = Real(0);
  int steps = 0;
  Real accuracy = Real(0);
};

// Accuracy under each attack, preceded by a clean row. Parameters are
// bitwise unchanged afterwards.
std::vector<RobustRow> robust_eval(Network& net, const Dataset& data,
                                   const std::vector<AttackConfig>& attacks,
                                   Index eval_batch = 256);

std::string robustness_csv_header();
std::string robustness_csv_row(const RobustRow& row);

}  // namespace snnd
