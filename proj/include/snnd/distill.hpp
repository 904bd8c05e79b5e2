#pragma once

#include <string>
#include <vector>

#include "snnd/network.hpp"
#include "snnd/tensor.hpp"

// Self-distillation across timesteps. The T logit slices of one forward pass
// are treated as T submodels sharing parameters; a gradient-free metric ranks
// them each batch, and the chosen scheme adds teacher->student pressure
// between slices on top of the task loss.
//
// Conventions, fixed across the module:
//  - pair_loss(teacher, student): knowledge flows teacher -> student.
//  - "strong to weak" (s2w) means the higher-scoring slice teaches the lower.
//  - Temperature alpha softens both sides of the KL; the loss is scaled by
//    alpha^2 so its gradient magnitude stays comparable across temperatures.
//    The mse variant compares raw logits and ignores alpha.

namespace snnd {

enum class Scheme {
  none,
  s2w,
  w2s,
  simultaneous,
  ensemble_teacher,
  ensemble_student,
  cascade,
};

enum class Metric { confidence, entropy, margin, diversity };

enum class PairLossKind { kl, mse };

// Orientation for the schemes that are not symmetric pairs: who teaches in
// ensemble_teacher / ensemble_student / cascade.
enum class Direction { s2w, w2s };

struct DistillConfig {
  Scheme scheme = Scheme::none;
  Metric metric = Metric::confidence;
  Real alpha = Real(2);
  Real lambda_s2w = Real(1);
  Real lambda_w2s = Real(1);
  PairLossKind loss_fn = PairLossKind::kl;
  bool detach_teacher = false;
  Direction direction = Direction::s2w;
};

void validate(const DistillConfig& cfg);

const char* to_string(Scheme s);
const char* to_string(Metric m);
const char* to_string(PairLossKind k);
const char* to_string(Direction d);
Scheme scheme_from_string(const std::string& s);
Metric metric_from_string(const std::string& s);
PairLossKind pair_loss_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

// Ranking result for one batch. per_timestep[t] is the batch-mean score of
// slice t; larger always means stronger. t_strong != t_weak is guaranteed;
// when every slice ties, slices 0 and 1 are picked.
struct SubmodelScore {
  std::vector<Real> per_timestep;
  int t_strong = 0;
  int t_weak = 0;
};

// Batch-mean score of one [batch, classes] logit slice. Never records tape
// nodes; ranking is outside the differentiated graph.
Real metric_score(const Tensor& logits, Metric metric);

SubmodelScore identify(const TimestepOutputs& out, Metric metric);

// Timestep indices sorted by score, strongest first; ties keep the lower
// index earlier.
std::vector<int> rank_descending(const std::vector<Real>& scores);

// Distillation pressure from one slice onto another.
// kl:  alpha^2 * KL(softmax(teacher/alpha) || softmax(student/alpha))
// mse: mean squared difference of raw logits
Tensor pair_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                 const DistillConfig& cfg);

struct SchemeLoss {
  Tensor loss;          // scalar; constant zero when no term applies
  SubmodelScore score;  // ranking used (also computed for scheme none)
  bool has_terms = false;
};

// Weighted distillation loss of the configured scheme. Terms whose effective
// weight is exactly zero are skipped entirely, so a zero lambda leaves the
// recorded graph identical to scheme none.
SchemeLoss scheme_loss(const TimestepOutputs& out, const DistillConfig& cfg);

struct TotalLoss {
  Tensor loss;        // cross entropy of mean logits + scheme loss
  Real ce_part = 0;
  Real distill_part = 0;  // weighted scheme loss as optimized
  SubmodelScore score;
};

TotalLoss total_loss(const TimestepOutputs& out, const std::vector<int>& labels,
                     const DistillConfig& cfg);

}  // namespace snnd
