#include "snnd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snnd/error.hpp"
#include "snnd/ops.hpp"

namespace snnd {

void validate(const DistillConfig& cfg) {
  if (!(cfg.alpha > Real(0)))
    throw ConfigError("distill: alpha must be > 0");
  if (cfg.lambda_s2w < Real(0) || cfg.lambda_w2s < Real(0))
    throw ConfigError("distill: lambda weights must be >= 0");
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::none: return "none";
    case Scheme::s2w: return "s2w";
    case Scheme::w2s: return "w2s";
    case Scheme::simultaneous: return "simultaneous";
    case Scheme::ensemble_teacher: return "ensemble_teacher";
    case Scheme::ensemble_student: return "ensemble_student";
    case Scheme::cascade: return "cascade";
  }
  return "?";
}

const char* to_string(Metric m) {
  switch (m) {
    case Metric::confidence: return "confidence";
    case Metric::entropy: return "entropy";
    case Metric::margin: return "margin";
    case Metric::diversity: return "diversity";
  }
  return "?";
}

const char* to_string(PairLossKind k) {
  return k == PairLossKind::kl ? "kl" : "mse";
}

const char* to_string(Direction d) {
  return d == Direction::s2w ? "s2w" : "w2s";
}

Scheme scheme_from_string(const std::string& s) {
  for (Scheme v : {Scheme::none, Scheme::s2w, Scheme::w2s,
                   Scheme::simultaneous, Scheme::ensemble_teacher,
                   Scheme::ensemble_student, Scheme::cascade})
    if (s == to_string(v)) return v;
  throw ConfigError(
      "unknown scheme '" + s +
      "' (valid: none, s2w, w2s, simultaneous, ensemble_teacher, "
      "ensemble_student, cascade)");
}

Metric metric_from_string(const std::string& s) {
  for (Metric v : {Metric::confidence, Metric::entropy, Metric::margin,
                   Metric::diversity})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown metric '" + s +
                    "' (valid: confidence, entropy, margin, diversity)");
}

PairLossKind pair_loss_from_string(const std::string& s) {
  if (s == "kl") return PairLossKind::kl;
  if (s == "mse") return PairLossKind::mse;
  throw ConfigError("unknown loss_fn '" + s + "' (valid: kl, mse)");
}

Direction direction_from_string(const std::string& s) {
  if (s == "s2w") return Direction::s2w;
  if (s == "w2s") return Direction::w2s;
  throw ConfigError("unknown direction '" + s + "' (valid: s2w, w2s)");
}

Real metric_score(const Tensor& logits, Metric metric) {
  if (logits.ndim() != 2)
    throw DimError("metric_score: logits must be [batch, classes]");
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (batch < 1 || classes < 2)
    throw DimError("metric_score: need at least one row and two classes");

  const Real* zv = logits.values().data();
  std::vector<Real> p(static_cast<std::size_t>(classes));
  Real total = Real(0);
  for (Index r = 0; r < batch; ++r) {
    const Real* zrow = zv + r * classes;
    Real m = zrow[0];
    for (Index j = 1; j < classes; ++j) m = std::max(m, zrow[j]);
    Real sum = Real(0);
    for (Index j = 0; j < classes; ++j) {
      p[static_cast<std::size_t>(j)] = std::exp(zrow[j] - m);
      sum += p[static_cast<std::size_t>(j)];
    }
    for (Index j = 0; j < classes; ++j) p[static_cast<std::size_t>(j)] /= sum;

    Real score = Real(0);
    switch (metric) {
      case Metric::confidence: {
        score = *std::max_element(p.begin(), p.end());
        break;
      }
      case Metric::entropy: {
        // Negated Shannon entropy: peaked distributions score higher.
        for (Real pj : p)
          score += pj * std::log(std::max(pj, Real(kProbFloor)));
        break;
      }
      case Metric::margin: {
        Real best = -Real(1), second = -Real(1);
        for (Real pj : p) {
          if (pj > best) {
            second = best;
            best = pj;
          } else if (pj > second) {
            second = pj;
          }
        }
        score = best - second;
        break;
      }
      case Metric::diversity: {
        // Population variance of the class probabilities: a peaked
        // distribution spreads far from the uniform mean 1/classes.
        Real mean = Real(0);
        for (Real pj : p) mean += pj;
        mean /= static_cast<Real>(classes);
        for (Real pj : p) score += (pj - mean) * (pj - mean);
        score /= static_cast<Real>(classes);
        break;
      }
    }
    total += score;
  }
  return total / static_cast<Real>(batch);
}

SubmodelScore identify(const TimestepOutputs& out, Metric metric) {
  const int steps = out.steps();
  if (steps < 2)
    throw UsageError("identify: need at least two timestep outputs");
  SubmodelScore s;
  s.per_timestep.resize(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t)
    s.per_timestep[static_cast<std::size_t>(t)] =
        metric_score(out.logits[static_cast<std::size_t>(t)], metric);

  s.t_strong = 0;
  s.t_weak = 0;
  for (int t = 1; t < steps; ++t) {
    if (s.per_timestep[static_cast<std::size_t>(t)] >
        s.per_timestep[static_cast<std::size_t>(s.t_strong)])
      s.t_strong = t;
    if (s.per_timestep[static_cast<std::size_t>(t)] <
        s.per_timestep[static_cast<std::size_t>(s.t_weak)])
      s.t_weak = t;
  }
  if (s.t_strong == s.t_weak) {
    // Every slice tied; fall back to a fixed distinct pair.
    s.t_strong = 0;
    s.t_weak = 1;
  }
  return s;
}

std::vector<int> rank_descending(const std::vector<Real>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] >
           scores[static_cast<std::size_t>(b)];
  });
  return order;
}

Tensor pair_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                 const DistillConfig& cfg) {
  validate(cfg);
  Tensor teacher =
      cfg.detach_teacher ? teacher_logits.detach() : teacher_logits;
  if (cfg.loss_fn == PairLossKind::mse)
    return mse_loss(teacher, student_logits);
  Tensor pt = softmax(teacher, cfg.alpha);
  Tensor ps = softmax(student_logits, cfg.alpha);
  return scale(kl_divergence(pt, ps), cfg.alpha * cfg.alpha);
}

namespace {

// KL against the mean softened distribution of every slice but the student;
// mse against the mean raw logits of the same set.
Tensor ensemble_teacher_term(const TimestepOutputs& out, int student,
                             const DistillConfig& cfg) {
  std::vector<Tensor> teachers;
  teachers.reserve(static_cast<std::size_t>(out.steps() - 1));
  for (int t = 0; t < out.steps(); ++t) {
    if (t == student) continue;
    Tensor tl = cfg.detach_teacher
                    ? out.logits[static_cast<std::size_t>(t)].detach()
                    : out.logits[static_cast<std::size_t>(t)];
    if (cfg.loss_fn == PairLossKind::kl)
      teachers.push_back(softmax(tl, cfg.alpha));
    else
      teachers.push_back(tl);
  }
  Tensor teacher = average(teachers);
  const Tensor& student_logits = out.logits[static_cast<std::size_t>(student)];
  if (cfg.loss_fn == PairLossKind::mse)
    return mse_loss(teacher, student_logits);
  Tensor ps = softmax(student_logits, cfg.alpha);
  return scale(kl_divergence(teacher, ps), cfg.alpha * cfg.alpha);
}

}  // namespace

SchemeLoss scheme_loss(const TimestepOutputs& out, const DistillConfig& cfg) {
  validate(cfg);
  SchemeLoss result;
  result.score = identify(out, cfg.metric);
  const int ts = result.score.t_strong;
  const int tw = result.score.t_weak;
  const auto& logits = out.logits;
  const Real lambda_dir =
      cfg.direction == Direction::s2w ? cfg.lambda_s2w : cfg.lambda_w2s;

  Tensor acc;
  const auto add_term = [&](const Tensor& term) {
    acc = result.has_terms ? add(acc, term) : term;
    result.has_terms = true;
  };

  switch (cfg.scheme) {
    case Scheme::none:
      break;
    case Scheme::s2w:
      if (cfg.lambda_s2w != Real(0))
        add_term(scale(pair_loss(logits[static_cast<std::size_t>(ts)],
                                 logits[static_cast<std::size_t>(tw)], cfg),
                       cfg.lambda_s2w));
      break;
    case Scheme::w2s:
      if (cfg.lambda_w2s != Real(0))
        add_term(scale(pair_loss(logits[static_cast<std::size_t>(tw)],
                                 logits[static_cast<std::size_t>(ts)], cfg),
                       cfg.lambda_w2s));
      break;
    case Scheme::simultaneous:
      if (cfg.lambda_s2w != Real(0))
        add_term(scale(pair_loss(logits[static_cast<std::size_t>(ts)],
                                 logits[static_cast<std::size_t>(tw)], cfg),
                       cfg.lambda_s2w));
      if (cfg.lambda_w2s != Real(0))
        add_term(scale(pair_loss(logits[static_cast<std::size_t>(tw)],
                                 logits[static_cast<std::size_t>(ts)], cfg),
                       cfg.lambda_w2s));
      break;
    case Scheme::ensemble_teacher: {
      if (lambda_dir == Real(0)) break;
      const int student = cfg.direction == Direction::s2w ? tw : ts;
      add_term(scale(ensemble_teacher_term(out, student, cfg), lambda_dir));
      break;
    }
    case Scheme::ensemble_student: {
      if (lambda_dir == Real(0)) break;
      const int teacher = cfg.direction == Direction::s2w ? ts : tw;
      Tensor sum;
      bool first = true;
      for (int t = 0; t < out.steps(); ++t) {
        if (t == teacher) continue;
        Tensor term = pair_loss(logits[static_cast<std::size_t>(teacher)],
                                logits[static_cast<std::size_t>(t)], cfg);
        sum = first ? term : add(sum, term);
        first = false;
      }
      add_term(scale(sum, lambda_dir / static_cast<Real>(out.steps() - 1)));
      break;
    }
    case Scheme::cascade: {
      if (lambda_dir == Real(0)) break;
      const std::vector<int> order = rank_descending(result.score.per_timestep);
      Tensor sum;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const int stronger = order[i];
        const int weaker = order[i + 1];
        const int teacher = cfg.direction == Direction::s2w ? stronger : weaker;
        const int student = cfg.direction == Direction::s2w ? weaker : stronger;
        Tensor term = pair_loss(logits[static_cast<std::size_t>(teacher)],
                                logits[static_cast<std::size_t>(student)], cfg);
        sum = i == 0 ? term : add(sum, term);
      }
      add_term(scale(sum, lambda_dir / static_cast<Real>(out.steps() - 1)));
      break;
    }
  }

  if (!result.has_terms) result.loss = Tensor::scalar(Real(0));
  else result.loss = acc;
  return result;
}

TotalLoss total_loss(const TimestepOutputs& out, const std::vector<int>& labels,
                     const DistillConfig& cfg) {
  Tensor mean = mean_logits(out);
  Tensor ce = cross_entropy(mean, labels);
  SchemeLoss sl = scheme_loss(out, cfg);

  TotalLoss result;
  result.ce_part = ce.value();
  result.distill_part = sl.loss.value();
  result.score = std::move(sl.score);
  result.loss = sl.has_terms ? add(ce, sl.loss) : ce;
  return result;
}

}  // namespace snnd
