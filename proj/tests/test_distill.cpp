#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "snnd/distill.hpp"
#include "snnd/gradcheck.hpp"
#include "snnd/rng.hpp"

using namespace snnd;

namespace {

TimestepOutputs make_outputs(const std::vector<std::vector<Real>>& slices,
                             Index batch, Index classes) {
  TimestepOutputs out;
  for (const auto& s : slices)
    out.logits.push_back(Tensor::from_values({batch, classes}, s));
  return out;
}

// Plain-double reference model, written independently of the tensor code.
// Shapes: logits[t][b*C + c].
struct Ref {
  static std::vector<double> softmax_row(const std::vector<double>& z,
                                         double temp) {
    std::vector<double> s(z.size());
    double mx = -1e300;
    for (size_t i = 0; i < z.size(); ++i) mx = std::max(mx, z[i] / temp);
    double sum = 0;
    for (size_t i = 0; i < z.size(); ++i) {
      s[i] = std::exp(z[i] / temp - mx);
      sum += s[i];
    }
    for (double& v : s) v /= sum;
    return s;
  }

  static double metric(const std::vector<double>& logits, int b, int c,
                       Metric m) {
    double acc = 0;
    for (int r = 0; r < b; ++r) {
      std::vector<double> row(logits.begin() + r * c,
                              logits.begin() + (r + 1) * c);
      std::vector<double> p = softmax_row(row, 1.0);
      switch (m) {
        case Metric::confidence:
          acc += *std::max_element(p.begin(), p.end());
          break;
        case Metric::entropy: {
          double h = 0;
          for (double v : p)
            if (v > 0) h += v * std::log(v);
          acc += h;  // negated entropy: larger = more certain
          break;
        }
        case Metric::margin: {
          std::vector<double> q = p;
          std::sort(q.begin(), q.end(), std::greater<>());
          acc += q[0] - q[1];
          break;
        }
        case Metric::diversity: {
          double mean = 1.0 / c, var = 0;
          for (double v : p) var += (v - mean) * (v - mean);
          acc += var / c;
          break;
        }
      }
    }
    return acc / b;
  }

  static double kl(const std::vector<double>& p, const std::vector<double>& q,
                   int b, int c) {
    const double floor = 1e-12;
    double acc = 0;
    for (int i = 0; i < b * c; ++i)
      acc += p[i] * (std::log(std::max(p[i], floor)) -
                     std::log(std::max(q[i], floor)));
    return acc / b;
  }

  static double pair(const std::vector<double>& t,
                     const std::vector<double>& s, int b, int c,
                     const DistillConfig& cfg) {
    if (cfg.loss_fn == PairLossKind::mse) {
      double acc = 0;
      for (int i = 0; i < b * c; ++i) acc += (t[i] - s[i]) * (t[i] - s[i]);
      return acc / (b * c);
    }
    std::vector<double> pt, ps;
    for (int r = 0; r < b; ++r) {
      auto st = softmax_row({t.begin() + r * c, t.begin() + (r + 1) * c},
                            double(cfg.alpha));
      auto ss = softmax_row({s.begin() + r * c, s.begin() + (r + 1) * c},
                            double(cfg.alpha));
      pt.insert(pt.end(), st.begin(), st.end());
      ps.insert(ps.end(), ss.begin(), ss.end());
    }
    return double(cfg.alpha) * double(cfg.alpha) * kl(pt, ps, b, c);
  }

  static double scheme(const std::vector<std::vector<double>>& logits, int b,
                       int c, const DistillConfig& cfg, int* strong = nullptr,
                       int* weak = nullptr) {
    const int T = int(logits.size());
    std::vector<double> scores(T);
    for (int t = 0; t < T; ++t) scores[t] = metric(logits[t], b, c, cfg.metric);
    int ts = 0, tw = 0;
    for (int t = 1; t < T; ++t) {
      if (scores[t] > scores[ts]) ts = t;
      if (scores[t] < scores[tw]) tw = t;
    }
    if (ts == tw) { ts = 0; tw = 1; }
    if (strong) *strong = ts;
    if (weak) *weak = tw;

    const double ld =
        cfg.direction == Direction::s2w ? double(cfg.lambda_s2w)
                                        : double(cfg.lambda_w2s);
    switch (cfg.scheme) {
      case Scheme::none:
        return 0;
      case Scheme::s2w:
        return double(cfg.lambda_s2w) * pair(logits[ts], logits[tw], b, c, cfg);
      case Scheme::w2s:
        return double(cfg.lambda_w2s) * pair(logits[tw], logits[ts], b, c, cfg);
      case Scheme::simultaneous:
        return double(cfg.lambda_s2w) *
                   pair(logits[ts], logits[tw], b, c, cfg) +
               double(cfg.lambda_w2s) * pair(logits[tw], logits[ts], b, c, cfg);
      case Scheme::ensemble_teacher: {
        const int student = cfg.direction == Direction::s2w ? tw : ts;
        if (cfg.loss_fn == PairLossKind::mse) {
          std::vector<double> mean(b * c, 0.0);
          int k = 0;
          for (int t = 0; t < T; ++t) {
            if (t == student) continue;
            for (int i = 0; i < b * c; ++i) mean[i] += logits[t][i];
            ++k;
          }
          for (double& v : mean) v /= k;
          double acc = 0;
          for (int i = 0; i < b * c; ++i)
            acc += (mean[i] - logits[student][i]) * (mean[i] - logits[student][i]);
          return ld * acc / (b * c);
        }
        std::vector<double> mean_p(b * c, 0.0);
        int k = 0;
        for (int t = 0; t < T; ++t) {
          if (t == student) continue;
          for (int r = 0; r < b; ++r) {
            auto p = softmax_row({logits[t].begin() + r * c,
                                  logits[t].begin() + (r + 1) * c},
                                 double(cfg.alpha));
            for (int j = 0; j < c; ++j) mean_p[r * c + j] += p[j];
          }
          ++k;
        }
        for (double& v : mean_p) v /= k;
        std::vector<double> ps;
        for (int r = 0; r < b; ++r) {
          auto p = softmax_row({logits[student].begin() + r * c,
                                logits[student].begin() + (r + 1) * c},
                               double(cfg.alpha));
          ps.insert(ps.end(), p.begin(), p.end());
        }
        return ld * double(cfg.alpha) * double(cfg.alpha) * kl(mean_p, ps, b, c);
      }
      case Scheme::ensemble_student: {
        const int teacher = cfg.direction == Direction::s2w ? ts : tw;
        double acc = 0;
        for (int t = 0; t < T; ++t)
          if (t != teacher) acc += pair(logits[teacher], logits[t], b, c, cfg);
        return ld * acc / (T - 1);
      }
      case Scheme::cascade: {
        std::vector<int> order(T);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int z) { return scores[a] > scores[z]; });
        double acc = 0;
        for (int i = 0; i + 1 < T; ++i) {
          const int hi = order[i], lo = order[i + 1];
          acc += cfg.direction == Direction::s2w
                     ? pair(logits[hi], logits[lo], b, c, cfg)
                     : pair(logits[lo], logits[hi], b, c, cfg);
        }
        return ld * acc / (T - 1);
      }
    }
    return 0;
  }
};

}  // namespace

TEST_CASE("string round trips") {
  for (Scheme s : {Scheme::none, Scheme::s2w, Scheme::w2s, Scheme::simultaneous,
                   Scheme::ensemble_teacher, Scheme::ensemble_student,
                   Scheme::cascade})
    CHECK(scheme_from_string(to_string(s)) == s);
  for (Metric m : {Metric::confidence, Metric::entropy, Metric::margin,
                   Metric::diversity})
    CHECK(metric_from_string(to_string(m)) == m);
  for (PairLossKind k : {PairLossKind::kl, PairLossKind::mse})
    CHECK(pair_loss_from_string(to_string(k)) == k);
  for (Direction d : {Direction::s2w, Direction::w2s})
    CHECK(direction_from_string(to_string(d)) == d);

  CHECK_THROWS_AS(scheme_from_string("bogus"), ConfigError);
  CHECK_THROWS_AS(metric_from_string(""), ConfigError);
  CHECK_THROWS_AS(pair_loss_from_string("l2"), ConfigError);
  CHECK_THROWS_AS(direction_from_string("up"), ConfigError);
}

TEST_CASE("config validation") {
  DistillConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.alpha = Real(0);
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DistillConfig{};
  cfg.lambda_s2w = Real(-0.1);
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DistillConfig{};
  cfg.lambda_w2s = Real(-1);
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("metric hand values") {
  Tensor uniform4 = Tensor::zeros({1, 4});
  CHECK(metric_score(uniform4, Metric::confidence) == 0.25);
  CHECK(metric_score(uniform4, Metric::entropy) ==
        doctest::Approx(-1.3862943611198906).epsilon(1e-12));
  CHECK(metric_score(uniform4, Metric::margin) == 0.0);
  CHECK(metric_score(uniform4, Metric::diversity) == 0.0);

  Tensor peaked = Tensor::from_values({1, 3}, {2, 0, 0});
  CHECK(metric_score(peaked, Metric::confidence) ==
        doctest::Approx(0.7869860421615985).epsilon(1e-12));

  // softmax([ln 3, 0]) = [3/4, 1/4]: margin one half.
  Tensor ln3 = Tensor::from_values({1, 2}, {std::log(Real(3)), 0});
  CHECK(metric_score(ln3, Metric::margin) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // A saturated one-hot has diversity (C-1)/C^2.
  Tensor onehot = Tensor::from_values({1, 4}, {1000, 0, 0, 0});
  CHECK(metric_score(onehot, Metric::diversity) == 0.1875);

  // Batch mean of two rows.
  Tensor two = Tensor::from_values({2, 3}, {2, 0, 0, 0, 0, 0});
  const double third = 1.0 / 3.0;
  CHECK(metric_score(two, Metric::confidence) ==
        doctest::Approx((0.7869860421615985 + third) / 2).epsilon(1e-12));

  // Peakier distributions score higher on every metric.
  Tensor flat = Tensor::from_values({1, 3}, {0.1, 0, 0});
  for (Metric m : {Metric::confidence, Metric::entropy, Metric::margin,
                   Metric::diversity})
    CHECK(metric_score(peaked, m) > metric_score(flat, m));

  CHECK_THROWS_AS(metric_score(Tensor::zeros({4}), Metric::confidence),
                  DimError);
  CHECK_THROWS_AS(metric_score(Tensor::zeros({1, 1}), Metric::confidence),
                  DimError);
}

TEST_CASE("identify picks strongest and weakest slices") {
  TimestepOutputs out =
      make_outputs({{0, 0}, {1, 0}, {3, 0}}, 1, 2);
  SubmodelScore sc = identify(out, Metric::confidence);
  REQUIRE(sc.per_timestep.size() == 3);
  CHECK(sc.per_timestep[0] == 0.5);
  CHECK(sc.per_timestep[1] ==
        doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(sc.per_timestep[2] ==
        doctest::Approx(0.9525741268224334).epsilon(1e-12));
  CHECK(sc.t_strong == 2);
  CHECK(sc.t_weak == 0);

  // Ties resolve to the earliest slice.
  TimestepOutputs tie = make_outputs({{2, 0}, {2, 0}, {0, 0}}, 1, 2);
  SubmodelScore sct = identify(tie, Metric::confidence);
  CHECK(sct.t_strong == 0);
  CHECK(sct.t_weak == 2);

  // All equal: slices 0 and 1 are chosen so a pair always exists.
  TimestepOutputs flat = make_outputs({{1, 0}, {1, 0}, {1, 0}}, 1, 2);
  SubmodelScore scf = identify(flat, Metric::confidence);
  CHECK(scf.t_strong == 0);
  CHECK(scf.t_weak == 1);

  TimestepOutputs single = make_outputs({{1, 0}}, 1, 2);
  CHECK_THROWS_AS(identify(single, Metric::confidence), UsageError);
}

TEST_CASE("rank_descending") {
  CHECK(rank_descending({0.3, 0.9, 0.5}) == std::vector<int>{1, 2, 0});
  CHECK(rank_descending({0.5, 0.5, 0.1}) == std::vector<int>{0, 1, 2});
  CHECK(rank_descending({1.0}) == std::vector<int>{0});
}

TEST_CASE("pair loss hand values") {
  DistillConfig cfg;
  cfg.alpha = Real(2);

  Tensor teacher = Tensor::from_values({1, 2}, {2, 0});
  Tensor student = Tensor::from_values({1, 2}, {0, 0});

  // Softened teacher is sigmoid(1); closed form for the softened KL.
  const double sig = 1.0 / (1.0 + std::exp(-1.0));
  const double expect =
      4.0 * (sig * std::log(2 * sig) + (1 - sig) * std::log(2 * (1 - sig)));
  CHECK(pair_loss(teacher, student, cfg).value() ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(pair_loss(teacher, student, cfg).value() ==
        doctest::Approx(0.4437762907).epsilon(1e-8));

  // Teacher teaching itself costs exactly nothing.
  CHECK(pair_loss(teacher, teacher, cfg).value() == 0.0);

  // mse compares raw logits and ignores alpha.
  cfg.loss_fn = PairLossKind::mse;
  CHECK(pair_loss(teacher, student, cfg).value() == 2.0);
  cfg.alpha = Real(7);
  CHECK(pair_loss(teacher, student, cfg).value() == 2.0);
  CHECK(pair_loss(teacher, teacher, cfg).value() == 0.0);
}

TEST_CASE("detach_teacher stops the teacher gradient") {
  for (PairLossKind kind : {PairLossKind::kl, PairLossKind::mse}) {
    for (bool detach : {false, true}) {
      DistillConfig cfg;
      cfg.loss_fn = kind;
      cfg.detach_teacher = detach;
      Tensor t = Tensor::from_values({1, 2}, {2, 0});
      Tensor s = Tensor::from_values({1, 2}, {0.5, 0});
      t.set_requires_grad(true);
      s.set_requires_grad(true);
      Tensor loss = pair_loss(t, s, cfg);
      backward(loss);
      CHECK(s.has_grad());
      bool teacher_touched = false;
      if (t.has_grad())
        for (Index i = 0; i < t.numel(); ++i)
          teacher_touched = teacher_touched || t.grad()[i] != 0.0;
      CHECK(teacher_touched == !detach);
    }
  }
}

TEST_CASE("scheme algebra") {
  Rng rng(71);
  std::vector<std::vector<Real>> slices(3);
  for (auto& s : slices)
    for (int i = 0; i < 6; ++i) s.push_back(Real(rng.uniform(-2, 2)));
  TimestepOutputs out = make_outputs(slices, 2, 3);

  DistillConfig base;
  base.lambda_s2w = Real(0.7);
  base.lambda_w2s = Real(0.4);

  for (PairLossKind kind : {PairLossKind::kl, PairLossKind::mse}) {
    DistillConfig cfg = base;
    cfg.loss_fn = kind;

    cfg.scheme = Scheme::s2w;
    const Real s2w = scheme_loss(out, cfg).loss.value();
    cfg.scheme = Scheme::w2s;
    const Real w2s = scheme_loss(out, cfg).loss.value();
    cfg.scheme = Scheme::simultaneous;
    const Real both = scheme_loss(out, cfg).loss.value();
    CHECK(both == s2w + w2s);  // the same two terms, summed

    // Zero weights drop the term entirely.
    cfg.scheme = Scheme::simultaneous;
    cfg.lambda_w2s = Real(0);
    CHECK(scheme_loss(out, cfg).loss.value() == s2w);
    cfg.lambda_s2w = Real(0);
    SchemeLoss none_like = scheme_loss(out, cfg);
    CHECK(!none_like.has_terms);
    CHECK(none_like.loss.value() == 0.0);
    cfg = base;
    cfg.loss_fn = kind;

    // Ranking is attached even when nothing distills.
    cfg.scheme = Scheme::none;
    SchemeLoss none = scheme_loss(out, cfg);
    CHECK(!none.has_terms);
    CHECK(none.score.per_timestep.size() == 3);
    CHECK(none.score.t_strong != none.score.t_weak);
  }
}

TEST_CASE("two timesteps collapse the fancy schemes onto s2w") {
  Rng rng(73);
  std::vector<std::vector<Real>> slices(2);
  for (auto& s : slices)
    for (int i = 0; i < 6; ++i) s.push_back(Real(rng.uniform(-2, 2)));
  TimestepOutputs out = make_outputs(slices, 2, 3);

  for (PairLossKind kind : {PairLossKind::kl, PairLossKind::mse}) {
    DistillConfig cfg;
    cfg.loss_fn = kind;
    cfg.lambda_s2w = Real(0.9);
    cfg.direction = Direction::s2w;

    cfg.scheme = Scheme::s2w;
    const Real s2w = scheme_loss(out, cfg).loss.value();

    // With T=2 the cascade is the single strong->weak pair scaled by
    // lambda/(T-1) = lambda, the one-teacher ensemble is that teacher, and
    // the one-student ensemble is that student.
    cfg.scheme = Scheme::cascade;
    CHECK(scheme_loss(out, cfg).loss.value() == s2w);
    cfg.scheme = Scheme::ensemble_teacher;
    CHECK(scheme_loss(out, cfg).loss.value() == s2w);
    cfg.scheme = Scheme::ensemble_student;
    CHECK(scheme_loss(out, cfg).loss.value() == s2w);

    // Same story for the weak->strong orientation.
    cfg.direction = Direction::w2s;
    cfg.lambda_w2s = Real(0.9);
    cfg.scheme = Scheme::w2s;
    const Real w2s = scheme_loss(out, cfg).loss.value();
    cfg.scheme = Scheme::cascade;
    CHECK(scheme_loss(out, cfg).loss.value() == w2s);
    cfg.scheme = Scheme::ensemble_teacher;
    CHECK(scheme_loss(out, cfg).loss.value() == w2s);
    cfg.scheme = Scheme::ensemble_student;
    CHECK(scheme_loss(out, cfg).loss.value() == w2s);
  }
}

TEST_CASE("kl schemes ignore a common logit shift") {
  // Integer logits plus a power-of-two shift keep the exponent arguments
  // bitwise identical, so every softened softmax is unchanged.
  Rng rng(79);
  std::vector<std::vector<Real>> slices(3), shifted(3);
  for (int t = 0; t < 3; ++t)
    for (int i = 0; i < 6; ++i) {
      const Real v = Real(int(rng.below(7)) - 3);
      slices[t].push_back(v);
      shifted[t].push_back(v + Real(8));
    }
  TimestepOutputs a = make_outputs(slices, 2, 3);
  TimestepOutputs b = make_outputs(shifted, 2, 3);

  for (Scheme s : {Scheme::s2w, Scheme::w2s, Scheme::simultaneous,
                   Scheme::ensemble_teacher, Scheme::ensemble_student,
                   Scheme::cascade}) {
    DistillConfig cfg;
    cfg.scheme = s;
    cfg.alpha = Real(2);
    CHECK(scheme_loss(a, cfg).loss.value() == scheme_loss(b, cfg).loss.value());
  }
}

TEST_CASE("reference implementation agrees on random instances") {
  Rng rng(83);
  const Real alphas[] = {Real(1), Real(2), Real(3.5)};
  const Real lams[] = {Real(0), Real(0.3), Real(1.7)};
  int checked = 0;

  for (Scheme s : {Scheme::none, Scheme::s2w, Scheme::w2s, Scheme::simultaneous,
                   Scheme::ensemble_teacher, Scheme::ensemble_student,
                   Scheme::cascade})
    for (PairLossKind k : {PairLossKind::kl, PairLossKind::mse})
      for (int rep = 0; rep < 6; ++rep) {
        const int T = 2 + int(rng.below(3));
        const int B = 1 + int(rng.below(3));
        const int C = 2 + int(rng.below(2));

        std::vector<std::vector<double>> ref_logits(T);
        std::vector<std::vector<Real>> slices(T);
        for (int t = 0; t < T; ++t)
          for (int i = 0; i < B * C; ++i) {
            const double v = rng.uniform(-3, 3);
            ref_logits[t].push_back(v);
            slices[t].push_back(Real(v));
          }
        TimestepOutputs out = make_outputs(slices, B, C);

        DistillConfig cfg;
        cfg.scheme = s;
        cfg.loss_fn = k;
        cfg.metric = Metric(int(rng.below(4)));
        cfg.alpha = alphas[rng.below(3)];
        cfg.lambda_s2w = lams[rng.below(3)];
        cfg.lambda_w2s = lams[rng.below(3)];
        cfg.direction = rng.bernoulli(0.5) ? Direction::s2w : Direction::w2s;
        cfg.detach_teacher = rng.bernoulli(0.5);

        int ref_strong = 0, ref_weak = 0;
        const double want =
            Ref::scheme(ref_logits, B, C, cfg, &ref_strong, &ref_weak);

        NoGradGuard ng;
        SchemeLoss got = scheme_loss(out, cfg);
        CHECK(std::abs(double(got.loss.value()) - want) < 1e-10);
        CHECK(got.score.t_strong == ref_strong);
        CHECK(got.score.t_weak == ref_weak);
        for (int t = 0; t < T; ++t)
          CHECK(std::abs(double(got.score.per_timestep[t]) -
                         Ref::metric(ref_logits[t], B, C, cfg.metric)) <
                1e-12);
        ++checked;
      }
  CHECK(checked == 84);
}

TEST_CASE("total loss composition") {
  Rng rng(89);
  std::vector<std::vector<Real>> slices(3);
  for (auto& s : slices)
    for (int i = 0; i < 6; ++i) s.push_back(Real(rng.uniform(-2, 2)));
  TimestepOutputs out = make_outputs(slices, 2, 3);
  const std::vector<int> labels = {0, 2};

  DistillConfig cfg;
  cfg.scheme = Scheme::none;
  TotalLoss none = total_loss(out, labels, cfg);
  Tensor ce = cross_entropy(mean_logits(out), labels);
  CHECK(none.loss.value() == ce.value());
  CHECK(none.distill_part == 0.0);
  CHECK(none.ce_part == ce.value());
  CHECK(none.score.per_timestep.size() == 3);

  cfg.scheme = Scheme::s2w;
  cfg.lambda_s2w = Real(0.5);
  TotalLoss with = total_loss(out, labels, cfg);
  CHECK(with.loss.value() == with.ce_part + with.distill_part);
  CHECK(with.ce_part == ce.value());
  CHECK(with.distill_part > 0.0);

  // Zero lambda is bitwise the none case.
  cfg.lambda_s2w = Real(0);
  TotalLoss zeroed = total_loss(out, labels, cfg);
  CHECK(zeroed.loss.value() == none.loss.value());
  CHECK(zeroed.distill_part == 0.0);
}

TEST_CASE("every scheme matches finite differences on the logits") {
  // Slices with well-separated scores so the ranking is stable under the
  // probe steps; the losses are then smooth in the logits.
  std::vector<std::vector<Real>> slices = {
      {0.2, 0.1, -0.1, 0.0, 0.3, 0.1},
      {1.0, -0.5, 0.2, 0.8, -0.2, 0.4},
      {2.5, -1.0, -0.8, 2.0, -0.9, 0.1},
  };

  for (Scheme s : {Scheme::s2w, Scheme::w2s, Scheme::simultaneous,
                   Scheme::ensemble_teacher, Scheme::ensemble_student,
                   Scheme::cascade})
    for (PairLossKind k : {PairLossKind::kl, PairLossKind::mse}) {
      TimestepOutputs out = make_outputs(slices, 2, 3);
      DistillConfig cfg;
      cfg.scheme = s;
      cfg.loss_fn = k;
      cfg.lambda_s2w = Real(0.8);
      cfg.lambda_w2s = Real(0.6);
      const double err = finite_difference_check<Real>(
          [&] { return scheme_loss(out, cfg).loss; },
          {out.logits[0], out.logits[1], out.logits[2]});
      CHECK(err < 1e-6);
    }
}
