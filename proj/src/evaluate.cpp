#include "snnd/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snnd/csv.hpp"
#include "snnd/distill.hpp"
#include "snnd/error.hpp"
#include "snnd/ops.hpp"

namespace snnd {

namespace {

void check_compatible(const Network& net, const Dataset& data) {
  if (data.n == 0) throw DataError("evaluation dataset is empty");
  if (data.t != net.config().timesteps)
    throw ConfigError("dataset has " + std::to_string(data.t) +
                      " timesteps, network expects " +
                      std::to_string(net.config().timesteps));
  if (data.d != net.config().layer_sizes.front())
    throw ConfigError("dataset has " + std::to_string(data.d) +
                      " features, network expects " +
                      std::to_string(net.config().layer_sizes.front()));
}

std::vector<Index> range_indices(Index from, Index to) {
  std::vector<Index> idx(static_cast<std::size_t>(to - from));
  std::iota(idx.begin(), idx.end(), from);
  return idx;
}

// Sets every parameter's requires_grad to false for the current scope, so
// input-gradient passes record nothing into parameter gradients.
class ParamFreeze {
 public:
  explicit ParamFreeze(Network& net) : params_(net.parameters()) {
    for (Tensor* p : params_) {
      was_.push_back(p->requires_grad());
      p->set_requires_grad(false);
    }
  }
  ~ParamFreeze() {
    for (std::size_t i = 0; i < params_.size(); ++i)
      params_[i]->set_requires_grad(was_[i]);
  }

 private:
  std::vector<Tensor*> params_;
  std::vector<bool> was_;
};

// d(cross entropy of mean logits)/d(input), parameters held fixed.
FlatArray<Real> input_gradient(Network& net, const Tensor& x,
                               const std::vector<int>& labels) {
  ParamFreeze freeze(net);
  Tensor xg = x.detach();
  xg.set_requires_grad(true);
  TimestepOutputs out = net.forward(xg);
  Tensor loss = cross_entropy(mean_logits(out), labels);
  backward(loss);
  return xg.grad_or_zero();
}

}  // namespace

Real eval_at(Network& net, const Dataset& data, int t_max, Index eval_batch) {
  check_compatible(net, data);
  if (t_max < 1 || t_max > net.timesteps())
    throw UsageError("eval_at: t_max " + std::to_string(t_max) +
                     " outside [1," + std::to_string(net.timesteps()) + "]");
  NoGradGuard ng;
  long correct = 0;
  for (Index start = 0; start < data.n; start += eval_batch) {
    const Index stop = std::min<Index>(start + eval_batch, data.n);
    const std::vector<Index> idx = range_indices(start, stop);
    Tensor x = batch_inputs(data, idx);
    const std::vector<int> labels = batch_labels(data, idx);
    TimestepOutputs out = net.truncated_forward(x, t_max);
    const std::vector<int> pred = argmax_rows(mean_logits(out));
    for (std::size_t b = 0; b < labels.size(); ++b)
      if (pred[b] == labels[b]) ++correct;
  }
  return static_cast<Real>(double(correct) / double(data.n));
}

EarlyExitResult early_exit_eval(Network& net, const Dataset& data,
                                const EarlyExitConfig& cfg, Index eval_batch) {
  check_compatible(net, data);
  const int max_t = cfg.max_timesteps == 0 ? net.timesteps() : cfg.max_timesteps;
  if (!(cfg.threshold > Real(0)) || cfg.threshold > Real(1))
    throw ConfigError("early exit: threshold must be in (0,1]");
  if (max_t < 1 || max_t > net.timesteps())
    throw ConfigError("early exit: max_timesteps " + std::to_string(max_t) +
                      " outside [1," + std::to_string(net.timesteps()) + "]");

  NoGradGuard ng;
  const Index classes = net.classes();
  long correct = 0;
  long total_steps = 0;
  for (Index start = 0; start < data.n; start += eval_batch) {
    const Index stop = std::min<Index>(start + eval_batch, data.n);
    const std::vector<Index> idx = range_indices(start, stop);
    const Index batch = stop - start;
    Tensor x = batch_inputs(data, idx);
    const std::vector<int> labels = batch_labels(data, idx);
    TimestepOutputs out = net.truncated_forward(x, max_t);

    std::vector<bool> done(static_cast<std::size_t>(batch), false);
    FlatArray<Real> sums = FlatArray<Real>::Zero(batch * classes);
    std::vector<Real> probs(static_cast<std::size_t>(classes));
    for (int t = 0; t < max_t; ++t) {
      sums += out.logits[static_cast<std::size_t>(t)].values();
      for (Index b = 0; b < batch; ++b) {
        if (done[static_cast<std::size_t>(b)]) continue;
        const Real* row = sums.data() + b * classes;
        // The running mean over t slices; softmax of sums/t.
        Real m = row[0];
        for (Index j = 1; j < classes; ++j) m = std::max(m, row[j]);
        Real denom = Real(0);
        Index best = 0;
        for (Index j = 0; j < classes; ++j) {
          probs[static_cast<std::size_t>(j)] =
              std::exp((row[j] - m) / static_cast<Real>(t + 1));
          denom += probs[static_cast<std::size_t>(j)];
          if (row[j] > row[best]) best = j;
        }
        const Real top = probs[static_cast<std::size_t>(best)] / denom;
        if (top >= cfg.threshold || t + 1 == max_t) {
          done[static_cast<std::size_t>(b)] = true;
          total_steps += t + 1;
          if (static_cast<int>(best) == labels[static_cast<std::size_t>(b)])
            ++correct;
        }
      }
    }
  }
  EarlyExitResult res;
  res.accuracy = static_cast<Real>(double(correct) / double(data.n));
  res.avg_timesteps = static_cast<Real>(double(total_steps) / double(data.n));
  return res;
}

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::gn: return "gn";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
  }
  return "?";
}

AttackKind attack_from_string(const std::string& s) {
  if (s == "gn") return AttackKind::gn;
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw UsageError("unknown attack '" + s + "' (valid: gn, fgsm, pgd)");
}

void validate(const AttackConfig& cfg) {
  if (cfg.epsilon < Real(0)) throw ConfigError("attack: epsilon must be >= 0");
  if (cfg.sigma < Real(0)) throw ConfigError("attack: sigma must be >= 0");
  if (cfg.steps < 1) throw ConfigError("attack: steps must be >= 1");
  if (cfg.step_size < Real(0))
    throw ConfigError("attack: step_size must be >= 0");
}

Tensor gn_attack(const Tensor& x, Real sigma, std::pair<Real, Real> bounds,
                 Rng& rng) {
  Tensor out = x.detach();
  Real* v = out.values().data();
  for (Index i = 0; i < out.numel(); ++i) {
    v[i] += sigma * static_cast<Real>(rng.normal());
    v[i] = std::clamp(v[i], bounds.first, bounds.second);
  }
  return out;
}

namespace {

inline Real sign_of(Real g) {
  if (g > Real(0)) return Real(1);
  if (g < Real(0)) return Real(-1);
  return Real(0);
}

}  // namespace

Tensor fgsm_attack(Network& net, const Tensor& x,
                   const std::vector<int>& labels, Real epsilon,
                   std::pair<Real, Real> bounds) {
  const FlatArray<Real> g = input_gradient(net, x, labels);
  Tensor out = x.detach();
  Real* v = out.values().data();
  const Real* clean = x.values().data();
  for (Index i = 0; i < out.numel(); ++i) {
    v[i] = clean[i] + epsilon * sign_of(g[i]);
    v[i] = std::clamp(v[i], bounds.first, bounds.second);
  }
  return out;
}

Tensor pgd_attack(Network& net, const Tensor& x, const std::vector<int>& labels,
                  const AttackConfig& cfg, std::pair<Real, Real> bounds,
                  Rng& rng) {
  validate(cfg);
  const Real step = cfg.step_size > Real(0)
                        ? cfg.step_size
                        : Real(2.5) * cfg.epsilon / static_cast<Real>(cfg.steps);
  const Real* clean = x.values().data();

  Tensor current = x.detach();
  if (cfg.random_start) {
    Real* v = current.values().data();
    for (Index i = 0; i < current.numel(); ++i) {
      v[i] += static_cast<Real>(
          rng.uniform(-double(cfg.epsilon), double(cfg.epsilon)));
      v[i] = std::clamp(v[i], bounds.first, bounds.second);
    }
  }

  for (int it = 0; it < cfg.steps; ++it) {
    const FlatArray<Real> g = input_gradient(net, current, labels);
    Real* v = current.values().data();
    for (Index i = 0; i < current.numel(); ++i) {
      v[i] += step * sign_of(g[i]);
      // Project onto the epsilon ball around the clean input, then clip.
      v[i] = std::clamp(v[i], clean[i] - cfg.epsilon, clean[i] + cfg.epsilon);
      v[i] = std::clamp(v[i], bounds.first, bounds.second);
    }
  }
  return current;
}

std::vector<RobustRow> robust_eval(Network& net, const Dataset& data,
                                   const std::vector<AttackConfig>& attacks,
                                   Index eval_batch) {
  check_compatible(net, data);
  std::vector<RobustRow> rows;
  rows.push_back(
      {"clean", Real(0), Real(0), 0, eval_at(net, data, net.timesteps(),
                                             eval_batch)});

  for (const AttackConfig& cfg : attacks) {
    validate(cfg);
    Rng rng(mix_seed(cfg.seed, 0x61747461ULL));
    long correct = 0;
    for (Index start = 0; start < data.n; start += eval_batch) {
      const Index stop = std::min<Index>(start + eval_batch, data.n);
      const std::vector<Index> idx = range_indices(start, stop);
      Tensor x = batch_inputs(data, idx);
      const std::vector<int> labels = batch_labels(data, idx);

      Tensor adv;
      switch (cfg.kind) {
        case AttackKind::gn:
          adv = gn_attack(x, cfg.sigma, {data.lo, data.hi}, rng);
          break;
        case AttackKind::fgsm:
          adv = fgsm_attack(net, x, labels, cfg.epsilon, {data.lo, data.hi});
          break;
        case AttackKind::pgd:
          adv = pgd_attack(net, x, labels, cfg, {data.lo, data.hi}, rng);
          break;
      }

      NoGradGuard ng;
      TimestepOutputs out = net.forward(adv);
      const std::vector<int> pred = argmax_rows(mean_logits(out));
      for (std::size_t b = 0; b < labels.size(); ++b)
        if (pred[b] == labels[b]) ++correct;
    }
    RobustRow row;
    row.attack = to_string(cfg.kind);
    row.epsilon = cfg.kind == AttackKind::gn ? Real(0) : cfg.epsilon;
    row.sigma = cfg.kind == AttackKind::gn ? cfg.sigma : Real(0);
    row.steps = cfg.kind == AttackKind::pgd ? cfg.steps : 0;
    row.accuracy = static_cast<Real>(double(correct) / double(data.n));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string robustness_csv_header() {
  return "attack,epsilon,sigma,steps,accuracy\n";
}

std::string robustness_csv_row(const RobustRow& row) {
  return row.attack + "," + real_str(double(row.epsilon)) + "," +
         real_str(double(row.sigma)) + "," + std::to_string(row.steps) + "," +
         real_str(double(row.accuracy)) + "\n";
}

}  // namespace snnd
