#include "snnd/optim.hpp"

#include <cmath>
#include <numeric>

#include "snnd/csv.hpp"
#include "snnd/error.hpp"
#include "snnd/ops.hpp"
#include "snnd/rng.hpp"

namespace snnd {

void validate(const OptimConfig& cfg) {
  if (!(cfg.lr0 > Real(0))) throw ConfigError("optim: lr0 must be > 0");
  if (cfg.momentum < Real(0) || cfg.momentum >= Real(1))
    throw ConfigError("optim: momentum must be in [0,1)");
  if (cfg.weight_decay < Real(0))
    throw ConfigError("optim: weight_decay must be >= 0");
  if (cfg.lr_drop_every < 1)
    throw ConfigError("optim: lr_drop_every must be >= 1");
  if (!(cfg.lr_drop_factor > Real(0) && cfg.lr_drop_factor <= Real(1)))
    throw ConfigError("optim: lr_drop_factor must be in (0, 1]");
  if (cfg.epochs < 0) throw ConfigError("optim: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("optim: batch_size must be >= 1");
}

Real lr_at(int epoch, const OptimConfig& cfg) {
  if (epoch < 0) throw UsageError("lr_at: epoch must be >= 0");
  const int drops = epoch / cfg.lr_drop_every;
  return cfg.lr0 * static_cast<Real>(std::pow(double(cfg.lr_drop_factor),
                                              double(drops)));
}

void sgd_step(Tensor& param, FlatArray<Real>& velocity, Real lr, Real momentum,
              Real weight_decay) {
  const Index n = param.numel();
  if (velocity.size() != n) velocity = FlatArray<Real>::Zero(n);
  Real* w = param.values().data();
  Real* v = velocity.data();
  const Real* g = param.has_grad() ? param.grad().data() : nullptr;
  for (Index i = 0; i < n; ++i) {
    const Real grad = (g ? g[i] : Real(0)) + weight_decay * w[i];
    v[i] = momentum * v[i] + grad;
    w[i] -= lr * v[i];
  }
}

void Sgd::step(const std::vector<Tensor*>& params, Real lr) {
  if (velocity_.empty()) velocity_.resize(params.size());
  if (velocity_.size() != params.size())
    throw UsageError("Sgd: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_step(*params[i], velocity_[i], lr, cfg_.momentum, cfg_.weight_decay);
}

std::string metrics_csv_header(int timesteps) {
  std::string h = "epoch,split,lr,loss_ce,loss_distill,acc_mean";
  for (int t = 1; t <= timesteps; ++t) h += ",acc_t" + std::to_string(t);
  for (int t = 1; t <= timesteps; ++t) h += ",t_strong_h" + std::to_string(t);
  for (int t = 1; t <= timesteps; ++t) h += ",t_weak_h" + std::to_string(t);
  h += "\n";
  return h;
}

std::string metrics_csv_row(const RunRecord& rec) {
  std::string row = std::to_string(rec.epoch) + "," + rec.split + "," +
                    real_str(double(rec.lr)) + "," +
                    real_str(double(rec.loss_ce)) + "," +
                    real_str(double(rec.loss_distill)) + "," +
                    real_str(double(rec.acc_mean));
  for (Real a : rec.acc_per_timestep) row += "," + real_str(double(a));
  for (long c : rec.t_strong_hist) row += "," + std::to_string(c);
  for (long c : rec.t_weak_hist) row += "," + std::to_string(c);
  row += "\n";
  return row;
}

namespace {

struct EpochAccum {
  double loss_ce = 0, loss_distill = 0;
  long correct_mean = 0;
  std::vector<long> correct_t;
  std::vector<long> strong_hist, weak_hist;
  Index samples = 0;

  explicit EpochAccum(int timesteps)
      : correct_t(static_cast<std::size_t>(timesteps), 0),
        strong_hist(static_cast<std::size_t>(timesteps), 0),
        weak_hist(static_cast<std::size_t>(timesteps), 0) {}

  void add_batch(const TimestepOutputs& out, const std::vector<int>& labels,
                 const TotalLoss& tl) {
    const Index batch = static_cast<Index>(labels.size());
    loss_ce += double(tl.ce_part) * double(batch);
    loss_distill += double(tl.distill_part) * double(batch);
    {
      NoGradGuard ng;
      Tensor mean = mean_logits(out);
      const std::vector<int> pred = argmax_rows(mean);
      for (std::size_t b = 0; b < labels.size(); ++b)
        if (pred[b] == labels[b]) ++correct_mean;
      for (int t = 0; t < out.steps(); ++t) {
        const std::vector<int> pt =
            argmax_rows(out.logits[static_cast<std::size_t>(t)]);
        for (std::size_t b = 0; b < labels.size(); ++b)
          if (pt[b] == labels[b])
            ++correct_t[static_cast<std::size_t>(t)];
      }
    }
    ++strong_hist[static_cast<std::size_t>(tl.score.t_strong)];
    ++weak_hist[static_cast<std::size_t>(tl.score.t_weak)];
    samples += batch;
  }

  RunRecord finish(int epoch, std::string split, Real lr) const {
    RunRecord rec;
    rec.epoch = epoch;
    rec.split = std::move(split);
    rec.lr = lr;
    rec.loss_ce = static_cast<Real>(loss_ce / double(samples));
    rec.loss_distill = static_cast<Real>(loss_distill / double(samples));
    rec.acc_mean = static_cast<Real>(double(correct_mean) / double(samples));
    rec.acc_per_timestep.reserve(correct_t.size());
    for (long c : correct_t)
      rec.acc_per_timestep.push_back(
          static_cast<Real>(double(c) / double(samples)));
    rec.t_strong_hist = strong_hist;
    rec.t_weak_hist = weak_hist;
    return rec;
  }
};

void check_dataset(const Network& net, const Dataset& data) {
  if (data.n == 0) throw DataError("training/evaluation dataset is empty");
  if (data.t != net.config().timesteps)
    throw ConfigError("dataset has " + std::to_string(data.t) +
                      " timesteps, network expects " +
                      std::to_string(net.config().timesteps));
  if (data.d != net.config().layer_sizes.front())
    throw ConfigError("dataset has " + std::to_string(data.d) +
                      " features, network expects " +
                      std::to_string(net.config().layer_sizes.front()));
}

}  // namespace

RunRecord train_epoch(Network& net, const Dataset& data, Sgd& opt,
                      const OptimConfig& ocfg, const DistillConfig& dcfg,
                      int epoch) {
  validate(ocfg);
  validate(dcfg);
  check_dataset(net, data);

  std::vector<Index> order(static_cast<std::size_t>(data.n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng shuffle_rng(mix_seed(ocfg.seed, static_cast<std::uint64_t>(epoch)));
  shuffle_rng.shuffle(order);

  const Real lr = lr_at(epoch, ocfg);
  std::vector<Tensor*> params = net.parameters();
  EpochAccum accum(net.timesteps());

  for (Index start = 0; start < data.n; start += ocfg.batch_size) {
    const Index stop = std::min<Index>(start + ocfg.batch_size, data.n);
    const std::vector<Index> idx(order.begin() + start, order.begin() + stop);
    Tensor x = batch_inputs(data, idx);
    const std::vector<int> labels = batch_labels(data, idx);

    TimestepOutputs out = net.forward(x);
    TotalLoss tl = total_loss(out, labels, dcfg);
    if (!std::isfinite(double(tl.loss.value())))
      throw NumericError("training loss is not finite at epoch " +
                         std::to_string(epoch));
    net.zero_grad();
    backward(tl.loss);
    opt.step(params, lr);

    accum.add_batch(out, labels, tl);
  }
  return accum.finish(epoch, "train", lr);
}

RunRecord evaluate_epoch(Network& net, const Dataset& data,
                         const OptimConfig& ocfg, const DistillConfig& dcfg,
                         int epoch, Real lr) {
  validate(dcfg);
  check_dataset(net, data);
  NoGradGuard ng;

  EpochAccum accum(net.timesteps());
  for (Index start = 0; start < data.n; start += ocfg.batch_size) {
    const Index stop = std::min<Index>(start + ocfg.batch_size, data.n);
    std::vector<Index> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = batch_inputs(data, idx);
    const std::vector<int> labels = batch_labels(data, idx);

    TimestepOutputs out = net.forward(x);
    TotalLoss tl = total_loss(out, labels, dcfg);
    accum.add_batch(out, labels, tl);
  }
  return accum.finish(epoch, "test", lr);
}

FitResult fit(Network& net, const Dataset& train_data, const Dataset& test_data,
              const OptimConfig& ocfg, const DistillConfig& dcfg,
              const RecordSink& sink) {
  validate(ocfg);
  validate(dcfg);

  FitResult result;
  result.best_params = net.snapshot();
  Sgd opt(ocfg);
  for (int epoch = 0; epoch < ocfg.epochs; ++epoch) {
    RunRecord tr = train_epoch(net, train_data, opt, ocfg, dcfg, epoch);
    if (sink) sink(tr);
    RunRecord te =
        evaluate_epoch(net, test_data, ocfg, dcfg, epoch, tr.lr);
    if (sink) sink(te);
    if (te.acc_mean > result.best_accuracy || result.best_epoch < 0) {
      result.best_accuracy = te.acc_mean;
      result.best_epoch = epoch;
      result.best_params = net.snapshot();
    }
    result.records.push_back(std::move(tr));
    result.records.push_back(std::move(te));
  }
  return result;
}

}  // namespace snnd
