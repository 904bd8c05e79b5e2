#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "snnd/data.hpp"
#include "snnd/distill.hpp"
#include "snnd/network.hpp"

// SGD training loop. Runs are bitwise reproducible: the batch order is a pure
// function of (seed, epoch), every kernel is deterministic, and records are
// serialized with shortest round-trip number formatting.

namespace snnd {

struct OptimConfig {
  Real lr0 = Real(0.1);
  Real momentum = Real(0.9);
  Real weight_decay = Real(1e-4);
  int lr_drop_every = 15;     // epochs between learning rate drops
  Real lr_drop_factor = Real(0.1);
  int epochs = 40;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

void validate(const OptimConfig& cfg);

// Step learning rate: lr0 * factor^(epoch / drop_every), integer division.
Real lr_at(int epoch, const OptimConfig& cfg);

// One momentum-SGD update of a single parameter tensor:
//   g = grad + weight_decay * value
//   velocity = momentum * velocity + g
//   value -= lr * velocity
// A parameter with no accumulated gradient contributes g = weight_decay*value.
void sgd_step(Tensor& param, FlatArray<Real>& velocity, Real lr, Real momentum,
              Real weight_decay);

class Sgd {
 public:
  explicit Sgd(const OptimConfig& cfg) : cfg_(cfg) { validate(cfg); }

  // Velocity buffers are created on first use and stay aligned with the
  // parameter list, which must not change shape between steps.
  void step(const std::vector<Tensor*>& params, Real lr);

 private:
  OptimConfig cfg_;
  std::vector<FlatArray<Real>> velocity_;
};

// One epoch's aggregate, one CSV row.
struct RunRecord {
  int epoch = 0;
  std::string split;  // "train" or "test"
  Real lr = Real(0);
  Real loss_ce = Real(0);
  Real loss_distill = Real(0);
  Real acc_mean = Real(0);                  // accuracy of mean logits
  std::vector<Real> acc_per_timestep;       // accuracy of each slice alone
  std::vector<long> t_strong_hist;          // batches in which t ranked strongest
  std::vector<long> t_weak_hist;            // batches in which t ranked weakest
};

std::string metrics_csv_header(int timesteps);
std::string metrics_csv_row(const RunRecord& rec);

using RecordSink = std::function<void(const RunRecord&)>;

// One pass over the training set: seeded shuffle, forward, total loss,
// backward, SGD step per batch. Throws NumericError if the loss goes
// non-finite.
RunRecord train_epoch(Network& net, const Dataset& data, Sgd& opt,
                      const OptimConfig& ocfg, const DistillConfig& dcfg,
                      int epoch);

// Gradient-free pass in dataset order; same aggregates as train_epoch.
// The lr column records the rate of the epoch just trained.
RunRecord evaluate_epoch(Network& net, const Dataset& data,
                         const OptimConfig& ocfg, const DistillConfig& dcfg,
                         int epoch, Real lr);

struct FitResult {
  std::vector<RunRecord> records;            // train row then test row per epoch
  int best_epoch = -1;                       // epoch of best test acc_mean
  Real best_accuracy = Real(0);
  std::vector<FlatArray<Real>> best_params;  // snapshot at best_epoch
};

// Full training run; evaluates on the test set after every epoch and keeps
// the parameters of the best test accuracy (ties keep the earlier epoch).
// With zero epochs the snapshot is the initial state and records are empty.
FitResult fit(Network& net, const Dataset& train_data, const Dataset& test_data,
              const OptimConfig& ocfg, const DistillConfig& dcfg,
              const RecordSink& sink = nullptr);

}  // namespace snnd
