#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnd/lif.hpp"
#include "snnd/tensor.hpp"

// Feedforward spiking classifier. Every hidden layer is a dense projection
// into a LIF population; the readout is a non-spiking dense layer applied to
// the last hidden layer's spikes, so logits exist at every timestep. The T
// per-timestep logit slices are the submodels that distillation ranks and
// pairs; parameters are shared across all of them by construction.

namespace snnd {

struct SnnConfig {
  std::vector<Index> layer_sizes;  // [input, hidden..., classes]
  int timesteps = 5;
  LifParams lif;
};

void validate(const SnnConfig& cfg);

// Logits per timestep: logits[t] has shape [batch, classes]. Slice t is the
// output of submodel t.
struct TimestepOutputs {
  std::vector<Tensor> logits;

  int steps() const { return static_cast<int>(logits.size()); }
};

// Elementwise mean of the per-timestep logits, the ensemble the final
// prediction and the task loss are computed from.
Tensor mean_logits(const TimestepOutputs& out);

class Network {
 public:
  Network() = default;

  // Weights are uniform in (-sqrt(1/fan_in), sqrt(1/fan_in)), biases zero.
  // The same seed always yields bitwise-identical parameters.
  static Network build(const SnnConfig& cfg, std::uint64_t seed);

  const SnnConfig& config() const { return cfg_; }
  int timesteps() const { return cfg_.timesteps; }
  Index classes() const { return cfg_.layer_sizes.back(); }
  Index input_dim() const { return cfg_.layer_sizes.front(); }

  SpikeMode spike_mode() const { return mode_; }
  void set_spike_mode(SpikeMode m) { mode_ = m; }

  // Parameters in declaration order: weight then bias, layer by layer. This
  // order is the checkpoint layout.
  std::vector<Tensor*> parameters();
  Index parameter_count() const;
  void zero_grad();

  // Runs all timesteps on input [T, batch, input_dim]. Membrane state is
  // zeroed at the start, so repeated calls are independent.
  TimestepOutputs forward(const Tensor& input);

  // Runs only the first t_max timesteps. The slices produced are bitwise
  // identical to the first t_max slices of forward() on the same input.
  TimestepOutputs truncated_forward(const Tensor& input, int t_max);

  std::vector<FlatArray<Real>> snapshot() const;
  void restore(const std::vector<FlatArray<Real>>& params);

  void save(const std::string& path) const;
  static Network load(const std::string& path);
  std::vector<std::uint8_t> serialize() const;
  static Network deserialize(const std::vector<std::uint8_t>& bytes,
                             const std::string& source);

 private:
  struct Layer {
    Tensor weight;  // [fan_in, fan_out]
    Tensor bias;    // [fan_out]
  };

  SnnConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<LifState> states_;  // one per hidden layer
  SpikeMode mode_ = SpikeMode::hard;
};

}  // namespace snnd
