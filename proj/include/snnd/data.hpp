#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snnd/tensor.hpp"

namespace snnd {

// In-memory dataset of temporal feature vectors: values is [n][t][d]
// row-major, one integer label per sample. lo/hi bound every input value and
// define the clipping box for input perturbations.
struct Dataset {
  Index n = 0;
  Index t = 0;
  Index d = 0;
  std::vector<Real> values;
  std::vector<int> labels;
  int num_classes = 0;
  Real lo = Real(0);
  Real hi = Real(1);

  Real at(Index sample, Index step, Index feature) const {
    return values[static_cast<std::size_t>((sample * t + step) * d + feature)];
  }
};

// Synthetic temporal rate-code task. Each class is a signature of per-
// timestep Bernoulli rates over a small informative subset of features; the
// informative subset grows with t, so early timesteps carry genuinely less
// evidence than late ones and no single timestep separates the classes as
// well as the full sequence does.
struct SynthConfig {
  int classes = 4;
  int features = 32;
  int timesteps = 5;
  int samples_per_class = 500;
  Real rate_lo = Real(0.1);   // background firing rate
  Real rate_hi = Real(0.6);   // informative firing rate
  std::uint64_t seed = 1;
};

void validate(const SynthConfig& cfg);

// The ground-truth rates, [class][t][d]; exposed so tests can compute exact
// posterior baselines for the generated data.
struct RateProfiles {
  int classes = 0;
  int timesteps = 0;
  int features = 0;
  std::vector<Real> rates;

  Real at(int cls, int step, int feature) const {
    return rates[static_cast<std::size_t>(
        (cls * timesteps + step) * features + feature)];
  }
};

RateProfiles synthetic_profiles(const SynthConfig& cfg);

// Samples are grouped by class (samples_per_class of class 0, then class 1,
// ...). Identical configs produce bitwise-identical datasets.
Dataset generate_synthetic(const SynthConfig& cfg);

// Event frame file: magic "EVF1", version byte 1, then u32 counts n,t,c,h,w,
// n u16 labels, and n*t*c*h*w f32 values in [n][t][c][h][w] order, all
// little-endian. Values are normalized by the file-wide maximum on load and
// the frame dims collapse to d = c*h*w.
Dataset load_event_frames(const std::string& path);

void save_event_frames(const std::string& path, Index n, Index t, Index c,
                       Index h, Index w, const std::vector<int>& labels,
                       const std::vector<float>& values);

// Comma-separated table, one sample per line: integer label first, features
// after. Static feature vectors are tiled across `timesteps` identical
// steps. Errors name the offending line and column.
Dataset load_table(const std::string& path, int timesteps);

// Seeded unstratified split. The train side gets floor(train_fraction * n)
// samples of a seeded shuffle, the test side the rest; both sides keep the
// parent's num_classes and bounds.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data,
                                          Real train_fraction,
                                          std::uint64_t seed);

// Gathers the given samples into a [t, batch, d] input tensor.
Tensor batch_inputs(const Dataset& data, const std::vector<Index>& idx);

std::vector<int> batch_labels(const Dataset& data,
                              const std::vector<Index>& idx);

}  // namespace snnd
