#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snnd/data.hpp"
#include "snnd/distill.hpp"
#include "snnd/network.hpp"
#include "snnd/optim.hpp"

// Flat "section.key = value" run configuration. '#' starts a comment, blank
// lines are skipped, unknown keys are rejected. serialize() emits every key
// in a fixed order with round-trip number formatting, so a saved resolved
// config reproduces the exact same run.

namespace snnd {

enum class DataSource { synthetic, evf, table };

const char* to_string(DataSource s);
DataSource data_source_from_string(const std::string& s);

struct RunConfig {
  // model
  std::vector<int> hidden{64};
  int timesteps = 5;
  LifParams lif;
  // distill
  DistillConfig distill;
  // optim (the shuffle seed is seed_model, applied in optim_config())
  OptimConfig optim;
  // data
  DataSource source = DataSource::synthetic;
  std::string path;  // evf/table input file
  int classes = 4;
  int features = 32;
  int samples_per_class = 500;
  Real rate_lo = Real(0.1);
  Real rate_hi = Real(0.6);
  Real train_fraction = Real(0.9);
  // seeds
  std::uint64_t seed_model = 1;
  std::uint64_t seed_data = 1;
};

// Set one key. Throws ConfigError for unknown keys or malformed values;
// `where` prefixes the message (file line, override flag).
void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value, const std::string& where);

RunConfig parse_config_text(const std::string& text, const std::string& source);
RunConfig load_config_file(const std::string& path);

// Applies a "key=value" override as given on the command line.
void apply_override(RunConfig& cfg, const std::string& assignment);

void validate(const RunConfig& cfg);

std::string serialize(const RunConfig& cfg);

// The full dataset described by the data.* keys (before splitting).
Dataset load_full_dataset(const RunConfig& cfg);

// Seeded train/test split of the full dataset.
std::pair<Dataset, Dataset> load_split(const RunConfig& cfg);

// Network architecture implied by the config and the dataset's dimensions.
SnnConfig snn_config_for(const RunConfig& cfg, const Dataset& data);

// The optimizer settings with the model seed filled in.
OptimConfig optim_config(const RunConfig& cfg);

}  // namespace snnd
