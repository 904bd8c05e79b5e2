#include "snnd/config.hpp"

#include <fstream>
#include <sstream>

#include "snnd/csv.hpp"
#include "snnd/error.hpp"
#include "snnd/parse.hpp"

namespace snnd {

const char* to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::evf: return "evf";
    case DataSource::table: return "table";
  }
  return "?";
}

DataSource data_source_from_string(const std::string& s) {
  if (s == "synthetic") return DataSource::synthetic;
  if (s == "evf") return DataSource::evf;
  if (s == "table") return DataSource::table;
  throw ConfigError("unknown data.source '" + s +
                    "' (valid: synthetic, evf, table)");
}

namespace {

[[noreturn]] void bad_value(const std::string& where, const std::string& key,
                            const std::string& value, const char* need) {
  throw ConfigError(where + ": value '" + value + "' for " + key +
                    " is not " + need);
}

int to_int(const std::string& where, const std::string& key,
           const std::string& value) {
  long v = 0;
  if (!parse_long_strict(value, v)) bad_value(where, key, value, "an integer");
  return static_cast<int>(v);
}

Real to_real(const std::string& where, const std::string& key,
             const std::string& value) {
  double v = 0;
  if (!parse_double_strict(value, v)) bad_value(where, key, value, "a number");
  return static_cast<Real>(v);
}

std::uint64_t to_u64(const std::string& where, const std::string& key,
                     const std::string& value) {
  std::uint64_t v = 0;
  if (!parse_u64_strict(value, v))
    bad_value(where, key, value, "an unsigned integer");
  return v;
}

bool to_bool(const std::string& where, const std::string& key,
             const std::string& value) {
  bool v = false;
  if (!parse_bool_strict(value, v))
    bad_value(where, key, value, "true or false");
  return v;
}

std::vector<int> to_int_list(const std::string& where, const std::string& key,
                             const std::string& value) {
  std::vector<int> out;
  for (const std::string& part : split(value, ',')) {
    const std::string item = trim(part);
    long v = 0;
    if (!parse_long_strict(item, v))
      bad_value(where, key, value, "a comma-separated integer list");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value, const std::string& where) {
  if (key == "model.hidden") cfg.hidden = to_int_list(where, key, value);
  else if (key == "model.timesteps") cfg.timesteps = to_int(where, key, value);
  else if (key == "model.tau") cfg.lif.tau = to_real(where, key, value);
  else if (key == "model.threshold")
    cfg.lif.threshold = to_real(where, key, value);
  else if (key == "model.surrogate_width")
    cfg.lif.surrogate_width = to_real(where, key, value);
  else if (key == "distill.scheme")
    cfg.distill.scheme = scheme_from_string(value);
  else if (key == "distill.metric")
    cfg.distill.metric = metric_from_string(value);
  else if (key == "distill.alpha") cfg.distill.alpha = to_real(where, key, value);
  else if (key == "distill.lambda_s2w")
    cfg.distill.lambda_s2w = to_real(where, key, value);
  else if (key == "distill.lambda_w2s")
    cfg.distill.lambda_w2s = to_real(where, key, value);
  else if (key == "distill.loss_fn")
    cfg.distill.loss_fn = pair_loss_from_string(value);
  else if (key == "distill.detach_teacher")
    cfg.distill.detach_teacher = to_bool(where, key, value);
  else if (key == "distill.direction")
    cfg.distill.direction = direction_from_string(value);
  else if (key == "optim.lr0") cfg.optim.lr0 = to_real(where, key, value);
  else if (key == "optim.momentum")
    cfg.optim.momentum = to_real(where, key, value);
  else if (key == "optim.weight_decay")
    cfg.optim.weight_decay = to_real(where, key, value);
  else if (key == "optim.lr_drop_every")
    cfg.optim.lr_drop_every = to_int(where, key, value);
  else if (key == "optim.lr_drop_factor")
    cfg.optim.lr_drop_factor = to_real(where, key, value);
  else if (key == "optim.epochs") cfg.optim.epochs = to_int(where, key, value);
  else if (key == "optim.batch_size")
    cfg.optim.batch_size = to_int(where, key, value);
  else if (key == "data.source")
    cfg.source = data_source_from_string(value);
  else if (key == "data.path") cfg.path = value;
  else if (key == "data.classes") cfg.classes = to_int(where, key, value);
  else if (key == "data.features") cfg.features = to_int(where, key, value);
  else if (key == "data.samples_per_class")
    cfg.samples_per_class = to_int(where, key, value);
  else if (key == "data.rate_lo") cfg.rate_lo = to_real(where, key, value);
  else if (key == "data.rate_hi") cfg.rate_hi = to_real(where, key, value);
  else if (key == "data.train_fraction")
    cfg.train_fraction = to_real(where, key, value);
  else if (key == "seed.model") cfg.seed_model = to_u64(where, key, value);
  else if (key == "seed.data") cfg.seed_data = to_u64(where, key, value);
  else throw ConfigError(where + ": unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text,
                            const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;

    const std::size_t eq = content.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + " line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + content + "'");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + " line " + std::to_string(line_no) +
                        ": empty key");
    set_config_key(cfg, key, value,
                   source + " line " + std::to_string(line_no));
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  set_config_key(cfg, key, value, "--set " + key);
}

void validate(const RunConfig& cfg) {
  for (int h : cfg.hidden)
    if (h < 1) throw ConfigError("model.hidden sizes must be >= 1");
  if (cfg.timesteps < 2) throw ConfigError("model.timesteps must be >= 2");
  validate(cfg.lif);
  validate(cfg.distill);
  validate(cfg.optim);
  if (cfg.source != DataSource::synthetic && cfg.path.empty())
    throw ConfigError("data.path is required for data.source " +
                      std::string(to_string(cfg.source)));
  if (cfg.source == DataSource::synthetic) {
    SynthConfig synth;
    synth.classes = cfg.classes;
    synth.features = cfg.features;
    synth.timesteps = cfg.timesteps;
    synth.samples_per_class = cfg.samples_per_class;
    synth.rate_lo = cfg.rate_lo;
    synth.rate_hi = cfg.rate_hi;
    validate(synth);
  }
  if (!(cfg.train_fraction > Real(0)) || !(cfg.train_fraction < Real(1)))
    throw ConfigError("data.train_fraction must be in (0,1)");
}

std::string serialize(const RunConfig& cfg) {
  std::string hidden;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    if (i) hidden += ",";
    hidden += std::to_string(cfg.hidden[i]);
  }
  std::string out;
  const auto kv = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  kv("model.hidden", hidden);
  kv("model.timesteps", std::to_string(cfg.timesteps));
  kv("model.tau", real_str(double(cfg.lif.tau)));
  kv("model.threshold", real_str(double(cfg.lif.threshold)));
  kv("model.surrogate_width", real_str(double(cfg.lif.surrogate_width)));
  kv("distill.scheme", to_string(cfg.distill.scheme));
  kv("distill.metric", to_string(cfg.distill.metric));
  kv("distill.alpha", real_str(double(cfg.distill.alpha)));
  kv("distill.lambda_s2w", real_str(double(cfg.distill.lambda_s2w)));
  kv("distill.lambda_w2s", real_str(double(cfg.distill.lambda_w2s)));
  kv("distill.loss_fn", to_string(cfg.distill.loss_fn));
  kv("distill.detach_teacher", cfg.distill.detach_teacher ? "true" : "false");
  kv("distill.direction", to_string(cfg.distill.direction));
  kv("optim.lr0", real_str(double(cfg.optim.lr0)));
  kv("optim.momentum", real_str(double(cfg.optim.momentum)));
  kv("optim.weight_decay", real_str(double(cfg.optim.weight_decay)));
  kv("optim.lr_drop_every", std::to_string(cfg.optim.lr_drop_every));
  kv("optim.lr_drop_factor", real_str(double(cfg.optim.lr_drop_factor)));
  kv("optim.epochs", std::to_string(cfg.optim.epochs));
  kv("optim.batch_size", std::to_string(cfg.optim.batch_size));
  kv("data.source", to_string(cfg.source));
  kv("data.path", cfg.path);
  kv("data.classes", std::to_string(cfg.classes));
  kv("data.features", std::to_string(cfg.features));
  kv("data.samples_per_class", std::to_string(cfg.samples_per_class));
  kv("data.rate_lo", real_str(double(cfg.rate_lo)));
  kv("data.rate_hi", real_str(double(cfg.rate_hi)));
  kv("data.train_fraction", real_str(double(cfg.train_fraction)));
  kv("seed.model", u64_str(cfg.seed_model));
  kv("seed.data", u64_str(cfg.seed_data));
  return out;
}

Dataset load_full_dataset(const RunConfig& cfg) {
  validate(cfg);
  switch (cfg.source) {
    case DataSource::synthetic: {
      SynthConfig synth;
      synth.classes = cfg.classes;
      synth.features = cfg.features;
      synth.timesteps = cfg.timesteps;
      synth.samples_per_class = cfg.samples_per_class;
      synth.rate_lo = cfg.rate_lo;
      synth.rate_hi = cfg.rate_hi;
      synth.seed = cfg.seed_data;
      return generate_synthetic(synth);
    }
    case DataSource::evf: {
      Dataset ds = load_event_frames(cfg.path);
      if (ds.t != cfg.timesteps)
        throw ConfigError("event frame file has " + std::to_string(ds.t) +
                          " timesteps, model.timesteps is " +
                          std::to_string(cfg.timesteps));
      return ds;
    }
    case DataSource::table:
      return load_table(cfg.path, cfg.timesteps);
  }
  throw ConfigError("unreachable data source");
}

std::pair<Dataset, Dataset> load_split(const RunConfig& cfg) {
  return split_dataset(load_full_dataset(cfg), cfg.train_fraction,
                       cfg.seed_data);
}

SnnConfig snn_config_for(const RunConfig& cfg, const Dataset& data) {
  SnnConfig scfg;
  scfg.layer_sizes.push_back(data.d);
  for (int h : cfg.hidden) scfg.layer_sizes.push_back(h);
  scfg.layer_sizes.push_back(data.num_classes);
  scfg.timesteps = cfg.timesteps;
  scfg.lif = cfg.lif;
  validate(scfg);
  return scfg;
}

OptimConfig optim_config(const RunConfig& cfg) {
  OptimConfig ocfg = cfg.optim;
  ocfg.seed = cfg.seed_model;
  return ocfg;
}

}  // namespace snnd
