#include "snnd/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "snnd/bytesio.hpp"
#include "snnd/config.hpp"
#include "snnd/csv.hpp"
#include "snnd/error.hpp"
#include "snnd/evaluate.hpp"
#include "snnd/optim.hpp"
#include "snnd/parse.hpp"

namespace snnd {

namespace {

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config_file(config_path);
  for (const std::string& kv : overrides) apply_override(cfg, kv);
  validate(cfg);
  return cfg;
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw DataError("cannot create output directory " + out_dir + ": " +
                    ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

Network load_checkpoint_for(const RunConfig& cfg, const std::string& path,
                            const Dataset& data) {
  Network net = Network::load(path);
  if (net.input_dim() != data.d || net.classes() != data.num_classes ||
      net.timesteps() != data.t)
    throw ConfigError(
        "checkpoint " + path + " (inputs " + std::to_string(net.input_dim()) +
        ", classes " + std::to_string(net.classes()) + ", timesteps " +
        std::to_string(net.timesteps()) + ") does not fit the dataset (" +
        std::to_string(data.d) + ", " + std::to_string(data.num_classes) +
        ", " + std::to_string(data.t) + ")");
  (void)cfg;
  return net;
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir,
              std::ostream& out) {
  ensure_out_dir(out_dir);
  auto [train_ds, test_ds] = load_split(cfg);
  const SnnConfig scfg = snn_config_for(cfg, train_ds);
  Network net = Network::build(scfg, cfg.seed_model);
  const OptimConfig ocfg = optim_config(cfg);

  std::string csv = metrics_csv_header(scfg.timesteps);
  const RecordSink sink = [&csv](const RunRecord& rec) {
    csv += metrics_csv_row(rec);
  };
  FitResult fr = fit(net, train_ds, test_ds, ocfg, cfg.distill, sink);

  bytesio::write_text_file(join_path(out_dir, "metrics.csv"), csv);
  net.save(join_path(out_dir, "final.snnm"));
  const std::vector<FlatArray<Real>> final_params = net.snapshot();
  net.restore(fr.best_params);
  net.save(join_path(out_dir, "best.snnm"));
  net.restore(final_params);
  bytesio::write_text_file(join_path(out_dir, "resolved-config.txt"),
                           serialize(cfg));

  Real final_acc = Real(0);
  if (!fr.records.empty()) final_acc = fr.records.back().acc_mean;
  out << "trained " << ocfg.epochs << " epochs on " << train_ds.n
      << " samples (" << test_ds.n << " held out)\n";
  out << "final test accuracy " << real_str(double(final_acc))
      << ", best " << real_str(double(fr.best_accuracy)) << " at epoch "
      << fr.best_epoch << "\n";
  out << "artifacts in " << out_dir
      << ": metrics.csv final.snnm best.snnm resolved-config.txt\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& t_max_list, const std::string& threshold_list,
             const std::string& out_dir, std::ostream& out) {
  if (t_max_list.empty() == threshold_list.empty())
    throw UsageError("eval: give exactly one of --t-max or --exit-threshold");
  ensure_out_dir(out_dir);
  auto [train_ds, test_ds] = load_split(cfg);
  (void)train_ds;
  Network net = load_checkpoint_for(cfg, checkpoint, test_ds);

  std::string csv = "mode,parameter,accuracy,avg_timesteps\n";
  if (!t_max_list.empty()) {
    for (const std::string& part : split(t_max_list, ',')) {
      long t = 0;
      if (!parse_long_strict(trim(part), t))
        throw UsageError("eval: --t-max entry '" + trim(part) +
                         "' is not an integer");
      const Real acc = eval_at(net, test_ds, static_cast<int>(t));
      csv += "t_max," + std::to_string(t) + "," + real_str(double(acc)) + "," +
             real_str(double(t)) + "\n";
    }
  } else {
    for (const std::string& part : split(threshold_list, ',')) {
      double th = 0;
      if (!parse_double_strict(trim(part), th))
        throw UsageError("eval: --exit-threshold entry '" + trim(part) +
                         "' is not a number");
      EarlyExitConfig ecfg;
      ecfg.threshold = static_cast<Real>(th);
      ecfg.max_timesteps = net.timesteps();
      const EarlyExitResult res = early_exit_eval(net, test_ds, ecfg);
      csv += "exit_threshold," + real_str(th) + "," +
             real_str(double(res.accuracy)) + "," +
             real_str(double(res.avg_timesteps)) + "\n";
    }
  }
  bytesio::write_text_file(join_path(out_dir, "eval.csv"), csv);
  out << csv;
  out << "wrote " << join_path(out_dir, "eval.csv") << "\n";
  return 0;
}

int cmd_attack(const RunConfig& cfg, const std::string& checkpoint,
               const AttackConfig& acfg, const std::string& out_dir,
               std::ostream& out) {
  ensure_out_dir(out_dir);
  auto [train_ds, test_ds] = load_split(cfg);
  (void)train_ds;
  Network net = load_checkpoint_for(cfg, checkpoint, test_ds);

  const std::vector<RobustRow> rows = robust_eval(net, test_ds, {acfg});
  std::string csv = robustness_csv_header();
  for (const RobustRow& row : rows) csv += robustness_csv_row(row);
  bytesio::write_text_file(join_path(out_dir, "robustness.csv"), csv);
  out << csv;
  out << "wrote " << join_path(out_dir, "robustness.csv") << "\n";
  return 0;
}

struct SweepRun {
  std::string value;
  std::uint64_t seed = 0;
  Real final_accuracy = Real(0);
  Real best_accuracy = Real(0);
};

int cmd_sweep(const RunConfig& base, const std::string& axis,
              const std::string& seeds_list, int jobs,
              const std::string& out_dir, std::ostream& out) {
  const std::size_t eq = axis.find('=');
  if (eq == std::string::npos)
    throw UsageError("sweep: --axis expects key=v1,v2,..., got '" + axis + "'");
  const std::string key = trim(axis.substr(0, eq));
  std::vector<std::string> values;
  for (const std::string& part : split(axis.substr(eq + 1), ','))
    values.push_back(trim(part));
  if (key.empty() || values.empty() ||
      std::any_of(values.begin(), values.end(),
                  [](const std::string& v) { return v.empty(); }))
    throw UsageError("sweep: --axis expects key=v1,v2,... with no empty items");
  if (std::set<std::string>(values.begin(), values.end()).size() !=
      values.size())
    throw ConfigError("sweep: duplicate values in axis '" + key + "'");

  std::vector<std::uint64_t> seeds;
  for (const std::string& part : split(seeds_list, ',')) {
    std::uint64_t s = 0;
    if (!parse_u64_strict(trim(part), s))
      throw UsageError("sweep: --seeds entry '" + trim(part) +
                       "' is not an unsigned integer");
    seeds.push_back(s);
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() !=
      seeds.size())
    throw ConfigError("sweep: duplicate seeds");
  if (jobs < 1) throw UsageError("sweep: --jobs must be >= 1");
  ensure_out_dir(out_dir);

  // Validate every combination up front so a bad axis value fails before any
  // training starts.
  std::vector<SweepRun> runs;
  for (const std::string& value : values)
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      set_config_key(cfg, key, value, "sweep axis");
      cfg.seed_model = seed;
      validate(cfg);
      runs.push_back({value, seed, Real(0), Real(0)});
    }

  const auto run_one = [&](SweepRun& run) {
    RunConfig cfg = base;
    set_config_key(cfg, key, run.value, "sweep axis");
    cfg.seed_model = run.seed;
    auto [train_ds, test_ds] = load_split(cfg);
    Network net = Network::build(snn_config_for(cfg, train_ds), cfg.seed_model);
    const FitResult fr =
        fit(net, train_ds, test_ds, optim_config(cfg), cfg.distill);
    run.final_accuracy =
        fr.records.empty() ? Real(0) : fr.records.back().acc_mean;
    run.best_accuracy = fr.best_accuracy;
  };

  if (jobs == 1) {
    for (SweepRun& run : runs) run_one(run);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(runs.size()));
    for (int i = 0; i < n_threads; ++i)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t at = next.fetch_add(1);
          if (at >= runs.size()) return;
          try {
            run_one(runs[at]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::string csv = "axis,value,seed,final_accuracy,best_accuracy\n";
  for (const SweepRun& run : runs)
    csv += key + "," + run.value + "," + u64_str(run.seed) + "," +
           real_str(double(run.final_accuracy)) + "," +
           real_str(double(run.best_accuracy)) + "\n";
  bytesio::write_text_file(join_path(out_dir, "sweep.csv"), csv);
  out << csv;
  out << "wrote " << join_path(out_dir, "sweep.csv") << "\n";
  return 0;
}

int cmd_export_logits(const RunConfig& cfg, const std::string& checkpoint,
                      const std::string& out_dir, std::ostream& out) {
  ensure_out_dir(out_dir);
  auto [train_ds, test_ds] = load_split(cfg);
  (void)train_ds;
  Network net = load_checkpoint_for(cfg, checkpoint, test_ds);

  std::string csv = "sample_id,label,timestep";
  for (Index c = 0; c < net.classes(); ++c)
    csv += ",c" + std::to_string(c);
  csv += "\n";

  NoGradGuard ng;
  const Index eval_batch = 256;
  for (Index start = 0; start < test_ds.n; start += eval_batch) {
    const Index stop = std::min<Index>(start + eval_batch, test_ds.n);
    std::vector<Index> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = batch_inputs(test_ds, idx);
    TimestepOutputs outs = net.forward(x);
    for (Index b = 0; b < stop - start; ++b) {
      for (int t = 0; t < outs.steps(); ++t) {
        const Tensor& slice = outs.logits[static_cast<std::size_t>(t)];
        csv += std::to_string(start + b) + "," +
               std::to_string(
                   test_ds.labels[static_cast<std::size_t>(start + b)]) +
               "," + std::to_string(t + 1);
        for (Index c = 0; c < net.classes(); ++c)
          csv += "," + real_str(double(slice(b, c)));
        csv += "\n";
      }
    }
  }
  bytesio::write_text_file(join_path(out_dir, "logits.csv"), csv);
  out << "wrote " << join_path(out_dir, "logits.csv") << " (" << test_ds.n
      << " samples x " << net.timesteps() << " timesteps)\n";
  return 0;
}

int dispatch_error(std::ostream& err) {
  try {
    throw;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParamError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{
      "snnd: train and probe spiking classifiers whose timesteps teach each "
      "other"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::vector<std::string> overrides;

  const auto add_common = [&](CLI::App* cmd, bool needs_checkpoint) {
    cmd->add_option("--config", config_path, "run configuration file")
        ->required();
    cmd->add_option("--set", overrides,
                    "override one config key, e.g. --set optim.epochs=3");
    cmd->add_option("--out", out_dir, "output directory")->required();
    if (needs_checkpoint)
      cmd->add_option("--checkpoint", checkpoint, "model checkpoint (.snnm)")
          ->required();
  };

  CLI::App* train = app.add_subcommand("train", "train and write artifacts");
  add_common(train, false);

  CLI::App* eval = app.add_subcommand(
      "eval", "accuracy at fixed depths or with early exit");
  add_common(eval, true);
  std::string t_max_list, threshold_list;
  eval->add_option("--t-max", t_max_list,
                   "comma list of depths, e.g. 1,2,3,4,5");
  eval->add_option("--exit-threshold", threshold_list,
                   "comma list of confidence thresholds, e.g. 0.95,0.9");

  CLI::App* attack = app.add_subcommand(
      "attack", "accuracy under an input perturbation");
  add_common(attack, true);
  std::string attack_kind = "gn";
  double att_epsilon = 0, att_sigma = 0, att_alpha = 0;
  int att_steps = 7;
  std::uint64_t att_seed = 7;
  bool no_random_start = false;
  attack->add_option("--attack", attack_kind, "gn, fgsm, or pgd")->required();
  attack->add_option("--epsilon", att_epsilon, "max-norm budget (fgsm/pgd)");
  attack->add_option("--sigma", att_sigma, "noise scale (gn)");
  attack->add_option("--steps", att_steps, "pgd iterations");
  attack->add_option("--alpha", att_alpha, "pgd step size (default 2.5*eps/steps)");
  attack->add_option("--attack-seed", att_seed, "randomness seed");
  attack->add_flag("--no-random-start", no_random_start,
                   "pgd: start from the clean input");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "train over one config axis and several seeds");
  add_common(sweep, false);
  std::string axis, seeds_list = "1";
  int jobs = 1;
  sweep->add_option("--axis", axis, "key=v1,v2,... config axis")->required();
  sweep->add_option("--seeds", seeds_list, "comma list of model seeds");
  sweep->add_option("--jobs", jobs, "parallel runs");

  CLI::App* export_logits = app.add_subcommand(
      "export-logits", "dump per-timestep logits of the test split");
  add_common(export_logits, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    const RunConfig cfg = resolve_config(config_path, overrides);
    if (train->parsed()) return cmd_train(cfg, out_dir, out);
    if (eval->parsed())
      return cmd_eval(cfg, checkpoint, t_max_list, threshold_list, out_dir,
                      out);
    if (attack->parsed()) {
      AttackConfig acfg;
      acfg.kind = attack_from_string(attack_kind);
      acfg.epsilon = static_cast<Real>(att_epsilon);
      acfg.sigma = static_cast<Real>(att_sigma);
      acfg.steps = att_steps;
      acfg.step_size = static_cast<Real>(att_alpha);
      acfg.random_start = !no_random_start;
      acfg.seed = att_seed;
      validate(acfg);
      return cmd_attack(cfg, checkpoint, acfg, out_dir, out);
    }
    if (sweep->parsed())
      return cmd_sweep(cfg, axis, seeds_list, jobs, out_dir, out);
    if (export_logits->parsed())
      return cmd_export_logits(cfg, checkpoint, out_dir, out);
    throw UsageError("no subcommand given");
  } catch (...) {
    return dispatch_error(err);
  }
}

}  // namespace snnd
