#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mate/dataio.hpp"
#include "mate/errors.hpp"
#include "mate/metrics.hpp"
#include "mate/model.hpp"
#include "mate/run_config.hpp"
#include "mate/sim_charged.hpp"
#include "mate/sim_socialnav.hpp"
#include "mate/svg.hpp"
#include "mate/trainer.hpp"

namespace fs = std::filesystem;
using namespace mate;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.file, "Run config file (section.key = value lines)");
  cmd->add_option("--set", args.sets, "Override one config key, e.g. --set train.lr=5e-4")->take_all();
}

RunConfig load_config(const ConfigArgs& args) {
  RunConfig cfg = args.file.empty() ? RunConfig{} : RunConfig::from_file(args.file);
  for (const auto& s : args.sets) cfg.set_assignment(s);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string split_name_check(const std::string& s) {
  if (s != "train" && s != "val" && s != "test" && s != "all") {
    throw ConfigError("--split must be one of train, val, test, all");
  }
  return s;
}

std::vector<std::size_t> split_indices(const Dataset& ds, const std::string& which) {
  std::vector<std::size_t> all(ds.episodes.size());
  std::iota(all.begin(), all.end(), 0);
  if (which == "all" || !ds.manifest.splits) return all;
  if (which == "train") return ds.manifest.splits->train;
  if (which == "val") return ds.manifest.splits->val;
  return ds.manifest.splits->test;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string kind;
  std::size_t count = 100;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> agents;
  std::optional<double> speed;
  std::optional<std::size_t> steps;
  std::string out;
  ConfigArgs config;
};

int cmd_simulate(const SimulateArgs& a) {
  RunConfig cfg = load_config(a.config);
  const std::string section = a.kind;
  if (a.seed) cfg.set(section + ".seed", std::to_string(*a.seed));
  if (a.agents) cfg.set(section + (a.kind == "charged" ? ".n_particles" : ".n_agents"), std::to_string(*a.agents));
  if (a.steps) cfg.set(section + (a.kind == "charged" ? ".n_steps" : ".t_total"), std::to_string(*a.steps));
  if (a.speed) {
    if (a.kind != "socialnav") throw ConfigError("--speed applies to socialnav only");
    std::ostringstream s;
    s.precision(17);
    s << *a.speed;
    cfg.set("socialnav.preferred_speed", s.str());
  }

  std::vector<Episode> episodes;
  nlohmann::json generator;
  if (a.kind == "charged") {
    const auto c = cfg.charged();
    c.validate();
    generator = c.to_json();
    for (std::size_t i = 0; i < a.count; ++i) episodes.push_back(sim::simulate_charged(c, i));
  } else {
    const auto c = cfg.socialnav();
    c.validate();
    generator = c.to_json();
    for (std::size_t i = 0; i < a.count; ++i) episodes.push_back(sim::simulate_socialnav(c, i));
  }
  const Splits splits = split(a.count, cfg.split_ratios(), cfg.split_seed());
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_episodes(out, episodes, generator, splits);
  write_text(fs::path(a.out + ".config.txt"), cfg.dump());
  std::cerr << "wrote " << a.count << " " << a.kind << " episodes to " << a.out << "\n";
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::optional<double> lambda1, lambda2, lr;
  std::optional<std::size_t> max_epochs, batch_size, threads;
  std::optional<std::uint64_t> seed;
  ConfigArgs config;
};

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (a.lambda1) cfg.set("train.lambda1", number(*a.lambda1));
  if (a.lambda2) cfg.set("train.lambda2", number(*a.lambda2));
  if (a.lr) cfg.set("train.lr", number(*a.lr));
  if (a.max_epochs) cfg.set("train.max_epochs", std::to_string(*a.max_epochs));
  if (a.batch_size) cfg.set("train.batch_size", std::to_string(*a.batch_size));
  if (a.threads) cfg.set("train.threads", std::to_string(*a.threads));
  if (a.seed) cfg.set("train.seed", std::to_string(*a.seed));

  const ModelConfig mc = cfg.model();
  const TrainConfig tc = cfg.train();
  mc.validate();
  tc.validate();

  const Dataset ds = load_dataset(a.data);
  Splits splits = ds.manifest.splits ? *ds.manifest.splits : split(ds.episodes.size(), cfg.split_ratios(),
                                                                     cfg.split_seed());
  const auto train_set = ds.subset(splits.train);
  const auto val_set = ds.subset(splits.val);
  if (train_set.empty() || val_set.empty()) throw ConfigError("train: dataset needs non-empty train and val splits");
  const std::size_t need = mc.decoder.t_obs + 1;
  for (const auto& e : ds.episodes)
    if (e.steps() < need) {
      throw ConfigError("train: episodes have " + std::to_string(e.steps()) + " steps but model.t_obs=" +
                        std::to_string(mc.decoder.t_obs) + " needs at least " + std::to_string(need));
    }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.txt", cfg.dump());

  std::ofstream log(dir / "epochs.csv", std::ios::binary);
  if (!log) throw IoError("cannot open " + (dir / "epochs.csv").string());
  log << loss_csv_header() << "\n";

  Model model(mc);
  TrainHooks hooks;
  hooks.checkpoint_path = dir / "checkpoint.json";
  hooks.checkpoint_meta = {{"generator", ds.manifest.generator}, {"run_config", cfg.values()}};
  const auto start = std::chrono::steady_clock::now();
  hooks.on_epoch = [&](const LossReport& r) {
    log << loss_csv_row(r) << "\n" << std::flush;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "epoch %3zu %-5s L_P=%.5f L_E=%.5f L_D=%.5f total=%.5f lr=%.3g (%.0fs)\n", r.epoch,
                 r.split.c_str(), r.L_P, r.L_E, r.L_D, r.total, r.lr, secs);
  };
  const TrainResult result = train(model, train_set, val_set, tc, hooks);
  if (result.best_epoch == 0) model.save(*hooks.checkpoint_path, hooks.checkpoint_meta);
  std::fprintf(stderr, "best epoch %zu (val L_P %.6f); checkpoint %s\n", result.best_epoch, result.best_val_L_P,
               hooks.checkpoint_path->string().c_str());
  return kOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
  bool zero_shot = false;
  std::optional<std::size_t> zero_shot_episodes;
  std::size_t threads = 1;
  ConfigArgs config;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = load_config(a.config);
  nlohmann::json meta;
  const auto model = Model::load(a.checkpoint, &meta);
  std::vector<EvalReport> reports;
  std::optional<std::size_t> edge;
  nlohmann::json generator = meta.value("generator", nlohmann::json::object());

  if (!a.data.empty()) {
    const Dataset ds = load_dataset(a.data);
    if (!ds.manifest.generator.empty()) generator = ds.manifest.generator;
    const auto eps = ds.subset(split_indices(ds, split_name_check(a.split)));
    const auto sel = ds.subset(split_indices(ds, "val"));
    EvalOptions eo;
    eo.selection = sel;
    eo.threads = a.threads;
    EvalReport r = evaluate(*model, eps, eo);
    r.label = a.split;
    edge = r.edge_type;
    reports.push_back(r);
  }
  if (a.zero_shot) {
    if (generator.empty()) throw ConfigError("--zero-shot needs a generator config from --data or the checkpoint");
    ZeroShotOptions zo;
    zo.episodes_per_variant = a.zero_shot_episodes.value_or(cfg.get("eval.zero_shot_episodes").get<std::size_t>());
    zo.seed = cfg.get("eval.zero_shot_seed").get<std::uint64_t>();
    zo.edge_type = edge;
    zo.threads = a.threads;
    for (auto& row : zero_shot_eval(*model, generator, zo)) reports.push_back(row.report);
  }
  if (reports.empty()) throw ConfigError("eval: give --data and/or --zero-shot");

  std::cout << report_table(reports);
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_text(dir / "report.csv", report_csv(reports));
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(r.to_json());
    write_text(dir / "report.json", j.dump(2) + "\n");
    write_text(dir / "config.txt", cfg.dump());
  }
  return kOk;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  const auto model = Model::load(a.checkpoint);
  const Dataset ds = load_dataset(a.data);
  std::vector<PredictionRecord> records;
  for (std::size_t idx : split_indices(ds, split_name_check(a.split))) {
    records.push_back({idx, model->config().decoder.t_obs, model->predict(ds.episodes[idx])});
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_predictions(out, records);
  std::cerr << "wrote " << records.size() << " predictions to " << a.out << "\n";
  return kOk;
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
  std::string episodes;
  std::size_t index = 0;
  std::string predictions;
  std::optional<std::size_t> t_obs;
  std::string out;
};

int cmd_plot(const PlotArgs& a) {
  const auto eps = read_episodes(a.episodes);
  if (a.index >= eps.size()) {
    throw ConfigError("--index " + std::to_string(a.index) + " out of range (" + std::to_string(eps.size()) +
                      " episodes)");
  }
  const Episode& ep = eps[a.index];
  std::optional<Tensor> pred;
  std::size_t t_obs = a.t_obs.value_or(ep.steps());
  if (!a.predictions.empty()) {
    for (auto& r : read_predictions(a.predictions)) {
      if (r.episode != a.index) continue;
      if (r.positions.dim(1) != ep.agents()) throw ShapeError("prediction agent count does not match the episode");
      if (!a.t_obs) t_obs = r.t_obs;
      pred = std::move(r.positions);
      break;
    }
  }
  SvgOptions so;
  so.title = fs::path(a.episodes).filename().string() + " #" + std::to_string(a.index);
  write_text(a.out, trajectory_svg(ep.positions, t_obs, pred, so));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent trajectory prediction with interaction-energy constraints"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset (episodes JSONL + manifest)");
  sim->add_option("kind", sim_args.kind, "charged | socialnav")->required()->check(CLI::IsMember({"charged", "socialnav"}));
  sim->add_option("--count", sim_args.count, "Number of episodes")->capture_default_str();
  sim->add_option("--seed", sim_args.seed, "Generator seed");
  sim->add_option("--agents", sim_args.agents, "Agents (socialnav) or particles (charged) per scene");
  sim->add_option("--speed", sim_args.speed, "Preferred speed (socialnav)");
  sim->add_option("--steps", sim_args.steps, "Steps per episode");
  sim->add_option("--out", sim_args.out, "Output episodes file")->required();
  add_config_options(sim, sim_args.config);

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint.json, epochs.csv, config.txt");
  tr->add_option("--data", train_args.data, "Episodes file with manifest")->required();
  tr->add_option("--out", train_args.out, "Run directory")->required();
  tr->add_option("--lambda1", train_args.lambda1, "Weight of the inter-agent constraint");
  tr->add_option("--lambda2", train_args.lambda2, "Weight of the intra-agent constraint");
  tr->add_option("--lr", train_args.lr, "Learning rate");
  tr->add_option("--max-epochs", train_args.max_epochs, "Epochs");
  tr->add_option("--batch-size", train_args.batch_size, "Episodes per batch");
  tr->add_option("--threads", train_args.threads, "Worker threads for the batch");
  tr->add_option("--seed", train_args.seed, "Training seed");
  add_config_options(tr, train_args.config);

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (ADE/FDE, graph accuracy, zero-shot variants)");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", eval_args.data, "Episodes file with manifest");
  ev->add_option("--split", eval_args.split, "train | val | test | all")->capture_default_str();
  ev->add_option("--out", eval_args.out, "Directory for report.csv / report.json");
  ev->add_flag("--zero-shot", eval_args.zero_shot, "Also evaluate freshly generated variant datasets");
  ev->add_option("--zero-shot-episodes", eval_args.zero_shot_episodes, "Episodes per variant");
  ev->add_option("--threads", eval_args.threads, "Worker threads")->capture_default_str();
  add_config_options(ev, eval_args.config);

  PredictArgs pred_args;
  auto* pr = app.add_subcommand("predict", "Write predicted futures as JSONL");
  pr->add_option("--checkpoint", pred_args.checkpoint, "Checkpoint file")->required();
  pr->add_option("--data", pred_args.data, "Episodes file with manifest")->required();
  pr->add_option("--split", pred_args.split, "train | val | test | all")->capture_default_str();
  pr->add_option("--out", pred_args.out, "Output predictions file")->required();

  PlotArgs plot_args;
  auto* pl = app.add_subcommand("plot", "Render one episode (and its prediction) to SVG");
  pl->add_option("--episodes", plot_args.episodes, "Episodes file")->required();
  pl->add_option("--index", plot_args.index, "Episode index")->capture_default_str();
  pl->add_option("--pred", plot_args.predictions, "Predictions file");
  pl->add_option("--t-obs", plot_args.t_obs, "Observed steps (default: from the prediction record)");
  pl->add_option("--out", plot_args.out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(sim_args);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args);
    if (*pr) return cmd_predict(pred_args);
    if (*pl) return cmd_plot(plot_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
