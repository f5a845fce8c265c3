// SPDX-License-Identifier: Apache-2.0
#include "rgu/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgu/checkpoint.hpp"
#include "rgu/config.hpp"
#include "rgu/errors.hpp"
#include "rgu/experiment.hpp"
#include "rgu/format.hpp"
#include "rgu/prompts.hpp"
#include "rgu/train.hpp"

namespace rgu::app {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<int> forget_class;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::optional<std::string> data;
  std::vector<std::string> sets;
};

RunConfig resolve(const Options& o) {
  std::vector<std::string> overrides = o.sets;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (o.strategy) overrides.push_back("unlearn.strategy=\"" + *o.strategy + "\"");
  if (o.forget_class) overrides.push_back("unlearn.forget_class=" + std::to_string(*o.forget_class));
  RunConfig cfg = load_config(o.config, overrides);
  if (o.out) cfg.out = *o.out;
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

data::LabeledDataset read_dataset(const RunConfig& cfg, const Options& o) {
  const fs::path path = o.data ? fs::path(*o.data) : fs::path(cfg.out) / "data.jsonl";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset '" + path.string() + "' not found; run gen-data first");
  auto ds = data::read_jsonl(in);
  ds.validate(cfg.mixture.spec().num_classes());
  return ds;
}

Checkpoint read_checkpoint(const RunConfig& cfg, const Options& o) {
  return load_checkpoint(o.checkpoint ? *o.checkpoint
                                      : (fs::path(cfg.out) / "pretrained.json").string());
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const auto ds = make_dataset(cfg);
  std::ostringstream text;
  data::write_jsonl(ds, text);
  const auto path = out_dir(cfg) / "data.jsonl";
  write_file(path, text.str());
  out << "wrote " << ds.size() << " samples to " << path.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const auto ds = read_dataset(cfg, o);
  const auto res = pretrain_checkpoint(cfg, ds);
  const auto dir = out_dir(cfg);
  save_checkpoint(res.checkpoint, (dir / "pretrained.json").string());
  write_file(dir / "train_loss.csv", train::loss_csv(res.losses));
  out << "trained " << cfg.train.steps << " steps";
  if (!res.losses.empty()) {
    out << ", loss " << format_double(res.losses.front()) << " -> "
        << format_double(res.losses.back());
  }
  out << "; wrote " << (dir / "pretrained.json").string() << '\n';
  return kExitOk;
}

int cmd_unlearn(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(o);
  const auto ds = read_dataset(cfg, o);
  const Checkpoint ckpt = read_checkpoint(cfg, o);
  const auto forget = data::select_class(ds, cfg.unlearn.forget_class);
  const auto remain = build_remain_set(cfg, ds, cfg.unlearn.remain.mode, cfg.seed);
  CellSpec cell;
  cell.lambda = cfg.unlearn.lambda;
  cell.alpha = resolve_alpha(cfg, ckpt.model, ckpt.schedule.make(), remain, cfg.seed);
  cell.strategy = parse_strategy_choice(cfg.unlearn.strategy);
  cell.seed = cfg.seed;
  const auto run = run_unlearning(cfg, ckpt, forget, remain, cell);

  Checkpoint result = ckpt;
  result.model = run.model;
  result.provenance = {config_hash(cfg), cfg.seed, cfg.unlearn.iterations,
                       "unlearn:" + cell.strategy.name};
  const auto dir = out_dir(cfg);
  const std::string tag = cell.strategy.name == "restricted+diverse" ? "restricted_diverse"
                                                                       : cell.strategy.name;
  save_checkpoint(result, (dir / ("unlearned_" + tag + ".json")).string());
  write_file(dir / ("trajectory_" + tag + ".csv"), unlearn::trajectory_csv(run.trajectory));

  std::size_t conflicted = 0, noop = 0;
  for (const auto& s : run.trajectory) {
    conflicted += s.conflicted ? 1 : 0;
    noop += s.noop ? 1 : 0;
  }
  out << cell.strategy.name << ": " << run.trajectory.size() << " steps, alpha "
      << format_double(cell.alpha) << ", " << conflicted << " conflicted, " << noop
      << " no-op; wrote " << (dir / ("unlearned_" + tag + ".json")).string() << '\n';
  if (cell.strategy.strategy == unlearn::Strategy::kRestricted && conflicted == 0) {
    err << "warning: gradients never conflicted; this run is identical to graddiff\n";
  }
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const Checkpoint ckpt = read_checkpoint(cfg, o);
  const auto rep = evaluate(cfg, ckpt, cfg.seed);
  const std::string stem =
      o.checkpoint ? fs::path(*o.checkpoint).stem().string() : std::string("pretrained");
  const auto dir = out_dir(cfg);
  write_file(dir / ("eval_" + stem + ".json"), eval::to_json(rep).dump(2) + "\n");
  write_file(dir / ("eval_" + stem + ".csv"),
             std::string(eval::kEvalCsvHeader) + "\n" + eval::csv_row(rep) + "\n");
  out << eval::to_json(rep).dump() << '\n';
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const auto ds = read_dataset(cfg, o);
  const Checkpoint ckpt = read_checkpoint(cfg, o);
  const auto res = run_sweep(cfg, ckpt, ds);
  const auto dir = out_dir(cfg);
  write_file(dir / "sweep.csv", sweep_csv(res));
  write_file(dir / "sweep_runs.csv", sweep_runs_csv(res));
  write_file(dir / "sweep_summary.csv", sweep_summary_csv(res));
  out << sweep_csv(res) << '\n' << sweep_summary_csv(res);
  return kExitOk;
}

int cmd_ablation(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const auto ds = read_dataset(cfg, o);
  const Checkpoint ckpt = read_checkpoint(cfg, o);
  const auto res = run_ablation(cfg, ckpt, ds);
  const auto dir = out_dir(cfg);
  write_file(dir / "ablation.csv", ablation_csv(res));
  write_file(dir / "ablation_runs.csv", ablation_runs_csv(res));
  out << ablation_csv(res);
  return kExitOk;
}

int cmd_gen_prompts(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  Rng rng(stream_seed(cfg.seed, Stream::kPrompts));
  const auto pairs = data::gen_prompt_pairs(cfg.prompts, cfg.prompt_count, rng);
  std::vector<data::PromptPair> train, test;
  for (const auto& p : pairs) (p.split == "train" ? train : test).push_back(p);
  const auto dir = out_dir(cfg);
  std::ostringstream a, b;
  data::write_prompt_jsonl(train, a);
  data::write_prompt_jsonl(test, b);
  write_file(dir / "prompts_train.jsonl", a.str());
  write_file(dir / "prompts_test.jsonl", b.str());
  out << "wrote " << train.size() << " train and " << test.size() << " test prompt pairs to "
      << dir.string() << '\n';
  return kExitOk;
}

int cmd_show_config(const Options& o, std::ostream& out) {
  out << to_json(resolve(o)).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Restricted-gradient unlearning for conditional diffusion models on a toy mixture"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "top-level seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--set", o.sets, "override a config field, e.g. unlearn.lambda=1");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "dataset JSONL (default <out>/data.jsonl)");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint (default <out>/pretrained.json)");
    sub->add_option("--forget-class", o.forget_class, "class to forget");
  };

  struct Command {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Command> commands;

  auto* gen_data = app.add_subcommand("gen-data", "write the mixture dataset");
  add_common(gen_data);
  commands.push_back({gen_data, [&] { return cmd_gen_data(o, out); }});

  auto* train = app.add_subcommand("train", "pretrain the conditional noise predictor");
  add_common(train);
  add_data(train);
  commands.push_back({train, [&] { return cmd_train(o, out); }});

  auto* unl = app.add_subcommand("unlearn", "unlearn the forget class from a checkpoint");
  add_common(unl);
  add_data(unl);
  add_checkpoint(unl);
  unl->add_option("--strategy", o.strategy, "restricted, graddiff, finetune or restricted+diverse");
  commands.push_back({unl, [&] { return cmd_unlearn(o, out, err); }});

  auto* ev = app.add_subcommand("eval", "UA, RA and MMD of a checkpoint");
  add_common(ev);
  add_checkpoint(ev);
  commands.push_back({ev, [&] { return cmd_eval(o, out); }});

  auto* sweep = app.add_subcommand("sweep", "lambda x alpha x strategy grid");
  add_common(sweep);
  add_data(sweep);
  add_checkpoint(sweep);
  commands.push_back({sweep, [&] { return cmd_sweep(o, out); }});

  auto* abl = app.add_subcommand("diversity-ablation", "nearest-class vs balanced remaining set");
  add_common(abl);
  add_data(abl);
  add_checkpoint(abl);
  commands.push_back({abl, [&] { return cmd_ablation(o, out); }});

  auto* prompts = app.add_subcommand("gen-prompts", "paired forget/remain prompts");
  add_common(prompts);
  commands.push_back({prompts, [&] { return cmd_gen_prompts(o, out); }});

  auto* show = app.add_subcommand("show-config", "print the effective configuration");
  add_common(show);
  commands.push_back({show, [&] { return cmd_show_config(o, out); }});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    for (auto& c : commands) {
      if (c.app->parsed()) return c.run();
    }
    err << "error: no command given\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace rgu::app
