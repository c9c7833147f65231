#include "fsl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <optional>

#include "fsl/checks.hpp"
#include "fsl/error.hpp"
#include "fsl/pipeline.hpp"

namespace fsl {

namespace {

namespace fs = std::filesystem;

struct StageFlags {
  std::string config;
  std::string data;
  std::string base;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> way, shot, query, episodes;
  std::optional<int> mar_input_size, batch_size, val_episodes;
  std::optional<double> lr;
  bool no_mar = false;
  bool frozen_metric = false;
};

void add_stage_flags(CLI::App* sub, StageFlags& f, bool needs_base) {
  sub->add_option("--config", f.config, "JSON config with TrainConfig field names");
  sub->add_option("--data", f.data, "dataset manifest")->required();
  if (needs_base) sub->add_option("--base", f.base, "checkpoint of the previous stage")->required();
  sub->add_option("--out", f.out, "output directory")->required();
  sub->add_option("--seed", f.seed);
  sub->add_option("--epochs", f.epochs);
  sub->add_option("--way", f.way);
  sub->add_option("--shot", f.shot);
  sub->add_option("--query", f.query);
  sub->add_option("--episodes", f.episodes, "training episodes per epoch");
  sub->add_option("--mar-input-size", f.mar_input_size);
  sub->add_option("--batch-size", f.batch_size);
  sub->add_option("--val-episodes", f.val_episodes);
  sub->add_option("--lr", f.lr);
  sub->add_flag("--no-mar", f.no_mar);
  sub->add_flag("--frozen-metric", f.frozen_metric);
}

TrainConfig resolve_config(const StageFlags& f, Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  if (!f.config.empty()) cfg = load_config_file(f.config, cfg);
  cfg.stage = stage;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.way) cfg.way = f.way;
  if (f.shot) cfg.shot = f.shot;
  if (f.query) cfg.query = f.query;
  if (f.episodes) cfg.episodes_per_epoch = *f.episodes;
  if (f.mar_input_size) cfg.mar_input_size = *f.mar_input_size;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.val_episodes) cfg.val_episodes = *f.val_episodes;
  if (f.lr) cfg.lr = *f.lr;
  if (f.no_mar) cfg.no_mar = true;
  if (f.frozen_metric) cfg.frozen_metric = true;
  cfg.validate();
  return cfg;
}

int run_stage(const StageFlags& f, Stage stage, std::ostream& out) {
  const TrainConfig cfg = resolve_config(f, stage);
  const DatasetIndex data = load_dataset(f.data);
  std::optional<Checkpoint> base;
  if (stage != Stage::kBackbone) base = load_checkpoint(f.base);

  fs::create_directories(f.out);
  const fs::path log_path = fs::path(f.out) / "run_log.jsonl";
  std::ofstream(log_path, std::ios::trunc).close();
  auto on_epoch = [&](const EpochRecord& r) {
    std::ofstream log(log_path, std::ios::app);
    log << r.to_json_line() << '\n';
    if (!log) throw IoError("cannot append to " + log_path.string());
    out << stage_name(r.stage) << " epoch " << r.epoch << " loss " << std::setprecision(6) << r.train_loss
        << " val_acc " << r.val_acc << " alpha " << r.alpha << " beta " << r.beta << std::endl;
  };

  StageResult result;
  switch (stage) {
    case Stage::kBackbone: result = train_backbone_stage(cfg, data, on_epoch); break;
    case Stage::kJoint: result = train_joint_stage(cfg, data, *base, on_epoch); break;
    case Stage::kFinetune: result = finetune_stage(cfg, data, *base, on_epoch); break;
  }
  const fs::path ckpt = fs::path(f.out) / "checkpoint.fsck";
  save_checkpoint(result.checkpoint, ckpt.string());
  out << "best epoch " << result.checkpoint.epoch << " val_acc " << result.checkpoint.val_metric << " -> "
      << ckpt.string() << '\n';
  return 0;
}

int run_inspect(const std::string& path, std::ostream& out) {
  const Checkpoint c = load_checkpoint(path);
  out << "stage " << stage_name(c.stage) << '\n'
      << "seed " << c.seed << '\n'
      << "epoch " << c.epoch << '\n'
      << std::setprecision(17) << "val_metric " << c.val_metric << '\n'
      << "alpha " << c.at("asm.alpha").values[0] << '\n'
      << "beta " << c.at("asm.beta").values[0] << '\n'
      << std::hex << "digest " << checkpoint_digest(c) << std::dec << '\n';
  Index total = 0;
  for (const ParamBlock& b : c.blocks) {
    out << "  " << b.name << ' ' << shape_string(b.shape) << '\n';
    if (b.name.starts_with("backbone.") || b.name.starts_with("mar.") || b.name.starts_with("head.")) {
      total += b.values.size();
    }
  }
  out << "parameters " << total << '\n';
  return 0;
}

int run_gradcheck(std::uint64_t seed, std::ostream& out) {
  const std::vector<OpCheck> checks = run_gradcheck_suite(seed);
  bool ok = true;
  out << std::left << std::setw(26) << "op" << std::setw(10) << "checked" << std::setw(14) << "max_rel_err"
      << "result\n";
  for (const OpCheck& c : checks) {
    Index checked = 0;
    for (const auto& e : c.report.entries) checked += e.checked;
    out << std::left << std::setw(26) << c.op << std::setw(10) << checked << std::setw(14) << std::scientific
        << std::setprecision(3) << c.report.max_rel_error() << std::defaultfloat
        << (c.report.passed() ? "PASS" : "FAIL") << '\n';
    ok = ok && c.report.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot learning with a learnable resizer and adaptive metric", "fsl"};
  app.require_subcommand(1);

  SyntheticOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "write the aliasing-pair synthetic dataset");
  gen_cmd->add_option("--out", gen_out)->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--classes", gen.num_classes);
  gen_cmd->add_option("--samples", gen.samples_per_class);
  gen_cmd->add_option("--size", gen.image_size);
  gen_cmd->add_option("--noise", gen.noise_sigma);

  StageFlags s1, s2, s3;
  auto* s1_cmd = app.add_subcommand("train-backbone", "stage 1: classification pretraining");
  add_stage_flags(s1_cmd, s1, false);
  auto* s2_cmd = app.add_subcommand("train-joint", "stage 2: joint training with the resizer");
  add_stage_flags(s2_cmd, s2, true);
  auto* s3_cmd = app.add_subcommand("finetune", "stage 3: episodic fine-tuning");
  add_stage_flags(s3_cmd, s3, true);

  std::string eval_ckpt, eval_data, eval_split = "test", eval_out = ".";
  EvalOptions eval;
  std::optional<double> eval_alpha, eval_beta;
  auto* eval_cmd = app.add_subcommand("eval", "episodic evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--way", eval.way);
  eval_cmd->add_option("--shot", eval.shot);
  eval_cmd->add_option("--query", eval.query);
  eval_cmd->add_option("--episodes", eval.episodes);
  eval_cmd->add_option("--seed", eval.seed);
  eval_cmd->add_option("--alpha", eval_alpha);
  eval_cmd->add_option("--beta", eval_beta);
  eval_cmd->add_option("--out", eval_out, "directory for eval_report.json");

  std::uint64_t gc_seed = 1;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc_cmd->add_option("--seed", gc_seed);

  std::string inspect_ckpt;
  auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint metadata");
  inspect_cmd->add_option("--checkpoint", inspect_ckpt)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      const fs::path manifest = generate_synthetic(gen_out, gen);
      out << "wrote " << manifest.string() << '\n';
      return 0;
    }
    if (*s1_cmd) return run_stage(s1, Stage::kBackbone, out);
    if (*s2_cmd) return run_stage(s2, Stage::kJoint, out);
    if (*s3_cmd) return run_stage(s3, Stage::kFinetune, out);
    if (*eval_cmd) {
      if (eval_alpha.has_value() != eval_beta.has_value()) {
        throw ArgumentError("--alpha and --beta must be given together");
      }
      eval.split = parse_split(eval_split);
      if (eval_alpha) eval.metric_override = std::make_pair(*eval_alpha, *eval_beta);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const DatasetIndex data = load_dataset(eval_data);
      const EvalResult r = evaluate(ckpt, data, eval);
      out << std::fixed << std::setprecision(2) << "acc=" << r.mean << " ci95=" << r.ci95
          << " episodes=" << r.episodes << '\n';
      nlohmann::ordered_json report;
      report["checkpoint"] = eval_ckpt;
      report["dataset"] = data.name();
      report["split"] = eval_split;
      report["way"] = eval.way;
      report["shot"] = eval.shot;
      report["query"] = eval.query;
      report["episodes"] = r.episodes;
      report["seed"] = eval.seed;
      report["alpha"] = eval_alpha ? *eval_alpha : ckpt.at("asm.alpha").values[0];
      report["beta"] = eval_beta ? *eval_beta : ckpt.at("asm.beta").values[0];
      report["acc"] = r.mean;
      report["ci95"] = r.ci95;
      report["episode_accuracy"] = r.episode_accuracy;
      fs::create_directories(eval_out);
      const fs::path report_path = fs::path(eval_out) / "eval_report.json";
      std::ofstream f(report_path, std::ios::trunc);
      f << report.dump(2) << '\n';
      if (!f) throw IoError("cannot write " + report_path.string());
      return 0;
    }
    if (*gc_cmd) return run_gradcheck(gc_seed, out);
    if (*inspect_cmd) return run_inspect(inspect_ckpt, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fsl
