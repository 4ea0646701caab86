#include "advdrive/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "advdrive/checkpoint.hpp"
#include "advdrive/errors.hpp"
#include "advdrive/orchestrator.hpp"

namespace advdrive {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<std::string, std::string> FindVictimCheckpoints(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::map<std::string, std::string> found;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ckpt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const Checkpoint c = LoadCheckpoint(f.string());
    if (c.role == Role::kVictim) found[c.agent_id] = f.string();
  }
  if (found.empty()) throw IoError("no victim checkpoints in '" + dir + "'");
  return found;
}

namespace {

std::string Slash(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ProgressLine(std::ostream* progress, const std::string& msg) {
  if (progress) *progress << msg << std::endl;
}

RunContext MakeContext(const RunConfig& config, const std::string& out, std::ostream* stats,
                       std::ostream* progress) {
  RunContext ctx;
  ctx.config = config;
  ctx.out_dir = out;
  ctx.stats = stats;
  if (progress) ctx.progress = [progress](const std::string& m) { ProgressLine(progress, m); };
  return ctx;
}

EvaluationOptions EvalOptions(const RunConfig& config, const std::string& label) {
  EvaluationOptions o;
  o.episodes = config.phases.evaluation.episodes;
  o.max_steps = config.phases.evaluation.max_steps;
  o.greedy = config.phases.evaluation.greedy;
  o.seed = config.seed;
  o.workers = config.workers;
  o.label = label;
  o.raster = config.raster;
  o.reward = config.reward;
  return o;
}

// Writes report.json, report.txt and the requested plots under out/eval_<label>.
MetricsReport EvaluateAndWrite(const RunConfig& config,
                               const std::map<std::string, std::string>& victims,
                               const std::optional<std::string>& adversary,
                               const std::string& label, const std::string& out,
                               const std::vector<int>& plot_episodes) {
  const auto policies = LoadFrozenPolicies(victims, adversary, config.ppo);
  EvaluationOptions options = EvalOptions(config, label);
  options.keep_logs = plot_episodes;
  EvaluationResult result = Evaluate(policies, config.scenario, options);
  const std::string dir = Slash(out, "eval_" + label);
  fs::create_directories(dir);
  SaveReport(Slash(dir, "report.json"), result.report);
  WriteFileAtomic(Slash(dir, "report.txt"), Compare({result.report}).ToText());
  const MapGeometry map = BuildMap(config.scenario.map_kind, config.scenario.lane_width);
  for (const auto& [episode, log] : result.logs) {
    EmitTrajectoryPlot(log, map, Slash(dir, "trajectory_ep" + std::to_string(episode)));
  }
  json inputs = json::object();
  for (const auto& [id, path] : victims) inputs[id] = {{"path", path}, {"sha256", FileSha256(path)}};
  if (adversary) inputs["adversary"] = {{"path", *adversary}, {"sha256", FileSha256(*adversary)}};
  json manifest = {{"phase", ToString(Phase::kEvaluation)},
                   {"label", label},
                   {"code_version", kCodeVersion},
                   {"master_seed", config.seed},
                   {"checkpoints_in", inputs},
                   {"report_sha256", Sha256Hex(result.report.Serialize())},
                   {"config", config.ToJson()}};
  WriteFileAtomic(Slash(dir, "manifest.json"), manifest.dump(2) + "\n");
  return result.report;
}

}  // namespace

PipelineResult RunPipeline(const RunConfig& config, const std::string& out,
                           std::ostream* progress) {
  config.Validate();
  fs::create_directories(out);
  WriteFileAtomic(Slash(out, "config.json"), config.ToJson().dump(2) + "\n");
  std::ofstream stats(Slash(out, "training_stats.jsonl"));
  const RunContext ctx = MakeContext(config, out, &stats, progress);

  PipelineResult r;
  ProgressLine(progress, "phase: baseline");
  r.baseline = TrainBaseline(ctx);
  const std::vector<RewardKind> kinds = {RewardKind::kAdvCollision, RewardKind::kAdvOffroad};
  for (RewardKind kind : kinds) {
    const std::string tag = ToString(kind);
    ProgressLine(progress, "phase: adversary " + tag);
    r.adversaries[tag] = TrainAdversary(ctx, r.baseline, kind);
    ProgressLine(progress, "phase: retraining against " + tag);
    r.retrained[tag] = RetrainVictims(ctx, r.baseline, r.adversaries[tag]);
  }

  const std::vector<int> plot = {0};
  ProgressLine(progress, "evaluating baseline");
  r.reports.push_back(EvaluateAndWrite(config, r.baseline, std::nullopt, "baseline", out, plot));
  std::map<std::string, std::string> references;
  for (RewardKind kind : kinds) {
    const std::string tag = ToString(kind);
    const std::string suffix = tag.substr(tag.find('_') + 1);
    const std::string attack = "attack_" + suffix, retrained = "retrained_" + suffix;
    ProgressLine(progress, "evaluating " + attack);
    r.reports.push_back(
        EvaluateAndWrite(config, r.baseline, r.adversaries[tag], attack, out, plot));
    ProgressLine(progress, "evaluating " + retrained);
    r.reports.push_back(
        EvaluateAndWrite(config, r.retrained[tag], r.adversaries[tag], retrained, out, plot));
    references[attack] = "baseline";
    references[retrained] = attack;
  }
  r.table = Compare(r.reports, references);
  WriteFileAtomic(Slash(out, "comparison.txt"), r.table.ToText());
  WriteFileAtomic(Slash(out, "comparison.json"), r.table.ToJson().dump(2) + "\n");
  return r;
}

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> episodes;
  std::optional<int> steps;
  std::optional<std::string> reward;
  std::optional<std::string> obs_mode;
  std::optional<std::string> out;
};

void AddCommon(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--workers", f.workers, "concurrent evaluation worlds")->check(CLI::PositiveNumber);
  cmd->add_option("--episodes", f.episodes, "episode budget of this command")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--steps", f.steps, "per-episode step cap of this command")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--reward", f.reward, "adversary reward: adv_collision or adv_offroad")
      ->check(CLI::IsMember({"adv_collision", "adv_offroad"}));
  cmd->add_option("--obs-mode", f.obs_mode, "observation mode")
      ->check(CLI::IsMember({"full84", "lite21"}));
  cmd->add_option("--out", f.out, "output root (overrides ADVDRIVE_OUT)");
}

// flag > environment > config file > built-in default.
RunConfig ResolveConfig(const CommonFlags& f, const RunConfig& base, std::string& out_root) {
  RunConfig c = f.config.empty() ? base : LoadConfig(f.config, base);
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (f.obs_mode) c.raster.mode = ParseObsMode(*f.obs_mode);
  if (const char* env = std::getenv("ADVDRIVE_OUT"); env && *env) c.out = env;
  if (f.out) c.out = *f.out;
  c.Validate();
  out_root = c.out;
  fs::create_directories(out_root);
  return c;
}

std::string Quote(const std::string& s) {
  if (s.find_first_of(" \t'\"$\\") == std::string::npos && !s.empty()) return s;
  std::string q = "'";
  for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return q + "'";
}

// Records the effective config and a command that reruns this invocation.
void WriteRunManifest(const std::string& out, const std::string& command, const RunConfig& c,
                      const std::vector<std::string>& args, const json& outputs) {
  const std::string config_path = Slash(out, command + "_config.json");
  WriteFileAtomic(config_path, c.ToJson().dump(2) + "\n");
  std::string reproduce = "advdrive " + command + " --config " + Quote(config_path);
  for (const auto& a : args) reproduce += " " + Quote(a);
  json manifest = {{"command", command},
                   {"code_version", kCodeVersion},
                   {"master_seed", c.seed},
                   {"reproduce", reproduce},
                   {"config_sha256", FileSha256(config_path)},
                   {"outputs", outputs}};
  WriteFileAtomic(Slash(out, command + "_manifest.json"), manifest.dump(2) + "\n");
}

json Checksums(const std::map<std::string, std::string>& paths) {
  json j = json::object();
  for (const auto& [id, p] : paths) j[id] = {{"path", p}, {"sha256", FileSha256(p)}};
  return j;
}

}  // namespace

int Dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial multi-agent driving: train, attack, retrain and evaluate"};
  app.name("advdrive");
  app.require_subcommand(1, 1);

  CommonFlags f;
  std::string victims_dir, adversary_path, label = "eval";
  std::vector<std::string> report_paths, reference_pairs;
  std::vector<int> plot_episodes;
  bool greedy = false;
  int plot_episode = 0;

  auto* baseline = app.add_subcommand("train-baseline", "train victims with no adversary");
  AddCommon(baseline, f);

  auto* adversary = app.add_subcommand("train-adversary", "train an adversary against frozen victims");
  AddCommon(adversary, f);
  adversary->add_option("--victims", victims_dir, "directory with victim checkpoints")->required();

  auto* retrain = app.add_subcommand("retrain", "retrain victims against a frozen adversary");
  AddCommon(retrain, f);
  retrain->add_option("--victims", victims_dir, "directory with victim checkpoints")->required();
  retrain->add_option("--adversary", adversary_path, "adversary checkpoint")->required();

  auto* evaluate = app.add_subcommand("evaluate", "evaluate frozen policies");
  AddCommon(evaluate, f);
  evaluate->add_option("--victims", victims_dir, "directory with victim checkpoints")->required();
  evaluate->add_option("--adversary", adversary_path, "adversary checkpoint");
  evaluate->add_option("--label", label, "condition label");
  evaluate->add_flag("--greedy", greedy, "argmax actions instead of sampling");
  evaluate->add_option("--plot-episodes", plot_episodes, "episode indices to plot");

  auto* compare = app.add_subcommand("compare", "compare metrics reports");
  compare->add_option("reports", report_paths, "report.json files in condition order")->required();
  compare->add_option("--reference", reference_pairs, "label=reference_label");
  std::optional<std::string> compare_out;
  compare->add_option("--out", compare_out, "directory for comparison.txt and comparison.json");

  auto* plot = app.add_subcommand("plot", "plot one evaluation episode");
  AddCommon(plot, f);
  plot->add_option("--victims", victims_dir, "directory with victim checkpoints")->required();
  plot->add_option("--adversary", adversary_path, "adversary checkpoint");
  plot->add_option("--episode", plot_episode, "evaluation episode index")
      ->check(CLI::NonNegativeNumber);
  plot->add_option("--label", label, "condition label");

  auto* demo = app.add_subcommand("demo", "whole pipeline at desk scale");
  AddCommon(demo, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: usage: " << msg << "\n";
    return 2;
  }

  std::vector<std::string> args;
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config") {
      ++i;
      continue;
    }
    args.push_back(a);
  }

  try {
    std::string root;
    if (*compare) {
      std::vector<MetricsReport> reports;
      for (const auto& p : report_paths) reports.push_back(LoadReport(p));
      std::map<std::string, std::string> refs;
      for (const auto& pair : reference_pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) {
          err << "error: usage: --reference expects label=reference_label\n";
          return 2;
        }
        refs[pair.substr(0, eq)] = pair.substr(eq + 1);
      }
      const ComparisonTable table = Compare(reports, refs);
      out << table.ToText();
      if (compare_out) {
        fs::create_directories(*compare_out);
        WriteFileAtomic(Slash(*compare_out, "comparison.txt"), table.ToText());
        WriteFileAtomic(Slash(*compare_out, "comparison.json"), table.ToJson().dump(2) + "\n");
      }
      return 0;
    }

    if (*demo) {
      RunConfig c = ResolveConfig(f, DemoConfig(), root);
      if (f.episodes) c.phases.evaluation.episodes = *f.episodes;
      if (f.steps) c.phases.evaluation.max_steps = *f.steps;
      c.Validate();
      const PipelineResult r = RunPipeline(c, root, &err);
      json outputs = {{"baseline", Checksums(r.baseline)},
                      {"adversaries", Checksums(r.adversaries)},
                      {"comparison", Slash(root, "comparison.txt")}};
      for (const auto& [kind, paths] : r.retrained) outputs["retrained_" + kind] = Checksums(paths);
      WriteRunManifest(root, "demo", c, args, outputs);
      out << r.table.ToText();
      return 0;
    }

    RunConfig c = ResolveConfig(f, RunConfig{}, root);
    std::ofstream stats;
    auto open_stats = [&] {
      stats.open(Slash(root, "training_stats.jsonl"), std::ios::app);
      return &stats;
    };

    if (*baseline) {
      if (f.episodes) c.phases.baseline.episodes = *f.episodes;
      if (f.steps) c.phases.baseline.max_steps = *f.steps;
      c.Validate();
      const auto ckpts = TrainBaseline(MakeContext(c, root, open_stats(), &err));
      WriteRunManifest(root, "train-baseline", c, args, Checksums(ckpts));
      for (const auto& [id, p] : ckpts) out << id << " " << p << "\n";
    } else if (*adversary) {
      if (f.episodes) c.phases.adversary.episodes = *f.episodes;
      if (f.steps) c.phases.adversary.max_steps = *f.steps;
      c.Validate();
      const RewardKind kind = ParseRewardKind(f.reward.value_or("adv_offroad"));
      const std::string ckpt = TrainAdversary(MakeContext(c, root, open_stats(), &err),
                                              FindVictimCheckpoints(victims_dir), kind);
      WriteRunManifest(root, "train-adversary", c, args, Checksums({{ToString(kind), ckpt}}));
      out << ToString(kind) << " " << ckpt << "\n";
    } else if (*retrain) {
      if (f.episodes) c.phases.retraining.episodes = *f.episodes;
      if (f.steps) c.phases.retraining.max_steps = *f.steps;
      c.Validate();
      const auto ckpts = RetrainVictims(MakeContext(c, root, open_stats(), &err),
                                        FindVictimCheckpoints(victims_dir), adversary_path);
      WriteRunManifest(root, "retrain", c, args, Checksums(ckpts));
      for (const auto& [id, p] : ckpts) out << id << " " << p << "\n";
    } else if (*evaluate || *plot) {
      if (*plot) {
        c.phases.evaluation.episodes = plot_episode + 1;
        plot_episodes = {plot_episode};
      } else if (f.episodes) {
        c.phases.evaluation.episodes = *f.episodes;
      }
      if (f.steps) c.phases.evaluation.max_steps = *f.steps;
      if (greedy) c.phases.evaluation.greedy = true;
      c.Validate();
      std::optional<std::string> adv;
      if (!adversary_path.empty()) adv = adversary_path;
      const MetricsReport report = EvaluateAndWrite(c, FindVictimCheckpoints(victims_dir), adv,
                                                    label, root, plot_episodes);
      WriteRunManifest(root, *plot ? "plot" : "evaluate", c, args,
                       {{"report", Slash(Slash(root, "eval_" + label), "report.json")}});
      out << Compare({report}).ToText();
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: io_error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace advdrive
