// Command-line entry points: train, eval, gen-terrain, gradcheck.
//
// Exit codes: 0 ok, 2 configuration/parse/layout problems, 3 numerical
// failures (including a failed gradient check), 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stairwalk/eval.hpp"
#include "stairwalk/nnet/gradcheck.hpp"
#include "stairwalk/run_config.hpp"
#include "stairwalk/terrain.hpp"
#include "stairwalk/trainer.hpp"

using namespace stairwalk;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot write '" + out + "'");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  int workers = 0;
  bool fresh = false;
  int max_iterations = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig c = load_run_config(a.config);
  apply_environment_overrides(c);
  if (a.workers > 0) c.ppo.workers = a.workers;
  if (a.fresh) {
    fs::remove(fs::path(c.out_dir) / "checkpoint.swc");
    fs::remove(fs::path(c.out_dir) / "metrics.jsonl");
  }
  train::Trainer t(c);
  if (t.resume())
    std::cerr << "resuming " << c.out_dir << " at iteration " << t.iteration() << " (" << t.steps() << " steps)\n";
  t.run(
      [&](const train::IterationMetrics& m) {
        if (a.quiet) return;
        std::fprintf(stderr, "iter %4d  steps %9lld  return %8.3f  length %6.1f  kl %.4f  epochs %d%s\n", m.iteration,
                     m.steps, m.mean_return, m.mean_length, m.kl, m.epochs, m.kl_abort ? "  (kl stop)" : "");
      },
      a.max_iterations);
  std::cerr << "checkpoint: " << t.checkpoint_path() << "\nmetrics: " << t.metrics_path() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string variant;  // empty: from checkpoint metadata
  bool success = false;
  std::string speed_grid = "default";
  bool descend = false;
  int trials = 150;
  bool cot = false;
  std::string log;
  bool grf = false;
  bool swing = false;
  std::string event = "";
  double speed = 1.0;
  double seconds = 12.0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string record;
  std::string out;
};

std::vector<double> parse_grid(const std::string& s) {
  if (s == "default") return eval::default_speed_grid();
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--speed-grid: '" + item + "' is not a number");
    }
  }
  if (v.empty()) throw ConfigError("--speed-grid: empty list");
  return v;
}

env::Variant checkpoint_variant(const std::string& path) {
  const nnet::Checkpoint c = nnet::load_checkpoint(path);
  try {
    return env::variant_from_string(nlohmann::json::parse(c.meta).at("variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path + "' has unreadable metadata: " + e.what());
  }
}

std::shared_ptr<const terrain::TerrainProfile> event_terrain(const std::string& event, double x_edge) {
  if (event == "step-up") return std::make_shared<const terrain::TerrainProfile>(terrain::make_ledge(x_edge, 0.10));
  if (event == "step-down") return std::make_shared<const terrain::TerrainProfile>(terrain::make_ledge(x_edge, -0.10));
  if (event == "flat") return std::make_shared<const terrain::TerrainProfile>(terrain::make_incline(0.0));
  throw ConfigError("--event: expected step-up, flat or step-down, got '" + event + "'");
}

int cmd_eval(const EvalArgs& a) {
  const int modes = int(a.success) + int(a.cot) + int(a.grf) + int(a.swing);
  if (modes != 1) throw ConfigError("eval: choose exactly one of --success, --cot, --grf, --swing");
  if (a.cot && !a.log.empty()) {
    const auto log = env::TrajectoryLog::read_jsonl(a.log);
    const auto r = eval::cost_of_transport(log);
    emit(eval::cot_csv({{a.log, r}}), a.out);
    return kExitOk;
  }
  if (a.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");

  env::EpisodeConfig base;
  base.variant = a.variant.empty() ? checkpoint_variant(a.checkpoint) : env::variant_from_string(a.variant);
  base.dynamics.enabled = false;
  const auto loaded = train::load_policy(a.checkpoint, base.layout());
  const auto model = sim::BipedModel::default_model();

  if (a.success) {
    eval::TrialSpec spec;
    spec.descend = a.descend;
    spec.speeds = parse_grid(a.speed_grid);
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.workers = a.workers;
    emit(eval::success_csv(eval::success_sweep(loaded.policy, base, model, spec)), a.out);
    return kExitOk;
  }

  const int horizon = static_cast<int>(a.seconds * base.dynamics.nominal_rate_hz);
  const double edge = 2.0;
  std::string event = a.event;
  if (event.empty()) event = a.swing ? "step-down" : "flat";
  const auto ground = event_terrain(a.cot ? "flat" : event, edge);
  const env::TrajectoryLog log = eval::record_episode(loaded.policy, base, model, ground, a.speed, horizon, a.seed);
  if (!a.record.empty()) log.write_jsonl(a.record);

  if (a.cot) {
    const auto r = eval::cost_of_transport(log);
    emit(eval::cot_csv({{a.checkpoint, r}}), a.out);
  } else if (a.grf) {
    auto j = eval::grf_analysis(log, edge).to_json();
    j["event"] = event;
    emit(j.dump(2) + "\n", a.out);
  } else {
    auto j = eval::swing_metrics(log, edge).to_json();
    j["event"] = event;
    emit(j.dump(2) + "\n", a.out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-terrain

int cmd_gen_terrain(const std::string& config, std::uint64_t seed, const std::string& out) {
  terrain::StairGenConfig c;
  if (!config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(config));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("terrain config '" + config + "' is not valid JSON: " + e.what());
    }
    c = j.get<terrain::StairGenConfig>();
  }
  emit(terrain::export_profile(terrain::generate(c, seed)), out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const std::string& arch, std::uint64_t seed, int inputs, double tolerance) {
  std::vector<nnet::Arch> archs;
  if (arch == "both") archs = {nnet::Arch::lstm, nnet::Arch::feedforward};
  else archs = {nnet::arch_from_string(arch)};
  bool ok = true;
  for (const auto a : archs) {
    nnet::NetSpec spec = train::policy_spec(a, env::ObsLayout{false});
    nnet::GradcheckOptions opt;
    opt.inputs = inputs;
    const auto r = nnet::gradcheck(spec, seed, opt);
    const bool pass = r.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("%-12s checked %4d  max_rel_error %.3e  worst %s  %s\n", nnet::to_string(a).c_str(), r.checked,
                r.max_rel_error, r.worst.c_str(), pass ? "ok" : "FAIL");
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind stair-walking biped: training, evaluation and tooling"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a policy from a run config (resumes when a checkpoint exists)");
  train_cmd->add_option("--config", ta.config, "Run config JSON")->required();
  train_cmd->add_option("--workers", ta.workers, "Rollout worker threads (overrides config and STAIRWALK_WORKERS)");
  train_cmd->add_flag("--fresh", ta.fresh, "Discard an existing checkpoint and metrics in the run directory");
  train_cmd->add_option("--max-iterations", ta.max_iterations, "Stop after this many iterations");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-iteration progress lines");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint written by train");
  eval_cmd->add_option("--variant", ea.variant, "Observation variant (default: from the checkpoint)");
  eval_cmd->add_flag("--success", ea.success, "Stair success sweep, CSV");
  eval_cmd->add_option("--speed-grid", ea.speed_grid, "'default' or comma-separated speeds in m/s");
  eval_cmd->add_flag("--descend", ea.descend, "Descend instead of ascend");
  eval_cmd->add_option("--trials", ea.trials, "Trials per speed");
  eval_cmd->add_flag("--cot", ea.cot, "Cost of transport on flat ground, CSV");
  eval_cmd->add_option("--log", ea.log, "With --cot: compute from an existing trajectory log instead");
  eval_cmd->add_flag("--grf", ea.grf, "Ground reaction forces around a terrain event, JSON");
  eval_cmd->add_flag("--swing", ea.swing, "Swing-foot path and leg retraction around a terrain event, JSON");
  eval_cmd->add_option("--event", ea.event, "step-up, flat or step-down (10 cm ledge at x = 2 m)");
  eval_cmd->add_option("--speed", ea.speed, "Commanded forward speed for --cot/--grf/--swing");
  eval_cmd->add_option("--seconds", ea.seconds, "Episode length for --cot/--grf/--swing");
  eval_cmd->add_option("--seed", ea.seed, "Base seed");
  eval_cmd->add_option("--workers", ea.workers, "Trial worker threads");
  eval_cmd->add_option("--record", ea.record, "Also write the trajectory log (JSONL)");
  eval_cmd->add_option("--out", ea.out, "Output file (default stdout)");

  std::string terrain_config, terrain_out;
  std::uint64_t terrain_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-terrain", "Generate and export one randomized terrain profile");
  gen_cmd->add_option("--config", terrain_config, "Terrain generator config JSON (default ranges if omitted)");
  gen_cmd->add_option("--seed", terrain_seed, "Seed");
  gen_cmd->add_option("--out", terrain_out, "Output file (default stdout)");

  std::string gc_arch = "both";
  std::uint64_t gc_seed = 0;
  int gc_inputs = 10;
  double gc_tol = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare network gradients with finite differences");
  grad_cmd->add_option("--arch", gc_arch, "lstm, feedforward or both");
  grad_cmd->add_option("--seed", gc_seed, "Seed");
  grad_cmd->add_option("--inputs", gc_inputs, "Random input sequences");
  grad_cmd->add_option("--tolerance", gc_tol, "Maximum allowed relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*gen_cmd) return cmd_gen_terrain(terrain_config, terrain_seed, terrain_out);
    if (*grad_cmd) return cmd_gradcheck(gc_arch, gc_seed, gc_inputs, gc_tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LayoutMismatch& e) {
    std::cerr << "layout mismatch: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
