// maven: train, evaluate and benchmark from the command line.
//
//   maven train --scenario mass --method maven --seed 7 --out runs/mass
//   maven eval --checkpoint maven=runs/mass/checkpoint.bin --suite random_tracks --n 100
//   maven bench-throughput --envs 64,1024,4096 --steps 1000
//   maven inspect-checkpoint runs/mass/checkpoint.bin
//
// Any config field can be set with --section.key value (or =value).

#include "maven/config.hpp"
#include "maven/eval.hpp"
#include "maven/parallel.hpp"
#include "maven/trainer.hpp"
#include "maven/version.hpp"

#include <algorithm>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace maven;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unparsed arguments are config overrides: --section.key value | --section.key=value.
std::vector<std::pair<std::string, std::string>> collect_overrides(const std::vector<std::string>& extras) {
  const std::vector<std::string> known = config_keys();
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("flag '" + arg + "' needs a value");
      value = extras[++i];
    }
    if (std::find(known.begin(), known.end(), key) == known.end()) throw UsageError("unknown flag '--" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct ManifestSeeds {
  std::string source;  // default | config | MAVEN_SEED | flag
  std::uint64_t value = 0;
};

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg, const ManifestSeeds& seed,
                    const std::map<std::string, std::string>& extra) {
  YAML::Emitter y;
  y << YAML::BeginMap;
  y << YAML::Key << "command" << YAML::Value << command;
  y << YAML::Key << "git_revision" << YAML::Value << git_revision();
  y << YAML::Key << "created" << YAML::Value << utc_now();
  y << YAML::Key << "seed" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "value" << YAML::Value << seed.value;
  y << YAML::Key << "source" << YAML::Value << seed.source;
  y << YAML::EndMap;
  for (const auto& [k, v] : extra) y << YAML::Key << k << YAML::Value << v;
  y << YAML::Key << "config" << YAML::Value << YAML::Load(dump_config(cfg));
  y << YAML::EndMap;
  write_text(dir / "manifest.yaml", std::string(y.c_str()) + "\n");
}

// Config file < MAVEN_SEED < --seed flag.
ManifestSeeds resolve_seed(std::uint64_t& field, bool from_file, const CLI::Option* flag, std::uint64_t flag_value) {
  ManifestSeeds s{from_file ? "config" : "default", field};
  if (const char* env = std::getenv("MAVEN_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw UsageError(std::string("MAVEN_SEED is not an integer: '") + env + "'");
    field = v;
    s = {"MAVEN_SEED", field};
  }
  if (flag != nullptr && flag->count() > 0) {
    field = flag_value;
    s = {"flag", field};
  }
  return s;
}

Config base_config(const std::string& path) {
  return path.empty() ? Config{} : load_config(path);
}

// train ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  std::string out = "runs/train";
  long steps = 0;
  unsigned threads = 0;
  CLI::Option* seed_opt = nullptr;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& extras) {
  Config cfg = base_config(a.config);
  for (const auto& [k, v] : collect_overrides(extras)) apply_override(cfg, k, v);
  if (!a.scenario.empty()) apply_override(cfg, "train.scenario", a.scenario);
  if (!a.method.empty()) apply_override(cfg, "train.method", a.method);
  if (a.steps > 0) cfg.train.total_env_steps = a.steps;
  if (a.threads > 0) cfg.train.threads = a.threads;
  const ManifestSeeds seed = resolve_seed(cfg.train.seed, !a.config.empty(), a.seed_opt, a.seed);
  // Re-validate after command-line edits.
  cfg = parse_config(dump_config(cfg), "command line");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.yaml", dump_config(cfg));
  write_manifest(dir, "train", cfg, seed, {{"method", cfg.train.method}, {"scenario", cfg.train.scenario}});

  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.jsonl").string());

  std::signal(SIGINT, on_sigint);
  MetaTrainer trainer(cfg);
  std::cerr << "training " << cfg.train.method << " on " << cfg.train.scenario << ": " << trainer.envs()
            << " envs, " << cfg.train.total_env_steps << " env steps, seed " << cfg.train.seed << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  trainer.train(&log, dir / "checkpoint.bin", [] { return g_stop.load(); });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << (g_stop.load() ? "interrupted" : "finished") << " after " << trainer.env_steps() << " env steps in "
            << secs << " s; checkpoint at " << (dir / "checkpoint.bin").string() << "\n";
  return g_stop.load() ? 130 : 0;
}

// eval ----------------------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::vector<std::string> checkpoints;
  std::string suite;
  std::string tasks;
  int n = 0;
  std::uint64_t seed = 0;
  std::string out = "runs/eval";
  bool deterministic_latent = false;
  bool stochastic_action = false;
  bool trajectories = false;
  unsigned threads = 0;
  CLI::Option* seed_opt = nullptr;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& extras) {
  Config cfg = base_config(a.config);
  for (const auto& [k, v] : collect_overrides(extras)) {
    if (k.rfind("eval.", 0) != 0) throw UsageError("eval only accepts eval.* overrides, got '--" + k + "'");
    apply_override(cfg, k, v);
  }
  EvalConfig& ev = cfg.eval;
  if (!a.suite.empty()) ev.suite = a.suite;
  if (!a.tasks.empty()) ev.tasks = a.tasks;
  if (a.n > 0) ev.n_tracks = a.n;
  if (a.deterministic_latent) ev.deterministic_latent = true;
  if (a.stochastic_action) ev.deterministic_action = false;
  if (a.trajectories) ev.export_trajectories = true;
  if (a.threads > 0) ev.threads = a.threads;
  const ManifestSeeds seed = resolve_seed(ev.seed, !a.config.empty(), a.seed_opt, a.seed);

  std::vector<std::string> names;
  std::vector<DeployedPolicy> policies;
  std::map<std::string, std::string> manifest_extra;
  for (const std::string& spec : a.checkpoints) {
    std::string name;
    std::string path = spec;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    policies.push_back(DeployedPolicy::load(path));
    if (name.empty()) name = to_string(policies.back().method());
    for (const std::string& other : names) {
      if (other == name) throw UsageError("duplicate method name '" + name + "'; use --checkpoint name=path");
    }
    names.push_back(name);
    char sum[24];
    std::snprintf(sum, sizeof(sum), "%016llx", static_cast<unsigned long long>(policies.back().checksum()));
    manifest_extra["checkpoint." + name] = path + " (" + sum + ")";
  }
  std::vector<NamedPolicy> methods;
  for (std::size_t i = 0; i < policies.size(); ++i) methods.push_back({names[i], &policies[i]});

  const Config& ref = policies.front().config();
  const std::vector<EvalTask> tasks = parse_eval_tasks(ev.tasks, ref.quad.mass);
  const std::vector<NamedTrack> tracks = benchmark_tracks(ev, ref.env);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.yaml", dump_config(cfg));
  write_manifest(dir, "eval", cfg, seed, manifest_extra);

  std::cerr << "evaluating " << methods.size() << " method(s) on " << tasks.size() << " task(s) x " << tracks.size()
            << " track(s)\n";
  const EvalReport report =
      run_benchmark(methods, tasks, tracks, ev, ev.export_trajectories ? dir / "trajectories" : fs::path{});
  {
    std::ofstream f(dir / "trials.csv");
    report.write_trials_csv(f);
  }
  {
    std::ofstream f(dir / "summary.csv");
    report.write_summary_csv(f);
  }
  report.write_summary_csv(std::cout);
  return 0;
}

// bench-throughput ----------------------------------------------------------------

struct BenchArgs {
  std::string config;
  std::vector<int> envs{64, 1024, 4096};
  int steps = 1000;
  unsigned threads = 0;
  std::string report;
};

int run_bench(const BenchArgs& a, const std::vector<std::string>& extras) {
  Config cfg = base_config(a.config);
  for (const auto& [k, v] : collect_overrides(extras)) apply_override(cfg, k, v);
  const unsigned threads = a.threads > 0 ? a.threads : hardware_threads();

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::cout << "envs,threads,env_steps,seconds,steps_per_sec\n";
  for (int n : a.envs) {
    if (n <= 0) throw UsageError("--envs entries must be positive");
    const ThroughputSample s = measure_throughput(cfg, n, a.steps, threads);
    std::cout << s.envs << ',' << s.threads << ',' << s.env_steps << ',' << s.seconds << ',' << s.steps_per_sec
              << std::endl;
    rows.push_back({{"envs", s.envs},
                    {"threads", s.threads},
                    {"env_steps", s.env_steps},
                    {"seconds", s.seconds},
                    {"steps_per_sec", s.steps_per_sec}});
  }
  // Ideal scaling from the smallest batch on one thread: T threads on a batch
  // 64x larger should deliver T times the single-thread rate.
  double efficiency = 0.0;
  nlohmann::ordered_json reference;
  if (a.envs.size() >= 2) {
    const int lo = *std::min_element(a.envs.begin(), a.envs.end());
    const int hi = *std::max_element(a.envs.begin(), a.envs.end());
    const ThroughputSample ref = measure_throughput(cfg, lo, a.steps, 1);
    double hi_sps = 0.0;
    for (const auto& r : rows) {
      if (r["envs"].get<int>() == hi) hi_sps = r["steps_per_sec"].get<double>();
    }
    efficiency = ref.steps_per_sec > 0.0 ? hi_sps / (threads * ref.steps_per_sec) : 0.0;
    reference = {{"envs", ref.envs}, {"threads", 1}, {"steps_per_sec", ref.steps_per_sec}};
    std::cout << "parallel_efficiency," << efficiency << std::endl;
  }
  if (!a.report.empty()) {
    nlohmann::ordered_json doc;
    doc["git_revision"] = git_revision();
    doc["hardware_threads"] = hardware_threads();
    doc["threads"] = threads;
    doc["steps"] = a.steps;
    doc["samples"] = rows;
    if (!reference.is_null()) {
      doc["single_thread_reference"] = reference;
      doc["parallel_efficiency"] = efficiency;
    }
    const fs::path report(a.report);
    if (report.has_parent_path()) fs::create_directories(report.parent_path());
    write_text(report, doc.dump(2) + "\n");
  }
  return 0;
}

// inspect-checkpoint ----------------------------------------------------------------

int run_inspect(const std::string& path, bool show_config) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  const DeployedPolicy policy = DeployedPolicy::from_checkpoint(ck);
  const Config& cfg = policy.config();
  std::size_t count = 0;
  for (const auto& t : ck.tensors) count += static_cast<std::size_t>(t.value.size());
  std::cout << "file: " << path << "\n"
            << "format version: " << nn::kCheckpointVersion << "\n"
            << "method: " << to_string(policy.method()) << "\n"
            << "scenario: " << cfg.train.scenario << "\n"
            << "seed: " << ck.seed << "\n"
            << "latent dim: " << policy.latent_dim() << "\n"
            << "tensors: " << ck.tensors.size() << " (" << count << " values)\n";
  char sum[24];
  std::snprintf(sum, sizeof(sum), "%016llx", static_cast<unsigned long long>(policy.checksum()));
  std::cout << "checksum: " << sum << "\n";
  if (const PredictiveEncoder* enc = policy.encoder()) {
    std::snprintf(sum, sizeof(sum), "%016llx", static_cast<unsigned long long>(enc->dynamics_head_checksum()));
    std::cout << "dynamics head checksum: " << sum << "\n";
  }
  for (const auto& t : ck.tensors) std::cout << "  " << t.name << " " << t.value.rows() << "x" << t.value.cols() << "\n";
  if (show_config) std::cout << "---\n" << ck.config_text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-RL quadrotor waypoint navigation"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", std::string(git_revision()));

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Meta-train a policy or a baseline");
  train->add_option("--config", ta.config, "YAML config file")->check(CLI::ExistingFile);
  train->add_option("--scenario", ta.scenario, "mass | thrust_loss");
  train->add_option("--method", ta.method, "maven | standard_rl | rl_dr | critic_encoder_ablation");
  ta.seed_opt = train->add_option("--seed", ta.seed, "Seed (overrides MAVEN_SEED and the config)");
  train->add_option("--out", ta.out, "Run directory")->capture_default_str();
  train->add_option("--steps", ta.steps, "Total env steps (train.total_env_steps)");
  train->add_option("--threads", ta.threads, "Worker threads (train.threads)");
  train->allow_extras();
  train->footer("Any config field: --section.key value");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate frozen checkpoints");
  eval->add_option("--checkpoint", ea.checkpoints, "[name=]path, repeatable")->required();
  eval->add_option("--config", ea.config, "YAML config file (eval section)")->check(CLI::ExistingFile);
  eval->add_option("--suite", ea.suite, "switchback | random_tracks | named");
  eval->add_option("--tasks", ea.tasks, "e.g. mass:0.25,0.5 or loss:0,0.15,0.3");
  eval->add_option("--n", ea.n, "Number of random tracks");
  ea.seed_opt = eval->add_option("--seed", ea.seed, "Track and trial seed");
  eval->add_option("--out", ea.out, "Run directory")->capture_default_str();
  eval->add_flag("--deterministic-latent", ea.deterministic_latent, "Use the posterior mean instead of a sample");
  eval->add_flag("--stochastic-action", ea.stochastic_action, "Sample actions instead of the policy mean");
  eval->add_flag("--trajectories", ea.trajectories, "Export one CSV per trial");
  eval->add_option("--threads", ea.threads, "Worker threads");
  eval->allow_extras();

  BenchArgs ba;
  CLI::App* bench = app.add_subcommand("bench-throughput", "Measure batch env steps per second");
  bench->add_option("--config", ba.config, "YAML config file")->check(CLI::ExistingFile);
  bench->add_option("--envs", ba.envs, "Batch sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--steps", ba.steps, "Steps per batch size")->capture_default_str();
  bench->add_option("--threads", ba.threads, "Worker threads (default: all cores)");
  bench->add_option("--report", ba.report, "Write a JSON report here");
  bench->allow_extras();

  std::string inspect_path;
  bool inspect_config = false;
  CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "Print checkpoint contents");
  inspect->add_option("path", inspect_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  inspect->add_flag("--config", inspect_config, "Also print the embedded config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(ta, train->remaining());
    if (eval->parsed()) return run_eval(ea, eval->remaining());
    if (bench->parsed()) return run_bench(ba, bench->remaining());
    if (inspect->parsed()) return run_inspect(inspect_path, inspect_config);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    for (CLI::App* sub : app.get_subcommands()) std::cerr << sub->help();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
