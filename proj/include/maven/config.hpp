// Run configuration: one YAML document with a section per module, plus
// dotted command-line overrides ("--ppo.clip_eps 0.1").
#pragma once

#include "maven/autopilot.hpp"
#include "maven/dynamics.hpp"
#include "maven/env.hpp"
#include "maven/inference.hpp"
#include "maven/ppo.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace maven {

struct TrainConfig {
  std::string scenario = "mass";  // mass | thrust_loss
  std::string method = "maven";  // maven | standard_rl | rl_dr | critic_encoder_ablation
  std::vector<double> task_masses;  // explicit mass tasks; empty = sample
  int envs_per_task = 64;
  int rollout_len = 128;
  long total_env_steps = 20'000'000;
  int latent_resample_every = 32;  // K
  double fixed_mass = 0.33;  // standard_rl task
  double fixed_loss = 0.0;
  int fixed_rotor = 0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int checkpoint_every = 50;  // iterations; 0 disables periodic checkpoints
};

struct EvalConfig {
  std::string suite = "random_tracks";  // switchback | random_tracks | named
  std::string tasks = "mass:0.25,0.375,0.5";
  std::vector<std::string> track_files;  // for the named suite
  int n_tracks = 100;
  int track_targets = 4;  // waypoints after the start
  double min_spacing = 2.0;
  std::uint64_t seed = 0;
  bool deterministic_latent = false;
  bool deterministic_action = true;
  bool export_trajectories = false;
  unsigned threads = 1;
};

struct Config {
  QuadrotorParams quad;
  PidGains pid;
  EnvConfig env;
  TaskDistributionConfig tasks;
  EncoderConfig encoder;
  PpoConfig ppo;
  TrainConfig train;
  EvalConfig eval;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a YAML document. Unknown sections or keys and malformed values
/// raise ConfigError as "<origin>:<line>: <message>".
Config parse_config(const std::string& text, const std::string& origin = "<config>");
Config load_config(const std::filesystem::path& path);

/// Emits every field, so the output round-trips through parse_config.
std::string dump_config(const Config& cfg);

/// Applies "section.key" = value, where value is YAML scalar or flow syntax.
void apply_override(Config& cfg, const std::string& dotted_key, const std::string& value);

/// All recognised "section.key" names.
std::vector<std::string> config_keys();

}  // namespace maven
