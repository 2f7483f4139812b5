#include "maven/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

namespace maven {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<void(const YAML::Node&)> set;
  std::function<YAML::Node()> get;
};

// Shortest text that parses back to the same double.
YAML::Node num(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return YAML::Node(std::string(buf, res.ptr));
}

template <typename T>
YAML::Node scalar(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return num(v);
  } else {
    return YAML::Node(v);
  }
}

template <typename T>
Field bind_value(std::string section, std::string key, T& ref) {
  return {std::move(section), std::move(key), [&ref](const YAML::Node& n) { ref = n.as<T>(); },
          [&ref] { return scalar(ref); }};
}

Field bind_vec3(std::string section, std::string key, Vec3& ref) {
  return {std::move(section), std::move(key),
          [&ref](const YAML::Node& n) {
            if (!n.IsSequence() || n.size() != 3) throw YAML::Exception(n.Mark(), "expected [x, y, z]");
            for (int i = 0; i < 3; ++i) ref[i] = n[i].as<double>();
          },
          [&ref] {
            YAML::Node n;
            for (int i = 0; i < 3; ++i) n.push_back(num(ref[i]));
            n.SetStyle(YAML::EmitterStyle::Flow);
            return n;
          }};
}

Field bind_diag(std::string section, std::string key, Mat3& ref) {
  return {std::move(section), std::move(key),
          [&ref](const YAML::Node& n) {
            if (!n.IsSequence() || n.size() != 3) throw YAML::Exception(n.Mark(), "expected [Ixx, Iyy, Izz]");
            ref.setZero();
            for (int i = 0; i < 3; ++i) ref(i, i) = n[i].as<double>();
          },
          [&ref] {
            YAML::Node n;
            for (int i = 0; i < 3; ++i) n.push_back(num(ref(i, i)));
            n.SetStyle(YAML::EmitterStyle::Flow);
            return n;
          }};
}

template <typename T>
Field bind_list(std::string section, std::string key, std::vector<T>& ref) {
  return {std::move(section), std::move(key),
          [&ref](const YAML::Node& n) {
            if (!n.IsSequence()) throw YAML::Exception(n.Mark(), "expected a list");
            ref = n.as<std::vector<T>>();
          },
          [&ref] {
            YAML::Node n(YAML::NodeType::Sequence);
            for (const T& v : ref) n.push_back(scalar(v));
            n.SetStyle(YAML::EmitterStyle::Flow);
            return n;
          }};
}

std::vector<Field> fields(Config& c) {
  std::vector<Field> f;
  // quad
  f.push_back(bind_value("quad", "mass", c.quad.mass));
  f.push_back(bind_diag("quad", "inertia", c.quad.inertia));
  f.push_back(bind_value("quad", "arm_length", c.quad.arm_length));
  f.push_back(bind_value("quad", "drag_coeff", c.quad.drag_coeff));
  f.push_back(bind_value("quad", "max_rotor_thrust", c.quad.max_rotor_thrust));
  f.push_back(bind_vec3("quad", "gravity", c.quad.gravity));
  // autopilot
  f.push_back(bind_vec3("autopilot", "kp", c.pid.kp));
  f.push_back(bind_vec3("autopilot", "ki", c.pid.ki));
  f.push_back(bind_vec3("autopilot", "kd", c.pid.kd));
  f.push_back(bind_value("autopilot", "integrator_limit", c.pid.integrator_limit));
  // env
  f.push_back(bind_value("env", "dt", c.env.dt));
  f.push_back(bind_value("env", "max_episode_len", c.env.max_episode_len));
  f.push_back(bind_vec3("env", "waypoint_box_lo", c.env.waypoint_box.lo));
  f.push_back(bind_vec3("env", "waypoint_box_hi", c.env.waypoint_box.hi));
  f.push_back(bind_vec3("env", "flight_box_lo", c.env.flight_box.lo));
  f.push_back(bind_vec3("env", "flight_box_hi", c.env.flight_box.hi));
  f.push_back(bind_value("env", "accept_radius", c.env.accept_radius));
  f.push_back(bind_value("env", "obs_clip", c.env.obs_clip));
  f.push_back(bind_value("env", "nominal_mass", c.env.nominal_mass));
  f.push_back(bind_vec3("env", "k_p", c.env.norm.k_p));
  f.push_back(bind_vec3("env", "k_v", c.env.norm.k_v));
  f.push_back(bind_vec3("env", "omega_max", c.env.norm.omega_max));
  f.push_back(bind_value("env", "lambda_progress", c.env.reward.lambda_progress));
  f.push_back(bind_value("env", "lambda_smooth", c.env.reward.lambda_smooth));
  f.push_back(bind_value("env", "lambda_safety", c.env.reward.lambda_safety));
  f.push_back(bind_value("env", "collision_penalty", c.env.reward.collision_penalty));
  // tasks
  f.push_back(bind_value("tasks", "mass_min", c.tasks.mass_min));
  f.push_back(bind_value("tasks", "mass_max", c.tasks.mass_max));
  f.push_back(bind_value("tasks", "mass_task_count", c.tasks.mass_task_count));
  f.push_back(bind_list("tasks", "loss_levels", c.tasks.loss_levels));
  f.push_back(bind_value("tasks", "loss_min", c.tasks.loss_min));
  f.push_back(bind_value("tasks", "loss_max", c.tasks.loss_max));
  // encoder
  f.push_back(bind_value("encoder", "latent_dim", c.encoder.latent_dim));
  f.push_back(bind_list("encoder", "hidden", c.encoder.hidden));
  f.push_back(bind_value("encoder", "buffer_capacity", c.encoder.buffer_capacity));
  f.push_back(bind_value("encoder", "context_batch", c.encoder.context_batch));
  f.push_back(bind_value("encoder", "update_every", c.encoder.update_every));
  f.push_back(bind_value("encoder", "context_per_step", c.encoder.context_per_step));
  f.push_back(bind_value("encoder", "lr", c.encoder.lr));
  f.push_back(bind_value("encoder", "max_grad_norm", c.encoder.max_grad_norm));
  f.push_back(bind_value("encoder", "w_pos", c.encoder.w_pos));
  f.push_back(bind_value("encoder", "w_rew", c.encoder.w_rew));
  f.push_back(bind_value("encoder", "w_spec", c.encoder.w_spec));
  f.push_back(bind_value("encoder", "kl_weight_init", c.encoder.kl_weight_init));
  f.push_back(bind_value("encoder", "kl_alpha", c.encoder.kl_alpha));
  f.push_back(bind_value("encoder", "kl_beta", c.encoder.kl_beta));
  f.push_back(bind_value("encoder", "kl_target", c.encoder.kl_target));
  f.push_back(bind_value("encoder", "kl_weight_min", c.encoder.kl_weight_min));
  f.push_back(bind_value("encoder", "kl_weight_max", c.encoder.kl_weight_max));
  f.push_back(bind_value("encoder", "eps", c.encoder.eps));
  f.push_back(bind_value("encoder", "spec_min", c.encoder.spec_min));
  f.push_back(bind_value("encoder", "spec_max", c.encoder.spec_max));
  f.push_back(bind_value("encoder", "huber_delta", c.encoder.huber_delta));
  f.push_back(bind_value("encoder", "reward_input_scale", c.encoder.reward_input_scale));
  f.push_back(bind_value("encoder", "dynamics_head_seed", c.encoder.dynamics_head_seed));
  // ppo
  f.push_back(bind_value("ppo", "gamma", c.ppo.gamma));
  f.push_back(bind_value("ppo", "gae_lambda", c.ppo.gae_lambda));
  f.push_back(bind_value("ppo", "clip_eps", c.ppo.clip_eps));
  f.push_back(bind_value("ppo", "epochs", c.ppo.epochs));
  f.push_back(bind_value("ppo", "minibatches", c.ppo.minibatches));
  f.push_back(bind_value("ppo", "actor_lr", c.ppo.actor_lr));
  f.push_back(bind_value("ppo", "critic_lr", c.ppo.critic_lr));
  f.push_back(bind_value("ppo", "entropy_coef", c.ppo.entropy_coef));
  f.push_back(bind_value("ppo", "value_coef", c.ppo.value_coef));
  f.push_back(bind_value("ppo", "max_grad_norm", c.ppo.max_grad_norm));
  f.push_back(bind_value("ppo", "reward_scale", c.ppo.reward_scale));
  f.push_back(bind_value("ppo", "init_log_std", c.ppo.init_log_std));
  f.push_back(bind_list("ppo", "hidden", c.ppo.hidden));
  // train
  f.push_back(bind_value("train", "scenario", c.train.scenario));
  f.push_back(bind_value("train", "method", c.train.method));
  f.push_back(bind_list("train", "task_masses", c.train.task_masses));
  f.push_back(bind_value("train", "envs_per_task", c.train.envs_per_task));
  f.push_back(bind_value("train", "rollout_len", c.train.rollout_len));
  f.push_back(bind_value("train", "total_env_steps", c.train.total_env_steps));
  f.push_back(bind_value("train", "latent_resample_every", c.train.latent_resample_every));
  f.push_back(bind_value("train", "fixed_mass", c.train.fixed_mass));
  f.push_back(bind_value("train", "fixed_loss", c.train.fixed_loss));
  f.push_back(bind_value("train", "fixed_rotor", c.train.fixed_rotor));
  f.push_back(bind_value("train", "seed", c.train.seed));
  f.push_back(bind_value("train", "threads", c.train.threads));
  f.push_back(bind_value("train", "checkpoint_every", c.train.checkpoint_every));
  // eval
  f.push_back(bind_value("eval", "suite", c.eval.suite));
  f.push_back(bind_value("eval", "tasks", c.eval.tasks));
  f.push_back(bind_list("eval", "track_files", c.eval.track_files));
  f.push_back(bind_value("eval", "n_tracks", c.eval.n_tracks));
  f.push_back(bind_value("eval", "track_targets", c.eval.track_targets));
  f.push_back(bind_value("eval", "min_spacing", c.eval.min_spacing));
  f.push_back(bind_value("eval", "seed", c.eval.seed));
  f.push_back(bind_value("eval", "deterministic_latent", c.eval.deterministic_latent));
  f.push_back(bind_value("eval", "deterministic_action", c.eval.deterministic_action));
  f.push_back(bind_value("eval", "export_trajectories", c.eval.export_trajectories));
  f.push_back(bind_value("eval", "threads", c.eval.threads));
  return f;
}

std::string where(const std::string& origin, const YAML::Mark& mark) {
  return origin + ":" + std::to_string(mark.line + 1) + ": ";
}

void validate(const Config& c, const std::string& origin) {
  auto fail = [&](const std::string& msg) { throw ConfigError(origin + ": " + msg); };
  if (!c.quad.valid()) fail("quad parameters are not physical");
  if (c.env.dt <= 0.0) fail("env.dt must be positive");
  if (c.ppo.gamma < 0.0 || c.ppo.gamma >= 1.0) fail("ppo.gamma must lie in [0, 1)");
  if (c.ppo.clip_eps <= 0.0) fail("ppo.clip_eps must be positive");
  if (c.encoder.eps <= 0.0) fail("encoder.eps must be positive");
  if (c.encoder.spec_min >= c.encoder.spec_max) fail("encoder.spec_min must be below spec_max");
  if (c.encoder.w_pos < 0.0 || c.encoder.w_rew < 0.0 || c.encoder.w_spec < 0.0) fail("encoder weights must be >= 0");
  if (c.train.envs_per_task <= 0 || c.train.rollout_len <= 0) fail("train.envs_per_task and rollout_len must be positive");
  if (c.train.latent_resample_every <= 0) fail("train.latent_resample_every must be positive");
}

}  // namespace

std::vector<std::string> config_keys() {
  Config c;
  std::vector<std::string> out;
  for (const Field& f : fields(c)) out.push_back(f.section + "." + f.key);
  return out;
}

Config parse_config(const std::string& text, const std::string& origin) {
  Config cfg;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(where(origin, e.mark) + e.msg);
  }
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError(where(origin, root.Mark()) + "top level must be a mapping of sections");

  std::vector<Field> fs = fields(cfg);
  for (const auto& sec : root) {
    const std::string section = sec.first.as<std::string>();
    const bool known_section = std::any_of(fs.begin(), fs.end(), [&](const Field& f) { return f.section == section; });
    if (!known_section) throw ConfigError(where(origin, sec.first.Mark()) + "unknown section '" + section + "'");
    if (!sec.second.IsMap()) throw ConfigError(where(origin, sec.second.Mark()) + "section '" + section + "' must be a mapping");
    for (const auto& kv : sec.second) {
      const std::string key = kv.first.as<std::string>();
      auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == fs.end()) {
        throw ConfigError(where(origin, kv.first.Mark()) + "unknown key '" + section + "." + key + "'");
      }
      try {
        it->set(kv.second);
      } catch (const YAML::Exception& e) {
        throw ConfigError(where(origin, kv.second.Mark()) + "bad value for '" + section + "." + key + "'");
      }
    }
  }
  validate(cfg, origin);
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string dump_config(const Config& cfg) {
  Config copy = cfg;
  YAML::Emitter out;
  out << YAML::BeginMap;
  std::string current;
  for (const Field& f : fields(copy)) {
    if (f.section != current) {
      if (!current.empty()) out << YAML::EndMap;
      out << YAML::Key << f.section << YAML::Value << YAML::BeginMap;
      current = f.section;
    }
    out << YAML::Key << f.key << YAML::Value << f.get();
  }
  if (!current.empty()) out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void apply_override(Config& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("override '" + dotted_key + "' must be section.key");
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  std::vector<Field> fs = fields(cfg);
  auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.section == section && f.key == key; });
  if (it == fs.end()) throw ConfigError("unknown config key '" + dotted_key + "'");
  try {
    it->set(YAML::Load(value));
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value '" + value + "' for '" + dotted_key + "'");
  }
  validate(cfg, "--" + dotted_key);
}

}  // namespace maven
