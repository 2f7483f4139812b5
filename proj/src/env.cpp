#include "maven/env.hpp"

#include "maven/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace maven {

const char* to_string(TerminationStatus status) {
  switch (status) {
    case TerminationStatus::running: return "running";
    case TerminationStatus::collision: return "collision";
    case TerminationStatus::success: return "success";
    case TerminationStatus::timeout: return "timeout";
  }
  return "unknown";
}

double nominal_hover_throttle(const EnvConfig& cfg, const QuadrotorParams& base) {
  return cfg.nominal_mass * -base.gravity.z() / (4.0 * base.max_rotor_thrust);
}

QuadrotorParams task_params(const QuadrotorParams& base, const TaskSpec& task) {
  QuadrotorParams p = base;
  p.mass = task.mass;
  return p;
}

Observation build_observation(const EnvState& env, const NormalizationConfig& norm, double obs_clip) {
  Observation o;
  o.segment<3>(kObsVel) = env.quad.v.cwiseQuotient(norm.k_v);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) o[kObsRot + 3 * r + c] = env.quad.R(r, c);
  }
  for (int k = 0; k < kObservedWaypoints; ++k) {
    const Vec3 dp = env.track.upcoming(k) - env.quad.p;
    o.segment<3>(kObsWaypoints + 3 * k) = dp.cwiseQuotient(norm.k_p);
  }
  o.segment<kActDim>(kObsPrevAction) = env.a_prev.a;
  return o.cwiseMax(-obs_clip).cwiseMin(obs_clip);
}

RateCommand denormalize_action(const ActionVec& a, const NormalizationConfig& norm) {
  RateCommand cmd;
  cmd.throttle = a.throttle();
  cmd.omega_cmd = a.rates().cwiseProduct(norm.omega_max);
  return cmd;
}

RewardTerms compute_reward(const EnvState& prev_env, const EnvState& env, const ActionVec& a,
                           const RewardConfig& cfg, bool collision) {
  // Explicit left-to-right sums keep the result independent of how Eigen
  // vectorizes its reductions.
  const Vec3& target = prev_env.track.upcoming(0);
  const Vec3 d0 = target - prev_env.quad.p;
  const Vec3 d1 = target - env.quad.p;
  const double before = d0[0] * d0[0] + d0[1] * d0[1] + d0[2] * d0[2];
  const double after = d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2];
  const Vec4 da = prev_env.a_prev.a - a.a;

  RewardTerms terms;
  terms.progress = before - after;
  terms.smooth = -std::sqrt(da[0] * da[0] + da[1] * da[1] + da[2] * da[2] + da[3] * da[3]);
  terms.safety = collision ? -cfg.collision_penalty : 0.0;
  terms.total = cfg.lambda_progress * terms.progress + cfg.lambda_smooth * terms.smooth +
                cfg.lambda_safety * terms.safety;
  return terms;
}

WaypointUpdate update_waypoints(Track track, const Vec3& p, Rng& rng, TrackMode mode,
                                const Box& sample_box) {
  WaypointUpdate out{std::move(track), false};
  Track& tr = out.track;
  if (tr.finished()) return out;
  if ((tr.waypoints[tr.cursor] - p).norm() < tr.accept_radius) {
    out.passed = true;
    ++tr.cursor;
    if (mode == TrackMode::training) tr.waypoints.push_back(sample_box.sample(rng));
  }
  return out;
}

TerminationStatus check_termination(const EnvState& env, const Box& flight_box, TrackMode mode,
                                    int max_episode_len) {
  if (!env.quad.finite() || !flight_box.contains(env.quad.p)) return TerminationStatus::collision;
  if (mode == TrackMode::evaluation && env.track.finished()) return TerminationStatus::success;
  if (env.t >= max_episode_len) return TerminationStatus::timeout;
  return TerminationStatus::running;
}

EnvStepResult env_step(const EnvState& env, const ActionVec& a, const EnvConfig& cfg,
                       const QuadrotorParams& base, Rng& rng, TrackMode mode) {
  EnvStepResult out;
  const QuadrotorParams params = task_params(base, env.task);
  const ActionVec action = a.clamped();

  const RateCommand cmd = denormalize_action(action, cfg.norm);
  const AutopilotOutput ap = autopilot_step(cmd, env.quad, env.pid, env.task.fault, params, cfg.dt);
  const Wrench wrench = mix_rotor_thrusts(ap.thrusts, params);
  const DynamicsStep dyn = step_dynamics(env.quad, wrench, params, cfg.dt);

  EnvState next = env;
  next.quad = dyn.state;
  next.pid = ap.pid;
  next.t = env.t + 1;
  const bool collision = !dyn.finite || !cfg.flight_box.contains(next.quad.p);

  out.terms = compute_reward(env, next, action, cfg.reward, collision);
  out.reward = out.terms.total;

  if (!collision) {
    WaypointUpdate wu = update_waypoints(std::move(next.track), next.quad.p, rng, mode, cfg.waypoint_box);
    next.track = std::move(wu.track);
    out.passed = wu.passed;
  }
  next.a_prev = action;

  out.status = collision ? TerminationStatus::collision
                         : check_termination(next, cfg.flight_box, mode, cfg.max_episode_len);
  if (collision && !dyn.finite) {
    // Keep the observation finite; the episode ends here anyway.
    next.quad = env.quad;
  }
  out.obs = build_observation(next, cfg.norm, cfg.obs_clip);
  out.thrusts = ap.thrusts;
  out.next = std::move(next);
  return out;
}

EnvState reset_training(const TaskSpec& task, const EnvConfig& cfg, const QuadrotorParams& base,
                        const PidGains& gains, Rng& rng) {
  EnvState env;
  env.task = task;
  env.quad = QuadrotorState{};
  env.quad.p = cfg.waypoint_box.sample(rng);
  env.track.accept_radius = cfg.accept_radius;
  env.track.waypoints.reserve(16);
  for (int k = 0; k < kObservedWaypoints; ++k) env.track.waypoints.push_back(cfg.waypoint_box.sample(rng));
  env.pid.gains = gains;
  env.a_prev = ActionVec::hover(nominal_hover_throttle(cfg, base));
  return env;
}

EnvState reset_on_track(const NamedTrack& track, const TaskSpec& task, const EnvConfig& cfg,
                        const QuadrotorParams& base, const PidGains& gains) {
  if (track.waypoints.size() < 2) throw std::invalid_argument("track needs a start and a target");
  EnvState env;
  env.task = task;
  env.quad.p = track.waypoints.front();
  env.track.waypoints = track.waypoints;
  env.track.cursor = 1;
  env.track.accept_radius = track.accept_radius;
  env.pid.gains = gains;
  env.a_prev = ActionVec::hover(nominal_hover_throttle(cfg, base));
  return env;
}

std::vector<TaskSpec> sample_tasks(const std::string& scenario, const TaskDistributionConfig& cfg,
                                   double nominal_mass, Rng& rng) {
  std::vector<TaskSpec> tasks;
  if (scenario == "mass") {
    for (int i = 0; i < cfg.mass_task_count; ++i) {
      tasks.push_back({rng.uniform(cfg.mass_min, cfg.mass_max), FaultSpec{}, i});
    }
  } else if (scenario == "thrust_loss") {
    int id = 0;
    for (int rotor = 0; rotor < 4; ++rotor) {
      for (double loss : cfg.loss_levels) {
        tasks.push_back({nominal_mass, FaultSpec::single(rotor, loss), id++});
      }
    }
  } else {
    throw std::invalid_argument("unknown scenario '" + scenario + "'");
  }
  return tasks;
}

TaskSpec sample_random_task(const std::string& scenario, const TaskDistributionConfig& cfg,
                            double nominal_mass, Rng& rng) {
  if (scenario == "mass") return {rng.uniform(cfg.mass_min, cfg.mass_max), FaultSpec{}, -1};
  if (scenario == "thrust_loss") {
    const int rotor = static_cast<int>(rng.index(4));
    return {nominal_mass, FaultSpec::single(rotor, rng.uniform(cfg.loss_min, cfg.loss_max)), -1};
  }
  throw std::invalid_argument("unknown scenario '" + scenario + "'");
}

BatchEnv::BatchEnv(std::vector<TaskSpec> tasks, const EnvConfig& cfg, const QuadrotorParams& base,
                   const PidGains& gains, std::uint64_t seed, TaskResampler resampler)
    : cfg_(cfg), base_(base), gains_(gains), resampler_(std::move(resampler)), tasks_(std::move(tasks)) {
  const std::size_t n = tasks_.size();
  states_.resize(n);
  obs_.resize(n);
  rngs_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rngs_.emplace_back(seed, i);
  out_.obs.resize(static_cast<Eigen::Index>(n), kObsDim);
  out_.final_obs.resize(static_cast<Eigen::Index>(n), kObsDim);
  out_.reward.assign(n, 0.0);
  out_.status.assign(n, TerminationStatus::running);
  out_.terms.assign(n, RewardTerms{});
  out_.passed.assign(n, 0);
  out_.episode_length.assign(n, 0);
  reset_all();
}

void BatchEnv::reset_env(std::size_t i) {
  if (resampler_) tasks_[i] = resampler_(i, rngs_[i]);
  states_[i] = reset_training(tasks_[i], cfg_, base_, gains_, rngs_[i]);
  obs_[i] = build_observation(states_[i], cfg_.norm, cfg_.obs_clip);
}

void BatchEnv::reset_all() {
  for (std::size_t i = 0; i < states_.size(); ++i) reset_env(i);
}

const BatchStep& BatchEnv::step(std::span<const ActionVec> actions) {
  if (actions.size() != states_.size()) throw std::invalid_argument("BatchEnv::step: action count mismatch");
  parallel_for(states_.size(), threads_, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      EnvStepResult r = env_step(states_[i], actions[i], cfg_, base_, rngs_[i], TrackMode::training);
      const auto row = static_cast<Eigen::Index>(i);
      out_.final_obs.row(row) = r.obs.transpose();
      out_.reward[i] = r.reward;
      out_.status[i] = r.status;
      out_.terms[i] = r.terms;
      out_.passed[i] = r.passed ? 1 : 0;
      out_.episode_length[i] = 0;
      states_[i] = std::move(r.next);
      obs_[i] = r.obs;
      if (r.status != TerminationStatus::running) {
        out_.episode_length[i] = states_[i].t;
        reset_env(i);
      }
      out_.obs.row(row) = obs_[i].transpose();
    }
  });
  return out_;
}

}  // namespace maven
