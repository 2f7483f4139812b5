#include "maven/eval.hpp"

#include "maven/parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace maven {

using nn::Tensor;

namespace {

void restore(const nn::Checkpoint& ckpt, const std::vector<nn::Parameter*>& params) {
  for (nn::Parameter* p : params) {
    const nn::NamedTensor* t = ckpt.find(p->name);
    if (t == nullptr) throw std::runtime_error("checkpoint is missing tensor '" + p->name + "'");
    if (t->value.rows() != p->value.rows() || t->value.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint tensor '" + p->name + "' has shape " + std::to_string(t->value.rows()) +
                               "x" + std::to_string(t->value.cols()) + ", expected " +
                               std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    p->value = t->value;
    p->zero_grad();
  }
}

std::string format9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

// Plain left-to-right arithmetic so metrics are reproducible from the CSV.
double norm3(double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); }

}  // namespace

double quantize(double x) { return std::strtod(format9(x).c_str(), nullptr); }

// DeployedPolicy -------------------------------------------------------------------

DeployedPolicy DeployedPolicy::from_checkpoint(const nn::Checkpoint& ckpt) {
  DeployedPolicy out;
  out.cfg_ = parse_config(ckpt.config_text, "checkpoint config");
  out.method_ = method_from_string(out.cfg_.train.method);
  Rng scratch(0, 0);
  out.ac_ = ActorCritic(out.cfg_.encoder.latent_dim, out.cfg_.ppo, nominal_hover_throttle(out.cfg_.env, out.cfg_.quad),
                        scratch);
  std::vector<nn::Parameter*> params = out.ac_.actor_parameters();
  for (nn::Parameter* p : out.ac_.critic_parameters()) params.push_back(p);
  restore(ckpt, params);
  if (uses_encoder(out.method_)) {
    out.encoder_.emplace(out.cfg_.encoder, out.cfg_.env.norm, scratch);
    std::vector<nn::Parameter*> enc = out.encoder_->trainable_parameters();
    for (nn::Parameter* p : out.encoder_->dynamics_head().parameters()) enc.push_back(p);
    restore(ckpt, enc);
  }
  return out;
}

DeployedPolicy DeployedPolicy::load(const std::filesystem::path& path) {
  return from_checkpoint(nn::load_checkpoint(path));
}

std::uint64_t DeployedPolicy::checksum() const {
  std::vector<const nn::Parameter*> params = ac_.all_parameters();
  if (encoder_) {
    for (const nn::Parameter* p : encoder_->all_parameters()) params.push_back(p);
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const nn::Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    h = nn::fnv1a({bytes, static_cast<std::size_t>(p->value.size()) * sizeof(double)}, h);
  }
  return h;
}

// OnlineContext ------------------------------------------------------------------

OnlineContext::OnlineContext(const PredictiveEncoder* encoder, std::size_t capacity)
    : encoder_(encoder), capacity_(capacity) {
  const int d = encoder_ ? encoder_->latent_dim() : 0;
  mu_.resize(static_cast<Eigen::Index>(capacity_), d);
  var_.resize(static_cast<Eigen::Index>(capacity_), d);
}

void OnlineContext::clear() {
  size_ = 0;
  head_ = 0;
}

void OnlineContext::push(const Transition& t) {
  if (encoder_ == nullptr || capacity_ == 0) return;
  const PredictiveEncoder::Factors f = encoder_->encode_factors(std::span<const Transition>(&t, 1));
  const auto row = static_cast<Eigen::Index>(head_);
  mu_.row(row) = f.mu.row(0);
  var_.row(row) = f.var.row(0);
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

LatentPosterior OnlineContext::posterior() const {
  const int d = static_cast<int>(mu_.cols());
  if (size_ == 0) return LatentPosterior::prior(d);
  const auto n = static_cast<Eigen::Index>(size_);
  return aggregate_posterior(mu_.topRows(n), var_.topRows(n));
}

// Episodes -----------------------------------------------------------------------

Trajectory meta_test_episode(const DeployedPolicy& policy, const TaskSpec& task, const NamedTrack& track,
                             const EpisodeOptions& opts, Rng& rng) {
  const Config& cfg = policy.config();
  const PredictiveEncoder* enc = policy.encoder();
  const int d = policy.latent_dim();
  const int exported_d = enc ? d : 0;

  EnvState env = reset_on_track(track, task, cfg.env, cfg.quad, cfg.pid);
  Observation obs = build_observation(env, cfg.env.norm, cfg.env.obs_clip);
  OnlineContext context(enc, cfg.encoder.buffer_capacity);
  Rng env_rng(rng.next_u64(), 0);

  Trajectory traj;
  traj.latent_dim = exported_d;
  traj.waypoint_count = env.track.waypoints.size();

  auto record = [&](const EnvState& s, const ActionVec& a, const LatentPosterior* post) {
    TrajectoryRow row;
    row.t = quantize(s.t * cfg.env.dt);
    for (int i = 0; i < 3; ++i) {
      row.p[i] = quantize(s.quad.p[i]);
      row.v[i] = quantize(s.quad.v[i]);
      row.w[i] = quantize(s.quad.w[i]);
    }
    row.throttle = quantize(a.throttle());
    const Vec3 wc = a.rates().cwiseProduct(cfg.env.norm.omega_max);
    for (int i = 0; i < 3; ++i) row.wc[i] = quantize(wc[i]);
    if (post != nullptr) {
      row.z_mu = post->mu.unaryExpr([](double x) { return quantize(x); });
      row.z_var = post->var.unaryExpr([](double x) { return quantize(x); });
    }
    row.waypoint_index = static_cast<int>(s.track.cursor);
    traj.rows.push_back(std::move(row));
  };

  const LatentPosterior prior = LatentPosterior::prior(d);
  record(env, env.a_prev, enc ? &prior : nullptr);

  const Tensor std_dev = policy.policy().head().clamped_log_std().array().exp();
  Tensor input(1, kObsDim + d);
  for (int step = 0;; ++step) {
    LatentPosterior post = enc ? context.posterior() : prior;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    if (enc) z = opts.deterministic_latent ? post.mu : sample_latent(post, rng);
    if (opts.on_latent) opts.on_latent(step, post, z);

    input.block(0, 0, 1, kObsDim) = obs.transpose();
    input.block(0, kObsDim, 1, d) = z.transpose();
    Tensor draw = policy.policy().mean(input);
    if (!opts.deterministic_action) {
      for (int j = 0; j < kActDim; ++j) draw(0, j) += std_dev(0, j) * rng.normal();
    }
    const ActionVec action = to_env_action(draw.row(0));

    EnvStepResult res = env_step(env, action, cfg.env, cfg.quad, env_rng, TrackMode::evaluation);
    if (enc) context.push({obs, action.a, res.reward, res.obs});
    record(res.next, action, enc ? &post : nullptr);
    obs = res.obs;
    env = std::move(res.next);
    if (res.status != TerminationStatus::running) {
      traj.status = res.status;
      break;
    }
  }
  return traj;
}

EpisodeMetrics compute_metrics(const Trajectory& traj) {
  EpisodeMetrics m;
  if (traj.rows.empty()) return m;
  const auto& rows = traj.rows;
  m.steps = static_cast<int>(rows.size()) - 1;
  m.success = static_cast<std::size_t>(rows.back().waypoint_index) >= traj.waypoint_count;
  m.time = rows.back().t;
  double path = 0.0;
  int high = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Vec3& v = rows[k].v;
    m.max_velocity = std::max(m.max_velocity, norm3(v[0], v[1], v[2]));
    if (k == 0) continue;
    const Vec3& p = rows[k].p;
    const Vec3& q = rows[k - 1].p;
    path += norm3(p[0] - q[0], p[1] - q[1], p[2] - q[2]);
    if (rows[k].throttle > 0.8) ++high;
  }
  m.avg_velocity = m.time > 0.0 ? path / m.time : 0.0;
  m.throttle_high_pct = m.steps > 0 ? 100.0 * high / m.steps : 0.0;
  return m;
}

void export_trajectory(const Trajectory& traj, std::ostream& out) {
  out << "t,px,py,pz,vx,vy,vz,wx,wy,wz,throttle,wcx,wcy,wcz";
  for (int i = 1; i <= traj.latent_dim; ++i) out << ",z_mu_" << i;
  for (int i = 1; i <= traj.latent_dim; ++i) out << ",z_var_" << i;
  out << ",waypoint_index\n";
  for (const TrajectoryRow& r : traj.rows) {
    out << format9(r.t);
    for (const Vec3* v : {&r.p, &r.v, &r.w}) {
      for (int i = 0; i < 3; ++i) out << ',' << format9((*v)[i]);
    }
    out << ',' << format9(r.throttle);
    for (int i = 0; i < 3; ++i) out << ',' << format9(r.wc[i]);
    for (int i = 0; i < traj.latent_dim; ++i) out << ',' << format9(r.z_mu[i]);
    for (int i = 0; i < traj.latent_dim; ++i) out << ',' << format9(r.z_var[i]);
    out << ',' << r.waypoint_index << '\n';
  }
}

void export_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  export_trajectory(traj, out);
}

// Benchmark ----------------------------------------------------------------------

std::vector<EvalTask> parse_eval_tasks(const std::string& spec, double nominal_mass) {
  std::vector<EvalTask> out;
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.empty()) continue;
    const auto colon = group.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("task group '" + group + "' lacks a ':'");
    const std::string kind = group.substr(0, colon);
    std::stringstream values(group.substr(colon + 1));
    std::string item;
    while (std::getline(values, item, ',')) {
      double x = 0.0;
      try {
        std::size_t used = 0;
        x = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw std::invalid_argument("bad number '" + item + "' in task group '" + group + "'");
      }
      EvalTask t;
      t.task.id = static_cast<int>(out.size());
      if (kind == "mass") {
        t.task.mass = x;
        t.label = "mass=" + format9(x);
      } else if (kind == "loss" || kind.rfind("loss@", 0) == 0) {
        t.task.mass = nominal_mass;
        int rotor = 0;
        if (kind == "loss") {
          t.cycle_rotor = true;
        } else {
          rotor = std::stoi(kind.substr(5));
          if (rotor < 0 || rotor > 3) throw std::invalid_argument("rotor index out of range in '" + kind + "'");
        }
        if (x > 0.0) t.task.fault = FaultSpec::single(rotor, x);
        t.label = "loss=" + format9(x) + (t.cycle_rotor ? "" : "@" + std::to_string(rotor));
      } else {
        throw std::invalid_argument("unknown task kind '" + kind + "'");
      }
      out.push_back(t);
    }
  }
  if (out.empty()) throw std::invalid_argument("no evaluation tasks in '" + spec + "'");
  return out;
}

std::vector<NamedTrack> benchmark_tracks(const EvalConfig& eval, const EnvConfig& env) {
  std::vector<NamedTrack> out;
  if (eval.suite == "switchback") {
    out.push_back(switchback_track());
  } else if (eval.suite == "random_tracks") {
    Rng rng(eval.seed, 0x7261636b);
    for (int i = 0; i < eval.n_tracks; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "random_%03d", i);
      NamedTrack t = random_track(env.waypoint_box, static_cast<std::size_t>(eval.track_targets) + 1,
                                  eval.min_spacing, rng, name);
      t.accept_radius = env.accept_radius;
      out.push_back(std::move(t));
    }
  } else if (eval.suite == "named") {
    for (const std::string& f : eval.track_files) {
      NamedTrack t;
      if (builtin_track(f, t)) {
        out.push_back(std::move(t));
      } else {
        out.push_back(load_track(f));
      }
    }
    if (out.empty()) throw std::invalid_argument("named suite needs eval.track_files");
  } else {
    throw std::invalid_argument("unknown suite '" + eval.suite + "'");
  }
  return out;
}

std::vector<MethodSummary> EvalReport::summary() const {
  std::vector<MethodSummary> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<double> time_sum;
  std::vector<int> successes;
  for (const TrialResult& r : trials) {
    const auto key = std::make_pair(r.method, r.task_label);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.method, r.task_label, 0, 0.0, 0.0});
      time_sum.push_back(0.0);
      successes.push_back(0);
    }
    MethodSummary& s = out[it->second];
    ++s.trials;
    if (r.metrics.success) {
      ++successes[it->second];
      time_sum[it->second] += r.metrics.time;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].success_rate = out[i].trials > 0 ? 100.0 * successes[i] / out[i].trials : 0.0;
    out[i].mean_time = successes[i] > 0 ? time_sum[i] / successes[i] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double EvalReport::success_rate(const std::string& method, const std::string& task_label) const {
  for (const MethodSummary& s : summary()) {
    if (s.method == method && s.task_label == task_label) return s.success_rate;
  }
  throw std::invalid_argument("no trials for " + method + " / " + task_label);
}

void EvalReport::write_trials_csv(std::ostream& out) const {
  out << "method,task,track,mass,fault_rotor,fault_loss,status,success,time_s,avg_velocity,max_velocity,"
         "throttle_high_pct,steps,waypoints_passed\n";
  for (const TrialResult& r : trials) {
    int rotor = -1;
    double loss = 0.0;
    for (int i = 0; i < 4; ++i) {
      if (r.task.fault.loss_factor[i] > 0.0) {
        rotor = i;
        loss = r.task.fault.loss_factor[i];
      }
    }
    out << r.method << ',' << r.task_label << ',' << r.track << ',' << format9(r.task.mass) << ',' << rotor << ','
        << format9(loss) << ',' << to_string(r.status) << ',' << (r.metrics.success ? 1 : 0) << ','
        << (r.metrics.success ? format9(r.metrics.time) : std::string()) << ',' << format9(r.metrics.avg_velocity)
        << ',' << format9(r.metrics.max_velocity) << ',' << format9(r.metrics.throttle_high_pct) << ','
        << r.metrics.steps << ',' << r.waypoints_passed << '\n';
  }
}

void EvalReport::write_summary_csv(std::ostream& out) const {
  out << "method,task,trials,success_rate,mean_time_s\n";
  for (const MethodSummary& s : summary()) {
    out << s.method << ',' << s.task_label << ',' << s.trials << ',' << format9(s.success_rate) << ','
        << (std::isnan(s.mean_time) ? std::string() : format9(s.mean_time)) << '\n';
  }
}

EvalReport run_benchmark(std::span<const NamedPolicy> methods, std::span<const EvalTask> tasks,
                         std::span<const NamedTrack> tracks, const EvalConfig& eval,
                         const std::filesystem::path& trajectory_dir) {
  for (const NamedPolicy& m : methods) {
    if (m.policy == nullptr) throw std::invalid_argument("missing checkpoint for method '" + m.name + "'");
  }
  const std::size_t per_method = tasks.size() * tracks.size();
  EvalReport report;
  report.trials.resize(methods.size() * per_method);
  if (!trajectory_dir.empty()) std::filesystem::create_directories(trajectory_dir);

  parallel_for(report.trials.size(), eval.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t mi = i / per_method;
      const std::size_t ti = (i % per_method) / tracks.size();
      const std::size_t ki = i % tracks.size();
      const EvalTask& et = tasks[ti];
      TaskSpec task = et.task;
      if (et.cycle_rotor && task.fault.any()) {
        const double loss = task.fault.loss_factor.maxCoeff();
        task.fault = FaultSpec::single(static_cast<int>(ki % 4), loss);
      }
      // The trial stream depends on (task, track) only, so methods face identical noise.
      Rng rng(eval.seed, 0x10000 + ti * tracks.size() + ki);
      EpisodeOptions opts;
      opts.deterministic_latent = eval.deterministic_latent;
      opts.deterministic_action = eval.deterministic_action;
      const Trajectory traj = meta_test_episode(*methods[mi].policy, task, tracks[ki], opts, rng);

      TrialResult& r = report.trials[i];
      r.method = methods[mi].name;
      r.task_label = et.label;
      r.track = tracks[ki].name;
      r.task = task;
      r.metrics = compute_metrics(traj);
      r.status = traj.status;
      r.waypoints_passed = traj.rows.back().waypoint_index - 1;
      if (!trajectory_dir.empty()) {
        export_trajectory(traj, trajectory_dir / (r.method + "_" + std::to_string(ti) + "_" + r.track + ".csv"));
      }
    }
  });
  return report;
}

ThroughputSample measure_throughput(const Config& cfg, int envs, int steps, unsigned threads) {
  Rng rng(cfg.train.seed, 0x62656e63);
  std::vector<TaskSpec> tasks;
  for (int i = 0; i < envs; ++i) tasks.push_back({rng.uniform(cfg.tasks.mass_min, cfg.tasks.mass_max), FaultSpec{}, 0});
  BatchEnv env(tasks, cfg.env, cfg.quad, cfg.pid, cfg.train.seed);
  env.set_threads(threads);

  const double hover = nominal_hover_throttle(cfg.env, cfg.quad);
  constexpr int kPatterns = 16;
  std::vector<std::vector<ActionVec>> actions(kPatterns, std::vector<ActionVec>(static_cast<std::size_t>(envs)));
  for (auto& pattern : actions) {
    for (ActionVec& a : pattern) {
      a = ActionVec::hover(hover + 0.02 * rng.normal());
      for (int j = 1; j < kActDim; ++j) a.a[j] = 0.02 * rng.normal();
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) env.step(actions[static_cast<std::size_t>(s % kPatterns)]);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ThroughputSample out;
  out.envs = envs;
  out.threads = threads;
  out.env_steps = static_cast<long>(envs) * steps;
  out.seconds = secs;
  out.steps_per_sec = secs > 0.0 ? static_cast<double>(out.env_steps) / secs : 0.0;
  return out;
}

}  // namespace maven
