#include "maven/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace maven {

using nn::Graph;
using nn::Tensor;
using nn::Var;

Method method_from_string(const std::string& name) {
  if (name == "maven") return Method::maven;
  if (name == "standard_rl") return Method::standard_rl;
  if (name == "rl_dr") return Method::rl_dr;
  if (name == "critic_encoder_ablation") return Method::critic_encoder_ablation;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::maven: return "maven";
    case Method::standard_rl: return "standard_rl";
    case Method::rl_dr: return "rl_dr";
    case Method::critic_encoder_ablation: return "critic_encoder_ablation";
  }
  return "unknown";
}

bool uses_encoder(Method m) { return m == Method::maven || m == Method::critic_encoder_ablation; }

std::string IterationLog::to_json() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["env_steps"] = env_steps;
  j["mean_reward"] = mean_reward;
  j["episodes"] = episodes;
  j["mean_episode_return"] = mean_episode_return;
  j["mean_episode_length"] = mean_episode_length;
  j["collision_rate"] = collision_rate;
  j["waypoints_passed"] = waypoints_passed;
  j["pass_rate"] = pass_rate;
  j["policy_loss"] = ppo.policy_loss;
  j["value_loss"] = ppo.value_loss;
  j["entropy"] = ppo.entropy;
  j["approx_kl"] = ppo.approx_kl;
  j["clip_fraction"] = ppo.clip_fraction;
  if (encoder_updates > 0) {
    j["encoder_updates"] = encoder_updates;
    j["encoder_total"] = encoder.total;
    j["encoder_kl"] = encoder.kl;
    j["encoder_pos"] = encoder.pos;
    j["encoder_rew"] = encoder.rew;
    j["encoder_spec"] = encoder.spec;
    j["kl_weight"] = encoder.kl_weight;
  }
  if (!task_kl.empty()) j["task_kl"] = task_kl;
  if (dynamics_checksum != 0) j["f_dyn_checksum"] = dynamics_checksum;
  return j.dump();
}

std::vector<TaskSpec> training_tasks(const Config& cfg, Method method, Rng& rng) {
  std::vector<TaskSpec> scenario_tasks;
  if (cfg.train.scenario == "mass" && !cfg.train.task_masses.empty()) {
    int id = 0;
    for (double m : cfg.train.task_masses) scenario_tasks.push_back({m, FaultSpec{}, id++});
  } else {
    scenario_tasks = sample_tasks(cfg.train.scenario, cfg.tasks, cfg.env.nominal_mass, rng);
  }
  if (uses_encoder(method)) return scenario_tasks;

  // Baselines keep the same number of task groups so every method steps the
  // same number of environments.
  std::vector<TaskSpec> out;
  for (std::size_t i = 0; i < scenario_tasks.size(); ++i) {
    TaskSpec t{cfg.train.fixed_mass, FaultSpec{}, static_cast<int>(i)};
    if (cfg.train.fixed_loss > 0.0) t.fault = FaultSpec::single(cfg.train.fixed_rotor, cfg.train.fixed_loss);
    out.push_back(t);
  }
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

MetaTrainer::MetaTrainer(const Config& cfg)
    : cfg_(cfg),
      method_(method_from_string(cfg.train.method)),
      action_rng_(cfg.train.seed, 2),
      context_rng_(cfg.train.seed, 3),
      latent_rng_(cfg.train.seed, 4),
      noise_rng_(cfg.train.seed, 5),
      ppo_rng_(cfg.train.seed, 6) {
  Rng task_rng(cfg.train.seed, 0);
  Rng init_rng(cfg.train.seed, 1);
  tasks_ = training_tasks(cfg, method_, task_rng);
  envs_per_task_ = cfg.train.envs_per_task;

  std::vector<TaskSpec> env_tasks;
  for (const TaskSpec& t : tasks_) {
    for (int k = 0; k < envs_per_task_; ++k) env_tasks.push_back(t);
  }
  BatchEnv::TaskResampler resampler;
  if (method_ == Method::rl_dr) {
    const std::string scenario = cfg.train.scenario;
    const TaskDistributionConfig dist = cfg.tasks;
    const double nominal = cfg.env.nominal_mass;
    const int per_task = envs_per_task_;
    resampler = [scenario, dist, nominal, per_task](std::size_t i, Rng& rng) {
      TaskSpec t = sample_random_task(scenario, dist, nominal, rng);
      t.id = static_cast<int>(i) / per_task;
      return t;
    };
  }
  env_ = std::make_unique<BatchEnv>(env_tasks, cfg.env, cfg.quad, cfg.pid, mix_seed(cfg.train.seed, 7), resampler);
  env_->set_threads(cfg.train.threads);

  const int d = cfg.encoder.latent_dim;
  if (uses_encoder(method_)) {
    encoder_ = std::make_unique<PredictiveEncoder>(cfg.encoder, cfg.env.norm, init_rng);
    for (const TaskSpec& t : tasks_) buffers_.emplace_back(cfg.encoder.buffer_capacity, t.id);
    task_kl_.assign(tasks_.size(), 0.0);
  }
  ac_ = ActorCritic(d, cfg.ppo, nominal_hover_throttle(cfg.env, cfg.quad), init_rng);
  ppo_ = std::make_unique<PpoTrainer>(ac_, cfg.ppo);
  z_ = Tensor::Zero(envs(), d);
  episode_return_.assign(static_cast<std::size_t>(envs()), 0.0);
}

std::vector<TaskContext> MetaTrainer::sample_contexts() {
  std::vector<TaskContext> out(buffers_.size());
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    out[i].transitions = buffers_[i].sample(cfg_.encoder.context_batch, context_rng_);
  }
  return out;
}

void MetaTrainer::resample_latents() {
  if (!encoder_) return;
  const std::vector<TaskContext> contexts = sample_contexts();
  for (std::size_t task = 0; task < tasks_.size(); ++task) {
    const LatentPosterior post = encoder_->infer(contexts[task].transitions);
    task_kl_[task] = kl_to_prior(post);
    for (int k = 0; k < envs_per_task_; ++k) {
      const auto e = static_cast<Eigen::Index>(task * envs_per_task_ + k);
      z_.row(e) = sample_latent(post, latent_rng_).transpose();
    }
  }
}

EncoderLossTerms MetaTrainer::encoder_update() {
  const std::vector<TaskContext> contexts = sample_contexts();
  return encoder_->update(contexts, noise_rng_);
}

std::pair<Var, Var> MetaTrainer::critic_encoder_hook(Graph& g, std::span<const std::size_t> rows) {
  const int d = cfg_.encoder.latent_dim;
  const auto n_tasks = static_cast<Eigen::Index>(tasks_.size());
  const std::vector<TaskContext> contexts = sample_contexts();

  std::vector<Var> task_z(tasks_.size());
  std::vector<Var> kls;
  for (std::size_t task = 0; task < tasks_.size(); ++task) {
    if (contexts[task].transitions.empty()) {
      task_z[task] = g.constant(Tensor::Zero(1, d));
      continue;
    }
    const PosteriorVars post = encoder_->posterior(g, contexts[task].transitions);
    Tensor xi(1, d);
    for (int k = 0; k < d; ++k) xi(0, k) = noise_rng_.normal();
    task_z[task] = post.mu + sqrt(post.var) * g.constant(std::move(xi));
    kls.push_back(kl_to_prior(post.mu, post.var));
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  Tensor select = Tensor::Zero(m, n_tasks);
  Tensor obs(m, kObsDim);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    const int e = static_cast<int>(i % static_cast<std::size_t>(batch_.envs));
    select(r, batch_.task_of_env[static_cast<std::size_t>(e)]) = 1.0;
    obs.row(r) = batch_.obs.row(static_cast<Eigen::Index>(i));
  }
  const Var z_rows = matmul(g.constant(std::move(select)), nn::stack_rows(task_z));
  const Var input = nn::concat_cols({g.constant(std::move(obs)), z_rows});
  if (kls.empty()) return {input, Var{}};
  const Var kl = scale(sum(nn::concat_cols(kls)), 1.0 / static_cast<double>(kls.size()));
  encoder_->adapt_kl_weight(kl.item());
  return {input, scale(kl, encoder_->kl_weight())};
}

IterationLog MetaTrainer::run_iteration() {
  const int steps = cfg_.train.rollout_len;
  const int n = envs();
  const int d = cfg_.encoder.latent_dim;
  const double scale_r = cfg_.ppo.reward_scale;
  const double gamma = cfg_.ppo.gamma;

  batch_.allocate(steps, n, d);
  batch_.task_of_env.resize(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) batch_.task_of_env[static_cast<std::size_t>(e)] = e / envs_per_task_;
  encoder_update_steps_.clear();

  IterationLog log;
  double reward_sum = 0.0, return_sum = 0.0, length_sum = 0.0;
  long collisions = 0;
  EncoderLossTerms enc_sum;

  Tensor obs(n, kObsDim);
  std::vector<ActionVec> actions(static_cast<std::size_t>(n));
  const Tensor std_dev = ac_.head().clamped_log_std().array().exp();

  for (int t = 0; t < steps; ++t) {
    if (t % cfg_.train.latent_resample_every == 0) resample_latents();

    for (int e = 0; e < n; ++e) obs.row(e) = env_->observation(static_cast<std::size_t>(e)).transpose();
    const Tensor input = ActorCritic::join(obs, z_);
    const Tensor mu = ac_.mean(input);
    const Tensor values = ac_.value(input);
    Tensor draw = mu;
    for (Eigen::Index e = 0; e < n; ++e) {
      for (int j = 0; j < kActDim; ++j) draw(e, j) += std_dev(0, j) * action_rng_.normal();
    }
    const Tensor logp = nn::gaussian_log_prob(mu, ac_.head().clamped_log_std(), draw);
    for (int e = 0; e < n; ++e) actions[static_cast<std::size_t>(e)] = to_env_action(draw.row(e));

    const BatchStep& step = env_->step(actions);

    std::vector<int> truncated;
    for (int e = 0; e < n; ++e) {
      const std::size_t i = batch_.index(t, e);
      const auto row = static_cast<Eigen::Index>(i);
      const auto ue = static_cast<std::size_t>(e);
      batch_.obs.row(row) = obs.row(e);
      batch_.z.row(row) = z_.row(e);
      batch_.draw.row(row) = draw.row(e);
      batch_.logp[i] = logp(e, 0);
      batch_.value[i] = values(e, 0);
      batch_.reward[i] = scale_r * step.reward[ue];
      batch_.done[i] = step.status[ue] != TerminationStatus::running ? 1 : 0;

      reward_sum += step.reward[ue];
      episode_return_[ue] += step.reward[ue];
      log.waypoints_passed += step.passed[ue];
      if (step.status[ue] != TerminationStatus::running) {
        ++log.episodes;
        return_sum += episode_return_[ue];
        length_sum += step.episode_length[ue];
        episode_return_[ue] = 0.0;
        if (step.status[ue] == TerminationStatus::collision) ++collisions;
        if (step.status[ue] == TerminationStatus::timeout) truncated.push_back(e);
      }
    }
    if (!truncated.empty()) {
      // Time-limit truncation: fold gamma * V(final observation) into the reward.
      Tensor final_in(static_cast<Eigen::Index>(truncated.size()), kObsDim + d);
      for (std::size_t k = 0; k < truncated.size(); ++k) {
        final_in.block(static_cast<Eigen::Index>(k), 0, 1, kObsDim) = step.final_obs.row(truncated[k]);
        final_in.block(static_cast<Eigen::Index>(k), kObsDim, 1, d) = z_.row(truncated[k]);
      }
      const Tensor v_final = ac_.value(final_in);
      for (std::size_t k = 0; k < truncated.size(); ++k) {
        batch_.reward[batch_.index(t, truncated[k])] += gamma * v_final(static_cast<Eigen::Index>(k), 0);
      }
    }

    if (encoder_) {
      // One transition per task from a randomly chosen environment of that task.
      for (std::size_t task = 0; task < tasks_.size(); ++task) {
        for (int c = 0; c < cfg_.encoder.context_per_step; ++c) {
          const int e = static_cast<int>(task) * envs_per_task_ +
                        static_cast<int>(context_rng_.index(static_cast<std::size_t>(envs_per_task_)));
          Transition tr;
          tr.o = obs.row(e).transpose();
          tr.a = actions[static_cast<std::size_t>(e)].clamped().a;
          tr.r = step.reward[static_cast<std::size_t>(e)];
          tr.o_next = step.final_obs.row(e).transpose();
          buffers_[task].push(tr);
        }
      }
      if (method_ == Method::maven && (t + 1) % cfg_.encoder.update_every == 0) {
        const EncoderLossTerms terms = encoder_update();
        encoder_update_steps_.push_back(t + 1);
        enc_sum.total += terms.total;
        enc_sum.kl += terms.kl;
        enc_sum.pos += terms.pos;
        enc_sum.rew += terms.rew;
        enc_sum.spec += terms.spec;
        ++log.encoder_updates;
      }
    }
    env_steps_ += n;
  }

  for (int e = 0; e < n; ++e) obs.row(e) = env_->observation(static_cast<std::size_t>(e)).transpose();
  const Tensor last_v = ac_.value(ActorCritic::join(obs, z_));
  for (int e = 0; e < n; ++e) batch_.last_value[static_cast<std::size_t>(e)] = last_v(e, 0);

  compute_gae(batch_, gamma, cfg_.ppo.gae_lambda);
  normalize_advantages_per_task(batch_);

  if (method_ == Method::critic_encoder_ablation) {
    log.ppo = ppo_->update(
        batch_, ppo_rng_, [this](Graph& g, std::span<const std::size_t> rows) { return critic_encoder_hook(g, rows); },
        &encoder_->optimizer());
  } else {
    log.ppo = ppo_->update(batch_, ppo_rng_);
  }

  ++iteration_;
  log.iteration = iteration_;
  log.env_steps = env_steps_;
  log.mean_reward = reward_sum / (static_cast<double>(steps) * n);
  if (log.episodes > 0) {
    log.mean_episode_return = return_sum / static_cast<double>(log.episodes);
    log.mean_episode_length = length_sum / static_cast<double>(log.episodes);
    log.collision_rate = static_cast<double>(collisions) / static_cast<double>(log.episodes);
  }
  const double attempts = static_cast<double>(log.waypoints_passed + collisions);
  log.pass_rate = attempts > 0.0 ? static_cast<double>(log.waypoints_passed) / attempts : 0.0;
  if (log.encoder_updates > 0) {
    const double k = log.encoder_updates;
    log.encoder = {enc_sum.total / k, enc_sum.kl / k, enc_sum.pos / k, enc_sum.rew / k, enc_sum.spec / k, 0.0,
                   static_cast<int>(tasks_.size())};
  }
  if (encoder_) {
    log.encoder.kl_weight = encoder_->kl_weight();
    log.task_kl = task_kl_;
    log.dynamics_checksum = encoder_->dynamics_head_checksum();
  }
  return log;
}

nn::Checkpoint MetaTrainer::checkpoint() const {
  nn::Checkpoint ck;
  ck.seed = cfg_.train.seed;
  ck.config_text = dump_config(cfg_);
  for (const nn::Parameter* p : ac_.all_parameters()) ck.tensors.push_back({p->name, p->value});
  if (encoder_) {
    for (const nn::Parameter* p : encoder_->all_parameters()) ck.tensors.push_back({p->name, p->value});
  }
  return ck;
}

void MetaTrainer::train(std::ostream* log, const std::filesystem::path& checkpoint_path,
                        const std::function<bool()>& stop) {
  const int every = cfg_.train.checkpoint_every;
  while (env_steps_ < cfg_.train.total_env_steps) {
    if (stop && stop()) break;
    const IterationLog entry = run_iteration();
    if (log != nullptr) {
      *log << entry.to_json() << '\n';
      log->flush();
    }
    if (!checkpoint_path.empty() && every > 0 && iteration_ % every == 0) save_checkpoint(checkpoint(), checkpoint_path);
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint(), checkpoint_path);
}

}  // namespace maven
