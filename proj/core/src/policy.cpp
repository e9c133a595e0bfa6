#include "kapr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "kapr/artifact.hpp"
#include "kapr/error.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace {

constexpr const char* kFormat = "kapr.policy";

Eigen::VectorXd relu(const Eigen::VectorXd& x) { return x.cwiseMax(0.0); }

Eigen::VectorXd relu_mask(const Eigen::VectorXd& x) { return (x.array() > 0.0).cast<double>().matrix(); }

/// Ascent gradient of weight * log p_c + beta * H(p) with respect to the logits.
Eigen::VectorXd logit_gradient(const Eigen::VectorXd& p, std::size_t chosen, double weight, double beta,
                               Eigen::Index present) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  g.head(present) = -weight * p.head(present);
  g(static_cast<Eigen::Index>(chosen)) += weight;
  if (beta != 0.0) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < present; ++i) {
      if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    }
    for (Eigen::Index i = 0; i < present; ++i) {
      if (p(i) > 0.0) g(i) -= beta * p(i) * (std::log(p(i)) + h);
    }
  }
  return g;
}

double entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return h;
}

void check_chosen(std::size_t chosen, Eigen::Index rows) {
  if (chosen >= static_cast<std::size_t>(rows)) throw IllegalAction("chosen index out of range");
}

}  // namespace

Eigen::VectorXd encode_state(const State& s, const EmbeddingTable& tab, std::size_t history) {
  const auto d = static_cast<Eigen::Index>(tab.dim());
  const auto slots = static_cast<Eigen::Index>(history + 1);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d * (1 + 2 * slots));
  out.segment(0, d) = tab.entity(s.source()).transpose();
  const auto t = static_cast<std::ptrdiff_t>(s.step());
  for (Eigen::Index j = 0; j < slots; ++j) {
    const std::ptrdiff_t idx = t - static_cast<std::ptrdiff_t>(history) + j;
    if (idx < 0) continue;
    const Eigen::Index at = d * (1 + 2 * j);
    if (idx > 0) out.segment(at, d) = tab.relation(s.path.relations[static_cast<std::size_t>(idx - 1)]).transpose();
    out.segment(at + d, d) = tab.entity(s.path.entities[static_cast<std::size_t>(idx)]).transpose();
  }
  return out;
}

Eigen::MatrixXd encode_actions(const PrunedActionSpace& space, const EmbeddingTable& tab) {
  const auto d = static_cast<Eigen::Index>(tab.dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(space.size()), 2 * d);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out.row(row).head(d) = tab.relation(space[i].relation);
    out.row(row).tail(d) = tab.entity(space[i].target);
  }
  return out;
}

// ---- dynamic ----

DynamicPolicy::DynamicPolicy(const DynamicPolicyConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  const auto ds = static_cast<Eigen::Index>(cfg.state_dim);
  const auto da = static_cast<Eigen::Index>(cfg.action_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  const auto f = static_cast<Eigen::Index>(cfg.affinity);
  params_.add("Ws", nn::fan_in_uniform(ds, h, rng));
  params_.add("W1", nn::fan_in_uniform(h, f, rng));
  params_.add("Wa", nn::fan_in_uniform(da, h, rng));
  params_.add("W2", nn::fan_in_uniform(h, f, rng));
}

Eigen::VectorXd DynamicPolicy::logits(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const {
  if (state.size() != params_[kWs].rows() || actions.cols() != params_[kWa].rows()) {
    throw ConfigError("policy input dimension mismatch");
  }
  const Eigen::VectorXd s1 = relu(relu(params_[kWs].transpose() * state).transpose() * params_[kW1]);
  const Eigen::MatrixXd a1 = ((actions * params_[kWa]).cwiseMax(0.0) * params_[kW2]).cwiseMax(0.0);
  return a1 * s1;
}

Eigen::VectorXd DynamicPolicy::forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const {
  if (actions.rows() == 0) throw NoActions("empty action set");
  return nn::softmax(logits(state, actions));
}

void DynamicPolicy::accumulate_gradient(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions,
                                        std::size_t chosen, double weight, double entropy_weight,
                                        nn::ParameterList& grads) const {
  if (actions.rows() == 0) throw NoActions("empty action set");
  check_chosen(chosen, actions.rows());
  const auto& Ws = params_[kWs];
  const auto& W1 = params_[kW1];
  const auto& Wa = params_[kWa];
  const auto& W2 = params_[kW2];

  const Eigen::VectorXd pre_s0 = Ws.transpose() * state;
  const Eigen::VectorXd hs = relu(pre_s0);
  const Eigen::VectorXd pre_s1 = W1.transpose() * hs;
  const Eigen::VectorXd s1 = relu(pre_s1);
  const Eigen::MatrixXd pre_a0 = actions * Wa;
  const Eigen::MatrixXd ha = pre_a0.cwiseMax(0.0);
  const Eigen::MatrixXd pre_a1 = ha * W2;
  const Eigen::MatrixXd a1 = pre_a1.cwiseMax(0.0);
  const Eigen::VectorXd p = nn::softmax(a1 * s1);

  const Eigen::VectorXd gz = logit_gradient(p, chosen, weight, entropy_weight, p.size());

  // state tower
  const Eigen::VectorXd g_pre_s1 = (a1.transpose() * gz).cwiseProduct(relu_mask(pre_s1));
  grads[kW1] += hs * g_pre_s1.transpose();
  const Eigen::VectorXd g_pre_s0 = (W1 * g_pre_s1).cwiseProduct(relu_mask(pre_s0));
  grads[kWs] += state * g_pre_s0.transpose();

  // action tower
  const Eigen::MatrixXd g_pre_a1 =
      (gz * s1.transpose()).cwiseProduct((pre_a1.array() > 0.0).cast<double>().matrix());
  grads[kW2] += ha.transpose() * g_pre_a1;
  const Eigen::MatrixXd g_pre_a0 =
      (g_pre_a1 * W2.transpose()).cwiseProduct((pre_a0.array() > 0.0).cast<double>().matrix());
  grads[kWa] += actions.transpose() * g_pre_a0;
}

nlohmann::json DynamicPolicy::describe() const {
  return {{"kind", kind()},
          {"state_dim", cfg_.state_dim},
          {"action_dim", cfg_.action_dim},
          {"hidden", cfg_.hidden},
          {"affinity", cfg_.affinity}};
}

// ---- static ----

StaticPolicy::StaticPolicy(const StaticPolicyConfig& cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  const auto ds = static_cast<Eigen::Index>(cfg.state_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  const auto w = static_cast<Eigen::Index>(cfg.width);
  params_.add("W1", nn::fan_in_uniform(ds, h, rng));
  params_.add("b1", Eigen::MatrixXd::Zero(h, 1));
  params_.add("W2", nn::fan_in_uniform(h, w, rng));
  params_.add("b2", Eigen::MatrixXd::Zero(w, 1));
}

Eigen::VectorXd StaticPolicy::slot_logits(const Eigen::VectorXd& state) const {
  if (state.size() != params_[kW1].rows()) throw ConfigError("policy input dimension mismatch");
  const Eigen::VectorXd h = relu(params_[kW1].transpose() * state + params_[kB1].col(0));
  return params_[kW2].transpose() * h + params_[kB2].col(0);
}

Eigen::VectorXd StaticPolicy::forward_masked(const Eigen::VectorXd& state, Eigen::Index present) const {
  if (present > static_cast<Eigen::Index>(cfg_.width)) {
    throw ConfigError("action set larger than the static policy width");
  }
  return nn::masked_softmax(slot_logits(state), present);
}

Eigen::VectorXd StaticPolicy::forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const {
  return forward_masked(state, actions.rows()).head(actions.rows());
}

void StaticPolicy::accumulate_gradient(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions,
                                       std::size_t chosen, double weight, double entropy_weight,
                                       nn::ParameterList& grads) const {
  const Eigen::Index present = actions.rows();
  check_chosen(chosen, present);
  const Eigen::VectorXd pre = params_[kW1].transpose() * state + params_[kB1].col(0);
  const Eigen::VectorXd h = relu(pre);
  const Eigen::VectorXd p = forward_masked(state, present);
  const Eigen::VectorXd gz = logit_gradient(p, chosen, weight, entropy_weight, present);
  grads[kW2] += h * gz.transpose();
  grads[kB2].col(0) += gz;
  const Eigen::VectorXd gpre = (params_[kW2] * gz).cwiseProduct(relu_mask(pre));
  grads[kW1] += state * gpre.transpose();
  grads[kB1].col(0) += gpre;
}

nlohmann::json StaticPolicy::describe() const {
  return {{"kind", kind()}, {"state_dim", cfg_.state_dim}, {"hidden", cfg_.hidden}, {"width", cfg_.width}};
}

// ---- uniform ----

Eigen::VectorXd UniformPolicy::forward(const Eigen::VectorXd&, const Eigen::MatrixXd& actions) const {
  if (actions.rows() == 0) throw NoActions("empty action set");
  return Eigen::VectorXd::Constant(actions.rows(), 1.0 / static_cast<double>(actions.rows()));
}

Eigen::VectorXd action_probabilities(const PolicyNetwork& policy, const Environment& env, const State& s,
                                     const PrunedActionSpace& space) {
  const auto& tab = env.embeddings();
  return policy.forward(encode_state(s, tab, env.config().history), encode_actions(space, tab));
}

// ---- rollouts ----

namespace {

Trajectory rollout(const PolicyNetwork& policy, const Environment& env, EntityRef start, Rng& rng) {
  Trajectory traj;
  State s = env.reset(start);
  bool finished = env.done(s);
  while (!finished) {
    const auto space = env.actions(s);
    TrajectoryStep step;
    step.state = encode_state(s, env.embeddings(), env.config().history);
    step.actions = encode_actions(space, env.embeddings());
    const Eigen::VectorXd p = policy.forward(step.state, step.actions);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = space.size() - 1;
    for (std::size_t i = 0; i < space.size(); ++i) {
      acc += p(static_cast<Eigen::Index>(i));
      if (u < acc) {
        pick = i;
        break;
      }
    }
    step.chosen = pick;
    step.log_prob = std::log(std::max(p(static_cast<Eigen::Index>(pick)), 1e-300));
    traj.path.log_prob += step.log_prob;
    traj.steps.push_back(std::move(step));
    std::tie(s, finished) = env.step(s, space, pick);
  }
  const double lp = traj.path.log_prob;
  traj.path = s.path;
  traj.path.log_prob = lp;
  return traj;
}

}  // namespace

std::vector<Trajectory> sample_trajectories(const PolicyNetwork& policy, const Environment& env,
                                            std::span<const EntityRef> starts,
                                            const TrainingRewarder& rewarder, const SamplingConfig& cfg) {
  std::vector<Trajectory> out(starts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < starts.size(); i += stride) {
      Rng rng(derive_seed(cfg.seed, i));
      out[i] = rollout(policy, env, starts[i], rng);
      out[i].reward = terminal_reward(out[i].path, env.patterns(), rewarder);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, std::max<std::size_t>(1, starts.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  rewarder.finalize_batch(out);
  for (auto& t : out) {
    const std::size_t n = t.steps.size();
    t.returns.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.returns[k] = std::pow(cfg.gamma, static_cast<double>(n - 1 - k)) * t.reward;
  }
  return out;
}

double TransERewarder::operator()(EntityRef v0, EntityRef e) const {
  calls_.fetch_add(1);
  return action_score(*tab_, v0, Relation::SelfLoop, e);
}

void TransERewarder::finalize_batch(std::span<Trajectory> batch) const {
  std::vector<std::pair<EntityRef, EntityRef>> pairs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i].path;
    if (!is_rewardable(p, *patterns_)) continue;
    pairs.emplace_back(p.source(), p.entities[p.stripped_length()]);
    owner.push_back(i);
  }
  const auto scaled = transe_rewards(*tab_, pairs);
  for (std::size_t k = 0; k < owner.size(); ++k) batch[owner[k]].reward = scaled[k];
}

// ---- learning ----

void Baseline::update(double batch_mean) {
  if (!initialized) {
    value = batch_mean;
    initialized = true;
  } else {
    value = momentum * value + (1.0 - momentum) * batch_mean;
  }
}

PolicyOptimizer::PolicyOptimizer(const nn::ParameterList& shape, Kind kind, double lr)
    : kind_(kind), sgd_(lr), adam_(shape, lr) {}

void PolicyOptimizer::step(nn::ParameterList& params, const nn::ParameterList& loss_grads) {
  if (kind_ == Kind::Sgd) {
    sgd_.step(params, loss_grads);
  } else {
    adam_.step(params, loss_grads);
  }
}

std::optional<PolicyOptimizer::Kind> parse_optimizer(std::string_view s) {
  if (s == "sgd") return PolicyOptimizer::Kind::Sgd;
  if (s == "adam") return PolicyOptimizer::Kind::Adam;
  return std::nullopt;
}

namespace {

std::size_t step_count(std::span<const Trajectory> batch) {
  std::size_t n = 0;
  for (const auto& t : batch) n += t.steps.size();
  return n;
}

double mean_reward(std::span<const Trajectory> batch) {
  double sum = 0.0;
  for (const auto& t : batch) sum += t.reward;
  return sum / static_cast<double>(batch.size());
}

}  // namespace

nn::ParameterList reinforce_gradient(const PolicyNetwork& policy, std::span<const Trajectory> batch,
                                     double baseline, double entropy_weight) {
  auto grads = policy.parameters().zeros_like();
  const std::size_t n = step_count(batch);
  if (n == 0) return grads;
  const double inv = 1.0 / static_cast<double>(n);
  for (const auto& t : batch) {
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      const auto& st = t.steps[k];
      policy.accumulate_gradient(st.state, st.actions, st.chosen, -(t.returns[k] - baseline) * inv,
                                 -entropy_weight * inv, grads);
    }
  }
  return grads;
}

UpdateResult reinforce_update(PolicyNetwork& policy, std::span<const Trajectory> batch,
                              PolicyOptimizer& optimizer, Baseline& baseline, double entropy_weight) {
  if (batch.empty()) throw ConfigError("empty trajectory batch");
  UpdateResult res;
  res.mean_return = mean_reward(batch);
  if (!baseline.initialized) baseline.update(res.mean_return);
  const double b = baseline.value;

  const std::size_t n = step_count(batch);
  double loss = 0.0;
  for (const auto& t : batch) {
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      const auto& st = t.steps[k];
      loss -= st.log_prob * (t.returns[k] - b);
      if (entropy_weight != 0.0) loss -= entropy_weight * entropy(policy.forward(st.state, st.actions));
    }
  }
  res.loss = n > 0 ? loss / static_cast<double>(n) : 0.0;

  const auto grads = reinforce_gradient(policy, batch, b, entropy_weight);
  optimizer.step(policy.parameters(), grads);
  baseline.update(res.mean_return);
  return res;
}

AgentTrainingResult train_agent(PolicyNetwork& policy, const Environment& env,
                                std::span<const EntityRef> starts, const TrainingRewarder& rewarder,
                                const AgentTrainingConfig& cfg) {
  if (starts.empty()) throw ConfigError("no start products for agent training");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  AgentTrainingResult res;
  PolicyOptimizer opt(policy.parameters(), cfg.optimizer, cfg.lr);
  Baseline baseline;
  std::vector<EntityRef> order(starts.begin(), starts.end());
  std::uint64_t batch_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0x5EED0000ULL + epoch));
    rng.shuffle(std::span(order));
    double reward_sum = 0.0;
    double loss_sum = 0.0;
    std::size_t updates = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto chunk = std::span(order).subspan(b, std::min(cfg.batch_size, order.size() - b));
      const auto batch = sample_trajectories(policy, env, chunk, rewarder,
                                             {cfg.gamma, derive_seed(cfg.seed, batch_index++), cfg.workers});
      const auto upd = reinforce_update(policy, batch, opt, baseline, cfg.entropy_weight);
      reward_sum += upd.mean_return * static_cast<double>(batch.size());
      loss_sum += upd.loss;
      ++updates;
      res.episodes += batch.size();
    }
    res.mean_return.push_back(reward_sum / static_cast<double>(order.size()));
    res.loss.push_back(loss_sum / static_cast<double>(updates));
  }
  return res;
}

// ---- checkpoints ----

void save_policy(const std::filesystem::path& path, const PolicyNetwork& policy, const nlohmann::json& extra) {
  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["format"] = kFormat;
  manifest["network"] = policy.describe();
  artifact::write_tensors(path, std::move(manifest), policy.parameters().to_named(), artifact::Dtype::F64);
}

std::unique_ptr<PolicyNetwork> load_policy(const std::filesystem::path& path) {
  const auto file = artifact::read_tensors(path, kFormat);
  const auto& net = file.manifest.at("network");
  const auto kind = net.at("kind").get<std::string>();
  std::unique_ptr<PolicyNetwork> out;
  if (kind == "dynamic") {
    DynamicPolicyConfig c;
    c.state_dim = net.at("state_dim").get<std::size_t>();
    c.action_dim = net.at("action_dim").get<std::size_t>();
    c.hidden = net.at("hidden").get<std::size_t>();
    c.affinity = net.at("affinity").get<std::size_t>();
    out = std::make_unique<DynamicPolicy>(c);
  } else if (kind == "static") {
    StaticPolicyConfig c;
    c.state_dim = net.at("state_dim").get<std::size_t>();
    c.hidden = net.at("hidden").get<std::size_t>();
    c.width = net.at("width").get<std::size_t>();
    out = std::make_unique<StaticPolicy>(c);
  } else if (kind == "uniform") {
    out = std::make_unique<UniformPolicy>();
  } else {
    throw FormatError(path.string() + ": unknown policy kind '" + kind + "'");
  }
  out->parameters().load_from(file);
  return out;
}

}  // namespace kapr
