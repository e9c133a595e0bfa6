#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "kapr/embed.hpp"
#include "kapr/env.hpp"
#include "kapr/nn.hpp"

namespace kapr {

/// Concatenation (v0, r_{t-k}, e_{t-k}, ..., r_t, e_t). Slots before the
/// start of the walk are zero, as is the relation slot of the start product.
/// Length (1 + 2(k+1)) * d.
Eigen::VectorXd encode_state(const State& s, const EmbeddingTable& tab, std::size_t history);

/// One row (r, e) of length 2d per action.
Eigen::MatrixXd encode_actions(const PrunedActionSpace& space, const EmbeddingTable& tab);

/// A stochastic policy over a variable-size pruned action set.
class PolicyNetwork {
 public:
  virtual ~PolicyNetwork() = default;

  /// Action probabilities; one per row of `actions`. Throws NoActions for
  /// an empty action set.
  virtual Eigen::VectorXd forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const = 0;

  /// grads += weight * d log pi(chosen) / d theta + entropy_weight * dH / d theta.
  virtual void accumulate_gradient(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions,
                                   std::size_t chosen, double weight, double entropy_weight,
                                   nn::ParameterList& grads) const = 0;

  virtual nn::ParameterList& parameters() = 0;
  virtual const nn::ParameterList& parameters() const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json describe() const = 0;
};

struct DynamicPolicyConfig {
  std::size_t state_dim = 500;
  std::size_t action_dim = 200;
  std::size_t hidden = 512;    // after W_s / W_a
  std::size_t affinity = 256;  // shared space after W_1 / W_2
  std::uint64_t seed = 1;
};

/// Projects the state and every action into a shared space and scores each
/// action by its dot product with the state:
///   s' = ReLU(ReLU(s Ws) W1),  a' = ReLU(ReLU(a Wa) W2),  pi = softmax(a' s').
class DynamicPolicy final : public PolicyNetwork {
 public:
  enum : std::size_t { kWs = 0, kW1 = 1, kWa = 2, kW2 = 3 };

  explicit DynamicPolicy(const DynamicPolicyConfig& cfg);

  Eigen::VectorXd forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const override;
  /// Unnormalized affinities a'_i . s'.
  Eigen::VectorXd logits(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const;
  void accumulate_gradient(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions,
                           std::size_t chosen, double weight, double entropy_weight,
                           nn::ParameterList& grads) const override;

  nn::ParameterList& parameters() override { return params_; }
  const nn::ParameterList& parameters() const override { return params_; }
  std::string kind() const override { return "dynamic"; }
  nlohmann::json describe() const override;

 private:
  DynamicPolicyConfig cfg_;
  nn::ParameterList params_;
};

struct StaticPolicyConfig {
  std::size_t state_dim = 500;
  std::size_t hidden = 512;
  std::size_t width = 251;  // D scored slots plus the trailing SelfLoop
  std::uint64_t seed = 1;
};

/// Fixed-width actor: a two-layer MLP from the state to one logit per action
/// slot, softmax-normalized over the slots that are present. Slot i is the
/// i-th entry of the pruned action list.
class StaticPolicy final : public PolicyNetwork {
 public:
  enum : std::size_t { kW1 = 0, kB1 = 1, kW2 = 2, kB2 = 3 };

  explicit StaticPolicy(const StaticPolicyConfig& cfg);

  Eigen::VectorXd forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const override;
  /// Masked softmax over the first `present` slots; the output has `width` entries.
  Eigen::VectorXd forward_masked(const Eigen::VectorXd& state, Eigen::Index present) const;
  void accumulate_gradient(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions,
                           std::size_t chosen, double weight, double entropy_weight,
                           nn::ParameterList& grads) const override;

  nn::ParameterList& parameters() override { return params_; }
  const nn::ParameterList& parameters() const override { return params_; }
  std::string kind() const override { return "static"; }
  nlohmann::json describe() const override;

 private:
  Eigen::VectorXd slot_logits(const Eigen::VectorXd& state) const;

  StaticPolicyConfig cfg_;
  nn::ParameterList params_;
};

/// Uniform distribution over the present actions; no parameters.
class UniformPolicy final : public PolicyNetwork {
 public:
  Eigen::VectorXd forward(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) const override;
  void accumulate_gradient(const Eigen::VectorXd&, const Eigen::MatrixXd&, std::size_t, double, double,
                           nn::ParameterList&) const override {}
  nn::ParameterList& parameters() override { return params_; }
  const nn::ParameterList& parameters() const override { return params_; }
  std::string kind() const override { return "uniform"; }
  nlohmann::json describe() const override { return {{"kind", "uniform"}}; }

 private:
  nn::ParameterList params_;
};

/// Probabilities of the policy for state s of env.
Eigen::VectorXd action_probabilities(const PolicyNetwork& policy, const Environment& env, const State& s,
                                     const PrunedActionSpace& space);

struct TrajectoryStep {
  Eigen::VectorXd state;
  Eigen::MatrixXd actions;
  std::size_t chosen = 0;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  ReasoningPath path;
  double reward = 0.0;
  std::vector<double> returns;  // G_t = gamma^(T-t) R for steps t = 1..T
};

/// Reward source used during training. finalize_batch may rewrite the raw
/// per-path rewards of a whole batch (e.g. rescaling).
class TrainingRewarder : public Rewarder {
 public:
  virtual void finalize_batch(std::span<Trajectory> /*batch*/) const {}
};

/// Reward of the TransE-based ablation: action_score(v0, e) of each
/// rewardable path, min-max rescaled over the batch (see transe_rewards).
class TransERewarder final : public TrainingRewarder {
 public:
  TransERewarder(const EmbeddingTable& tab, const PatternSet& patterns) : tab_(&tab), patterns_(&patterns) {}
  /// Raw, unscaled score; rescaled in finalize_batch.
  double operator()(EntityRef v0, EntityRef e) const override;
  void finalize_batch(std::span<Trajectory> batch) const override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  const EmbeddingTable* tab_;
  const PatternSet* patterns_;
  mutable std::atomic<std::size_t> calls_{0};
};

struct SamplingConfig {
  double gamma = 0.99;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

/// Rolls out one episode per start product. Trajectory i draws from its own
/// stream derive_seed(seed, i), so results do not depend on `workers`.
std::vector<Trajectory> sample_trajectories(const PolicyNetwork& policy, const Environment& env,
                                            std::span<const EntityRef> starts,
                                            const TrainingRewarder& rewarder, const SamplingConfig& cfg);

/// Running-mean return baseline.
struct Baseline {
  double value = 0.0;
  bool initialized = false;
  double momentum = 0.9;

  void update(double batch_mean);
};

struct UpdateResult {
  double mean_return = 0.0;  // mean terminal reward of the batch
  double loss = 0.0;         // -(1/N) sum log pi * (G - b) - entropy term
};

/// Gradient-descent optimizer over a policy's parameters.
class PolicyOptimizer {
 public:
  enum class Kind { Sgd, Adam };

  PolicyOptimizer(const nn::ParameterList& shape, Kind kind, double lr);
  void step(nn::ParameterList& params, const nn::ParameterList& loss_grads);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
  nn::Sgd sgd_;
  nn::Adam adam_;
};

std::optional<PolicyOptimizer::Kind> parse_optimizer(std::string_view s);

/// Gradient of the REINFORCE loss
///   L = -(1/N) sum_t log pi(a_t|s_t) (G_t - b) - (beta/N) sum_t H(pi(.|s_t))
/// over the N steps of the batch.
nn::ParameterList reinforce_gradient(const PolicyNetwork& policy, std::span<const Trajectory> batch,
                                     double baseline, double entropy_weight = 0.0);

/// One optimizer step on L. A fresh baseline is seeded with the batch's mean
/// reward first; afterwards it is read before and updated after the step.
/// Throws ConfigError for an empty batch.
UpdateResult reinforce_update(PolicyNetwork& policy, std::span<const Trajectory> batch,
                              PolicyOptimizer& optimizer, Baseline& baseline,
                              double entropy_weight = 0.0);

struct AgentTrainingConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.001;
  PolicyOptimizer::Kind optimizer = PolicyOptimizer::Kind::Adam;
  double gamma = 0.99;
  double entropy_weight = 0.0;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct AgentTrainingResult {
  std::vector<double> mean_return;  // per epoch, over the episodes sampled in it
  std::vector<double> loss;         // per epoch, mean over its updates
  std::size_t episodes = 0;
};

AgentTrainingResult train_agent(PolicyNetwork& policy, const Environment& env,
                                std::span<const EntityRef> starts, const TrainingRewarder& rewarder,
                                const AgentTrainingConfig& cfg);

void save_policy(const std::filesystem::path& path, const PolicyNetwork& policy,
                 const nlohmann::json& extra = {});
std::unique_ptr<PolicyNetwork> load_policy(const std::filesystem::path& path);

}  // namespace kapr
