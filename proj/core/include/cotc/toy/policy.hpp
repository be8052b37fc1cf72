#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cotc/grpo.hpp"
#include "cotc/rng.hpp"
#include "cotc/toy/tasks.hpp"

namespace cotc::toy {

struct ToyPolicyConfig {
  int max_positions = 8;           // episode cap; must cover the teacher layout
  int max_ops = 3;                 // arities 1..max_ops get distinct buckets
  int hash_buckets_per_arity = 2;  // operand-hash refinement within an arity
  // Constant logit bias applied when the teacher scaffold is present: toward
  // `compute` while operations remain, toward `answer` once they are done.
  // Models the fact that compressing visible reasoning is far easier than
  // generating it; the bias itself is not learned, so every improvement that
  // persists without the scaffold lives in the shared parameters.
  double scaffold_bias = 3.0;

  int bucket_count() const { return max_ops * hash_buckets_per_arity; }
  int param_count() const { return max_positions * bucket_count() * kActionCount; }

  void validate() const;
};

// Featurized categorical sequence policy over step templates. Context is
// (position index, operand-hash bucket); parameters are one logit table,
// theta[pos][bucket][action], softmax-normalized per context.
class ToyPolicy final : public DifferentiablePolicy {
 public:
  explicit ToyPolicy(ToyPolicyConfig cfg = {});

  const ToyPolicyConfig& config() const { return cfg_; }

  int bucket_of(const SyntheticTask& task) const;

  struct Rollout {
    std::int64_t id = -1;  // registered handle; -1 for greedy rollouts
    std::vector<Action> actions;
    std::vector<double> logp;  // per action, at sampling time
    Execution exec;
    bool scaffolded = false;
  };

  // Temperature-1 ancestral sampling. The rollout is registered so GRPO can
  // recompute log-probabilities and gradients for it later.
  Rollout sample(const SyntheticTask& task, bool scaffolded, Rng& rng);

  // Argmax decoding; not registered.
  Rollout greedy(const SyntheticTask& task, bool scaffolded) const;

  // Log-probabilities of an arbitrary action sequence under the current
  // parameters (used to score rollouts under snapshots).
  std::vector<double> action_logprobs(const SyntheticTask& task, std::span<const Action> actions,
                                      bool scaffolded) const;

  // Negative log-likelihood of a target sequence in the unscaffolded context;
  // adds d nll / d theta into grad when grad is nonempty.
  double nll_add_grad(const SyntheticTask& task, std::span<const Action> target,
                      std::span<double> grad) const;

  void clear_rollouts();
  std::size_t rollout_count() const { return rollouts_.size(); }

  // theta += lr * grad
  void apply_step(std::span<const double> grad, double lr);

  // DifferentiablePolicy
  std::size_t param_count() const override { return theta_.size(); }
  std::vector<double> params() const override { return theta_; }
  void set_params(std::span<const double> p) override;
  std::vector<double> response_logprobs(std::int64_t id) const override;
  void accumulate_logprob_gradient(std::int64_t id, std::span<const double> coeff,
                                   std::span<double> grad) const override;

 private:
  struct RolloutRecord {
    int bucket = 0;
    int ops_total = 0;
    bool scaffolded = false;
    std::vector<Action> actions;
  };

  std::size_t base_index(int pos, int bucket) const {
    return (static_cast<std::size_t>(pos) * static_cast<std::size_t>(cfg_.bucket_count()) +
            static_cast<std::size_t>(bucket)) *
           kActionCount;
  }

  // Log-softmax over the five actions at one context.
  std::array<double, kActionCount> log_probs_at(int pos, int bucket, bool scaffolded,
                                                int ops_done, int ops_total) const;

  const RolloutRecord& record(std::int64_t id) const;

  ToyPolicyConfig cfg_;
  std::vector<double> theta_;
  std::vector<RolloutRecord> rollouts_;
};

}  // namespace cotc::toy
