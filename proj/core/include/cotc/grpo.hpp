#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cotc {

struct GRPOConfig {
  int group_size = 2;          // G
  double kl_coefficient = 0.1;  // beta_KL
  int update_epochs = 4;
  bool normalize_advantages_by_std = false;
  // Absent -> on-policy semantics: log-probabilities are re-evaluated every
  // epoch instead of reusing a stale ratio. Present -> clipped-ratio
  // surrogate with this epsilon.
  std::optional<double> ratio_clip;

  void validate() const;

  static GRPOConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static GRPOConfig load(const std::filesystem::path& path);
};

struct SampleResponse {
  std::string text;
  double reward_total = 0.0;
  std::vector<std::string> tokens;
  std::vector<double> logp_policy;                // recorded at sampling time
  std::optional<std::vector<double>> logp_ref;    // under the frozen reference
  // Handle the generating policy can use to recompute log-probabilities and
  // gradients for this exact response. -1 when the response came from a file.
  std::int64_t rollout_id = -1;
};

struct SampleGroup {
  std::string prompt_id;
  std::vector<SampleResponse> responses;
  double mean_reward = 0.0;
  std::vector<double> advantages;
};

// A_i = R_i - mean(R); optionally divided by (std(R) + 1e-8). Throws
// GroupTooSmall for fewer than two rewards.
std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                       const GRPOConfig& cfg);

// Fills mean_reward and advantages from the responses' reward_total.
void finalize_group(SampleGroup& group, const GRPOConfig& cfg);

struct KlEstimate {
  std::vector<double> per_token;
  double mean = 0.0;
};

// Per-token estimator k(t) = exp(d) - d - 1 with d = ref - pol. Nonnegative
// for every d; zero iff the distributions agree on the sampled token.
KlEstimate estimate_kl(std::span<const double> logp_policy, std::span<const double> logp_ref);

struct ObjectiveResult {
  double scalar = 0.0;
  // One coefficient per token per response: A_i, with the KL gradient
  // coefficient folded in when requested. A trainer recovers the gradient as
  // sum coeff * grad log pi.
  std::vector<std::vector<double>> per_token_coefficients;
  double kl_mean = 0.0;  // group average of per-response token-mean KL
};

// scalar = sum_i A_i * sum_t logp_policy(i,t) - beta * kl_mean. Requires
// logp_ref on every response when beta > 0 (MissingReferenceLogprobs).
ObjectiveResult grpo_objective(const SampleGroup& group, const GRPOConfig& cfg,
                               bool fold_kl_into_coefficients = false);

// Anything that can recompute log-probabilities of its own recorded rollouts
// and accumulate analytic parameter gradients for them.
class DifferentiablePolicy {
 public:
  virtual ~DifferentiablePolicy() = default;
  virtual std::size_t param_count() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> p) = 0;
  // Per-token log-probabilities of rollout `id` under the CURRENT parameters.
  virtual std::vector<double> response_logprobs(std::int64_t id) const = 0;
  // grad += sum_t coeff[t] * d logp(token_t) / d theta.
  virtual void accumulate_logprob_gradient(std::int64_t id, std::span<const double> coeff,
                                           std::span<double> grad) const = 0;
};

// The surrogate the gradient below differentiates, evaluated with
// log-probabilities refreshed from the policy (samples held fixed). With
// ratio_clip set, the recorded logp_policy acts as the old policy and the
// clipped-ratio surrogate is used instead.
double grpo_surrogate(const DifferentiablePolicy& policy, const SampleGroup& group,
                      const GRPOConfig& cfg);

// Analytic gradient of grpo_surrogate with respect to the policy parameters.
// Throws NonFiniteGradient if any component is NaN/Inf.
std::vector<double> grpo_gradient(const DifferentiablePolicy& policy, const SampleGroup& group,
                                  const GRPOConfig& cfg);

// Advantage-batch export: one line per response,
// {prompt_id, response_index, text, advantage, per_token_coefficients,
// kl_mean}. The KL gradient coefficient is folded in whenever reference
// log-probabilities are available and beta > 0.
void export_advantage_batch(const std::filesystem::path& path,
                            const std::vector<SampleGroup>& groups, const GRPOConfig& cfg);

}  // namespace cotc
