#include "cotc/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"

namespace cotc {

void GRPOConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (kl_coefficient < 0.0) throw ConfigError("kl_coefficient must be >= 0");
  if (update_epochs < 1) throw ConfigError("update_epochs must be >= 1");
  if (ratio_clip && *ratio_clip <= 0.0) throw ConfigError("ratio_clip must be positive");
}

GRPOConfig GRPOConfig::from_json(const nlohmann::json& j) {
  GRPOConfig cfg;
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.kl_coefficient = j.value("kl_coefficient", cfg.kl_coefficient);
  cfg.update_epochs = j.value("update_epochs", cfg.update_epochs);
  cfg.normalize_advantages_by_std =
      j.value("normalize_advantages_by_std", cfg.normalize_advantages_by_std);
  if (j.contains("ratio_clip") && !j.at("ratio_clip").is_null())
    cfg.ratio_clip = j.at("ratio_clip").get<double>();
  cfg.validate();
  return cfg;
}

nlohmann::json GRPOConfig::to_json() const {
  nlohmann::json j{{"group_size", group_size},
                   {"kl_coefficient", kl_coefficient},
                   {"update_epochs", update_epochs},
                   {"normalize_advantages_by_std", normalize_advantages_by_std}};
  if (ratio_clip) j["ratio_clip"] = *ratio_clip;
  return j;
}

GRPOConfig GRPOConfig::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                       const GRPOConfig& cfg) {
  if (rewards.size() < 2)
    throw GroupTooSmall("need at least 2 rewards, got " + std::to_string(rewards.size()));
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (cfg.normalize_advantages_by_std) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    const double sd = std::sqrt(var / n);
    for (double& a : adv) a /= sd + 1e-8;
  }
  return adv;
}

void finalize_group(SampleGroup& group, const GRPOConfig& cfg) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const auto& r : group.responses) rewards.push_back(r.reward_total);
  group.advantages = compute_advantages(rewards, cfg);
  group.mean_reward =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
}

KlEstimate estimate_kl(std::span<const double> logp_policy, std::span<const double> logp_ref) {
  if (logp_policy.size() != logp_ref.size() || logp_policy.empty())
    throw LengthMismatch("kl estimator needs equal nonempty log-prob streams");
  KlEstimate est;
  est.per_token.resize(logp_policy.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < logp_policy.size(); ++t) {
    const double d = logp_ref[t] - logp_policy[t];
    // expm1 keeps the estimate nonnegative for tiny |d|.
    const double k = std::expm1(d) - d;
    est.per_token[t] = k;
    sum += k;
  }
  est.mean = sum / static_cast<double>(logp_policy.size());
  return est;
}

namespace {

std::vector<double> group_advantages(const SampleGroup& group, const GRPOConfig& cfg) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const auto& r : group.responses) rewards.push_back(r.reward_total);
  return compute_advantages(rewards, cfg);
}

void require_ref_logprobs(const SampleGroup& group) {
  for (const auto& r : group.responses) {
    if (!r.logp_ref || r.logp_ref->size() != r.logp_policy.size()) {
      throw MissingReferenceLogprobs(
          "kl_coefficient > 0 requires reference log-probabilities on every response");
    }
  }
}

}  // namespace

ObjectiveResult grpo_objective(const SampleGroup& group, const GRPOConfig& cfg,
                               bool fold_kl_into_coefficients) {
  const auto adv = group_advantages(group, cfg);
  const bool use_kl = cfg.kl_coefficient > 0.0;
  if (use_kl) require_ref_logprobs(group);

  ObjectiveResult res;
  res.per_token_coefficients.resize(group.responses.size());
  const double g = static_cast<double>(group.responses.size());

  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& r = group.responses[i];
    double logp_sum = std::accumulate(r.logp_policy.begin(), r.logp_policy.end(), 0.0);
    res.scalar += adv[i] * logp_sum;

    auto& coeff = res.per_token_coefficients[i];
    coeff.assign(r.logp_policy.size(), adv[i]);

    if (use_kl) {
      auto kl = estimate_kl(r.logp_policy, *r.logp_ref);
      res.kl_mean += kl.mean / g;
      if (fold_kl_into_coefficients) {
        const double t_count = static_cast<double>(r.logp_policy.size());
        for (std::size_t t = 0; t < coeff.size(); ++t) {
          const double d = (*r.logp_ref)[t] - r.logp_policy[t];
          coeff[t] -= cfg.kl_coefficient / (g * t_count) * (1.0 - std::exp(d));
        }
      }
    }
  }
  res.scalar -= cfg.kl_coefficient * res.kl_mean;
  return res;
}

namespace {

struct RefreshedGroup {
  std::vector<std::vector<double>> logp_now;  // under current parameters
};

RefreshedGroup refresh_logprobs(const DifferentiablePolicy& policy, const SampleGroup& group) {
  RefreshedGroup out;
  out.logp_now.reserve(group.responses.size());
  for (const auto& r : group.responses) {
    auto lp = policy.response_logprobs(r.rollout_id);
    if (lp.size() != r.logp_policy.size())
      throw LengthMismatch("policy returned a different token count for rollout " +
                           std::to_string(r.rollout_id));
    out.logp_now.push_back(std::move(lp));
  }
  return out;
}

}  // namespace

double grpo_surrogate(const DifferentiablePolicy& policy, const SampleGroup& group,
                      const GRPOConfig& cfg) {
  const auto adv = group_advantages(group, cfg);
  const bool use_kl = cfg.kl_coefficient > 0.0;
  if (use_kl) require_ref_logprobs(group);
  const auto refreshed = refresh_logprobs(policy, group);
  const double g = static_cast<double>(group.responses.size());

  double scalar = 0.0;
  double kl_mean = 0.0;
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& now = refreshed.logp_now[i];
    const auto& r = group.responses[i];
    if (cfg.ratio_clip) {
      const double eps = *cfg.ratio_clip;
      for (std::size_t t = 0; t < now.size(); ++t) {
        const double ratio = std::exp(now[t] - r.logp_policy[t]);
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
        scalar += std::min(ratio * adv[i], clipped * adv[i]);
      }
    } else {
      scalar += adv[i] * std::accumulate(now.begin(), now.end(), 0.0);
    }
    if (use_kl) {
      kl_mean += estimate_kl(now, *r.logp_ref).mean / g;
    }
  }
  return scalar - cfg.kl_coefficient * kl_mean;
}

std::vector<double> grpo_gradient(const DifferentiablePolicy& policy, const SampleGroup& group,
                                  const GRPOConfig& cfg) {
  const auto adv = group_advantages(group, cfg);
  const bool use_kl = cfg.kl_coefficient > 0.0;
  if (use_kl) require_ref_logprobs(group);
  const auto refreshed = refresh_logprobs(policy, group);
  const double g = static_cast<double>(group.responses.size());

  std::vector<double> grad(policy.param_count(), 0.0);
  std::vector<double> coeff;
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& now = refreshed.logp_now[i];
    const auto& r = group.responses[i];
    coeff.assign(now.size(), 0.0);

    if (cfg.ratio_clip) {
      const double eps = *cfg.ratio_clip;
      for (std::size_t t = 0; t < now.size(); ++t) {
        const double ratio = std::exp(now[t] - r.logp_policy[t]);
        const bool clipped_out = (adv[i] > 0.0 && ratio > 1.0 + eps) ||
                                 (adv[i] < 0.0 && ratio < 1.0 - eps);
        coeff[t] = clipped_out ? 0.0 : adv[i] * ratio;
      }
    } else {
      for (double& c : coeff) c = adv[i];
    }

    if (use_kl) {
      const double t_count = static_cast<double>(now.size());
      for (std::size_t t = 0; t < now.size(); ++t) {
        const double d = (*r.logp_ref)[t] - now[t];
        coeff[t] -= cfg.kl_coefficient / (g * t_count) * (1.0 - std::exp(d));
      }
    }
    policy.accumulate_logprob_gradient(r.rollout_id, coeff, grad);
  }

  for (double v : grad) {
    if (!std::isfinite(v)) throw NonFiniteGradient("gradient contains NaN/Inf");
  }
  return grad;
}

void export_advantage_batch(const std::filesystem::path& path,
                            const std::vector<SampleGroup>& groups, const GRPOConfig& cfg) {
  std::vector<Json> rows;
  for (const auto& group : groups) {
    const bool have_ref = cfg.kl_coefficient > 0.0 &&
                          std::all_of(group.responses.begin(), group.responses.end(),
                                      [](const SampleResponse& r) {
                                        return r.logp_ref &&
                                               r.logp_ref->size() == r.logp_policy.size();
                                      });
    GRPOConfig effective = cfg;
    if (!have_ref) effective.kl_coefficient = 0.0;
    auto obj = grpo_objective(group, effective, /*fold_kl_into_coefficients=*/true);
    auto adv = group_advantages(group, cfg);
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      double kl_mean = 0.0;
      if (have_ref) {
        kl_mean = estimate_kl(group.responses[i].logp_policy, *group.responses[i].logp_ref).mean;
      }
      rows.push_back({{"prompt_id", group.prompt_id},
                      {"response_index", i},
                      {"text", group.responses[i].text},
                      {"advantage", adv[i]},
                      {"per_token_coefficients", obj.per_token_coefficients[i]},
                      {"kl_mean", kl_mean}});
    }
  }
  write_jsonl(path, rows);
}

}  // namespace cotc
