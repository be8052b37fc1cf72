#include "cotc/toy/policy.hpp"

#include <algorithm>
#include <cmath>

#include "cotc/errors.hpp"

namespace cotc::toy {

void ToyPolicyConfig::validate() const {
  if (max_positions < 2) throw ConfigError("max_positions must be >= 2");
  if (max_ops < 1) throw ConfigError("max_ops must be >= 1");
  if (hash_buckets_per_arity < 1) throw ConfigError("hash_buckets_per_arity must be >= 1");
  if (param_count() > 256) {
    throw ConfigError("toy policy would need " + std::to_string(param_count()) +
                      " parameters; the budget is 256");
  }
}

ToyPolicy::ToyPolicy(ToyPolicyConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  theta_.assign(static_cast<std::size_t>(cfg_.param_count()), 0.0);
}

int ToyPolicy::bucket_of(const SyntheticTask& task) const {
  const int arity = std::min(task.op_count(), cfg_.max_ops);
  std::string key;
  for (int v : task.operands) {
    key += std::to_string(v);
    key += ',';
  }
  const int salt = static_cast<int>(fnv1a64(key) % static_cast<std::uint64_t>(
                                                        cfg_.hash_buckets_per_arity));
  return (arity - 1) * cfg_.hash_buckets_per_arity + salt;
}

std::array<double, kActionCount> ToyPolicy::log_probs_at(int pos, int bucket, bool scaffolded,
                                                         int ops_done, int ops_total) const {
  std::array<double, kActionCount> logits{};
  const std::size_t base = base_index(pos, bucket);
  for (int a = 0; a < kActionCount; ++a) logits[static_cast<std::size_t>(a)] = theta_[base + a];
  if (scaffolded) {
    const Action hinted = ops_done < ops_total ? Action::compute : Action::answer;
    logits[static_cast<std::size_t>(hinted)] += cfg_.scaffold_bias;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v -= mx;
    sum += std::exp(v);
  }
  const double log_sum = std::log(sum);
  for (double& v : logits) v -= log_sum;
  return logits;
}

namespace {

int advance_ops(Action a, int ops_done, int ops_total) {
  if ((a == Action::compute || a == Action::compute_wrong) && ops_done < ops_total)
    return ops_done + 1;
  return ops_done;
}

}  // namespace

ToyPolicy::Rollout ToyPolicy::sample(const SyntheticTask& task, bool scaffolded, Rng& rng) {
  Rollout roll;
  roll.scaffolded = scaffolded;
  const int bucket = bucket_of(task);
  const int m = task.op_count();
  int ops_done = 0;
  for (int pos = 0; pos < cfg_.max_positions; ++pos) {
    const auto logp = log_probs_at(pos, bucket, scaffolded, ops_done, m);
    double u = rng.real();
    int choice = kActionCount - 1;
    double acc = 0.0;
    for (int a = 0; a < kActionCount; ++a) {
      acc += std::exp(logp[static_cast<std::size_t>(a)]);
      if (u < acc) {
        choice = a;
        break;
      }
    }
    const auto action = static_cast<Action>(choice);
    roll.actions.push_back(action);
    roll.logp.push_back(logp[static_cast<std::size_t>(choice)]);
    if (action == Action::answer || action == Action::stop) break;
    ops_done = advance_ops(action, ops_done, m);
  }
  roll.exec = execute_actions(task, roll.actions);

  RolloutRecord rec;
  rec.bucket = bucket;
  rec.ops_total = m;
  rec.scaffolded = scaffolded;
  rec.actions = roll.actions;
  rollouts_.push_back(std::move(rec));
  roll.id = static_cast<std::int64_t>(rollouts_.size()) - 1;
  return roll;
}

ToyPolicy::Rollout ToyPolicy::greedy(const SyntheticTask& task, bool scaffolded) const {
  Rollout roll;
  roll.scaffolded = scaffolded;
  const int bucket = bucket_of(task);
  const int m = task.op_count();
  int ops_done = 0;
  for (int pos = 0; pos < cfg_.max_positions; ++pos) {
    const auto logp = log_probs_at(pos, bucket, scaffolded, ops_done, m);
    const int choice =
        static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    const auto action = static_cast<Action>(choice);
    roll.actions.push_back(action);
    roll.logp.push_back(logp[static_cast<std::size_t>(choice)]);
    if (action == Action::answer || action == Action::stop) break;
    ops_done = advance_ops(action, ops_done, m);
  }
  roll.exec = execute_actions(task, roll.actions);
  return roll;
}

std::vector<double> ToyPolicy::action_logprobs(const SyntheticTask& task,
                                               std::span<const Action> actions,
                                               bool scaffolded) const {
  const int bucket = bucket_of(task);
  const int m = task.op_count();
  std::vector<double> out;
  out.reserve(actions.size());
  int ops_done = 0;
  for (std::size_t pos = 0; pos < actions.size(); ++pos) {
    const auto logp = log_probs_at(static_cast<int>(pos), bucket, scaffolded, ops_done, m);
    out.push_back(logp[static_cast<std::size_t>(actions[pos])]);
    ops_done = advance_ops(actions[pos], ops_done, m);
  }
  return out;
}

double ToyPolicy::nll_add_grad(const SyntheticTask& task, std::span<const Action> target,
                               std::span<double> grad) const {
  if (static_cast<int>(target.size()) > cfg_.max_positions) {
    throw ConfigError("target sequence of length " + std::to_string(target.size()) +
                      " exceeds max_positions " + std::to_string(cfg_.max_positions));
  }
  const int bucket = bucket_of(task);
  const int m = task.op_count();
  double nll = 0.0;
  int ops_done = 0;
  for (std::size_t pos = 0; pos < target.size(); ++pos) {
    const auto logp = log_probs_at(static_cast<int>(pos), bucket, false, ops_done, m);
    const int want = static_cast<int>(target[pos]);
    nll -= logp[static_cast<std::size_t>(want)];
    if (!grad.empty()) {
      const std::size_t base = base_index(static_cast<int>(pos), bucket);
      for (int a = 0; a < kActionCount; ++a) {
        const double p = std::exp(logp[static_cast<std::size_t>(a)]);
        grad[base + static_cast<std::size_t>(a)] += p - (a == want ? 1.0 : 0.0);
      }
    }
    ops_done = advance_ops(target[pos], ops_done, m);
  }
  return nll;
}

void ToyPolicy::clear_rollouts() { rollouts_.clear(); }

void ToyPolicy::apply_step(std::span<const double> grad, double lr) {
  if (grad.size() != theta_.size()) throw LengthMismatch("gradient size mismatch");
  for (std::size_t i = 0; i < theta_.size(); ++i) theta_[i] += lr * grad[i];
}

void ToyPolicy::set_params(std::span<const double> p) {
  if (p.size() != theta_.size()) throw LengthMismatch("parameter size mismatch");
  theta_.assign(p.begin(), p.end());
}

const ToyPolicy::RolloutRecord& ToyPolicy::record(std::int64_t id) const {
  if (id < 0 || id >= static_cast<std::int64_t>(rollouts_.size()))
    throw Error("unknown rollout id " + std::to_string(id));
  return rollouts_[static_cast<std::size_t>(id)];
}

std::vector<double> ToyPolicy::response_logprobs(std::int64_t id) const {
  const auto& rec = record(id);
  std::vector<double> out;
  out.reserve(rec.actions.size());
  int ops_done = 0;
  for (std::size_t pos = 0; pos < rec.actions.size(); ++pos) {
    const auto logp =
        log_probs_at(static_cast<int>(pos), rec.bucket, rec.scaffolded, ops_done, rec.ops_total);
    out.push_back(logp[static_cast<std::size_t>(rec.actions[pos])]);
    ops_done = advance_ops(rec.actions[pos], ops_done, rec.ops_total);
  }
  return out;
}

void ToyPolicy::accumulate_logprob_gradient(std::int64_t id, std::span<const double> coeff,
                                            std::span<double> grad) const {
  const auto& rec = record(id);
  if (coeff.size() != rec.actions.size())
    throw LengthMismatch("coefficient count does not match rollout length");
  if (grad.size() != theta_.size()) throw LengthMismatch("gradient buffer size mismatch");
  int ops_done = 0;
  for (std::size_t pos = 0; pos < rec.actions.size(); ++pos) {
    const auto logp =
        log_probs_at(static_cast<int>(pos), rec.bucket, rec.scaffolded, ops_done, rec.ops_total);
    const int taken = static_cast<int>(rec.actions[pos]);
    const std::size_t base = base_index(static_cast<int>(pos), rec.bucket);
    for (int a = 0; a < kActionCount; ++a) {
      const double p = std::exp(logp[static_cast<std::size_t>(a)]);
      grad[base + static_cast<std::size_t>(a)] += coeff[pos] * ((a == taken ? 1.0 : 0.0) - p);
    }
    ops_done = advance_ops(rec.actions[pos], ops_done, rec.ops_total);
  }
}

}  // namespace cotc::toy
