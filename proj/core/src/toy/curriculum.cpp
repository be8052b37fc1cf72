#include "cotc/toy/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"

namespace cotc::toy {

std::vector<ToyExample> build_stage1_examples(std::span<const SyntheticTask> tasks,
                                              const CorruptionConfig& cfg, int count) {
  if (tasks.empty()) throw ConfigError("build_stage1_examples: no tasks");
  std::vector<ToyExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const auto& task = tasks[static_cast<std::size_t>(k) % tasks.size()];
    Rng rng(derive_seed(cfg.seed, task.id + "#" + std::to_string(k)));
    ToyExample ex;
    ex.task = task;
    ex.corrupted = build_stage1_example(teacher_trace(task), cfg, rng);
    ex.target = teacher_actions(task);
    out.push_back(std::move(ex));
  }
  return out;
}

double stage1_loss(const ToyPolicy& policy, const std::vector<ToyExample>& examples) {
  double total = 0.0;
  for (const auto& ex : examples) {
    total += policy.nll_add_grad(ex.task, ex.target, {});
  }
  return total / static_cast<double>(examples.size());
}

ToyPolicy stage1_fit(const ToyPolicy& policy, const std::vector<ToyExample>& examples, double lr,
                     int epochs) {
  if (examples.empty()) throw ConfigError("stage1_fit: no examples");
  ToyPolicy fitted = policy;
  std::vector<double> grad(fitted.param_count(), 0.0);
  const double n = static_cast<double>(examples.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (const auto& ex : examples) {
      loss += fitted.nll_add_grad(ex.task, ex.target, grad);
    }
    if (!std::isfinite(loss)) {
      throw DivergenceDetected("stage-1 loss is not finite at epoch " + std::to_string(epoch));
    }
    for (double& g : grad) g /= n;
    fitted.apply_step(grad, -lr);  // descent on the NLL
  }
  return fitted;
}

double reconstruction_rate(const ToyPolicy& policy, const std::vector<ToyExample>& examples) {
  if (examples.empty()) return 0.0;
  int exact = 0;
  for (const auto& ex : examples) {
    auto roll = policy.greedy(ex.task, /*scaffolded=*/false);
    if (roll.exec.text == ex.corrupted.target) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(examples.size());
}

bool rollout_correct(const SyntheticTask& task, const std::string& response) {
  auto pred = extract_final_answer(response);
  if (!pred) return false;
  return grade_answer(*pred, AnswerValue::from_raw(std::to_string(task.gold)));
}

ToyEval evaluate_policy(const ToyPolicy& policy, std::span<const SyntheticTask> tasks,
                        bool scaffolded) {
  ToyEval eval;
  if (tasks.empty()) return eval;
  for (const auto& task : tasks) {
    auto roll = policy.greedy(task, scaffolded);
    if (rollout_correct(task, roll.exec.text)) eval.accuracy += 1.0;
    eval.mean_tokens += roll.exec.token_count;
    eval.mean_steps += static_cast<double>(roll.exec.steps.size());
  }
  const double n = static_cast<double>(tasks.size());
  eval.accuracy /= n;
  eval.mean_tokens /= n;
  eval.mean_steps /= n;
  return eval;
}

ToyHardSet identify_hard(const ToyPolicy& policy, std::span<const SyntheticTask> tasks) {
  ToyHardSet hard;
  for (const auto& task : tasks) {
    auto roll = policy.greedy(task, /*scaffolded=*/false);
    if (!rollout_correct(task, roll.exec.text)) {
      hard.tasks.push_back(task);
      hard.failing_responses.push_back(roll.exec.text);
    }
  }
  return hard;
}

double scaffold_compression_feasibility(const ToyPolicy& policy, const ToyHardSet& hard,
                                        int group_size, int attempts, std::uint64_t seed) {
  if (hard.empty()) throw ConfigError("feasibility needs a nonempty hard set");
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  ToyPolicy sampler = policy;  // keeps the caller's rollout registry untouched
  int eligible = 0;
  int feasible = 0;
  for (const auto& task : hard.tasks) {
    const auto teacher = teacher_trace(task);
    if (minimal_correct_tokens(task) >= teacher.teacher_token_count) continue;  // cannot be shorter
    ++eligible;
    Rng rng(derive_seed(seed, task.id));
    bool ok = false;
    for (int a = 0; a < attempts && !ok; ++a) {
      auto roll = sampler.sample(task, /*scaffolded=*/true, rng);
      ok = roll.exec.token_count < teacher.teacher_token_count &&
           rollout_correct(task, roll.exec.text);
      if (sampler.rollout_count() > 4096) sampler.clear_rollouts();
    }
    if (ok) ++feasible;
  }
  if (eligible == 0) return 1.0;
  return static_cast<double>(feasible) / static_cast<double>(eligible);
}

GrpoStepStats grpo_train_step(ToyPolicy& policy, const ToyPolicy& reference,
                              std::span<const SyntheticTask> batch, int stage, bool scaffolded,
                              const RewardConfig& reward_cfg, const GRPOConfig& grpo_cfg,
                              double lr, Rng& rng) {
  GrpoStepStats stats;
  if (batch.empty()) return stats;

  std::vector<SampleGroup> groups;
  groups.reserve(batch.size());
  for (const auto& task : batch) {
    const auto teacher = teacher_trace(task);
    const int teacher_steps = static_cast<int>(teacher.steps.size());

    SampleGroup group;
    group.prompt_id = task.id;
    for (int i = 0; i < grpo_cfg.group_size; ++i) {
      auto roll = policy.sample(task, scaffolded, rng);
      const bool correct = rollout_correct(task, roll.exec.text);
      const auto fmt = format_check(roll.exec.text);
      RewardBreakdown breakdown =
          stage == 2 ? reward_stage2(correct, fmt.ok, roll.exec.token_count,
                                     static_cast<int>(roll.exec.steps.size()),
                                     teacher.teacher_token_count, teacher_steps, reward_cfg)
                     : reward_stage3(correct, fmt.ok, roll.exec.token_count,
                                     teacher.teacher_token_count, reward_cfg);

      SampleResponse resp;
      resp.text = roll.exec.text;
      resp.reward_total = breakdown.total;
      for (Action a : roll.actions) resp.tokens.emplace_back(action_name(a));
      resp.logp_policy = roll.logp;
      resp.logp_ref = reference.action_logprobs(task, roll.actions, scaffolded);
      resp.rollout_id = roll.id;

      stats.mean_reward += breakdown.total;
      stats.kl_mean += estimate_kl(resp.logp_policy, *resp.logp_ref).mean;
      ++stats.response_count;
      group.responses.push_back(std::move(resp));
    }
    finalize_group(group, grpo_cfg);
    groups.push_back(std::move(group));
  }
  stats.mean_reward /= stats.response_count;
  stats.kl_mean /= stats.response_count;

  std::vector<double> grad(policy.param_count());
  for (int epoch = 0; epoch < grpo_cfg.update_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& group : groups) {
      auto g = grpo_gradient(policy, group, grpo_cfg);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
    for (double& g : grad) g /= static_cast<double>(groups.size());
    policy.apply_step(grad, lr);
  }
  policy.clear_rollouts();
  return stats;
}

ToyLabConfig::ToyLabConfig() {
  // The paper-scale GRPO defaults target a neural student; the toy policy
  // trains with a lighter KL leash and single-epoch updates.
  grpo.kl_coefficient = 0.01;
  grpo.update_epochs = 1;
  corruption.seed = seed;
}

namespace {

CorruptionConfig corruption_from_json(const nlohmann::json& j, CorruptionConfig cfg) {
  cfg.shuffle = j.value("shuffle", cfg.shuffle);
  cfg.mask_rate = j.value("mask_rate", cfg.mask_rate);
  cfg.sample_mask_prob = j.value("sample_mask_prob", cfg.sample_mask_prob);
  cfg.min_masks = j.value("min_masks", cfg.min_masks);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.mask_token = j.value("mask_token", cfg.mask_token);
  return cfg;
}

GRPOConfig grpo_from_json(const nlohmann::json& j, GRPOConfig cfg) {
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.kl_coefficient = j.value("kl_coefficient", cfg.kl_coefficient);
  cfg.update_epochs = j.value("update_epochs", cfg.update_epochs);
  cfg.normalize_advantages_by_std =
      j.value("normalize_advantages_by_std", cfg.normalize_advantages_by_std);
  if (j.contains("ratio_clip") && !j.at("ratio_clip").is_null())
    cfg.ratio_clip = j.at("ratio_clip").get<double>();
  return cfg;
}

ToyPolicyConfig policy_from_json_defaults(const nlohmann::json& j, ToyPolicyConfig cfg) {
  cfg.max_positions = j.value("max_positions", cfg.max_positions);
  cfg.max_ops = j.value("max_ops", cfg.max_ops);
  cfg.hash_buckets_per_arity = j.value("hash_buckets_per_arity", cfg.hash_buckets_per_arity);
  cfg.scaffold_bias = j.value("scaffold_bias", cfg.scaffold_bias);
  return cfg;
}

}  // namespace

ToyLabConfig ToyLabConfig::from_json(const nlohmann::json& j) {
  ToyLabConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.task_count = j.value("task_count", cfg.task_count);
  cfg.redundancy_factor = j.value("redundancy_factor", cfg.redundancy_factor);
  cfg.eval_count = j.value("eval_count", cfg.eval_count);
  cfg.max_main_operands = j.value("max_main_operands", cfg.max_main_operands);
  cfg.stage1_examples = j.value("stage1_examples", cfg.stage1_examples);
  cfg.stage1_lr = j.value("stage1_lr", cfg.stage1_lr);
  cfg.stage1_epochs = j.value("stage1_epochs", cfg.stage1_epochs);
  cfg.stage2_lr = j.value("stage2_lr", cfg.stage2_lr);
  cfg.stage2_max_steps = j.value("stage2_max_steps", cfg.stage2_max_steps);
  cfg.stage2_min_steps = j.value("stage2_min_steps", cfg.stage2_min_steps);
  cfg.stage2_batch_tasks = j.value("stage2_batch_tasks", cfg.stage2_batch_tasks);
  cfg.plateau_window = j.value("plateau_window", cfg.plateau_window);
  cfg.plateau_epsilon = j.value("plateau_epsilon", cfg.plateau_epsilon);
  cfg.require_plateau = j.value("require_plateau", cfg.require_plateau);
  cfg.stage3_lr = j.value("stage3_lr", cfg.stage3_lr);
  cfg.stage3_epochs = j.value("stage3_epochs", cfg.stage3_epochs);
  cfg.stage3_batch_tasks = j.value("stage3_batch_tasks", cfg.stage3_batch_tasks);
  cfg.scaffold_attempts = j.value("scaffold_attempts", cfg.scaffold_attempts);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.hacking_steps = j.value("hacking_steps", cfg.hacking_steps);
  cfg.linear_alpha = j.value("linear_alpha", cfg.linear_alpha);
  cfg.linear_beta = j.value("linear_beta", cfg.linear_beta);
  if (j.contains("corruption")) cfg.corruption = corruption_from_json(j.at("corruption"), cfg.corruption);
  if (j.contains("reward")) cfg.reward = RewardConfig::from_json(j.at("reward"));
  if (j.contains("grpo")) cfg.grpo = grpo_from_json(j.at("grpo"), cfg.grpo);
  if (j.contains("policy")) cfg.policy = policy_from_json_defaults(j.at("policy"), cfg.policy);
  cfg.corruption.validate();
  cfg.reward.validate();
  cfg.grpo.validate();
  cfg.policy.validate();
  return cfg;
}

nlohmann::json ToyLabConfig::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"task_count", task_count},
                   {"redundancy_factor", redundancy_factor},
                   {"eval_count", eval_count},
                   {"max_main_operands", max_main_operands},
                   {"stage1_examples", stage1_examples},
                   {"stage1_lr", stage1_lr},
                   {"stage1_epochs", stage1_epochs},
                   {"stage2_lr", stage2_lr},
                   {"stage2_max_steps", stage2_max_steps},
                   {"stage2_min_steps", stage2_min_steps},
                   {"stage2_batch_tasks", stage2_batch_tasks},
                   {"plateau_window", plateau_window},
                   {"plateau_epsilon", plateau_epsilon},
                   {"require_plateau", require_plateau},
                   {"stage3_lr", stage3_lr},
                   {"stage3_epochs", stage3_epochs},
                   {"stage3_batch_tasks", stage3_batch_tasks},
                   {"scaffold_attempts", scaffold_attempts},
                   {"eval_every", eval_every},
                   {"hacking_steps", hacking_steps},
                   {"linear_alpha", linear_alpha},
                   {"linear_beta", linear_beta}};
  j["corruption"] = {{"shuffle", corruption.shuffle},
                     {"mask_rate", corruption.mask_rate},
                     {"sample_mask_prob", corruption.sample_mask_prob},
                     {"min_masks", corruption.min_masks},
                     {"seed", corruption.seed},
                     {"mask_token", corruption.mask_token}};
  j["reward"] = reward.to_json();
  j["grpo"] = grpo.to_json();
  j["policy"] = {{"max_positions", policy.max_positions},
                 {"max_ops", policy.max_ops},
                 {"hash_buckets_per_arity", policy.hash_buckets_per_arity},
                 {"scaffold_bias", policy.scaffold_bias}};
  return j;
}

ToyLabConfig ToyLabConfig::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

namespace {

std::vector<SyntheticTask> filter_main(const std::vector<SyntheticTask>& tasks, int max_operands) {
  std::vector<SyntheticTask> out;
  for (const auto& t : tasks)
    if (static_cast<int>(t.operands.size()) <= max_operands) out.push_back(t);
  return out;
}

std::vector<SyntheticTask> draw_batch(const std::vector<SyntheticTask>& pool, int count, Rng& rng) {
  std::vector<SyntheticTask> batch;
  batch.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    batch.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
  return batch;
}

}  // namespace

CurriculumResult run_curriculum(const ToyLabConfig& cfg) {
  cfg.policy.validate();
  cfg.reward.validate();
  cfg.grpo.validate();

  CurriculumResult result;
  result.policy_config = cfg.policy;

  const auto train_tasks = gen_tasks(cfg.seed, cfg.task_count, cfg.redundancy_factor);
  const auto train_main = filter_main(train_tasks, cfg.max_main_operands);
  const auto eval_all = gen_tasks(mix_seed(cfg.seed, 1), cfg.eval_count * 2, cfg.redundancy_factor);
  auto eval_main = filter_main(eval_all, cfg.max_main_operands);
  if (eval_main.size() > static_cast<std::size_t>(cfg.eval_count))
    eval_main.resize(static_cast<std::size_t>(cfg.eval_count));
  if (train_main.empty() || eval_main.empty())
    throw ConfigError("task generation produced no within-capacity tasks");

  // ---- Stage 1: structure-aware warmup -----------------------------------
  auto examples = build_stage1_examples(train_main, cfg.corruption, cfg.stage1_examples);
  ToyPolicy policy = stage1_fit(ToyPolicy(cfg.policy), examples, cfg.stage1_lr, cfg.stage1_epochs);
  const ToyPolicy snapshot_s1 = policy;
  result.policy_s1 = snapshot_s1.params();

  CorruptionConfig eval_corruption = cfg.corruption;
  eval_corruption.seed = mix_seed(cfg.corruption.seed, 2);
  auto heldout = build_stage1_examples(eval_main, eval_corruption,
                                       static_cast<int>(eval_main.size()));
  result.stage1_reconstruction = reconstruction_rate(policy, heldout);
  result.s1_eval = evaluate_policy(policy, eval_main);

  // ---- Stage 2: GRPO compression until the reward plateaus ----------------
  Rng rng(mix_seed(cfg.seed, 10));
  std::deque<double> window;
  double best_windowed = -std::numeric_limits<double>::infinity();
  int best_step = 0;
  ToyEval last_eval = result.s1_eval;

  for (int step = 1; step <= cfg.stage2_max_steps; ++step) {
    auto batch = draw_batch(train_main, cfg.stage2_batch_tasks, rng);
    auto stats = grpo_train_step(policy, snapshot_s1, batch, /*stage=*/2, /*scaffolded=*/false,
                                 cfg.reward, cfg.grpo, cfg.stage2_lr, rng);
    window.push_back(stats.mean_reward);
    if (static_cast<int>(window.size()) > cfg.plateau_window) window.pop_front();

    if (step % cfg.eval_every == 0) last_eval = evaluate_policy(policy, eval_main);
    result.records.push_back({2, step, stats.mean_reward, last_eval.accuracy,
                              last_eval.mean_tokens, stats.kl_mean});
    result.stage2_steps = step;

    if (static_cast<int>(window.size()) == cfg.plateau_window) {
      const double windowed =
          std::accumulate(window.begin(), window.end(), 0.0) / window.size();
      if (windowed > best_windowed + cfg.plateau_epsilon) {
        best_windowed = windowed;
        best_step = step;
      } else if (step >= cfg.stage2_min_steps && step - best_step >= cfg.plateau_window) {
        result.stage2_plateaued = true;
        break;
      }
    }
  }
  if (!result.stage2_plateaued && cfg.require_plateau) {
    throw PlateauNeverReached("stage 2 never plateaued within " +
                              std::to_string(cfg.stage2_max_steps) + " steps");
  }

  const ToyPolicy snapshot_s2 = policy;
  result.policy_s2 = snapshot_s2.params();
  result.s2_eval = evaluate_policy(policy, eval_main);

  // ---- Hard-set identification over the full training set -----------------
  auto hard = identify_hard(snapshot_s2, train_tasks);
  result.hard_count = static_cast<int>(hard.size());
  if (!hard.empty()) {
    result.hard_accuracy_before = evaluate_policy(snapshot_s2, hard.tasks).accuracy;
    result.scaffold_feasibility = scaffold_compression_feasibility(
        snapshot_s2, hard, cfg.grpo.group_size, cfg.scaffold_attempts, mix_seed(cfg.seed, 3));

    // ---- Stage 3: teacher-guided internalization on the hard set ----------
    Rng rng3(mix_seed(cfg.seed, 4));
    int gstep = 0;
    ToyEval hard_eval = evaluate_policy(policy, hard.tasks);
    for (int epoch = 0; epoch < cfg.stage3_epochs; ++epoch) {
      for (std::size_t offset = 0; offset < hard.tasks.size();
           offset += static_cast<std::size_t>(cfg.stage3_batch_tasks)) {
        const std::size_t end =
            std::min(hard.tasks.size(), offset + static_cast<std::size_t>(cfg.stage3_batch_tasks));
        std::span<const SyntheticTask> chunk(hard.tasks.data() + offset, end - offset);
        auto stats = grpo_train_step(policy, snapshot_s2, chunk, /*stage=*/3,
                                     /*scaffolded=*/true, cfg.reward, cfg.grpo, cfg.stage3_lr,
                                     rng3);
        ++gstep;
        if (gstep % cfg.eval_every == 0) hard_eval = evaluate_policy(policy, hard.tasks);
        result.records.push_back({3, gstep, stats.mean_reward, hard_eval.accuracy,
                                  hard_eval.mean_tokens, stats.kl_mean});
      }
    }
    result.hard_accuracy_after = evaluate_policy(policy, hard.tasks).accuracy;
  }

  result.policy_final = policy.params();
  result.final_eval = evaluate_policy(policy, eval_main);
  return result;
}

void write_curriculum_artifacts(const std::filesystem::path& dir, const CurriculumResult& result,
                                const ToyLabConfig& cfg) {
  std::filesystem::create_directories(dir);

  std::vector<Json> log_rows;
  log_rows.reserve(result.records.size());
  std::string csv = "stage,step,mean_reward,accuracy,mean_length_tokens,kl_mean\n";
  for (const auto& rec : result.records) {
    log_rows.push_back({{"stage", rec.stage},
                        {"step", rec.step},
                        {"mean_reward", rec.mean_reward},
                        {"accuracy", rec.accuracy},
                        {"mean_length_tokens", rec.mean_length_tokens},
                        {"kl_mean", rec.kl_mean}});
    csv += std::to_string(rec.stage) + ',' + std::to_string(rec.step) + ',' +
           std::to_string(rec.mean_reward) + ',' + std::to_string(rec.accuracy) + ',' +
           std::to_string(rec.mean_length_tokens) + ',' + std::to_string(rec.kl_mean) + '\n';
  }
  write_jsonl(dir / "trainlog.jsonl", log_rows);
  write_file_atomic(dir / "summary.csv", csv);

  auto dump_checkpoint = [&](const std::string& name, const std::vector<double>& params) {
    Json j{{"params", params},
           {"policy", {{"max_positions", result.policy_config.max_positions},
                       {"max_ops", result.policy_config.max_ops},
                       {"hash_buckets_per_arity", result.policy_config.hash_buckets_per_arity},
                       {"scaffold_bias", result.policy_config.scaffold_bias}}}};
    write_file_atomic(dir / name, j.dump(2) + "\n");
  };
  dump_checkpoint("checkpoint_s1.json", result.policy_s1);
  dump_checkpoint("checkpoint_s2.json", result.policy_s2);
  dump_checkpoint("checkpoint_final.json", result.policy_final);

  Json summary{{"stage1_reconstruction", result.stage1_reconstruction},
               {"s1_accuracy", result.s1_eval.accuracy},
               {"s1_mean_tokens", result.s1_eval.mean_tokens},
               {"s2_accuracy", result.s2_eval.accuracy},
               {"s2_mean_tokens", result.s2_eval.mean_tokens},
               {"final_accuracy", result.final_eval.accuracy},
               {"final_mean_tokens", result.final_eval.mean_tokens},
               {"hard_count", result.hard_count},
               {"hard_accuracy_before", result.hard_accuracy_before},
               {"hard_accuracy_after", result.hard_accuracy_after},
               {"scaffold_feasibility", result.scaffold_feasibility},
               {"stage2_plateaued", result.stage2_plateaued},
               {"stage2_steps", result.stage2_steps},
               {"config", cfg.to_json()}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

namespace {

double linear_reward(bool correct, int tokens, double alpha, double beta) {
  return (correct ? alpha : 0.0) - beta * tokens;
}

// One GRPO step under the naive linear reward (no KL, matching the fixture's
// point that the reward alone drives the collapse).
void linear_train_step(ToyPolicy& policy, std::span<const SyntheticTask> batch, double alpha,
                       double beta, const GRPOConfig& grpo_cfg, double lr, Rng& rng) {
  GRPOConfig cfg = grpo_cfg;
  cfg.kl_coefficient = 0.0;
  std::vector<SampleGroup> groups;
  for (const auto& task : batch) {
    SampleGroup group;
    group.prompt_id = task.id;
    for (int i = 0; i < cfg.group_size; ++i) {
      auto roll = policy.sample(task, /*scaffolded=*/false, rng);
      SampleResponse resp;
      resp.text = roll.exec.text;
      resp.reward_total =
          linear_reward(rollout_correct(task, roll.exec.text), roll.exec.token_count, alpha, beta);
      resp.logp_policy = roll.logp;
      resp.rollout_id = roll.id;
      group.responses.push_back(std::move(resp));
    }
    finalize_group(group, cfg);
    groups.push_back(std::move(group));
  }
  std::vector<double> grad(policy.param_count(), 0.0);
  for (const auto& group : groups) {
    auto g = grpo_gradient(policy, group, cfg);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }
  for (double& g : grad) g /= static_cast<double>(groups.size());
  policy.apply_step(grad, lr);
  policy.clear_rollouts();
}

// Mean reward of a policy's greedy responses under a reward function.
template <typename RewardFn>
double mean_greedy_reward(const ToyPolicy& policy, std::span<const SyntheticTask> tasks,
                          RewardFn&& fn) {
  double total = 0.0;
  for (const auto& task : tasks) {
    auto roll = policy.greedy(task, /*scaffolded=*/false);
    total += fn(task, roll);
  }
  return total / static_cast<double>(tasks.size());
}

}  // namespace

HackingDemoResult run_reward_hacking_demo(const ToyLabConfig& cfg) {
  HackingDemoResult demo;

  const auto tasks = gen_tasks(cfg.seed, cfg.task_count, cfg.redundancy_factor);
  const auto main = filter_main(tasks, cfg.max_main_operands);
  auto examples = build_stage1_examples(main, cfg.corruption, cfg.stage1_examples);
  const ToyPolicy s1 =
      stage1_fit(ToyPolicy(cfg.policy), examples, cfg.stage1_lr, cfg.stage1_epochs);

  // Degenerate answer-only policy: every context emits the answer template.
  ToyPolicy degenerate(cfg.policy);
  {
    auto params = degenerate.params();
    for (std::size_t i = static_cast<std::size_t>(Action::answer); i < params.size();
         i += kActionCount)
      params[i] = 12.0;
    degenerate.set_params(params);
  }

  auto hier_fn = [&](const SyntheticTask& task, const ToyPolicy::Rollout& roll) {
    const auto teacher = teacher_trace(task);
    const auto fmt = format_check(roll.exec.text);
    return reward_stage2(rollout_correct(task, roll.exec.text), fmt.ok, roll.exec.token_count,
                         static_cast<int>(roll.exec.steps.size()), teacher.teacher_token_count,
                         static_cast<int>(teacher.steps.size()), cfg.reward)
        .total;
  };
  auto lin_fn = [&](const SyntheticTask& task, const ToyPolicy::Rollout& roll) {
    return linear_reward(rollout_correct(task, roll.exec.text), roll.exec.token_count,
                         cfg.linear_alpha, cfg.linear_beta);
  };
  demo.degenerate_reward_hier = mean_greedy_reward(degenerate, main, hier_fn);
  demo.stage1_reward_hier = mean_greedy_reward(s1, main, hier_fn);
  demo.degenerate_reward_linear = mean_greedy_reward(degenerate, main, lin_fn);
  demo.stage1_reward_linear = mean_greedy_reward(s1, main, lin_fn);

  // Same snapshot, same draws, two reward schemes.
  GRPOConfig grpo_cfg = cfg.grpo;
  grpo_cfg.kl_coefficient = 0.0;

  ToyPolicy hier_policy = s1;
  Rng hier_rng(mix_seed(cfg.seed, 21));
  for (int step = 0; step < cfg.hacking_steps; ++step) {
    auto batch = draw_batch(main, cfg.stage2_batch_tasks, hier_rng);
    grpo_train_step(hier_policy, s1, batch, /*stage=*/2, /*scaffolded=*/false, cfg.reward,
                    grpo_cfg, cfg.stage2_lr, hier_rng);
  }

  ToyPolicy linear_policy = s1;
  Rng lin_rng(mix_seed(cfg.seed, 21));
  for (int step = 0; step < cfg.hacking_steps; ++step) {
    auto batch = draw_batch(main, cfg.stage2_batch_tasks, lin_rng);
    linear_train_step(linear_policy, batch, cfg.linear_alpha, cfg.linear_beta, grpo_cfg,
                      cfg.stage2_lr, lin_rng);
  }

  const auto eval_all = gen_tasks(mix_seed(cfg.seed, 1), cfg.eval_count * 2, cfg.redundancy_factor);
  auto eval_main = filter_main(eval_all, cfg.max_main_operands);
  demo.hierarchical_accuracy = evaluate_policy(hier_policy, eval_main).accuracy;
  demo.linear_accuracy = evaluate_policy(linear_policy, eval_main).accuracy;
  return demo;
}

}  // namespace cotc::toy
