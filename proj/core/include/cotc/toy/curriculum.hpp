#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotc/corruption.hpp"
#include "cotc/grpo.hpp"
#include "cotc/reward.hpp"
#include "cotc/toy/policy.hpp"
#include "cotc/toy/tasks.hpp"

namespace cotc::toy {

// One reconstruction training example: a corrupted rendering of the teacher
// trace plus the target action sequence that reproduces it.
struct ToyExample {
  SyntheticTask task;
  CorruptedExample corrupted;
  std::vector<Action> target;
};

std::vector<ToyExample> build_stage1_examples(std::span<const SyntheticTask> tasks,
                                              const CorruptionConfig& cfg, int count);

// Full-batch gradient descent on the step-template negative log-likelihood of
// the ordered targets. Returns the fitted snapshot; zero epochs returns the
// input unchanged. Throws DivergenceDetected when the loss stops being
// finite.
ToyPolicy stage1_fit(const ToyPolicy& policy, const std::vector<ToyExample>& examples, double lr,
                     int epochs);

double stage1_loss(const ToyPolicy& policy, const std::vector<ToyExample>& examples);

// Fraction of examples whose greedy (query-only) decode reproduces the target
// text exactly.
double reconstruction_rate(const ToyPolicy& policy, const std::vector<ToyExample>& examples);

bool rollout_correct(const SyntheticTask& task, const std::string& response);

struct ToyEval {
  double accuracy = 0.0;
  double mean_tokens = 0.0;
  double mean_steps = 0.0;
};

// Greedy decode per task, graded on the extracted final answer.
ToyEval evaluate_policy(const ToyPolicy& policy, std::span<const SyntheticTask> tasks,
                        bool scaffolded = false);

struct ToyHardSet {
  std::vector<SyntheticTask> tasks;
  std::vector<std::string> failing_responses;  // parallel to tasks

  bool empty() const { return tasks.empty(); }
  std::size_t size() const { return tasks.size(); }
};

// One greedy response per task; incorrect ones form the hard set together
// with the response that failed.
ToyHardSet identify_hard(const ToyPolicy& policy, std::span<const SyntheticTask> tasks);

// For each hard task, samples `attempts` scaffolded responses and counts the
// task feasible when at least one is correct AND strictly shorter (in tokens)
// than the teacher trace. Tasks whose teacher cannot be beaten in length are
// excluded from the denominator; with no eligible tasks the fraction is
// vacuously 1. `group_size` only sets the sampling granularity.
double scaffold_compression_feasibility(const ToyPolicy& policy, const ToyHardSet& hard,
                                        int group_size, int attempts, std::uint64_t seed);

// One GRPO update on a task batch: G sampled rollouts per task, stage reward,
// group-relative advantages, KL against the frozen reference, then
// update_epochs ascent steps with re-evaluated log-probabilities.
struct GrpoStepStats {
  double mean_reward = 0.0;
  double kl_mean = 0.0;
  int response_count = 0;
};

GrpoStepStats grpo_train_step(ToyPolicy& policy, const ToyPolicy& reference,
                              std::span<const SyntheticTask> batch, int stage, bool scaffolded,
                              const RewardConfig& reward_cfg, const GRPOConfig& grpo_cfg,
                              double lr, Rng& rng);

struct ToyLabConfig {
  std::uint64_t seed = 42;
  int task_count = 240;
  int redundancy_factor = 4;
  int eval_count = 100;
  int max_main_operands = 3;  // tasks with more operands form the capacity slice

  // stage 1. A moderate epoch count reaches exact greedy reconstruction while
  // keeping the sampled distribution soft enough for stage-2 exploration.
  int stage1_examples = 500;
  double stage1_lr = 0.5;
  int stage1_epochs = 12;

  // stage 2
  double stage2_lr = 0.15;
  int stage2_max_steps = 4000;
  int stage2_min_steps = 300;
  int stage2_batch_tasks = 8;
  int plateau_window = 150;
  double plateau_epsilon = 1e-3;
  bool require_plateau = true;

  // stage 3
  double stage3_lr = 0.3;
  int stage3_epochs = 5;
  int stage3_batch_tasks = 8;
  int scaffold_attempts = 16;

  int eval_every = 25;

  // reward-hacking demo
  int hacking_steps = 600;
  double linear_alpha = 1.0;
  double linear_beta = 0.25;

  CorruptionConfig corruption;
  RewardConfig reward;
  GRPOConfig grpo;  // toy defaults below: beta 0.01, single update epoch
  ToyPolicyConfig policy;

  ToyLabConfig();

  static ToyLabConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static ToyLabConfig load(const std::filesystem::path& path);
};

struct TrainLogRecord {
  int stage = 0;
  int step = 0;
  double mean_reward = 0.0;
  double accuracy = 0.0;
  double mean_length_tokens = 0.0;
  double kl_mean = 0.0;
};

struct CurriculumResult {
  std::vector<TrainLogRecord> records;

  ToyPolicyConfig policy_config;
  std::vector<double> policy_s1;  // immutable snapshots
  std::vector<double> policy_s2;
  std::vector<double> policy_final;

  double stage1_reconstruction = 0.0;
  ToyEval s1_eval;     // greedy metrics of the stage-1 snapshot on held-out tasks
  ToyEval s2_eval;     // same tasks, stage-2 snapshot
  ToyEval final_eval;  // same tasks, final policy

  int hard_count = 0;
  double hard_accuracy_before = 0.0;  // stage-2 snapshot on the hard set (query-only)
  double hard_accuracy_after = 0.0;   // final policy on the hard set (query-only)
  double scaffold_feasibility = 0.0;
  bool stage2_plateaued = false;
  int stage2_steps = 0;
};

// Algorithm: stage-1 reconstruction fit, stage-2 GRPO on masked-completion
// tasks with the stage-1 snapshot as KL reference until the windowed mean
// reward plateaus, hard-set identification, then stage-3 GRPO on scaffolded
// prompts with the stage-2 snapshot as reference.
CurriculumResult run_curriculum(const ToyLabConfig& cfg);

// Writes trainlog.jsonl, summary.csv, summary.json and the three policy
// checkpoints into `dir`.
void write_curriculum_artifacts(const std::filesystem::path& dir, const CurriculumResult& result,
                                const ToyLabConfig& cfg);

// The reward-misspecification fixture: starting from the same stage-1
// snapshot, GRPO under a naive linear reward (alpha * correct - beta * tokens)
// collapses to short incorrect outputs, while the hierarchical reward does
// not. Also reports the static mean-reward comparison between a degenerate
// answer-only policy and the stage-1 policy under both schemes.
struct HackingDemoResult {
  double hierarchical_accuracy = 0.0;
  double linear_accuracy = 0.0;
  double degenerate_reward_hier = 0.0;
  double stage1_reward_hier = 0.0;
  double degenerate_reward_linear = 0.0;
  double stage1_reward_linear = 0.0;
};

HackingDemoResult run_reward_hacking_demo(const ToyLabConfig& cfg);

}  // namespace cotc::toy
