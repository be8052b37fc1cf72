#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cotc/client.hpp"
#include "cotc/corruption.hpp"
#include "cotc/grpo.hpp"
#include "cotc/reward.hpp"
#include "cotc/trace.hpp"

namespace cotc {

struct DatasetRecord {
  std::string id;
  std::string question;
  AnswerValue gold;
};

// Line-delimited records with `question` and `answer`; the gold value is the
// final "#### " marker in `answer`. Records without it raise
// MalformedRecord(line_no).
std::vector<DatasetRecord> ingest_dataset(const std::filesystem::path& path);

// Prompt renderings shared across the pipeline.
std::string teacher_prompt(const std::string& question);    // "Question: ...\nAnswer:"
std::string inference_prompt(const std::string& question);  // adds the step-by-step lead-in

struct CollectTeacherStats {
  int kept = 0;
  int total = 0;
  std::string report() const;  // "kept=K total=N"
};

// Samples one teacher completion per record, segments it into steps, grades
// it, and writes only the correct traces. Incorrect teacher outputs are
// logged, not silently discarded.
CollectTeacherStats collect_teacher(PolicyClient& client,
                                    const std::vector<DatasetRecord>& records,
                                    const std::filesystem::path& out_traces,
                                    const DecodingParams& decoding, int max_in_flight = 8);

struct PromptItem {
  std::string id;
  std::string prompt;
  std::string gold_raw;  // empty when grading happens elsewhere
  int baseline_tokens = 0;
  int baseline_steps = 0;
  int teacher_tokens = 0;
  int stage = 2;
};

// For each prompt, obtains exactly G completions (with per-token
// log-probabilities when the backend supports them) and appends one group
// row; groups with fewer than G completions after retries are dropped and
// logged, never padded. Pass ref_scorer to also record logp_ref for every
// completion. Output order is (prompt index, sample index) regardless of
// completion order.
int sample_groups(PolicyClient& client, const std::vector<PromptItem>& prompts, int group_size,
                  const DecodingParams& decoding, PolicyClient* ref_scorer,
                  const std::filesystem::path& out, int max_in_flight = 8);

struct DatasetHardSet {
  std::vector<std::string> failed_ids;
  std::vector<std::string> failing_responses;  // parallel to failed_ids
  std::vector<std::string> retained_ids;

  bool empty() const { return failed_ids.empty(); }
};

// One greedy response per record; incorrect ids form the hard set, persisted
// with the responses that failed.
DatasetHardSet identify_hard_dataset(PolicyClient& client,
                                     const std::vector<DatasetRecord>& records,
                                     int max_new_tokens = 512, int max_in_flight = 8);

void write_hard_set(const std::filesystem::path& path, const DatasetHardSet& hard);
void write_retained(const std::filesystem::path& path, const DatasetHardSet& hard);
DatasetHardSet read_hard_set(const std::filesystem::path& path);

// Computes rewards for every response in a groups file (requires gold_answer
// and stage-appropriate baselines on each row) and writes the annotated rows.
int apply_rewards_file(const std::filesystem::path& groups_in, int stage, const RewardConfig& cfg,
                       const std::filesystem::path& rewards_out);

// Rebuilds SampleGroups from a rewards file for advantage export. Rows
// without recorded log-probabilities get constant-length placeholders so the
// exported coefficient vectors still carry one entry per token.
std::vector<SampleGroup> read_reward_groups(const std::filesystem::path& rewards_in);

struct StageConfig {
  int stage = 2;  // 1 | 2 | 3
  CorruptionConfig corruption;
  RewardConfig reward;
  GRPOConfig grpo;
  DecodingParams decoding;
  int max_in_flight = 8;
};

struct StageArtifacts {
  std::filesystem::path corrupted;  // stages 1-2
  std::filesystem::path pairs;      // stage 1 (prompt, target) SFT pairs
  std::filesystem::path groups;     // stages 2-3
  std::filesystem::path rewards;    // stages 2-3
  std::filesystem::path batch;      // stages 2-3 advantage export
  int group_count = 0;
  bool no_op = false;  // stage 3 with an empty hard set
};

// Composes corruption -> sampling -> grading -> reward -> advantages -> batch
// export for one stage. Stage 1 needs no client (SFT pairs only). Stage 3
// prompts condition on the teacher scaffold and draw logp_ref from
// `ref_scorer` (point it at the stage-2 checkpoint's endpoint).
StageArtifacts run_stage(const StageConfig& cfg, const std::vector<ReasoningTrace>& traces,
                         const DatasetHardSet* hard, PolicyClient* client,
                         PolicyClient* ref_scorer, const std::filesystem::path& out_dir);

}  // namespace cotc
