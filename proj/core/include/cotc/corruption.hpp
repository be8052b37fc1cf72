#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cotc/rng.hpp"
#include "cotc/trace.hpp"

namespace cotc {

struct CorruptionConfig {
  bool shuffle = true;
  double mask_rate = 0.15;
  double sample_mask_prob = 0.7;  // p_sample: fraction of examples that get masks at all
  int min_masks = 1;              // the stage-2 builder raises the floor to 2
  std::uint64_t seed = 0;
  std::string mask_token = "<MASK>";

  void validate() const;
};

enum class CorruptionStage { stage1 = 1, stage2 = 2, stage3 = 3 };

struct CorruptedExample {
  std::string trace_id;
  // permutation[i] = original 1-based index shown at prompt position i.
  // Identity when shuffle is off (always, for stage 2).
  std::vector<int> permutation;
  std::set<int> masked_indices;  // original 1-based indices
  std::string prompt;
  std::string target;  // the complete, correctly ordered original chain
  CorruptionStage stage = CorruptionStage::stage1;
};

// Instruction lines the prompts start with.
extern const char* const kStage1Instruction;
extern const char* const kStage2Instruction;

// Uniform permutation of 1..n via sequential swap shuffle on the stream.
// n = 1 returns identity; identity permutations are not rejected.
std::vector<int> shuffle_steps(int n, Rng& rng);

// With probability sample_mask_prob draws k = max(min_masks,
// round_half_up(mask_rate * n)) distinct indices; otherwise returns the empty
// set (the shuffle-only share of examples). Throws MaskExceedsSteps if k > n.
std::set<int> mask_steps(int n, const CorruptionConfig& cfg, Rng& rng);

// Stage 1: shuffle every sample, mask per mask_steps, render the instruction
// plus "[Step]"-prefixed lines with masked steps replaced by the mask token.
CorruptedExample build_stage1_example(const ReasoningTrace& trace, const CorruptionConfig& cfg,
                                      Rng& rng);

// Stage 2: identity order, always masked, k = max(2, round_half_up(rate*n)),
// reduced to max(1, n-1) when n < 3 so at least one step stays visible.
CorruptedExample build_stage2_example(const ReasoningTrace& trace, const CorruptionConfig& cfg,
                                      Rng& rng);

// Stage 3 rewrite prompt; ends with "Your Concise Solution:".
std::string build_stage3_prompt(const std::string& question, const std::string& teacher_cot);

// Batch corruption. Each example draws from its own stream seeded by
// (cfg.seed, trace id), so output is deterministic under any scheduling.
std::vector<CorruptedExample> corrupt_traces(const std::vector<ReasoningTrace>& traces,
                                             const CorruptionConfig& cfg, CorruptionStage stage);

// Corrupted-dataset file: line-delimited
// {trace_id, stage, permutation, masked_indices, prompt, target}.
void write_corrupted(const std::filesystem::path& path,
                     const std::vector<CorruptedExample>& examples);
std::vector<CorruptedExample> read_corrupted(const std::filesystem::path& path);

}  // namespace cotc
