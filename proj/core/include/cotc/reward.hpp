#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotc/trace.hpp"

namespace cotc {

// Hierarchical reward coefficients. Defaults are the deployed stage-2/3
// values; the single-term switch selects the plain ratio bonus instead of the
// two-part step/token bonus.
struct RewardConfig {
  double incorrect_penalty = -2.0;
  double format_penalty = -1.0;  // additive, applied on top of base
  double correct_base = 1.0;
  double step_bonus_cap = 0.9;
  double token_bonus_cap = 0.2;
  double compression_cap = 0.8;  // gamma
  double compression_floor = -0.8;
  bool use_single_term_bonus = false;
  // The combined-objective trade-off weight is never given a standalone
  // value; it is realized implicitly by the coefficients above.
  std::string lambda_note =
      "accuracy/brevity trade-off realized implicitly by the bonus caps";

  // Enforces the strict correctness ordering: the worst correct total must
  // still beat the best incorrect total.
  void validate() const;

  static RewardConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static RewardConfig load(const std::filesystem::path& path);
};

struct RewardBreakdown {
  double base = 0.0;
  double bonus = 0.0;  // exactly 0 when incorrect (gating)
  double total = 0.0;
  bool correct = false;
  bool format_ok = true;
  int length_tokens = 0;
  int length_steps = 0;
  int baseline_tokens = 0;
  int baseline_steps = 0;
};

struct FormatCheckResult {
  bool ok = false;
  // Subset of {"empty_output", "no_answer_marker", "truncated_midline"}.
  std::vector<std::string> reasons;

  bool has(const std::string& reason) const;
};

// Mechanical format check. "Answer marker" means an explicit "Final Answer:"
// or "####" marker; the bare-number extraction tier does not count, so a
// response that only happens to end in a number is still flagged.
// truncated_midline fires when the response ends with neither terminal
// punctuation nor an answer marker.
FormatCheckResult format_check(const std::string& response);

// Stage 2: base establishes correctness (plus the additive format penalty);
// the efficiency bonus is gated on correctness and rewards step reduction and
// token reduction against the baselines. Throws InvalidBaseline when a
// baseline is <= 0.
RewardBreakdown reward_stage2(bool correct, bool format_ok, int len_tokens, int len_steps,
                              int baseline_tokens, int baseline_steps, const RewardConfig& cfg);

// Stage 3: same base; the gated bonus is gamma * (1 - len/teacher), clamped
// to [compression_floor, gamma]. Negative when the response is longer than
// the teacher.
RewardBreakdown reward_stage3(bool correct, bool format_ok, int len_tokens, int teacher_tokens,
                              const RewardConfig& cfg);

// Convenience wrapper used by the file pipeline: grades the response text
// against gold, runs the format check, counts whitespace tokens and step
// lines, and applies the stage reward.
RewardBreakdown score_response_stage2(const std::string& response, const AnswerValue& gold,
                                      int baseline_tokens, int baseline_steps,
                                      const RewardConfig& cfg);
RewardBreakdown score_response_stage3(const std::string& response, const AnswerValue& gold,
                                      int teacher_tokens, const RewardConfig& cfg);

}  // namespace cotc
