#include "cotc/reward.hpp"

#include <algorithm>
#include <cmath>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"

namespace cotc {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

// True when the last non-whitespace content of `text` sits on the same line
// as the last explicit answer marker.
bool ends_with_answer_marker(const std::string& text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t last = std::string::npos;
  for (const char* needle : {"final answer", "####"}) {
    std::size_t pos = lowered.rfind(needle);
    if (pos != std::string::npos && (last == std::string::npos || pos > last)) last = pos;
  }
  if (last == std::string::npos) return false;
  std::size_t eol = text.find('\n', last);
  if (eol == std::string::npos) return true;
  return is_blank(text.substr(eol));
}

bool single_paragraph(const std::string& text) {
  std::size_t b = text.find_first_not_of(" \t\r\n");
  std::size_t e = text.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return false;
  std::string body = text.substr(b, e - b + 1);
  // A blank line splits paragraphs.
  std::size_t pos = 0;
  while ((pos = body.find('\n', pos)) != std::string::npos) {
    std::size_t next = body.find_first_not_of(" \t\r", pos + 1);
    if (next != std::string::npos && body[next] == '\n') return false;
    if (next == std::string::npos) break;
    pos = next;
  }
  return true;
}

}  // namespace

void RewardConfig::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(incorrect_penalty) || !finite(format_penalty) || !finite(correct_base) ||
      !finite(step_bonus_cap) || !finite(token_bonus_cap) || !finite(compression_cap) ||
      !finite(compression_floor)) {
    throw ConfigError("reward coefficients must be finite");
  }
  if (compression_floor > 0.0 || compression_cap < 0.0)
    throw ConfigError("need compression_floor <= 0 <= compression_cap");
  if (!(incorrect_penalty < correct_base + compression_floor)) {
    throw ConfigError(
        "correctness ordering violated: incorrect_penalty must stay below the worst "
        "correct total (correct_base + compression_floor)");
  }
}

RewardConfig RewardConfig::from_json(const nlohmann::json& j) {
  RewardConfig cfg;
  cfg.incorrect_penalty = j.value("incorrect_answer_penalty", cfg.incorrect_penalty);
  cfg.format_penalty = j.value("format_error_penalty", cfg.format_penalty);
  cfg.correct_base = j.value("correct_answer_base_reward", cfg.correct_base);
  cfg.step_bonus_cap = j.value("step_reduction_bonus_max", cfg.step_bonus_cap);
  cfg.token_bonus_cap = j.value("token_efficiency_bonus_max", cfg.token_bonus_cap);
  cfg.compression_cap = j.value("compression_ratio_reward_max", cfg.compression_cap);
  cfg.compression_floor = j.value("compression_floor", cfg.compression_floor);
  cfg.use_single_term_bonus = j.value("use_single_term_bonus", cfg.use_single_term_bonus);
  cfg.lambda_note = j.value("lambda_note", cfg.lambda_note);
  cfg.validate();
  return cfg;
}

nlohmann::json RewardConfig::to_json() const {
  return {{"incorrect_answer_penalty", incorrect_penalty},
          {"format_error_penalty", format_penalty},
          {"correct_answer_base_reward", correct_base},
          {"step_reduction_bonus_max", step_bonus_cap},
          {"token_efficiency_bonus_max", token_bonus_cap},
          {"compression_ratio_reward_max", compression_cap},
          {"compression_floor", compression_floor},
          {"use_single_term_bonus", use_single_term_bonus},
          {"lambda_note", lambda_note}};
}

RewardConfig RewardConfig::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

bool FormatCheckResult::has(const std::string& reason) const {
  return std::find(reasons.begin(), reasons.end(), reason) != reasons.end();
}

FormatCheckResult format_check(const std::string& response) {
  FormatCheckResult result;
  const bool empty = is_blank(response);
  const bool has_marker =
      !empty && (extract_marker_answer(response).has_value() ||
                 extract_hash_answer(response).has_value());
  const bool ends_in_marker = !empty && ends_with_answer_marker(response);

  if (empty) result.reasons.push_back("empty_output");
  if (!has_marker) result.reasons.push_back("no_answer_marker");
  if (!empty && !ends_in_marker) {
    std::size_t last = response.find_last_not_of(" \t\r\n");
    char tail = response[last];
    if (tail != '.' && tail != '!' && tail != '?') result.reasons.push_back("truncated_midline");
  }

  result.ok = has_marker &&
              (contains_step_marker(response) || (single_paragraph(response) && ends_in_marker));
  return result;
}

RewardBreakdown reward_stage2(bool correct, bool format_ok, int len_tokens, int len_steps,
                              int baseline_tokens, int baseline_steps, const RewardConfig& cfg) {
  if (baseline_tokens <= 0 || baseline_steps <= 0)
    throw InvalidBaseline("stage 2 baselines must be positive");
  RewardBreakdown r;
  r.correct = correct;
  r.format_ok = format_ok;
  r.length_tokens = len_tokens;
  r.length_steps = len_steps;
  r.baseline_tokens = baseline_tokens;
  r.baseline_steps = baseline_steps;

  r.base = correct ? cfg.correct_base : cfg.incorrect_penalty;
  if (!format_ok) r.base += cfg.format_penalty;
  if (correct) {
    if (cfg.use_single_term_bonus) {
      double raw = cfg.compression_cap *
                   (1.0 - static_cast<double>(len_tokens) / baseline_tokens);
      r.bonus = std::clamp(raw, cfg.compression_floor, cfg.compression_cap);
    } else {
      r.bonus = cfg.step_bonus_cap *
                    clamp01(1.0 - static_cast<double>(len_steps) / baseline_steps) +
                cfg.token_bonus_cap *
                    clamp01(1.0 - static_cast<double>(len_tokens) / baseline_tokens);
    }
  }
  r.total = r.base + r.bonus;
  return r;
}

RewardBreakdown reward_stage3(bool correct, bool format_ok, int len_tokens, int teacher_tokens,
                              const RewardConfig& cfg) {
  if (teacher_tokens <= 0) throw InvalidBaseline("teacher token count must be positive");
  RewardBreakdown r;
  r.correct = correct;
  r.format_ok = format_ok;
  r.length_tokens = len_tokens;
  r.baseline_tokens = teacher_tokens;

  r.base = correct ? cfg.correct_base : cfg.incorrect_penalty;
  if (!format_ok) r.base += cfg.format_penalty;
  if (correct) {
    double raw =
        cfg.compression_cap * (1.0 - static_cast<double>(len_tokens) / teacher_tokens);
    r.bonus = std::clamp(raw, cfg.compression_floor, cfg.compression_cap);
  }
  r.total = r.base + r.bonus;
  return r;
}

namespace {

// Step lines in the response; falls back to 1 so parity against a baseline is
// never rewarded for marker-less output.
int count_step_lines(const std::string& response) {
  if (!contains_step_marker(response)) return 1;
  try {
    return static_cast<int>(segment_steps(response).steps.size());
  } catch (const EmptyInput&) {
    return 1;
  }
}

}  // namespace

RewardBreakdown score_response_stage2(const std::string& response, const AnswerValue& gold,
                                      int baseline_tokens, int baseline_steps,
                                      const RewardConfig& cfg) {
  auto fmt = format_check(response);
  auto pred = extract_final_answer(response);
  bool correct = pred.has_value() && grade_answer(*pred, gold);
  return reward_stage2(correct, fmt.ok, count_whitespace_tokens(response),
                       count_step_lines(response), baseline_tokens, baseline_steps, cfg);
}

RewardBreakdown score_response_stage3(const std::string& response, const AnswerValue& gold,
                                      int teacher_tokens, const RewardConfig& cfg) {
  auto fmt = format_check(response);
  auto pred = extract_final_answer(response);
  bool correct = pred.has_value() && grade_answer(*pred, gold);
  return reward_stage3(correct, fmt.ok, count_whitespace_tokens(response), teacher_tokens, cfg);
}

}  // namespace cotc
