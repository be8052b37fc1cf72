#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cotc {

struct Step {
  int index = 0;  // 1-based, contiguous
  std::string text;

  bool operator==(const Step&) const = default;
};

// A final answer as it appears in text, plus its numeric normalization when
// one exists. Construct through AnswerValue::from_raw so `numeric` always
// matches what the normalization rules produce for `raw`.
struct AnswerValue {
  std::string raw;
  std::optional<double> numeric;

  static AnswerValue from_raw(std::string raw);
};

// Exact-where-possible numeric comparison: strips commas, currency symbols,
// percent signs and surrounding brackets, parses fractions and decimals as
// exact rationals, and compares with absolute tolerance 1e-6.
std::optional<double> normalize_numeric(const std::string& raw);
bool numeric_equal(const std::string& a, const std::string& b);

enum class TraceSource { teacher, synthetic, dataset };

std::string to_string(TraceSource s);
TraceSource trace_source_from_string(const std::string& s);

struct ReasoningTrace {
  std::string id;
  std::string question;
  std::vector<Step> steps;
  AnswerValue gold_answer;
  int teacher_token_count = 0;  // |r_T| under the whitespace tokenizer
  TraceSource source = TraceSource::teacher;
};

// Canonical rendering of an ordered chain: "Step i: text" lines joined by \n.
// segment_steps(render_steps(s)) recovers s exactly.
std::string render_steps(const std::vector<Step>& steps);

struct Segmentation {
  std::string preamble;  // text before the first step marker, if any
  std::vector<Step> steps;
};

// Splits chain-of-thought text on `Step <int>:` markers (case-insensitive,
// word boundary before "Step"). Without markers, falls back to
// newline-then-sentence splitting. Indices are renumbered 1..n.
// Throws EmptyInput when text is blank.
Segmentation segment_steps(const std::string& text);

bool contains_step_marker(const std::string& text);

// Individual extraction tiers, exposed so graders and format checks can
// distinguish explicit answer markers from the bare-number fallback.
std::optional<AnswerValue> extract_marker_answer(const std::string& text);  // "Final Answer:"
std::optional<AnswerValue> extract_hash_answer(const std::string& text);    // "#### value"
std::optional<AnswerValue> extract_last_number(const std::string& text);

// Priority order: last "Final Answer:", then last "####", then the last
// standalone number. Absent when none match; absence signals a format
// violation downstream.
std::optional<AnswerValue> extract_final_answer(const std::string& text);

// True iff pred matches gold after normalization (tolerance 1e-6); falls back
// to trimmed case-insensitive string comparison when pred has no numeric
// form. Throws UngradeableGold when gold itself cannot be normalized.
bool grade_answer(const AnswerValue& pred, const AnswerValue& gold);

struct TokenizerHandle {
  enum class Mode { whitespace, external };
  Mode mode = Mode::whitespace;
  std::string external_endpoint;          // e.g. http://127.0.0.1:8188
  bool fallback_to_whitespace = false;    // only used when external fails

  static TokenizerHandle whitespace() { return {}; }
  static TokenizerHandle external(std::string endpoint, bool fallback = false) {
    return {Mode::external, std::move(endpoint), fallback};
  }
};

// Whitespace mode counts maximal non-whitespace runs; zero for empty text.
// External mode POSTs {"text": ...} to <endpoint>/tokenize, expects
// {"count": n}, and caches by content hash (thread-safe). Throws
// TokenizerUnavailable when the endpoint fails and fallback is off.
int count_tokens(const std::string& text, const TokenizerHandle& tok = {});

int count_whitespace_tokens(const std::string& text);

// Trace file format: one JSON object per line with fields
// id, question, steps (array of strings), gold_answer, source.
std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path);
void write_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces);

}  // namespace cotc
