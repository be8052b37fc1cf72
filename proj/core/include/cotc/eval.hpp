#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cotc/client.hpp"
#include "cotc/orchestrate.hpp"

namespace cotc {

struct EvalSample {
  std::string id;
  bool correct = false;
  int tokens = 0;
  bool format_ok = false;
  bool truncated = false;
};

struct EvalResult {
  std::vector<EvalSample> samples;  // may be empty for aggregate-only fixtures
  double accuracy = 0.0;
  double mean_tokens = 0.0;
  int n = 0;

  static EvalResult from_samples(std::vector<EvalSample> samples);
};

// Greedy Pass@1 over the test set with the standard inference prompt;
// truncation is flagged when the completion hits max_new_tokens or ends
// mid-line. Throws EmptyTestset.
EvalResult evaluate(PolicyClient& client, const std::vector<DatasetRecord>& testset,
                    int max_new_tokens = 512, int max_in_flight = 8);

struct EvalDelta {
  double acc_delta_points = 0.0;          // (b - a) in percentage points
  double token_reduction_fraction = 0.0;  // 1 - b.mean_tokens / a.mean_tokens
};

EvalDelta summarize_delta(const EvalResult& a, const EvalResult& b);

struct ComparisonReport {
  int both_correct = 0;
  int fixed = 0;      // a wrong, b correct
  int regressed = 0;  // a correct, b wrong
  int both_wrong = 0;
  int net = 0;  // fixed - regressed
  // Mechanical breakdown of regressions from b's format flag.
  int regressed_format_issue = 0;
  int regressed_reasoning_error = 0;
};

// Requires identical id sets (IdMismatch otherwise); the four categories
// partition the shared ids.
ComparisonReport compare(const EvalResult& a, const EvalResult& b);

struct HistogramBucket {
  int bucket_start = 0;
  int count = 0;
};

// Half-open buckets [k*w, (k+1)*w); only nonempty buckets are emitted.
std::vector<HistogramBucket> histogram(const EvalResult& results, int bucket_width);

std::string histogram_csv(const std::vector<HistogramBucket>& buckets);

// Per-sample results: one {id, correct, tokens, format_ok, truncated} object
// per line. Reading also accepts an aggregate-only file (a single object with
// accuracy/mean_tokens/n), the form used for published numbers where
// per-sample outputs are unavailable.
void write_eval_result(const std::filesystem::path& path, const EvalResult& result);
EvalResult read_eval_result(const std::filesystem::path& path);

nlohmann::json comparison_to_json(const ComparisonReport& report);

}  // namespace cotc
