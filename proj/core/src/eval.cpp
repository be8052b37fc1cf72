#include "cotc/eval.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"
#include "cotc/parallel.hpp"
#include "cotc/reward.hpp"

namespace cotc {

EvalResult EvalResult::from_samples(std::vector<EvalSample> samples) {
  EvalResult r;
  r.samples = std::move(samples);
  r.n = static_cast<int>(r.samples.size());
  if (r.n == 0) return r;
  long long token_sum = 0;
  int correct = 0;
  for (const auto& s : r.samples) {
    token_sum += s.tokens;
    if (s.correct) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / r.n;
  r.mean_tokens = static_cast<double>(token_sum) / r.n;
  return r;
}

EvalResult evaluate(PolicyClient& client, const std::vector<DatasetRecord>& testset,
                    int max_new_tokens, int max_in_flight) {
  if (testset.empty()) throw EmptyTestset("evaluate: empty test set");
  auto params = DecodingParams::greedy(max_new_tokens);

  auto outcomes =
      bounded_parallel<EvalSample>(testset.size(), max_in_flight, [&](std::size_t i) {
        const auto& rec = testset[i];
        auto completions = client.generate(inference_prompt(rec.question), params);
        if (completions.empty()) throw BackendError("no completion for " + rec.id);
        const auto& c = completions.front();

        EvalSample s;
        s.id = rec.id;
        auto pred = extract_final_answer(c.text);
        s.correct = pred.has_value() && grade_answer(*pred, rec.gold);
        s.tokens = c.token_count ? *c.token_count : count_whitespace_tokens(c.text);
        auto fmt = format_check(c.text);
        s.format_ok = fmt.ok;
        s.truncated = s.tokens >= max_new_tokens || fmt.has("truncated_midline");
        return s;
      });

  std::vector<EvalSample> samples;
  samples.reserve(testset.size());
  for (auto& o : outcomes)
    if (o) samples.push_back(std::move(*o));
  return EvalResult::from_samples(std::move(samples));
}

EvalDelta summarize_delta(const EvalResult& a, const EvalResult& b) {
  if (a.mean_tokens == 0.0) throw DivisionByZero("baseline mean_tokens is zero");
  EvalDelta d;
  d.acc_delta_points = (b.accuracy - a.accuracy) * 100.0;
  d.token_reduction_fraction = 1.0 - b.mean_tokens / a.mean_tokens;
  return d;
}

ComparisonReport compare(const EvalResult& a, const EvalResult& b) {
  if (a.samples.size() != b.samples.size())
    throw IdMismatch("result sets differ in size: " + std::to_string(a.samples.size()) + " vs " +
                     std::to_string(b.samples.size()));
  std::unordered_map<std::string, const EvalSample*> b_by_id;
  b_by_id.reserve(b.samples.size());
  for (const auto& s : b.samples) b_by_id[s.id] = &s;

  ComparisonReport report;
  for (const auto& sa : a.samples) {
    auto it = b_by_id.find(sa.id);
    if (it == b_by_id.end()) throw IdMismatch("id " + sa.id + " missing from second result");
    const auto& sb = *it->second;
    if (sa.correct && sb.correct) {
      ++report.both_correct;
    } else if (!sa.correct && sb.correct) {
      ++report.fixed;
    } else if (sa.correct && !sb.correct) {
      ++report.regressed;
      if (!sb.format_ok) {
        ++report.regressed_format_issue;
      } else {
        ++report.regressed_reasoning_error;
      }
    } else {
      ++report.both_wrong;
    }
  }
  report.net = report.fixed - report.regressed;
  return report;
}

std::vector<HistogramBucket> histogram(const EvalResult& results, int bucket_width) {
  if (bucket_width < 1) throw ConfigError("bucket width must be >= 1");
  std::map<int, int> counts;
  for (const auto& s : results.samples) counts[(s.tokens / bucket_width) * bucket_width] += 1;
  std::vector<HistogramBucket> out;
  out.reserve(counts.size());
  for (auto [start, count] : counts) out.push_back({start, count});
  return out;
}

std::string histogram_csv(const std::vector<HistogramBucket>& buckets) {
  std::string csv = "bucket_start,count\n";
  for (const auto& b : buckets)
    csv += std::to_string(b.bucket_start) + ',' + std::to_string(b.count) + '\n';
  return csv;
}

void write_eval_result(const std::filesystem::path& path, const EvalResult& result) {
  std::vector<Json> rows;
  rows.reserve(result.samples.size());
  for (const auto& s : result.samples) {
    rows.push_back({{"id", s.id},
                    {"correct", s.correct},
                    {"tokens", s.tokens},
                    {"format_ok", s.format_ok},
                    {"truncated", s.truncated}});
  }
  write_jsonl(path, rows);
}

EvalResult read_eval_result(const std::filesystem::path& path) {
  auto rows = read_jsonl(path);
  if (rows.size() == 1 && rows.front().contains("accuracy") && !rows.front().contains("id")) {
    const auto& agg = rows.front();
    EvalResult r;
    r.accuracy = agg.at("accuracy").get<double>();
    r.mean_tokens = agg.at("mean_tokens").get<double>();
    r.n = agg.value("n", 0);
    return r;
  }
  std::vector<EvalSample> samples;
  samples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const auto& row = rows[i];
      EvalSample s;
      s.id = row.at("id").get<std::string>();
      s.correct = row.at("correct").get<bool>();
      s.tokens = row.at("tokens").get<int>();
      s.format_ok = row.value("format_ok", true);
      s.truncated = row.value("truncated", false);
      samples.push_back(std::move(s));
    } catch (const Json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  return EvalResult::from_samples(std::move(samples));
}

nlohmann::json comparison_to_json(const ComparisonReport& report) {
  return {{"both_correct", report.both_correct},
          {"fixed", report.fixed},
          {"regressed", report.regressed},
          {"both_wrong", report.both_wrong},
          {"net", report.net},
          {"regressed_format_issue", report.regressed_format_issue},
          {"regressed_reasoning_error", report.regressed_reasoning_error}};
}

}  // namespace cotc
