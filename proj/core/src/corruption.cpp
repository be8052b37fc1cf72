#include "cotc/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"

namespace cotc {

const char* const kStage1Instruction =
    "The following steps are out of order and incomplete, please complete and rearrange them.";
const char* const kStage2Instruction =
    "The following steps are incomplete, please complete them.";

void CorruptionConfig::validate() const {
  if (mask_rate < 0.0 || mask_rate > 1.0) throw ConfigError("mask_rate must be in [0,1]");
  if (sample_mask_prob < 0.0 || sample_mask_prob > 1.0)
    throw ConfigError("sample_mask_prob must be in [0,1]");
  if (min_masks < 1) throw ConfigError("min_masks must be >= 1");
  if (mask_token.empty()) throw ConfigError("mask_token must be nonempty");
}

std::vector<int> shuffle_steps(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);
  for (int i = n - 1; i > 0; --i) {
    auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

std::set<int> draw_mask_indices(int n, int k, Rng& rng) {
  // Partial Fisher-Yates over 1..n; first k entries are the sample.
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 1);
  std::set<int> out;
  for (int i = 0; i < k; ++i) {
    auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.insert(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::string render_prompt(const char* instruction, const ReasoningTrace& trace,
                          const std::vector<int>& perm, const std::set<int>& masked,
                          const std::string& mask_token) {
  std::string out = instruction;
  for (int orig : perm) {
    out += "\n[Step] ";
    if (masked.count(orig)) {
      out += mask_token;
    } else {
      out += trace.steps[static_cast<std::size_t>(orig - 1)].text;
    }
  }
  return out;
}

}  // namespace

std::set<int> mask_steps(int n, const CorruptionConfig& cfg, Rng& rng) {
  if (n < 1) throw ConfigError("mask_steps: n must be >= 1");
  if (!rng.bernoulli(cfg.sample_mask_prob)) return {};
  int k = std::max(cfg.min_masks, round_half_up(cfg.mask_rate * n));
  if (k > n) {
    throw MaskExceedsSteps("mask count " + std::to_string(k) + " exceeds " + std::to_string(n) +
                           " steps");
  }
  return draw_mask_indices(n, k, rng);
}

CorruptedExample build_stage1_example(const ReasoningTrace& trace, const CorruptionConfig& cfg,
                                      Rng& rng) {
  if (!cfg.shuffle) throw ConfigError("stage 1 shuffles every sample; cfg.shuffle must be true");
  const int n = static_cast<int>(trace.steps.size());
  CorruptedExample ex;
  ex.trace_id = trace.id;
  ex.stage = CorruptionStage::stage1;
  ex.permutation = shuffle_steps(n, rng);
  ex.masked_indices = mask_steps(n, cfg, rng);
  ex.prompt = render_prompt(kStage1Instruction, trace, ex.permutation, ex.masked_indices,
                            cfg.mask_token);
  ex.target = render_steps(trace.steps);
  return ex;
}

CorruptedExample build_stage2_example(const ReasoningTrace& trace, const CorruptionConfig& cfg,
                                      Rng& rng) {
  const int n = static_cast<int>(trace.steps.size());
  CorruptedExample ex;
  ex.trace_id = trace.id;
  ex.stage = CorruptionStage::stage2;
  ex.permutation.resize(static_cast<std::size_t>(n));
  std::iota(ex.permutation.begin(), ex.permutation.end(), 1);

  int k = std::max(std::max(2, cfg.min_masks), round_half_up(cfg.mask_rate * n));
  if (n < 3) k = std::max(1, n - 1);
  k = std::min(k, n);
  ex.masked_indices = draw_mask_indices(n, k, rng);
  ex.prompt = render_prompt(kStage2Instruction, trace, ex.permutation, ex.masked_indices,
                            cfg.mask_token);
  ex.target = render_steps(trace.steps);
  return ex;
}

std::string build_stage3_prompt(const std::string& question, const std::string& teacher_cot) {
  if (question.empty() || teacher_cot.empty())
    throw EmptyInput("stage 3 prompt needs a question and a teacher solution");
  std::string out =
      "You are given a math problem and its correct solution. Your task is to rewrite the "
      "solution step-by-step in a MUCH SHORTER way while keeping the same answer.\n"
      "\n"
      "IMPORTANT: Your solution must be SHORTER than the teacher's solution. Combine steps, "
      "skip obvious calculations, and be concise.\n"
      "\n"
      "Question: ";
  out += question;
  out +=
      "\n"
      "\n"
      "Teacher's Solution:\n";
  out += teacher_cot;
  out +=
      "\n"
      "\n"
      "Now write a SHORTER solution. Use fewer steps. End with \"Final Answer: [number]\"\n"
      "\n"
      "Your Concise Solution:";
  return out;
}

std::vector<CorruptedExample> corrupt_traces(const std::vector<ReasoningTrace>& traces,
                                             const CorruptionConfig& cfg, CorruptionStage stage) {
  cfg.validate();
  std::vector<CorruptedExample> out;
  out.reserve(traces.size());
  for (const auto& trace : traces) {
    Rng rng(derive_seed(cfg.seed, trace.id));
    switch (stage) {
      case CorruptionStage::stage1:
        out.push_back(build_stage1_example(trace, cfg, rng));
        break;
      case CorruptionStage::stage2:
        out.push_back(build_stage2_example(trace, cfg, rng));
        break;
      case CorruptionStage::stage3:
        throw ConfigError("stage 3 prompts are built from (question, teacher solution) pairs");
    }
  }
  return out;
}

void write_corrupted(const std::filesystem::path& path,
                     const std::vector<CorruptedExample>& examples) {
  std::vector<Json> records;
  records.reserve(examples.size());
  for (const auto& ex : examples) {
    records.push_back({{"trace_id", ex.trace_id},
                       {"stage", static_cast<int>(ex.stage)},
                       {"permutation", ex.permutation},
                       {"masked_indices", std::vector<int>(ex.masked_indices.begin(),
                                                           ex.masked_indices.end())},
                       {"prompt", ex.prompt},
                       {"target", ex.target}});
  }
  write_jsonl(path, records);
}

std::vector<CorruptedExample> read_corrupted(const std::filesystem::path& path) {
  std::vector<CorruptedExample> out;
  for_each_jsonl(path, [&](std::size_t line_no, const Json& rec) {
    try {
      CorruptedExample ex;
      ex.trace_id = rec.at("trace_id").get<std::string>();
      ex.stage = static_cast<CorruptionStage>(rec.at("stage").get<int>());
      ex.permutation = rec.at("permutation").get<std::vector<int>>();
      auto masked = rec.at("masked_indices").get<std::vector<int>>();
      ex.masked_indices.insert(masked.begin(), masked.end());
      ex.prompt = rec.at("prompt").get<std::string>();
      ex.target = rec.at("target").get<std::string>();
      out.push_back(std::move(ex));
    } catch (const Json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return out;
}

}  // namespace cotc
