#include "cotc/orchestrate.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"
#include "cotc/parallel.hpp"

namespace cotc {

std::vector<DatasetRecord> ingest_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> records;
  for_each_jsonl(path, [&](std::size_t line_no, const Json& rec) {
    DatasetRecord r;
    try {
      r.question = rec.at("question").get<std::string>();
      r.id = rec.value("id", "line-" + std::to_string(line_no));
      const std::string answer = rec.at("answer").get<std::string>();
      const std::size_t marker = answer.rfind("#### ");
      if (marker == std::string::npos)
        throw MalformedRecord(line_no, "answer has no '#### ' gold marker");
      std::size_t eol = answer.find('\n', marker);
      if (eol == std::string::npos) eol = answer.size();
      std::string gold = answer.substr(marker + 5, eol - marker - 5);
      r.gold = AnswerValue::from_raw(gold);
      if (!r.gold.numeric)
        throw MalformedRecord(line_no, "gold value is not numeric: " + gold);
    } catch (const Json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    records.push_back(std::move(r));
  });
  return records;
}

std::string teacher_prompt(const std::string& question) {
  return "Question: " + question + "\nAnswer:";
}

std::string inference_prompt(const std::string& question) {
  return "Question: " + question + "\nAnswer: Let me solve this step by step.";
}

std::string CollectTeacherStats::report() const {
  return "kept=" + std::to_string(kept) + " total=" + std::to_string(total);
}

CollectTeacherStats collect_teacher(PolicyClient& client,
                                    const std::vector<DatasetRecord>& records,
                                    const std::filesystem::path& out_traces,
                                    const DecodingParams& decoding, int max_in_flight) {
  DecodingParams params = decoding;
  params.n = 1;

  auto results = bounded_parallel<ReasoningTrace>(
      records.size(), max_in_flight, [&](std::size_t i) -> ReasoningTrace {
        const auto& rec = records[i];
        auto completions = client.generate(teacher_prompt(rec.question), params);
        if (completions.empty()) throw BackendError("no completion for " + rec.id);
        const std::string& text = completions.front().text;
        auto pred = extract_final_answer(text);
        if (!pred || !grade_answer(*pred, rec.gold))
          throw Error("teacher answered incorrectly on " + rec.id);
        auto seg = segment_steps(text);
        if (seg.steps.empty()) throw Error("teacher output had no steps on " + rec.id);

        ReasoningTrace trace;
        trace.id = rec.id;
        trace.question = rec.question;
        trace.steps = seg.steps;
        trace.gold_answer = rec.gold;
        trace.teacher_token_count = count_whitespace_tokens(render_steps(seg.steps));
        trace.source = TraceSource::teacher;
        return trace;
      });

  CollectTeacherStats stats;
  stats.total = static_cast<int>(records.size());
  std::vector<ReasoningTrace> kept;
  for (auto& r : results) {
    if (r) {
      kept.push_back(std::move(*r));
      ++stats.kept;
    }
  }
  write_traces(out_traces, kept);
  return stats;
}

namespace {

Json response_to_json(int index, const Completion& c, const std::optional<std::vector<double>>& ref) {
  Json r{{"index", index}, {"text", c.text}};
  r["token_count"] = c.token_count ? *c.token_count : count_whitespace_tokens(c.text);
  if (!c.tokens.empty()) r["tokens"] = c.tokens;
  if (!c.token_logprobs.empty()) r["logp_policy"] = c.token_logprobs;
  if (ref) r["logp_ref"] = *ref;
  return r;
}

}  // namespace

int sample_groups(PolicyClient& client, const std::vector<PromptItem>& prompts, int group_size,
                  const DecodingParams& decoding, PolicyClient* ref_scorer,
                  const std::filesystem::path& out, int max_in_flight) {
  if (group_size < 2) throw GroupTooSmall("group size must be >= 2");
  if (prompts.empty()) throw EmptyInput("no prompts to sample");

  DecodingParams params = decoding;
  params.n = group_size;

  auto rows = bounded_parallel<Json>(prompts.size(), max_in_flight, [&](std::size_t i) -> Json {
    const auto& item = prompts[i];
    auto completions = client.generate(item.prompt, params);
    if (static_cast<int>(completions.size()) < group_size) {
      throw PartialGroup("prompt " + item.id + " returned " +
                         std::to_string(completions.size()) + "/" +
                         std::to_string(group_size) + " completions");
    }
    completions.resize(static_cast<std::size_t>(group_size));
    Json row{{"prompt_id", item.id}, {"prompt", item.prompt}, {"stage", item.stage}};
    if (!item.gold_raw.empty()) row["gold_answer"] = item.gold_raw;
    if (item.baseline_tokens > 0) row["baseline_tokens"] = item.baseline_tokens;
    if (item.baseline_steps > 0) row["baseline_steps"] = item.baseline_steps;
    if (item.teacher_tokens > 0) row["teacher_tokens"] = item.teacher_tokens;
    Json responses = Json::array();
    for (std::size_t k = 0; k < completions.size(); ++k) {
      std::optional<std::vector<double>> ref;
      if (ref_scorer) ref = ref_scorer->score(item.prompt, completions[k].text);
      responses.push_back(response_to_json(static_cast<int>(k), completions[k], ref));
    }
    row["responses"] = std::move(responses);
    return row;
  });

  std::vector<Json> kept;
  for (auto& r : rows)
    if (r) kept.push_back(std::move(*r));
  write_jsonl(out, kept);
  return static_cast<int>(kept.size());
}

DatasetHardSet identify_hard_dataset(PolicyClient& client,
                                     const std::vector<DatasetRecord>& records,
                                     int max_new_tokens, int max_in_flight) {
  auto params = DecodingParams::greedy(max_new_tokens);
  struct Outcome {
    bool correct;
    std::string response;
  };
  auto outcomes =
      bounded_parallel<Outcome>(records.size(), max_in_flight, [&](std::size_t i) -> Outcome {
        const auto& rec = records[i];
        auto completions = client.generate(inference_prompt(rec.question), params);
        if (completions.empty()) throw BackendError("no completion for " + rec.id);
        const std::string& text = completions.front().text;
        auto pred = extract_final_answer(text);
        const bool correct = pred.has_value() && grade_answer(*pred, rec.gold);
        return {correct, text};
      });

  DatasetHardSet hard;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!outcomes[i]) continue;  // dropped; belongs to neither set
    if (outcomes[i]->correct) {
      hard.retained_ids.push_back(records[i].id);
    } else {
      hard.failed_ids.push_back(records[i].id);
      hard.failing_responses.push_back(outcomes[i]->response);
    }
  }
  return hard;
}

void write_hard_set(const std::filesystem::path& path, const DatasetHardSet& hard) {
  std::vector<Json> rows;
  rows.reserve(hard.failed_ids.size());
  for (std::size_t i = 0; i < hard.failed_ids.size(); ++i) {
    rows.push_back({{"id", hard.failed_ids[i]}, {"response", hard.failing_responses[i]}});
  }
  write_jsonl(path, rows);
}

void write_retained(const std::filesystem::path& path, const DatasetHardSet& hard) {
  std::vector<Json> rows;
  rows.reserve(hard.retained_ids.size());
  for (const auto& id : hard.retained_ids) rows.push_back({{"id", id}});
  write_jsonl(path, rows);
}

DatasetHardSet read_hard_set(const std::filesystem::path& path) {
  DatasetHardSet hard;
  for_each_jsonl(path, [&](std::size_t line_no, const Json& rec) {
    try {
      hard.failed_ids.push_back(rec.at("id").get<std::string>());
      hard.failing_responses.push_back(rec.value("response", ""));
    } catch (const Json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return hard;
}

namespace {

int response_tokens(const Json& resp) {
  if (resp.contains("token_count")) return resp.at("token_count").get<int>();
  return count_whitespace_tokens(resp.at("text").get<std::string>());
}

int response_steps(const std::string& text) {
  if (!contains_step_marker(text)) return 1;
  return static_cast<int>(segment_steps(text).steps.size());
}

}  // namespace

int apply_rewards_file(const std::filesystem::path& groups_in, int stage, const RewardConfig& cfg,
                       const std::filesystem::path& rewards_out) {
  if (stage != 2 && stage != 3) throw ConfigError("reward stage must be 2 or 3");
  cfg.validate();
  std::vector<Json> out_rows;
  for_each_jsonl(groups_in, [&](std::size_t line_no, const Json& row) {
    if (!row.contains("gold_answer"))
      throw MalformedRecord(line_no, "group row lacks gold_answer");
    const auto gold = AnswerValue::from_raw(row.at("gold_answer").get<std::string>());

    const int teacher_tokens = row.value("teacher_tokens", 0);
    const int baseline_tokens = row.value("baseline_tokens", teacher_tokens);
    const int baseline_steps = row.value("baseline_steps", 0);

    Json annotated = row;
    double sum = 0.0;
    for (auto& resp : annotated.at("responses")) {
      const std::string text = resp.at("text").get<std::string>();
      const auto fmt = format_check(text);
      auto pred = extract_final_answer(text);
      const bool correct = pred.has_value() && grade_answer(*pred, gold);
      const int tokens = response_tokens(resp);
      RewardBreakdown b;
      if (stage == 2) {
        b = reward_stage2(correct, fmt.ok, tokens, response_steps(text), baseline_tokens,
                          baseline_steps, cfg);
      } else {
        b = reward_stage3(correct, fmt.ok, tokens, teacher_tokens, cfg);
      }
      resp["reward"] = {{"base", b.base},
                        {"bonus", b.bonus},
                        {"total", b.total},
                        {"correct", b.correct},
                        {"format_ok", b.format_ok}};
      sum += b.total;
    }
    annotated["mean_reward"] = sum / annotated.at("responses").size();
    out_rows.push_back(std::move(annotated));
  });
  write_jsonl(rewards_out, out_rows);
  return static_cast<int>(out_rows.size());
}

std::vector<SampleGroup> read_reward_groups(const std::filesystem::path& rewards_in) {
  std::vector<SampleGroup> groups;
  for_each_jsonl(rewards_in, [&](std::size_t line_no, const Json& row) {
    try {
      SampleGroup group;
      group.prompt_id = row.at("prompt_id").get<std::string>();
      for (const auto& resp : row.at("responses")) {
        SampleResponse r;
        r.text = resp.at("text").get<std::string>();
        r.reward_total = resp.at("reward").at("total").get<double>();
        if (resp.contains("tokens")) r.tokens = resp.at("tokens").get<std::vector<std::string>>();
        if (resp.contains("logp_policy")) {
          r.logp_policy = resp.at("logp_policy").get<std::vector<double>>();
        } else {
          r.logp_policy.assign(static_cast<std::size_t>(std::max(1, response_tokens(resp))), 0.0);
        }
        if (resp.contains("logp_ref"))
          r.logp_ref = resp.at("logp_ref").get<std::vector<double>>();
        group.responses.push_back(std::move(r));
      }
      groups.push_back(std::move(group));
    } catch (const Json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return groups;
}

StageArtifacts run_stage(const StageConfig& cfg, const std::vector<ReasoningTrace>& traces,
                         const DatasetHardSet* hard, PolicyClient* client,
                         PolicyClient* ref_scorer, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  StageArtifacts artifacts;

  if (cfg.stage == 1) {
    auto corrupted = corrupt_traces(traces, cfg.corruption, CorruptionStage::stage1);
    artifacts.corrupted = out_dir / "stage1_corrupted.jsonl";
    write_corrupted(artifacts.corrupted, corrupted);
    std::vector<Json> pairs;
    pairs.reserve(corrupted.size());
    for (const auto& ex : corrupted) {
      pairs.push_back({{"trace_id", ex.trace_id}, {"prompt", ex.prompt}, {"target", ex.target}});
    }
    artifacts.pairs = out_dir / "stage1_pairs.jsonl";
    write_jsonl(artifacts.pairs, pairs);
    return artifacts;
  }

  if (client == nullptr) throw ConfigError("stages 2 and 3 need a policy client");

  std::vector<PromptItem> prompts;
  if (cfg.stage == 2) {
    auto corrupted = corrupt_traces(traces, cfg.corruption, CorruptionStage::stage2);
    artifacts.corrupted = out_dir / "stage2_corrupted.jsonl";
    write_corrupted(artifacts.corrupted, corrupted);
    for (std::size_t i = 0; i < corrupted.size(); ++i) {
      const auto& trace = traces[i];
      PromptItem item;
      item.id = trace.id;
      item.prompt = corrupted[i].prompt;
      item.gold_raw = trace.gold_answer.raw;
      item.baseline_tokens = trace.teacher_token_count;
      item.baseline_steps = static_cast<int>(trace.steps.size());
      item.teacher_tokens = trace.teacher_token_count;
      item.stage = 2;
      prompts.push_back(std::move(item));
    }
  } else if (cfg.stage == 3) {
    if (hard == nullptr || hard->empty()) {
      std::fprintf(stderr, "[cotc] stage 3: hard set is empty, nothing to do\n");
      artifacts.no_op = true;
      return artifacts;
    }
    std::unordered_map<std::string, const ReasoningTrace*> by_id;
    for (const auto& t : traces) by_id[t.id] = &t;
    for (const auto& id : hard->failed_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        std::fprintf(stderr, "[cotc] stage 3: no teacher trace for hard id %s\n", id.c_str());
        continue;
      }
      const auto& trace = *it->second;
      PromptItem item;
      item.id = trace.id;
      item.prompt = build_stage3_prompt(trace.question, render_steps(trace.steps));
      item.gold_raw = trace.gold_answer.raw;
      item.teacher_tokens = trace.teacher_token_count;
      item.stage = 3;
      prompts.push_back(std::move(item));
    }
    if (prompts.empty()) {
      artifacts.no_op = true;
      return artifacts;
    }
  } else {
    throw ConfigError("stage must be 1, 2 or 3");
  }

  artifacts.groups = out_dir / ("stage" + std::to_string(cfg.stage) + "_groups.jsonl");
  artifacts.group_count = sample_groups(*client, prompts, cfg.grpo.group_size, cfg.decoding,
                                        ref_scorer, artifacts.groups, cfg.max_in_flight);

  artifacts.rewards = out_dir / ("stage" + std::to_string(cfg.stage) + "_rewards.jsonl");
  apply_rewards_file(artifacts.groups, cfg.stage, cfg.reward, artifacts.rewards);

  artifacts.batch = out_dir / ("stage" + std::to_string(cfg.stage) + "_batch.jsonl");
  auto groups = read_reward_groups(artifacts.rewards);
  export_advantage_batch(artifacts.batch, groups, cfg.grpo);
  return artifacts;
}

}  // namespace cotc
