// cotc: chain-of-thought compression-curriculum toolkit.
//
// File-level subcommands (corrupt, reward, advantages, compare, histogram)
// are offline; the serving-side subcommands (collect-teacher, sample-groups,
// identify-hard, run-stage, evaluate) talk to an inference server speaking
// the completions-over-HTTP convention, or replay a recorded session.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cotc/client.hpp"
#include "cotc/corruption.hpp"
#include "cotc/errors.hpp"
#include "cotc/eval.hpp"
#include "cotc/grpo.hpp"
#include "cotc/io.hpp"
#include "cotc/orchestrate.hpp"
#include "cotc/reward.hpp"
#include "cotc/toy/curriculum.hpp"
#include "cotc/trace.hpp"

namespace {

using namespace cotc;

struct BackendOpts {
  std::string endpoint;
  std::string replay_file;
  std::string record_file;

  void attach(CLI::App* cmd, bool required = true) {
    auto* ep = cmd->add_option("--endpoint", endpoint, "inference server, e.g. http://host:port");
    auto* rp = cmd->add_option("--replay", replay_file, "replay a recorded session instead");
    cmd->add_option("--record", record_file, "record the session to this file");
    if (required) {
      ep->excludes(rp);
      // exactly one of endpoint/replay
    }
  }

  PolicyClient make_client() const {
    std::shared_ptr<Transport> transport;
    if (!replay_file.empty()) {
      transport = std::make_shared<ReplayTransport>(replay_file);
    } else if (!endpoint.empty()) {
      transport = std::make_shared<HttpTransport>(endpoint, PolicyClient::auth_token_from_env());
    } else {
      throw ConfigError("need --endpoint or --replay");
    }
    if (!record_file.empty())
      transport = std::make_shared<RecordingTransport>(transport, record_file);
    return PolicyClient(std::move(transport));
  }
};

RewardConfig load_reward(const std::string& path) {
  return path.empty() ? RewardConfig{} : RewardConfig::load(path);
}

GRPOConfig load_grpo(const std::string& path) {
  return path.empty() ? GRPOConfig{} : GRPOConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chain-of-thought compression curriculum toolkit"};
  app.require_subcommand(1);

  // ---- corrupt -------------------------------------------------------------
  auto* corrupt = app.add_subcommand("corrupt", "build corrupted training inputs from traces");
  int corrupt_stage = 1;
  CorruptionConfig corruption;
  std::string corrupt_in, corrupt_out;
  corrupt->add_option("--stage", corrupt_stage, "1 or 2")->check(CLI::IsMember({1, 2}));
  corrupt->add_option("--mask-rate", corruption.mask_rate, "fraction of steps to mask");
  corrupt->add_option("--p-sample", corruption.sample_mask_prob, "masked-sample probability");
  corrupt->add_option("--min-masks", corruption.min_masks, "mask count floor");
  corrupt->add_option("--seed", corruption.seed, "root seed");
  corrupt->add_option("--mask-token", corruption.mask_token, "mask literal");
  corrupt->add_option("--in", corrupt_in, "trace file")->required();
  corrupt->add_option("--out", corrupt_out, "corrupted dataset")->required();

  // ---- reward --------------------------------------------------------------
  auto* reward_cmd = app.add_subcommand("reward", "score sampled groups with the stage reward");
  int reward_stage_no = 2;
  std::string reward_config, reward_in, reward_out;
  reward_cmd->add_option("--stage", reward_stage_no, "2 or 3")->check(CLI::IsMember({2, 3}));
  reward_cmd->add_option("--config", reward_config, "reward coefficient file");
  reward_cmd->add_option("--in", reward_in, "groups.jsonl")->required();
  reward_cmd->add_option("--out", reward_out, "rewards.jsonl")->required();

  // ---- advantages ----------------------------------------------------------
  auto* adv = app.add_subcommand("advantages", "export a group-relative advantage batch");
  std::string adv_config, adv_in, adv_out;
  adv->add_option("--config", adv_config, "grpo config file");
  adv->add_option("--in", adv_in, "rewards.jsonl")->required();
  adv->add_option("--out", adv_out, "batch.jsonl")->required();

  // ---- run-toy ---------------------------------------------------------------
  auto* toy_cmd = app.add_subcommand("run-toy", "run the full curriculum on the synthetic task");
  std::string toy_config, toy_out;
  toy_cmd->add_option("--config", toy_config, "toy lab config (json)");
  toy_cmd->add_option("--out", toy_out, "log directory")->required();

  // ---- ingest ----------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "parse a question/answer dataset");
  std::string ingest_in, ingest_out;
  ingest_cmd->add_option("--in", ingest_in, "dataset jsonl")->required();
  ingest_cmd->add_option("--out", ingest_out, "normalized records")->required();

  // ---- collect-teacher -------------------------------------------------------
  auto* collect = app.add_subcommand("collect-teacher", "sample and filter teacher traces");
  BackendOpts collect_backend;
  collect_backend.attach(collect);
  std::string collect_in, collect_out;
  double collect_temperature = 0.7;
  int collect_max_new = 512, collect_inflight = 8;
  collect->add_option("--in", collect_in, "dataset jsonl")->required();
  collect->add_option("--out", collect_out, "trace file")->required();
  collect->add_option("--temperature", collect_temperature, "sampling temperature");
  collect->add_option("--max-new", collect_max_new, "max new tokens");
  collect->add_option("--max-in-flight", collect_inflight, "request parallelism");

  // ---- sample-groups ----------------------------------------------------------
  auto* sample = app.add_subcommand("sample-groups", "sample G responses per prompt");
  BackendOpts sample_backend;
  sample_backend.attach(sample);
  std::string sample_in, sample_out, sample_ref_endpoint;
  int sample_g = 2, sample_max_new = 512, sample_inflight = 8;
  double sample_temperature = 1.0;
  std::optional<std::uint64_t> sample_seed;
  sample->add_option("--in", sample_in, "prompts jsonl ({prompt_id|id, prompt, ...})")->required();
  sample->add_option("--out", sample_out, "groups.jsonl")->required();
  sample->add_option("--group-size", sample_g, "completions per prompt (G)");
  sample->add_option("--temperature", sample_temperature, "sampling temperature");
  sample->add_option("--max-new", sample_max_new, "max new tokens");
  sample->add_option("--seed", sample_seed, "backend sampling seed");
  sample->add_option("--ref-endpoint", sample_ref_endpoint, "score logp_ref at this endpoint");
  sample->add_option("--max-in-flight", sample_inflight, "request parallelism");

  // ---- identify-hard -----------------------------------------------------------
  auto* hard_cmd = app.add_subcommand("identify-hard", "greedy pass separating failures");
  BackendOpts hard_backend;
  hard_backend.attach(hard_cmd);
  std::string hard_in, hard_out, hard_retained;
  int hard_max_new = 512, hard_inflight = 8;
  hard_cmd->add_option("--in", hard_in, "dataset jsonl")->required();
  hard_cmd->add_option("--out", hard_out, "hard set jsonl")->required();
  hard_cmd->add_option("--retained", hard_retained, "also write retained-correct ids here");
  hard_cmd->add_option("--max-new", hard_max_new, "max new tokens");
  hard_cmd->add_option("--max-in-flight", hard_inflight, "request parallelism");

  // ---- run-stage -----------------------------------------------------------------
  auto* stage_cmd = app.add_subcommand("run-stage", "compose one curriculum stage end to end");
  BackendOpts stage_backend;
  stage_backend.attach(stage_cmd, false);
  int stage_no = 1;
  std::string stage_traces, stage_hard, stage_out_dir, stage_reward_cfg, stage_grpo_cfg,
      stage_ref_endpoint;
  CorruptionConfig stage_corruption;
  double stage_temperature = 1.0;
  int stage_max_new = 512, stage_inflight = 8;
  stage_cmd->add_option("stage", stage_no, "1, 2 or 3")->required()->check(CLI::IsMember({1, 2, 3}));
  stage_cmd->add_option("--traces", stage_traces, "teacher trace file")->required();
  stage_cmd->add_option("--hard", stage_hard, "hard set jsonl (stage 3)");
  stage_cmd->add_option("--out", stage_out_dir, "artifact directory")->required();
  stage_cmd->add_option("--reward-config", stage_reward_cfg, "reward coefficient file");
  stage_cmd->add_option("--grpo-config", stage_grpo_cfg, "grpo config file");
  stage_cmd->add_option("--ref-endpoint", stage_ref_endpoint, "reference scoring endpoint");
  stage_cmd->add_option("--mask-rate", stage_corruption.mask_rate, "fraction of steps to mask");
  stage_cmd->add_option("--p-sample", stage_corruption.sample_mask_prob, "masked-sample prob");
  stage_cmd->add_option("--min-masks", stage_corruption.min_masks, "mask count floor");
  stage_cmd->add_option("--seed", stage_corruption.seed, "corruption seed");
  stage_cmd->add_option("--temperature", stage_temperature, "sampling temperature");
  stage_cmd->add_option("--max-new", stage_max_new, "max new tokens");
  stage_cmd->add_option("--max-in-flight", stage_inflight, "request parallelism");

  // ---- evaluate ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "greedy Pass@1 evaluation");
  BackendOpts eval_backend;
  eval_backend.attach(eval_cmd);
  std::string eval_testset, eval_out;
  int eval_max_new = 512, eval_inflight = 8;
  eval_cmd->add_option("--testset", eval_testset, "dataset jsonl")->required();
  eval_cmd->add_option("--max-new", eval_max_new, "max new tokens");
  eval_cmd->add_option("--out", eval_out, "results jsonl")->required();
  eval_cmd->add_option("--max-in-flight", eval_inflight, "request parallelism");

  // ---- compare ------------------------------------------------------------------------
  auto* compare_cmd = app.add_subcommand("compare", "two-run comparison report");
  std::string cmp_a, cmp_b, cmp_out;
  compare_cmd->add_option("--a", cmp_a, "first results file")->required();
  compare_cmd->add_option("--b", cmp_b, "second results file")->required();
  compare_cmd->add_option("--out", cmp_out, "report json")->required();

  // ---- histogram -------------------------------------------------------------------------
  auto* hist_cmd = app.add_subcommand("histogram", "token-length histogram csv");
  std::string hist_in, hist_out;
  int hist_width = 25;
  hist_cmd->add_option("--in", hist_in, "results jsonl")->required();
  hist_cmd->add_option("--width", hist_width, "bucket width");
  hist_cmd->add_option("--out", hist_out, "csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*corrupt) {
      auto traces = read_traces(corrupt_in);
      auto stage = corrupt_stage == 1 ? CorruptionStage::stage1 : CorruptionStage::stage2;
      auto examples = corrupt_traces(traces, corruption, stage);
      write_corrupted(corrupt_out, examples);
      std::printf("wrote %zu corrupted examples to %s\n", examples.size(), corrupt_out.c_str());
    } else if (*reward_cmd) {
      const int rows =
          apply_rewards_file(reward_in, reward_stage_no, load_reward(reward_config), reward_out);
      std::printf("scored %d groups into %s\n", rows, reward_out.c_str());
    } else if (*adv) {
      auto groups = read_reward_groups(adv_in);
      export_advantage_batch(adv_out, groups, load_grpo(adv_config));
      std::printf("exported %zu groups to %s\n", groups.size(), adv_out.c_str());
    } else if (*toy_cmd) {
      auto cfg = toy_config.empty() ? toy::ToyLabConfig{} : toy::ToyLabConfig::load(toy_config);
      auto result = toy::run_curriculum(cfg);
      toy::write_curriculum_artifacts(toy_out, result, cfg);
      std::printf(
          "stage1 reconstruction %.3f | stage2 acc %.3f len %.1f (from %.1f) | "
          "hard %d, acc %.3f -> %.3f | feasibility %.3f\n",
          result.stage1_reconstruction, result.s2_eval.accuracy, result.s2_eval.mean_tokens,
          result.s1_eval.mean_tokens, result.hard_count, result.hard_accuracy_before,
          result.hard_accuracy_after, result.scaffold_feasibility);
    } else if (*ingest_cmd) {
      auto records = ingest_dataset(ingest_in);
      std::vector<Json> rows;
      rows.reserve(records.size());
      for (const auto& r : records)
        rows.push_back({{"id", r.id}, {"question", r.question}, {"gold", r.gold.raw}});
      write_jsonl(ingest_out, rows);
      std::printf("ingested %zu records\n", records.size());
    } else if (*collect) {
      auto client = collect_backend.make_client();
      DecodingParams decoding;
      decoding.temperature = collect_temperature;
      decoding.max_new_tokens = collect_max_new;
      auto stats = collect_teacher(client, ingest_dataset(collect_in), collect_out, decoding,
                                   collect_inflight);
      std::printf("%s\n", stats.report().c_str());
    } else if (*sample) {
      auto client = sample_backend.make_client();
      std::optional<PolicyClient> ref;
      if (!sample_ref_endpoint.empty()) {
        ref.emplace(std::make_shared<HttpTransport>(sample_ref_endpoint,
                                                    PolicyClient::auth_token_from_env()));
      }
      std::vector<PromptItem> prompts;
      for_each_jsonl(sample_in, [&](std::size_t line_no, const Json& rec) {
        PromptItem item;
        item.id = rec.contains("prompt_id") ? rec.at("prompt_id").get<std::string>()
                                            : rec.value("id", "line-" + std::to_string(line_no));
        item.prompt = rec.at("prompt").get<std::string>();
        item.gold_raw = rec.value("gold_answer", rec.value("gold", ""));
        item.baseline_tokens = rec.value("baseline_tokens", 0);
        item.baseline_steps = rec.value("baseline_steps", 0);
        item.teacher_tokens = rec.value("teacher_tokens", 0);
        prompts.push_back(std::move(item));
      });
      DecodingParams decoding;
      decoding.temperature = sample_temperature;
      decoding.max_new_tokens = sample_max_new;
      decoding.seed = sample_seed;
      decoding.want_logprobs = true;
      const int kept = sample_groups(client, prompts, sample_g, decoding,
                                     ref ? &*ref : nullptr, sample_out, sample_inflight);
      std::printf("wrote %d/%zu groups\n", kept, prompts.size());
    } else if (*hard_cmd) {
      auto client = hard_backend.make_client();
      auto hard = identify_hard_dataset(client, ingest_dataset(hard_in), hard_max_new,
                                        hard_inflight);
      write_hard_set(hard_out, hard);
      if (!hard_retained.empty()) write_retained(hard_retained, hard);
      std::printf("hard=%zu retained=%zu\n", hard.failed_ids.size(), hard.retained_ids.size());
    } else if (*stage_cmd) {
      StageConfig cfg;
      cfg.stage = stage_no;
      cfg.corruption = stage_corruption;
      cfg.reward = load_reward(stage_reward_cfg);
      cfg.grpo = load_grpo(stage_grpo_cfg);
      cfg.decoding.temperature = stage_temperature;
      cfg.decoding.max_new_tokens = stage_max_new;
      cfg.decoding.want_logprobs = true;
      cfg.max_in_flight = stage_inflight;

      std::optional<PolicyClient> client;
      if (stage_no != 1) client.emplace(stage_backend.make_client());
      std::optional<PolicyClient> ref;
      if (!stage_ref_endpoint.empty()) {
        ref.emplace(std::make_shared<HttpTransport>(stage_ref_endpoint,
                                                    PolicyClient::auth_token_from_env()));
      }
      std::optional<DatasetHardSet> hard;
      if (!stage_hard.empty()) hard = read_hard_set(stage_hard);

      auto artifacts = run_stage(cfg, read_traces(stage_traces), hard ? &*hard : nullptr,
                                 client ? &*client : nullptr, ref ? &*ref : nullptr,
                                 stage_out_dir);
      if (artifacts.no_op) {
        std::printf("stage %d: nothing to do\n", stage_no);
      } else if (stage_no == 1) {
        std::printf("stage 1 pairs: %s\n", artifacts.pairs.c_str());
      } else {
        std::printf("stage %d batch: %s (%d groups)\n", stage_no, artifacts.batch.c_str(),
                    artifacts.group_count);
      }
    } else if (*eval_cmd) {
      auto client = eval_backend.make_client();
      auto result = evaluate(client, ingest_dataset(eval_testset), eval_max_new, eval_inflight);
      write_eval_result(eval_out, result);
      std::printf("n=%d accuracy=%.4f mean_tokens=%.2f\n", result.n, result.accuracy,
                  result.mean_tokens);
    } else if (*compare_cmd) {
      auto a = read_eval_result(cmp_a);
      auto b = read_eval_result(cmp_b);
      Json report;
      if (!a.samples.empty() && !b.samples.empty()) {
        report = comparison_to_json(compare(a, b));
      }
      auto delta = summarize_delta(a, b);
      report["acc_delta_points"] = delta.acc_delta_points;
      report["token_reduction_fraction"] = delta.token_reduction_fraction;
      write_file_atomic(cmp_out, report.dump(2) + "\n");
      std::printf("acc delta %.2f pts, token reduction %.1f%%\n", delta.acc_delta_points,
                  delta.token_reduction_fraction * 100.0);
    } else if (*hist_cmd) {
      auto result = read_eval_result(hist_in);
      auto buckets = histogram(result, hist_width);
      write_file_atomic(hist_out, histogram_csv(buckets));
      std::printf("%zu buckets over %d samples\n", buckets.size(), result.n);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
