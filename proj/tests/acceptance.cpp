// Acceptance suite: every criterion below prints one PASS/FAIL line; the
// process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "cotc/client.hpp"
#include "cotc/corruption.hpp"
#include "cotc/errors.hpp"
#include "cotc/eval.hpp"
#include "cotc/grpo.hpp"
#include "cotc/io.hpp"
#include "cotc/orchestrate.hpp"
#include "cotc/reward.hpp"
#include "cotc/rng.hpp"
#include "cotc/toy/curriculum.hpp"
#include "cotc/toy/policy.hpp"
#include "cotc/toy/tasks.hpp"

using namespace cotc;

namespace {

int failures = 0;

void criterion(int number, const std::string& name, const std::function<bool(std::string&)>& fn) {
  std::string detail;
  bool ok = false;
  const auto start = std::chrono::steady_clock::now();
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  std::printf("[%s] criterion %d: %s (%lld ms)%s%s\n", ok ? "PASS" : "FAIL", number,
              name.c_str(), static_cast<long long>(ms), detail.empty() ? "" : " -- ",
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

bool require(bool cond, const std::string& what, std::string& detail) {
  if (!cond && detail.empty()) detail = "failed: " + what;
  return cond;
}

// ---------------------------------------------------------------------------

bool reward_fixtures(std::string& detail) {
  RewardConfig cfg;
  bool ok = true;
  ok &= require(reward_stage2(false, true, 50, 5, 100, 10, cfg).total == -2.0,
                "incorrect -> -2.0", detail);
  ok &= require(reward_stage2(false, false, 50, 5, 100, 10, cfg).total == -3.0,
                "incorrect+malformed -> -3.0", detail);
  ok &= require(reward_stage2(true, true, 100, 10, 100, 10, cfg).total == 1.0,
                "correct at parity -> +1.0", detail);
  ok &= require(reward_stage3(false, true, 50, 100, cfg).total == -2.0,
                "stage 3 incorrect -> -2.0", detail);
  ok &= require(reward_stage3(true, true, 100, 100, cfg).total == 1.0,
                "stage 3 parity -> +1.0", detail);

  const double stage2_max = reward_stage2(true, true, 0, 0, 100, 10, cfg).total;
  ok &= require(std::fabs(stage2_max - 2.1) < 1e-12, "stage 2 maximum 2.1", detail);

  ok &= require(reward_stage3(true, true, 0, 100, cfg).bonus == 0.8, "stage 3 bonus max +0.8",
                detail);
  ok &= require(reward_stage3(true, true, 100000, 100, cfg).bonus == -0.8,
                "stage 3 bonus floor -0.8", detail);
  for (int len = 0; len <= 400; len += 7) {
    const double bonus = reward_stage3(true, true, len, 100, cfg).bonus;
    ok &= require(bonus >= -0.8 && bonus <= 0.8, "stage 3 bonus in [-0.8, 0.8]", detail);
  }
  return ok;
}

bool gating_property(std::string& detail) {
  RewardConfig cfg;
  std::mt19937_64 gen(20260810);
  double min_correct = 1e18, max_incorrect = -1e18;
  for (int i = 0; i < 10000; ++i) {
    const bool correct = gen() % 2 == 0;
    const bool format_ok = gen() % 4 != 0;
    const int baseline_tokens = 1 + static_cast<int>(gen() % 500);
    const int baseline_steps = 1 + static_cast<int>(gen() % 24);
    const int len_tokens = static_cast<int>(gen() % 1500);
    const int len_steps = static_cast<int>(gen() % 48);
    const RewardBreakdown b =
        (gen() % 2 == 0)
            ? reward_stage2(correct, format_ok, len_tokens, len_steps, baseline_tokens,
                            baseline_steps, cfg)
            : reward_stage3(correct, format_ok, len_tokens, baseline_tokens, cfg);
    if (!correct) {
      if (b.bonus != 0.0) return require(false, "bonus must be exactly 0 when incorrect", detail);
      max_incorrect = std::max(max_incorrect, b.total);
    } else {
      min_correct = std::min(min_correct, b.total);
    }
  }
  return require(min_correct > max_incorrect,
                 "strict ordering: min correct " + std::to_string(min_correct) +
                     " vs max incorrect " + std::to_string(max_incorrect),
                 detail);
}

bool grpo_math(std::string& detail) {
  GRPOConfig cfg;
  bool ok = true;

  // Advantages sum to zero within 1e-9.
  std::mt19937_64 gen(77);
  for (int i = 0; i < 3000 && ok; ++i) {
    std::vector<double> rewards(2 + gen() % 6);
    for (auto& r : rewards) r = (static_cast<double>(gen() % 9001) - 4500.0) / 137.0;
    auto adv = compute_advantages(rewards, cfg);
    double sum = 0.0;
    for (double a : adv) sum += a;
    ok &= require(std::fabs(sum) <= 1e-9, "advantage zero-sum", detail);
  }

  // Reward-shift invariance, exact on dyadic inputs.
  for (int i = 0; i < 3000 && ok; ++i) {
    const std::size_t n = std::vector<std::size_t>{2, 4, 8}[gen() % 3];
    std::vector<double> rewards(n), shifted(n);
    const double c = (static_cast<double>(gen() % 513) - 256.0) / 64.0;
    for (std::size_t k = 0; k < n; ++k) {
      rewards[k] = (static_cast<double>(gen() % 2049) - 1024.0) / 64.0;
      shifted[k] = rewards[k] + c;
    }
    ok &= require(compute_advantages(rewards, cfg) == compute_advantages(shifted, cfg),
                  "reward-shift invariance", detail);
  }

  // KL estimator nonnegativity on 1e5 fuzzed pairs.
  Rng rng(31);
  for (int i = 0; i < 100000 && ok; ++i) {
    std::vector<double> pol{-30.0 * rng.real()}, ref{-30.0 * rng.real()};
    ok &= require(estimate_kl(pol, ref).per_token[0] >= 0.0, "kl nonnegative", detail);
  }

  // Analytic gradient vs central differences across 20 seeds.
  const auto tasks = toy::gen_tasks(5, 8, 2);
  for (std::uint64_t seed = 0; seed < 20 && ok; ++seed) {
    Rng srng(mix_seed(1000, seed));
    toy::ToyPolicy policy;
    {
      auto params = policy.params();
      for (auto& p : params) p = srng.real() * 2.0 - 1.0;
      policy.set_params(params);
    }
    toy::ToyPolicy reference;
    {
      auto params = reference.params();
      for (auto& p : params) p = srng.real() * 2.0 - 1.0;
      reference.set_params(params);
    }
    if (policy.param_count() > 256) return require(false, "policy exceeds 256 params", detail);

    GRPOConfig gc;
    gc.group_size = 2 + static_cast<int>(seed % 3);
    gc.kl_coefficient = (seed % 2 == 0) ? 0.1 : 0.0;
    SampleGroup group;
    group.prompt_id = "acc";
    const auto& task = tasks[static_cast<std::size_t>(seed) % tasks.size()];
    for (int g = 0; g < gc.group_size; ++g) {
      auto roll = policy.sample(task, false, srng);
      SampleResponse resp;
      resp.reward_total = srng.real() * 4.0 - 2.0;
      resp.logp_policy = roll.logp;
      resp.logp_ref = reference.action_logprobs(task, roll.actions, false);
      resp.rollout_id = roll.id;
      group.responses.push_back(std::move(resp));
    }

    auto grad = grpo_gradient(policy, group, gc);
    const double h = 1e-5;
    auto base = policy.params();
    for (std::size_t k = 0; k < grad.size() && ok; ++k) {
      auto p = base;
      p[k] += h;
      policy.set_params(p);
      const double up = grpo_surrogate(policy, group, gc);
      p[k] -= 2 * h;
      policy.set_params(p);
      const double down = grpo_surrogate(policy, group, gc);
      policy.set_params(base);
      const double fd = (up - down) / (2 * h);
      const double tol = 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(grad[k])});
      if (std::fabs(grad[k] - fd) > tol) {
        ok = require(false,
                     "gradcheck seed " + std::to_string(seed) + " component " +
                         std::to_string(k) + ": " + std::to_string(grad[k]) + " vs " +
                         std::to_string(fd),
                     detail);
      }
    }
  }
  return ok;
}

bool corruption_statistics(std::string& detail) {
  bool ok = true;

  CorruptionConfig cfg;
  cfg.sample_mask_prob = 0.7;
  Rng rng(91);
  int masked = 0;
  for (int i = 0; i < 10000; ++i)
    if (!mask_steps(12, cfg, rng).empty()) ++masked;
  const double fraction = masked / 10000.0;
  ok &= require(fraction >= 0.68 && fraction <= 0.72,
                "masked fraction " + std::to_string(fraction), detail);

  CorruptionConfig always = cfg;
  always.sample_mask_prob = 1.0;
  for (int i = 0; i < 300 && ok; ++i) {
    ok &= require(mask_steps(3, always, rng).size() == 1, "n=3 masks exactly 1", detail);
  }

  std::mt19937_64 gen(17);
  const char* words[] = {"hold", "value", "apply", "keep", "brief", "plan"};
  auto make_trace = [&](int id, int n) {
    ReasoningTrace t;
    t.id = "acc" + std::to_string(id);
    t.question = "q";
    for (int i = 0; i < n; ++i) {
      std::string text;
      for (int w = 0; w < 4; ++w) {
        if (w) text += ' ';
        text += words[gen() % 6];
      }
      text += '.';
      t.steps.push_back({i + 1, text});
    }
    t.gold_answer = AnswerValue::from_raw("1");
    t.teacher_token_count = count_whitespace_tokens(render_steps(t.steps));
    t.source = TraceSource::synthetic;
    return t;
  };

  for (int n = 3; n <= 40 && ok; ++n) {
    auto trace = make_trace(n, n);
    Rng r2(derive_seed(7, trace.id));
    auto ex = build_stage2_example(trace, cfg, r2);
    ok &= require(ex.masked_indices.size() >= 2,
                  "stage 2 masks at least 2 for n=" + std::to_string(n), detail);
  }

  for (int i = 0; i < 1000 && ok; ++i) {
    auto trace = make_trace(1000 + i, 1 + static_cast<int>(gen() % 10));
    Rng r3(derive_seed(11, trace.id));
    auto ex = build_stage1_example(trace, cfg, r3);
    auto seg = segment_steps(ex.target);
    ok &= require(seg.steps.size() == trace.steps.size(), "round-trip step count", detail);
    for (std::size_t k = 0; ok && k < trace.steps.size(); ++k) {
      ok &= require(seg.steps[k].text == trace.steps[k].text, "round-trip step text", detail);
    }
  }
  return ok;
}

bool toy_curriculum(std::string& detail) {
  toy::ToyLabConfig cfg;  // seed 42 defaults
  auto result = toy::run_curriculum(cfg);

  bool ok = true;
  ok &= require(result.stage1_reconstruction >= 0.95,
                "reconstruction " + std::to_string(result.stage1_reconstruction), detail);

  const double reduction = 1.0 - result.s2_eval.mean_tokens / result.s1_eval.mean_tokens;
  ok &= require(reduction >= 0.20, "stage 2 length reduction " + std::to_string(reduction),
                detail);
  const double drop = (result.s1_eval.accuracy - result.s2_eval.accuracy) * 100.0;
  ok &= require(drop <= 2.0, "stage 2 accuracy drop " + std::to_string(drop) + " pts", detail);

  ok &= require(result.hard_count > 0, "hard set nonempty", detail);
  ok &= require(result.hard_accuracy_after > result.hard_accuracy_before,
                "hard-set accuracy " + std::to_string(result.hard_accuracy_before) + " -> " +
                    std::to_string(result.hard_accuracy_after),
                detail);
  ok &= require(result.scaffold_feasibility >= 0.9,
                "scaffold feasibility " + std::to_string(result.scaffold_feasibility), detail);
  return ok;
}

bool reward_hacking(std::string& detail) {
  toy::ToyLabConfig cfg;
  auto demo = toy::run_reward_hacking_demo(cfg);

  bool ok = true;
  // The linear reward prefers the degenerate answer-only policy to the
  // verbose stage-1 policy; the hierarchical reward does not.
  ok &= require(demo.degenerate_reward_linear > demo.stage1_reward_linear,
                "linear reward prefers the degenerate policy", detail);
  ok &= require(demo.degenerate_reward_hier < demo.stage1_reward_hier,
                "hierarchical reward rejects the degenerate policy", detail);
  const double gap = (demo.hierarchical_accuracy - demo.linear_accuracy) * 100.0;
  ok &= require(gap >= 20.0,
                "accuracy gap " + std::to_string(gap) + " pts (hier " +
                    std::to_string(demo.hierarchical_accuracy) + ", linear " +
                    std::to_string(demo.linear_accuracy) + ")",
                detail);
  return ok;
}

bool report_arithmetic(std::string& detail) {
  const auto fixtures = std::filesystem::path(COTC_SOURCE_DIR) / "data" / "fixtures";
  auto base = read_eval_result(fixtures / "table3_base_results.jsonl");
  auto ours = read_eval_result(fixtures / "table3_bridge_results.jsonl");
  auto report = compare(base, ours);

  bool ok = true;
  ok &= require(report.both_correct == 856, "both_correct 856", detail);
  ok &= require(report.fixed == 264, "fixed 264", detail);
  ok &= require(report.regressed == 119, "regressed 119", detail);
  ok &= require(report.both_wrong == 199, "both_wrong 199", detail);
  ok &= require(report.net == 145, "net +145", detail);

  auto agg_base = read_eval_result(fixtures / "summary_base.json");
  auto agg_ours = read_eval_result(fixtures / "summary_bridge.json");
  auto delta = summarize_delta(agg_base, agg_ours);
  const double pts = std::round(delta.acc_delta_points * 100.0) / 100.0;
  const double pct = std::round(delta.token_reduction_fraction * 1000.0) / 10.0;
  ok &= require(pts == 11.29, "accuracy delta 11.29 pts, got " + std::to_string(pts), detail);
  ok &= require(pct == 27.4, "token reduction 27.4%, got " + std::to_string(pct), detail);
  return ok;
}

bool orchestrator_replay(std::string& detail) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("cotc_acceptance_replay_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  auto scripted = std::make_shared<ScriptedTransport>([](const std::string& path,
                                                         const Json& body) {
    if (path == "/v1/score") {
      return Json{{"token_logprobs", {-0.5, -0.5}}}.dump();
    }
    const auto prompt = body.at("prompt").get<std::string>();
    const int n = body.value("n", 1);
    Json choices = Json::array();
    for (int i = 0; i < n; ++i) {
      const auto h = fnv1a64(prompt + "|" + std::to_string(i));
      std::string text = "Step 1: candidate. Final Answer: " + std::to_string(h % 100);
      Json lp{{"tokens", Json::array()}, {"token_logprobs", Json::array()}};
      for (int t = 0; t < count_whitespace_tokens(text); ++t) {
        lp["tokens"].push_back("t" + std::to_string(t));
        lp["token_logprobs"].push_back(-0.3 - 0.05 * t);
      }
      choices.push_back({{"text", text}, {"logprobs", lp}});
    }
    return Json{{"choices", choices}}.dump();
  });

  std::vector<ReasoningTrace> traces;
  for (int i = 0; i < 6; ++i) {
    ReasoningTrace t;
    t.id = "r" + std::to_string(i);
    t.question = "Compute 2 + " + std::to_string(i) + ".";
    t.steps = {{1, "Calculate 2 + " + std::to_string(i) + " = " + std::to_string(2 + i) + "."},
               {2, "Let me double-check the previous step before continuing."},
               {3, "Final Answer: " + std::to_string(2 + i)}};
    t.gold_answer = AnswerValue::from_raw(std::to_string(2 + i));
    t.teacher_token_count = count_whitespace_tokens(render_steps(t.steps));
    t.source = TraceSource::synthetic;
    traces.push_back(std::move(t));
  }

  StageConfig cfg;
  cfg.stage = 2;
  cfg.grpo.group_size = 2;
  cfg.grpo.kl_coefficient = 0.0;

  const auto record_file = dir / "session.jsonl";
  {
    PolicyClient client(std::make_shared<RecordingTransport>(scripted, record_file), {}, {1, 0});
    run_stage(cfg, traces, nullptr, &client, nullptr, dir / "live");
  }
  {
    PolicyClient client(std::make_shared<ReplayTransport>(record_file), {}, {1, 0});
    run_stage(cfg, traces, nullptr, &client, nullptr, dir / "replayed");
  }

  bool ok = true;
  for (const char* name : {"stage2_groups.jsonl", "stage2_rewards.jsonl", "stage2_batch.jsonl"}) {
    ok &= require(read_file(dir / "live" / name) == read_file(dir / "replayed" / name),
                  std::string("byte-identical ") + name, detail);
  }
  std::filesystem::remove_all(dir);
  return ok;
}

}  // namespace

int main() {
  criterion(1, "reward fixtures reproduce the configured semantics exactly", reward_fixtures);
  criterion(2, "gating and strict correctness ordering over 10,000 inputs", gating_property);
  criterion(3, "GRPO math: advantages, KL estimator, finite-difference gradient", grpo_math);
  criterion(4, "corruption statistics and round-trip identity", corruption_statistics);
  criterion(5, "toy curriculum end to end (seed-fixed)", toy_curriculum);
  criterion(6, "hierarchical reward resists the reward-hacking fixture", reward_hacking);
  criterion(7, "report arithmetic reproduces the shipped fixtures", report_arithmetic);
  criterion(8, "orchestrator replay yields byte-identical artifacts", orchestrator_replay);

  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d criterion(s) failed\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
