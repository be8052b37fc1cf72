#include <benchmark/benchmark.h>

#include "cotc/corruption.hpp"
#include "cotc/grpo.hpp"
#include "cotc/reward.hpp"
#include "cotc/rng.hpp"
#include "cotc/toy/policy.hpp"
#include "cotc/toy/tasks.hpp"
#include "cotc/trace.hpp"

namespace {

using namespace cotc;

std::string long_chain(int steps) {
  std::vector<Step> v;
  for (int i = 0; i < steps; ++i)
    v.push_back({i + 1, "He deleted 9 apps: 61 - 9 = 52 and checked the total again."});
  v.push_back({steps + 1, "Final Answer: 52"});
  return render_steps(v);
}

void BM_SegmentSteps(benchmark::State& state) {
  const std::string text = long_chain(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_steps(text));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * text.size());
}
BENCHMARK(BM_SegmentSteps)->Arg(8)->Arg(64);

void BM_ExtractAnswer(benchmark::State& state) {
  const std::string text = long_chain(32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_final_answer(text));
  }
}
BENCHMARK(BM_ExtractAnswer);

void BM_GradeAnswer(benchmark::State& state) {
  const auto pred = AnswerValue::from_raw("$1,234.50");
  const auto gold = AnswerValue::from_raw("1234.5");
  for (auto _ : state) {
    benchmark::DoNotOptimize(grade_answer(pred, gold));
  }
}
BENCHMARK(BM_GradeAnswer);

void BM_Stage1Corruption(benchmark::State& state) {
  ReasoningTrace t;
  t.id = "bench";
  t.question = "q";
  for (int i = 0; i < 12; ++i) t.steps.push_back({i + 1, "keep the running value in mind."});
  t.gold_answer = AnswerValue::from_raw("1");
  CorruptionConfig cfg;
  std::uint64_t salt = 0;
  for (auto _ : state) {
    Rng rng(mix_seed(1, salt++));
    benchmark::DoNotOptimize(build_stage1_example(t, cfg, rng));
  }
}
BENCHMARK(BM_Stage1Corruption);

void BM_RewardStage2(benchmark::State& state) {
  RewardConfig cfg;
  int len = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reward_stage2(true, true, 40 + (len++ % 100), 4, 120, 8, cfg));
  }
}
BENCHMARK(BM_RewardStage2);

void BM_Advantages(benchmark::State& state) {
  GRPOConfig cfg;
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < rewards.size(); ++i) rewards[i] = static_cast<double>(i % 7) - 3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_advantages(rewards, cfg));
  }
}
BENCHMARK(BM_Advantages)->Arg(2)->Arg(8);

void BM_ToyRollout(benchmark::State& state) {
  toy::ToyPolicy policy;
  auto tasks = toy::gen_tasks(1, 16, 4);
  Rng rng(3);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(policy.sample(tasks[i++ % tasks.size()], false, rng));
    if (policy.rollout_count() > 8192) policy.clear_rollouts();
  }
}
BENCHMARK(BM_ToyRollout);

}  // namespace

BENCHMARK_MAIN();
