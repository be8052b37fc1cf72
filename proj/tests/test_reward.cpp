#include <doctest.h>

#include <algorithm>
#include <random>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"
#include "cotc/reward.hpp"
#include "test_util.hpp"

using namespace cotc;

namespace {

const char* const kFigureOutput =
    "Step 1: Travis started with 61 apps. Step 2: He deleted 9 apps: 61 - 9 = 52. "
    "Step 3: He downloaded 18 more: 52 + 18 = 70. Final Answer: 70";

}  // namespace

TEST_CASE("format_check on the documented cases") {
  CHECK(format_check(kFigureOutput).ok);
  CHECK(format_check(kFigureOutput).reasons.empty());

  auto empty = format_check("");
  CHECK_FALSE(empty.ok);
  CHECK(empty.has("empty_output"));
  CHECK(empty.has("no_answer_marker"));

  auto truncated = format_check("Step 1: 61-9=52. Step 2: 52+18");
  CHECK_FALSE(truncated.ok);
  CHECK(truncated.has("no_answer_marker"));
  CHECK(truncated.has("truncated_midline"));
}

TEST_CASE("format_check hand-classified 30-case fixture") {
  struct Case {
    const char* text;
    bool ok;
    bool empty_output;
    bool no_answer_marker;
    bool truncated_midline;
  };
  const Case cases[] = {
      {kFigureOutput, true, false, false, false},
      {"", false, true, true, false},
      {"   \n\t ", false, true, true, false},
      {"Step 1: 61-9=52. Step 2: 52+18", false, false, true, true},
      {"Final Answer: 5", true, false, false, false},
      {"The sum is 10. Final Answer: 10", true, false, false, false},
      {"#### 9", true, false, false, false},
      {"the total is 9 so #### 9", true, false, false, false},
      {"Step 1: compute. #### 9", true, false, false, false},
      {"Step 1: a. Step 2: b. Final Answer: 7", true, false, false, false},
      {"working working 18", false, false, true, true},
      {"all done here.", false, false, true, false},
      {"Step 1: only step, no answer.", false, false, true, false},
      {"Final Answer:", false, false, true, false},  // valueless marker still ends the line
      {"Step 1: x. Final Answer: 12\n", true, false, false, false},
      {"step 2: lower case marker. final answer: 3", true, false, false, false},
      {"random words without end", false, false, true, true},
      {"does it end well?", false, false, true, false},
      {"oops!", false, false, true, false},
      {"#### ", false, false, true, false},
      {"Step 1: thing. #### 4 and then more text.", true, false, false, false},
      {"Final Answer: 8\nStep 1: post-hoc step.", true, false, false, false},
      {"OnlyNumber 42", false, false, true, true},
      {"Step 3: partial calc = ", false, false, true, true},
      {"#### -7", true, false, false, false},
      {"Final Answer: 1/2", true, false, false, false},
      {"Step 1: a b c", false, false, true, true},
      // multi-paragraph with no step markers: structurally rejected even
      // though the marker itself is fine, so no named reason fires
      {"rambling\n\nsecond paragraph. Final Answer: 6", false, false, false, false},
      {"Final Answer: 6\n\nrambling afterwards", false, false, false, true},
      {"Step 1: ok. Step 2: fine. #### 11", true, false, false, false},
  };
  int n = 0;
  for (const auto& c : cases) {
    auto r = format_check(c.text);
    CHECK_MESSAGE(r.ok == c.ok, "case: ", c.text);
    CHECK_MESSAGE(r.has("empty_output") == c.empty_output, "case: ", c.text);
    CHECK_MESSAGE(r.has("no_answer_marker") == c.no_answer_marker, "case: ", c.text);
    CHECK_MESSAGE(r.has("truncated_midline") == c.truncated_midline, "case: ", c.text);
    ++n;
  }
  CHECK(n == 30);
}

TEST_CASE("stage 2 reward fixtures") {
  RewardConfig cfg;

  CHECK(reward_stage2(false, true, 100, 5, 100, 5, cfg).total == doctest::Approx(-2.0));
  CHECK(reward_stage2(false, false, 100, 5, 100, 5, cfg).total == doctest::Approx(-3.0));
  CHECK(reward_stage2(true, true, 100, 5, 100, 5, cfg).total == doctest::Approx(1.0));

  auto half = reward_stage2(true, true, 50, 5, 100, 10, cfg);
  CHECK(half.bonus == doctest::Approx(0.55));
  CHECK(half.total == doctest::Approx(1.55));

  // Maximum total: zero-length outputs at both axes.
  CHECK(reward_stage2(true, true, 0, 0, 100, 10, cfg).total == doctest::Approx(2.1));
  // Longer-than-baseline output: bonus clamps at zero, never negative.
  CHECK(reward_stage2(true, true, 300, 30, 100, 10, cfg).total == doctest::Approx(1.0));

  CHECK_THROWS_AS(reward_stage2(true, true, 10, 1, 0, 5, cfg), InvalidBaseline);
  CHECK_THROWS_AS(reward_stage2(true, true, 10, 1, 5, 0, cfg), InvalidBaseline);
}

TEST_CASE("stage 3 reward fixtures") {
  RewardConfig cfg;

  CHECK(reward_stage3(true, true, 100, 100, cfg).total == doctest::Approx(1.0));
  CHECK(reward_stage3(true, true, 50, 100, cfg).total == doctest::Approx(1.4));

  auto clamped = reward_stage3(true, true, 300, 100, cfg);
  CHECK(clamped.bonus == doctest::Approx(-0.8));
  CHECK(clamped.total == doctest::Approx(0.2));
  // Even a maximally long correct output beats every incorrect total.
  CHECK(clamped.total > reward_stage3(false, true, 1, 100, cfg).total);

  // Negative bonus when longer than the teacher.
  CHECK(reward_stage3(true, true, 150, 100, cfg).bonus == doctest::Approx(-0.4));

  CHECK_THROWS_AS(reward_stage3(true, true, 10, 0, cfg), InvalidBaseline);
}

TEST_CASE("gating and strict correctness ordering over 10,000 random inputs") {
  RewardConfig cfg;
  std::mt19937_64 gen(4242);
  double min_correct = 1e9, max_incorrect = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const bool correct = gen() % 2 == 0;
    const bool format_ok = gen() % 4 != 0;
    const int baseline_tokens = 1 + static_cast<int>(gen() % 400);
    const int baseline_steps = 1 + static_cast<int>(gen() % 20);
    const int len_tokens = static_cast<int>(gen() % 1200);
    const int len_steps = static_cast<int>(gen() % 40);

    RewardBreakdown b;
    if (gen() % 2 == 0) {
      b = reward_stage2(correct, format_ok, len_tokens, len_steps, baseline_tokens,
                        baseline_steps, cfg);
      CHECK(b.total >= -3.0);
      CHECK(b.total <= 2.1);
    } else {
      b = reward_stage3(correct, format_ok, len_tokens, baseline_tokens, cfg);
      CHECK(b.total >= -3.0);
      CHECK(b.total <= 1.8);
    }
    if (!correct) {
      CHECK(b.bonus == 0.0);  // gating is exact, not approximate
      max_incorrect = std::max(max_incorrect, b.total);
    } else {
      min_correct = std::min(min_correct, b.total);
    }
  }
  CHECK(min_correct > max_incorrect);
}

TEST_CASE("monotonicity in response length") {
  RewardConfig cfg;
  double prev = 1e9;
  for (int tokens = 0; tokens <= 400; tokens += 10) {
    const double total = reward_stage2(true, true, tokens, 5, 200, 10, cfg).total;
    CHECK(total <= prev + 1e-12);
    prev = total;
  }
  prev = 1e9;
  for (int steps = 0; steps <= 40; ++steps) {
    const double total = reward_stage2(true, true, 100, steps, 200, 10, cfg).total;
    CHECK(total <= prev + 1e-12);
    prev = total;
  }
  prev = 1e9;
  for (int tokens = 0; tokens <= 400; tokens += 10) {
    const double total = reward_stage3(true, true, tokens, 200, cfg).total;
    CHECK(total <= prev + 1e-12);
    prev = total;
  }
}

TEST_CASE("single-term bonus switch uses the ratio formula") {
  RewardConfig cfg;
  cfg.use_single_term_bonus = true;
  CHECK(reward_stage2(true, true, 50, 999, 100, 10, cfg).bonus == doctest::Approx(0.4));
  CHECK(reward_stage2(true, true, 300, 1, 100, 10, cfg).bonus == doctest::Approx(-0.8));
}

TEST_CASE("reward config validation and file loading") {
  RewardConfig bad;
  bad.incorrect_penalty = 0.5;  // would outrank the worst correct total
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  RewardConfig nan_cfg;
  nan_cfg.compression_cap = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(nan_cfg.validate(), ConfigError);

  const auto dir = cotc::testing::make_temp_dir("reward");
  write_file_atomic(dir / "reward.json", RewardConfig{}.to_json().dump());
  auto loaded = RewardConfig::load(dir / "reward.json");
  CHECK(loaded.incorrect_penalty == -2.0);
  CHECK(loaded.step_bonus_cap == 0.9);
  CHECK(loaded.token_bonus_cap == 0.2);
  CHECK(loaded.compression_cap == 0.8);

  write_file_atomic(dir / "custom.json", R"({"incorrect_answer_penalty": -5.0})");
  CHECK(RewardConfig::load(dir / "custom.json").incorrect_penalty == -5.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("score_response wrappers grade and measure the raw text") {
  RewardConfig cfg;
  const auto gold = AnswerValue::from_raw("70");
  auto b = score_response_stage2(kFigureOutput, gold, 100, 10, cfg);
  CHECK(b.correct);
  CHECK(b.format_ok);
  CHECK(b.length_tokens == 32);
  CHECK(b.length_steps == 3);
  CHECK(b.total > 1.0);

  auto wrong = score_response_stage3("Step 1: nonsense. Final Answer: 9", gold, 100, cfg);
  CHECK_FALSE(wrong.correct);
  CHECK(wrong.total == doctest::Approx(-2.0));
}
