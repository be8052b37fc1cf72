#include <doctest.h>

#include <map>

#include "cotc/client.hpp"
#include "cotc/errors.hpp"
#include "cotc/eval.hpp"
#include "cotc/io.hpp"
#include "test_util.hpp"

using namespace cotc;

namespace {

const std::filesystem::path kFixtures =
    std::filesystem::path(COTC_SOURCE_DIR) / "data" / "fixtures";

EvalResult result_from(std::vector<std::tuple<std::string, bool, int, bool>> rows) {
  std::vector<EvalSample> samples;
  for (auto& [id, correct, tokens, format_ok] : rows) {
    EvalSample s;
    s.id = id;
    s.correct = correct;
    s.tokens = tokens;
    s.format_ok = format_ok;
    samples.push_back(s);
  }
  return EvalResult::from_samples(std::move(samples));
}

}  // namespace

TEST_CASE("evaluate grades greedy completions") {
  auto transport = std::make_shared<ScriptedTransport>([](const std::string&, const Json& body) {
    const auto prompt = body.at("prompt").get<std::string>();
    CHECK(body.at("temperature").get<double>() == 0.0);  // greedy protocol
    CHECK(body.at("max_tokens").get<int>() == 512);
    std::string text;
    if (prompt.find("Travis") != std::string::npos) {
      text =
          "Step 1: Travis started with 61 apps. Step 2: He deleted 9 apps: 61 - 9 = 52. "
          "Step 3: He downloaded 18 more: 52 + 18 = 70. Final Answer: 70";
    } else if (prompt.find("truncme") != std::string::npos) {
      text = "Step 1: this response just stops 12";
    } else {
      text = "Step 1: easy. Final Answer: 5";
    }
    return Json{{"choices", {{{"text", text}}}}}.dump();
  });
  PolicyClient client(transport, {}, {1, 0});

  std::vector<DatasetRecord> testset;
  testset.push_back({"travis",
                     "Travis had 61 apps on his tablet. He deleted 9 apps he didn't use anymore "
                     "and downloaded 18 more. How many apps are on his tablet now?",
                     AnswerValue::from_raw("70")});
  testset.push_back({"other", "what is five?", AnswerValue::from_raw("5")});
  testset.push_back({"hard", "truncme please", AnswerValue::from_raw("9")});

  auto result = evaluate(client, testset, 512, 2);
  REQUIRE(result.n == 3);
  CHECK(result.samples[0].id == "travis");
  CHECK(result.samples[0].correct);
  CHECK(result.samples[0].format_ok);
  CHECK_FALSE(result.samples[0].truncated);
  CHECK(result.samples[1].correct);
  CHECK_FALSE(result.samples[2].correct);
  CHECK(result.samples[2].truncated);  // ends mid-line
  CHECK(result.accuracy == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(evaluate(client, {}, 512, 1), EmptyTestset);
}

TEST_CASE("evaluate aggregates match hand computation on a 10-sample fixture") {
  auto transport = std::make_shared<ScriptedTransport>([](const std::string&, const Json& body) {
    const auto prompt = body.at("prompt").get<std::string>();
    // question carries its own index: "fixture k"
    const int k = std::stoi(prompt.substr(prompt.find("fixture ") + 8, 2));
    std::string text = "Step 1: work. Final Answer: " + std::to_string(k % 2 == 0 ? k : -1);
    return Json{{"choices", {{{"text", text}, {"token_count", 10 + k}}}}}.dump();
  });
  PolicyClient client(transport, {true, true}, {1, 0});

  std::vector<DatasetRecord> testset;
  for (int k = 0; k < 10; ++k) {
    testset.push_back({"f" + std::to_string(k), "fixture " + std::to_string(k) + " ?",
                       AnswerValue::from_raw(std::to_string(k))});
  }
  auto result = evaluate(client, testset, 512, 4);
  REQUIRE(result.n == 10);
  // evens correct except... k=0 answers 0 which equals gold 0: all evens correct
  CHECK(result.accuracy == doctest::Approx(0.5));
  // mean of 10..19
  CHECK(result.mean_tokens == doctest::Approx(14.5));
}

TEST_CASE("summarize_delta reproduces the published deltas from shipped fixtures") {
  auto base = read_eval_result(kFixtures / "summary_base.json");
  auto ours = read_eval_result(kFixtures / "summary_bridge.json");
  CHECK(base.n == 1319);
  CHECK(base.mean_tokens == 230.0);

  auto delta = summarize_delta(base, ours);
  CHECK(std::round(delta.acc_delta_points * 100.0) / 100.0 == doctest::Approx(11.29));
  CHECK(std::round(delta.token_reduction_fraction * 1000.0) / 10.0 == doctest::Approx(27.4));

  SUBCASE("identical results give zero deltas") {
    auto same = summarize_delta(base, base);
    CHECK(same.acc_delta_points == 0.0);
    CHECK(same.token_reduction_fraction == 0.0);
  }

  SUBCASE("hand-computed example") {
    EvalResult a, b;
    a.accuracy = 0.5;
    a.mean_tokens = 100;
    b.accuracy = 0.6;
    b.mean_tokens = 50;
    auto d = summarize_delta(a, b);
    CHECK(d.acc_delta_points == doctest::Approx(10.0));
    CHECK(d.token_reduction_fraction == doctest::Approx(0.5));
  }

  SUBCASE("antisymmetry of the accuracy delta") {
    auto forward = summarize_delta(base, ours);
    auto backward = summarize_delta(ours, base);
    CHECK(forward.acc_delta_points == doctest::Approx(-backward.acc_delta_points));
  }

  SUBCASE("zero baseline tokens") {
    EvalResult zero;
    zero.accuracy = 0.5;
    zero.mean_tokens = 0.0;
    CHECK_THROWS_AS(summarize_delta(zero, base), DivisionByZero);
  }
}

TEST_CASE("compare reproduces the published error-pattern partition") {
  auto base = read_eval_result(kFixtures / "table3_base_results.jsonl");
  auto ours = read_eval_result(kFixtures / "table3_bridge_results.jsonl");
  REQUIRE(base.n == 1438);

  auto report = compare(base, ours);
  CHECK(report.both_correct == 856);
  CHECK(report.fixed == 264);
  CHECK(report.regressed == 119);
  CHECK(report.both_wrong == 199);
  CHECK(report.net == 145);
  CHECK(report.regressed_format_issue == 53);
  CHECK(report.regressed_reasoning_error == 66);
  CHECK(report.both_correct + report.fixed + report.regressed + report.both_wrong == base.n);

  SUBCASE("comparing a result with itself fixes and regresses nothing") {
    auto self = compare(base, base);
    CHECK(self.fixed == 0);
    CHECK(self.regressed == 0);
    CHECK(self.both_correct + self.both_wrong == base.n);
  }
}

TEST_CASE("compare on a hand-labeled 6-sample fixture") {
  auto a = result_from({{"a", true, 10, true},
                        {"b", true, 10, true},
                        {"c", false, 10, true},
                        {"d", false, 10, true},
                        {"e", true, 10, true},
                        {"f", false, 10, true}});
  auto b = result_from({{"a", true, 8, true},
                        {"b", false, 8, false},
                        {"c", true, 8, true},
                        {"d", false, 8, true},
                        {"e", false, 8, true},
                        {"f", true, 8, true}});
  auto report = compare(a, b);
  CHECK(report.both_correct == 1);  // a
  CHECK(report.fixed == 2);         // c, f
  CHECK(report.regressed == 2);     // b (format), e (reasoning)
  CHECK(report.both_wrong == 1);    // d
  CHECK(report.net == 0);
  CHECK(report.regressed_format_issue == 1);
  CHECK(report.regressed_reasoning_error == 1);

  auto mismatched = result_from({{"zz", true, 1, true}});
  CHECK_THROWS_AS(compare(a, mismatched), IdMismatch);
}

TEST_CASE("histogram bins and invariants") {
  auto r = result_from({{"x", true, 10, true}, {"y", true, 10, true}, {"z", true, 25, true}});
  auto buckets = histogram(r, 10);
  REQUIRE(buckets.size() == 2);
  CHECK(buckets[0].bucket_start == 10);
  CHECK(buckets[0].count == 2);
  CHECK(buckets[1].bucket_start == 20);
  CHECK(buckets[1].count == 1);

  CHECK(histogram(EvalResult{}, 10).empty());
  CHECK_THROWS_AS(histogram(r, 0), ConfigError);

  CHECK(histogram_csv(buckets) == "bucket_start,count\n10,2\n20,1\n");

  SUBCASE("counts sum to n for any width, against an independent binning") {
    std::mt19937_64 gen(2);
    std::vector<EvalSample> samples;
    for (int i = 0; i < 500; ++i) {
      EvalSample s;
      s.id = "s" + std::to_string(i);
      // bimodal token distribution
      s.tokens = (i % 2 == 0) ? static_cast<int>(gen() % 60) : 200 + static_cast<int>(gen() % 90);
      samples.push_back(s);
    }
    auto result = EvalResult::from_samples(samples);
    for (int width : {1, 7, 10, 64}) {
      auto hist = histogram(result, width);
      int total = 0;
      for (const auto& b : hist) total += b.count;
      CHECK(total == result.n);

      std::map<int, int> reference;
      for (const auto& s : samples) {
        int b = 0;
        while (b + width <= s.tokens) b += width;  // independent bucket arithmetic
        reference[b] += 1;
      }
      REQUIRE(hist.size() == reference.size());
      for (const auto& b : hist) CHECK(reference.at(b.bucket_start) == b.count);
    }
  }
}

TEST_CASE("a failing backend drops the sample instead of aborting the run") {
  int call = 0;
  auto transport = std::make_shared<ScriptedTransport>(
      [&call](const std::string&, const Json& body) -> std::string {
        const auto prompt = body.at("prompt").get<std::string>();
        ++call;
        if (prompt.find("flaky") != std::string::npos) throw BackendError("synthetic outage");
        return Json{{"choices", {{{"text", "Step 1: fine. Final Answer: 1"}}}}}.dump();
      });
  PolicyClient client(transport, {}, {2, 0});

  std::vector<DatasetRecord> testset;
  testset.push_back({"ok1", "steady q", AnswerValue::from_raw("1")});
  testset.push_back({"down", "flaky q", AnswerValue::from_raw("1")});
  testset.push_back({"ok2", "steady q2", AnswerValue::from_raw("1")});

  auto result = evaluate(client, testset, 512, 1);
  CHECK(result.n == 2);  // the flaky sample is logged and dropped after retries
  CHECK(result.accuracy == doctest::Approx(1.0));
}

TEST_CASE("eval results round-trip through files") {
  const auto dir = cotc::testing::make_temp_dir("eval");
  auto r = result_from({{"a", true, 12, true}, {"b", false, 30, false}});
  r.samples[1].truncated = true;
  write_eval_result(dir / "r.jsonl", r);
  auto back = read_eval_result(dir / "r.jsonl");
  CHECK(back.n == 2);
  CHECK(back.accuracy == doctest::Approx(0.5));
  CHECK(back.mean_tokens == doctest::Approx(21.0));
  CHECK(back.samples[1].truncated);
  std::filesystem::remove_all(dir);
}
