#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cotc/rng.hpp"
#include "cotc/trace.hpp"

namespace cotc::toy {

enum class Op { add, sub, mul };

char op_symbol(Op op);

// An arithmetic-chain problem: small integers combined left to right. The
// teacher solves it in Step-N format with `redundancy` filler steps
// interleaved between the computations, plus one answer step.
struct SyntheticTask {
  std::string id;
  std::vector<int> operands;  // 2..4 values
  std::vector<Op> ops;        // operands.size() - 1
  long long gold = 0;         // left-to-right evaluation
  int redundancy = 0;

  int op_count() const { return static_cast<int>(ops.size()); }
  std::string question() const;
};

long long evaluate_chain(std::span<const int> operands, std::span<const Op> ops);

// Deterministic task list; operand counts cycle through 2..4, values in 2..9.
std::vector<SyntheticTask> gen_tasks(std::uint64_t seed, int count, int redundancy_factor);

// Step templates the toy policy chooses between at each position.
enum class Action { filler = 0, compute = 1, compute_wrong = 2, answer = 3, stop = 4 };
constexpr int kActionCount = 5;

const char* action_name(Action a);

// Teacher behavior: computations in order with the filler budget distributed
// evenly into the gaps (earlier gaps take the remainder), then the answer.
// The layout depends only on (op_count, redundancy), which is what makes the
// chain reconstructible from position features.
std::vector<Action> teacher_actions(const SyntheticTask& task);

// Executing an action sequence against the task. A running register starts at
// the first operand; `compute` applies the next operation correctly,
// `compute_wrong` applies it off by one, and once all operations are consumed
// both merely restate the register (compute_wrong corrupts it). `answer`
// emits the register as the final answer and ends the episode; `stop` ends it
// silently.
struct Execution {
  std::vector<Step> steps;      // rendered "Step k" contents, including the answer line
  std::string text;             // render_steps(steps)
  bool answered = false;
  long long final_value = 0;    // register at episode end
  int token_count = 0;          // whitespace tokens of text
};

Execution execute_actions(const SyntheticTask& task, std::span<const Action> actions);

// The teacher's trace for corruption/reward plumbing; rendered via
// execute_actions so rollout text and trace text agree exactly.
ReasoningTrace teacher_trace(const SyntheticTask& task);

// Token count of the shortest correct response (all computations, no fillers,
// then the answer). Tasks whose teacher is not longer than this cannot be
// compressed.
int minimal_correct_tokens(const SyntheticTask& task);

}  // namespace cotc::toy
