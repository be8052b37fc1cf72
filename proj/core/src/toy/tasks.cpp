#include "cotc/toy/tasks.hpp"

#include <cassert>

#include "cotc/errors.hpp"

namespace cotc::toy {

char op_symbol(Op op) {
  switch (op) {
    case Op::add: return '+';
    case Op::sub: return '-';
    case Op::mul: return '*';
  }
  return '+';
}

std::string SyntheticTask::question() const {
  std::string q = "Compute " + std::to_string(operands[0]);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    q += ' ';
    q += op_symbol(ops[i]);
    q += ' ';
    q += std::to_string(operands[i + 1]);
  }
  q += " from left to right.";
  return q;
}

long long evaluate_chain(std::span<const int> operands, std::span<const Op> ops) {
  long long value = operands[0];
  for (std::size_t i = 0; i < ops.size(); ++i) {
    switch (ops[i]) {
      case Op::add: value += operands[i + 1]; break;
      case Op::sub: value -= operands[i + 1]; break;
      case Op::mul: value *= operands[i + 1]; break;
    }
  }
  return value;
}

std::vector<SyntheticTask> gen_tasks(std::uint64_t seed, int count, int redundancy_factor) {
  if (count < 1) throw ConfigError("gen_tasks: count must be >= 1");
  if (redundancy_factor < 0) throw ConfigError("gen_tasks: redundancy_factor must be >= 0");
  std::vector<SyntheticTask> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    SyntheticTask task;
    task.id = "toy-" + std::to_string(seed) + "-" + std::to_string(i);
    const int operand_count = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < operand_count; ++k)
      task.operands.push_back(2 + static_cast<int>(rng.below(8)));
    for (int k = 0; k + 1 < operand_count; ++k)
      task.ops.push_back(static_cast<Op>(rng.below(3)));
    task.gold = evaluate_chain(task.operands, task.ops);
    task.redundancy = redundancy_factor;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

const char* action_name(Action a) {
  switch (a) {
    case Action::filler: return "filler";
    case Action::compute: return "compute";
    case Action::compute_wrong: return "compute_wrong";
    case Action::answer: return "answer";
    case Action::stop: return "stop";
  }
  return "?";
}

std::vector<Action> teacher_actions(const SyntheticTask& task) {
  const int m = task.op_count();
  const int gaps = m + 1;
  const int base = task.redundancy / gaps;
  const int extra = task.redundancy % gaps;
  std::vector<Action> seq;
  for (int g = 0; g < gaps; ++g) {
    const int fillers = base + (g < extra ? 1 : 0);
    for (int f = 0; f < fillers; ++f) seq.push_back(Action::filler);
    if (g < m) seq.push_back(Action::compute);
  }
  seq.push_back(Action::answer);
  return seq;
}

namespace {

// Digit-free by construction so filler-only output never grades as correct by
// accident.
const char* const kFillerLines[] = {
    "Let me double-check the previous step before continuing.",
    "I will keep the intermediate values in mind.",
    "Writing the working carefully before moving on.",
};
constexpr int kFillerVariants = 3;

}  // namespace

Execution execute_actions(const SyntheticTask& task, std::span<const Action> actions) {
  Execution ex;
  long long reg = task.operands[0];
  int ops_done = 0;
  const int m = task.op_count();

  for (Action a : actions) {
    const int line = static_cast<int>(ex.steps.size()) + 1;
    if (a == Action::stop) break;
    std::string text;
    switch (a) {
      case Action::filler:
        text = kFillerLines[(line - 1) % kFillerVariants];
        break;
      case Action::compute:
      case Action::compute_wrong: {
        if (ops_done < m) {
          const long long before = reg;
          const int rhs = task.operands[static_cast<std::size_t>(ops_done) + 1];
          long long result;
          switch (task.ops[static_cast<std::size_t>(ops_done)]) {
            case Op::add: result = before + rhs; break;
            case Op::sub: result = before - rhs; break;
            case Op::mul: result = before * rhs; break;
          }
          if (a == Action::compute_wrong) result += 1;
          text = "Calculate " + std::to_string(before) + ' ' +
                 op_symbol(task.ops[static_cast<std::size_t>(ops_done)]) + ' ' +
                 std::to_string(rhs) + " = " + std::to_string(result) + '.';
          reg = result;
          ++ops_done;
        } else {
          if (a == Action::compute_wrong) reg += 1;
          text = "So the running result is " + std::to_string(reg) + '.';
        }
        break;
      }
      case Action::answer:
        text = "Final Answer: " + std::to_string(reg);
        break;
      case Action::stop:
        break;
    }
    ex.steps.push_back({line, std::move(text)});
    if (a == Action::answer) {
      ex.answered = true;
      break;
    }
  }

  ex.final_value = reg;
  ex.text = render_steps(ex.steps);
  ex.token_count = count_whitespace_tokens(ex.text);
  return ex;
}

ReasoningTrace teacher_trace(const SyntheticTask& task) {
  auto actions = teacher_actions(task);
  auto ex = execute_actions(task, actions);
  assert(ex.answered && ex.final_value == task.gold);

  ReasoningTrace trace;
  trace.id = task.id;
  trace.question = task.question();
  trace.steps = ex.steps;
  trace.gold_answer = AnswerValue::from_raw(std::to_string(task.gold));
  trace.teacher_token_count = ex.token_count;
  trace.source = TraceSource::synthetic;
  return trace;
}

int minimal_correct_tokens(const SyntheticTask& task) {
  std::vector<Action> minimal(static_cast<std::size_t>(task.op_count()), Action::compute);
  minimal.push_back(Action::answer);
  return execute_actions(task, minimal).token_count;
}

}  // namespace cotc::toy
