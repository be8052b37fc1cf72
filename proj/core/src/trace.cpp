#include "cotc/trace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"
#include "cotc/rng.hpp"

namespace cotc {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

bool ci_equal(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (lower(a[i]) != lower(b[i])) return false;
  return true;
}

// Case-insensitive search for `needle` starting at `from`.
std::size_t ci_find(const std::string& hay, const std::string& needle, std::size_t from) {
  if (needle.empty() || hay.size() < needle.size()) return std::string::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool hit = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (lower(hay[i + j]) != lower(needle[j])) {
        hit = false;
        break;
      }
    }
    if (hit) return i;
  }
  return std::string::npos;
}

struct StepMarker {
  std::size_t start;    // offset of "Step"
  std::size_t content;  // offset just past the ':'
};

// Matches `Step <int>:` case-insensitively, word boundary before "Step",
// optional whitespace around the number.
std::vector<StepMarker> find_step_markers(const std::string& text) {
  std::vector<StepMarker> out;
  std::size_t pos = 0;
  while ((pos = ci_find(text, "step", pos)) != std::string::npos) {
    if (pos > 0 && is_alnum(text[pos - 1])) {
      ++pos;
      continue;
    }
    std::size_t i = pos + 4;
    std::size_t ws = i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == ws || i >= text.size() || !is_digit(text[i])) {
      ++pos;
      continue;
    }
    while (i < text.size() && is_digit(text[i])) ++i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size() || text[i] != ':') {
      ++pos;
      continue;
    }
    out.push_back({pos, i + 1});
    pos = i + 1;
  }
  return out;
}

// Newline-then-sentence splitting for marker-less text. A sentence ends at a
// run of [.?!] followed by whitespace or end of line.
std::vector<std::string> split_fallback(const std::string& text) {
  std::vector<std::string> fragments;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    const std::string line = text.substr(line_start, line_end - line_start);
    std::size_t frag_start = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '.' || line[i] == '?' || line[i] == '!') {
        std::size_t j = i;
        while (j + 1 < line.size() &&
               (line[j + 1] == '.' || line[j + 1] == '?' || line[j + 1] == '!'))
          ++j;
        if (j + 1 >= line.size() || is_space(line[j + 1])) {
          std::string frag = trim(line.substr(frag_start, j + 1 - frag_start));
          if (!frag.empty()) fragments.push_back(frag);
          frag_start = j + 1;
        }
        i = j;
      }
    }
    std::string tail = trim(line.substr(frag_start));
    if (!tail.empty()) fragments.push_back(tail);
    if (line_end == text.size()) break;
    line_start = line_end + 1;
  }
  return fragments;
}

// ---------------------------------------------------------------------------
// Numeric normalization
// ---------------------------------------------------------------------------

// Strips commas, currency symbols ($ £ € ¥) and percent signs; then
// repeatedly removes matching pairs of surrounding brackets.
std::string clean_numeric_text(const std::string& raw) {
  std::string s;
  s.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(raw[i]);
    if (c == ',' || c == '$' || c == '%') continue;
    if (c == 0xC2 && i + 1 < raw.size()) {
      unsigned char d = static_cast<unsigned char>(raw[i + 1]);
      if (d == 0xA3 || d == 0xA5) {  // £ ¥
        ++i;
        continue;
      }
    }
    if (c == 0xE2 && i + 2 < raw.size() &&
        static_cast<unsigned char>(raw[i + 1]) == 0x82 &&
        static_cast<unsigned char>(raw[i + 2]) == 0xAC) {  // €
      i += 2;
      continue;
    }
    s.push_back(raw[i]);
  }
  s = trim(s);
  auto matches = [](char a, char b) {
    return (a == '(' && b == ')') || (a == '[' && b == ']') || (a == '{' && b == '}');
  };
  while (s.size() >= 2 && matches(s.front(), s.back())) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

struct ExactValue {
  bool exact = false;
  long long num = 0;   // exact value = num / den
  long long den = 1;
  long double approx = 0.0L;
};

// Parses the first number in a cleaned string: optional sign, digits, at most
// one decimal point, or an integer fraction a/b. Returns nullopt when no
// digits are found. Values whose digits exceed 18 fall back to long double.
std::optional<ExactValue> parse_first_number(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && !is_digit(s[i])) ++i;
  if (i == s.size()) return std::nullopt;
  std::size_t start = i;
  bool negative = false;
  if (start > 0 && (s[start - 1] == '-' || s[start - 1] == '+')) {
    char prev = start >= 2 ? s[start - 2] : ' ';
    if (!is_alnum(prev)) {
      negative = s[start - 1] == '-';
    }
  }

  std::string int_digits, frac_digits;
  while (i < s.size() && is_digit(s[i])) int_digits.push_back(s[i++]);
  if (i < s.size() && s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) frac_digits.push_back(s[i++]);
  } else if (i < s.size() && s[i] == '/' && i + 1 < s.size() && is_digit(s[i + 1])) {
    // integer fraction a/b
    ++i;
    std::string den_digits;
    while (i < s.size() && is_digit(s[i])) den_digits.push_back(s[i++]);
    if (int_digits.size() <= 18 && den_digits.size() <= 18) {
      long long num = std::strtoll(int_digits.c_str(), nullptr, 10);
      long long den = std::strtoll(den_digits.c_str(), nullptr, 10);
      if (den != 0) {
        ExactValue v;
        v.exact = true;
        v.num = negative ? -num : num;
        v.den = den;
        v.approx = static_cast<long double>(v.num) / static_cast<long double>(v.den);
        return v;
      }
    }
    ExactValue v;
    long double num = std::strtold(int_digits.c_str(), nullptr);
    long double den = std::strtold(den_digits.c_str(), nullptr);
    v.approx = den != 0.0L ? num / den : num;
    if (negative) v.approx = -v.approx;
    return v;
  }

  if (int_digits.size() + frac_digits.size() <= 18) {
    long long num = std::strtoll((int_digits + frac_digits).c_str(), nullptr, 10);
    long long den = 1;
    for (std::size_t k = 0; k < frac_digits.size(); ++k) den *= 10;
    ExactValue v;
    v.exact = true;
    v.num = negative ? -num : num;
    v.den = den;
    v.approx = static_cast<long double>(v.num) / static_cast<long double>(v.den);
    return v;
  }
  ExactValue v;
  std::string plain = (negative ? "-" : "") + int_digits;
  if (!frac_digits.empty()) plain += "." + frac_digits;
  v.approx = std::strtold(plain.c_str(), nullptr);
  return v;
}

std::optional<ExactValue> parse_value(const std::string& raw) {
  return parse_first_number(clean_numeric_text(raw));
}

constexpr long double kTolerance = 1e-6L;

bool values_equal(const ExactValue& a, const ExactValue& b) {
  if (a.exact && b.exact) {
    // den <= 1e18 and num <= 1e18, so the cross products fit in 128 bits.
    __int128 lhs = static_cast<__int128>(a.num) * b.den;
    __int128 rhs = static_cast<__int128>(b.num) * a.den;
    if (lhs == rhs) return true;
  }
  return std::fabs(a.approx - b.approx) <= kTolerance;
}

}  // namespace

AnswerValue AnswerValue::from_raw(std::string raw) {
  AnswerValue v;
  v.raw = std::move(raw);
  v.numeric = normalize_numeric(v.raw);
  return v;
}

std::optional<double> normalize_numeric(const std::string& raw) {
  auto v = parse_value(raw);
  if (!v) return std::nullopt;
  return static_cast<double>(v->approx);
}

bool numeric_equal(const std::string& a, const std::string& b) {
  auto va = parse_value(a);
  auto vb = parse_value(b);
  if (!va || !vb) return false;
  return values_equal(*va, *vb);
}

std::string to_string(TraceSource s) {
  switch (s) {
    case TraceSource::teacher: return "teacher";
    case TraceSource::synthetic: return "synthetic";
    case TraceSource::dataset: return "dataset";
  }
  return "teacher";
}

TraceSource trace_source_from_string(const std::string& s) {
  if (s == "teacher") return TraceSource::teacher;
  if (s == "synthetic") return TraceSource::synthetic;
  if (s == "dataset") return TraceSource::dataset;
  throw ConfigError("unknown trace source: " + s);
}

std::string render_steps(const std::vector<Step>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += "Step " + std::to_string(i + 1) + ": " + steps[i].text;
  }
  return out;
}

bool contains_step_marker(const std::string& text) { return !find_step_markers(text).empty(); }

Segmentation segment_steps(const std::string& text) {
  if (trim(text).empty()) throw EmptyInput("segment_steps: blank text");

  Segmentation seg;
  auto markers = find_step_markers(text);
  if (markers.empty()) {
    auto fragments = split_fallback(text);
    for (auto& frag : fragments) {
      seg.steps.push_back({static_cast<int>(seg.steps.size()) + 1, std::move(frag)});
    }
    return seg;
  }

  seg.preamble = trim(text.substr(0, markers.front().start));
  for (std::size_t i = 0; i < markers.size(); ++i) {
    std::size_t end = i + 1 < markers.size() ? markers[i + 1].start : text.size();
    std::string body = trim(text.substr(markers[i].content, end - markers[i].content));
    seg.steps.push_back({static_cast<int>(i) + 1, std::move(body)});
  }
  return seg;
}

namespace {

// Remainder of the line after offset `from`, trimmed; empty when nothing
// follows on that line.
std::string rest_of_line(const std::string& text, std::size_t from) {
  std::size_t eol = text.find('\n', from);
  if (eol == std::string::npos) eol = text.size();
  return trim(text.substr(from, eol - from));
}

}  // namespace

std::optional<AnswerValue> extract_marker_answer(const std::string& text) {
  // Last occurrence of "final answer" + optional space + ':' with a nonempty
  // remainder on the same line.
  std::size_t pos = 0;
  std::optional<AnswerValue> best;
  while ((pos = ci_find(text, "final answer", pos)) != std::string::npos) {
    std::size_t i = pos + 12;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (i < text.size() && text[i] == ':') {
      std::string value = rest_of_line(text, i + 1);
      if (!value.empty()) best = AnswerValue::from_raw(value);
    }
    pos += 12;
  }
  return best;
}

std::optional<AnswerValue> extract_hash_answer(const std::string& text) {
  std::size_t pos = 0;
  std::optional<AnswerValue> best;
  while ((pos = text.find("####", pos)) != std::string::npos) {
    std::string value = rest_of_line(text, pos + 4);
    if (!value.empty()) best = AnswerValue::from_raw(value);
    pos += 4;
  }
  return best;
}

std::optional<AnswerValue> extract_last_number(const std::string& text) {
  // Standalone: not embedded in a word; a leading '-' binds only when not
  // preceded by an alphanumeric character (so "5-1" yields 1, not -1).
  std::optional<AnswerValue> best;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (start > 0 && text[start - 1] == '-') {
      char prev = start >= 2 ? text[start - 2] : ' ';
      if (!is_alnum(prev) && prev != ')') start -= 1;
    }
    if (start > 0 && is_alnum(text[start - 1])) {  // inside a word, e.g. "a1b2"
      while (i < text.size() && is_digit(text[i])) ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && (is_digit(text[j]) || text[j] == ',')) ++j;
    if (j < text.size() && text[j] == '.' && j + 1 < text.size() && is_digit(text[j + 1])) {
      ++j;
      while (j < text.size() && is_digit(text[j])) ++j;
    }
    while (j > i && text[j - 1] == ',') --j;  // drop trailing commas
    if (j < text.size() && is_alnum(text[j])) {  // "12abc" is not standalone
      i = j + 1;
      continue;
    }
    best = AnswerValue::from_raw(text.substr(start, j - start));
    i = j;
  }
  return best;
}

std::optional<AnswerValue> extract_final_answer(const std::string& text) {
  if (auto v = extract_marker_answer(text)) return v;
  if (auto v = extract_hash_answer(text)) return v;
  return extract_last_number(text);
}

bool grade_answer(const AnswerValue& pred, const AnswerValue& gold) {
  auto gold_value = parse_value(gold.raw);
  if (!gold_value) throw UngradeableGold("gold answer has no numeric form: " + gold.raw);
  auto pred_value = parse_value(pred.raw);
  if (pred_value) return values_equal(*pred_value, *gold_value);
  return ci_equal(trim(pred.raw), trim(gold.raw));
}

int count_whitespace_tokens(const std::string& text) {
  int count = 0;
  bool in_run = false;
  for (char c : text) {
    if (is_space(c)) {
      in_run = false;
    } else if (!in_run) {
      in_run = true;
      ++count;
    }
  }
  return count;
}

namespace {

struct TokenCountCache {
  std::mutex mu;
  std::unordered_map<std::uint64_t, int> counts;
};

TokenCountCache& token_cache() {
  static TokenCountCache cache;
  return cache;
}

int count_external(const std::string& text, const TokenizerHandle& tok) {
  const std::uint64_t key = fnv1a64(tok.external_endpoint + '\0' + text);
  {
    std::lock_guard lock(token_cache().mu);
    auto it = token_cache().counts.find(key);
    if (it != token_cache().counts.end()) return it->second;
  }
  httplib::Client client(tok.external_endpoint);
  client.set_connection_timeout(5);
  Json body{{"text", text}};
  auto res = client.Post("/tokenize", body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw TokenizerUnavailable("tokenizer endpoint " + tok.external_endpoint +
                               (res ? " returned status " + std::to_string(res->status)
                                    : " is unreachable"));
  }
  int count = 0;
  try {
    count = Json::parse(res->body).at("count").get<int>();
  } catch (const std::exception& e) {
    throw TokenizerUnavailable(std::string("bad tokenizer response: ") + e.what());
  }
  std::lock_guard lock(token_cache().mu);
  token_cache().counts.emplace(key, count);
  return count;
}

}  // namespace

int count_tokens(const std::string& text, const TokenizerHandle& tok) {
  if (tok.mode == TokenizerHandle::Mode::whitespace) return count_whitespace_tokens(text);
  try {
    return count_external(text, tok);
  } catch (const TokenizerUnavailable&) {
    if (tok.fallback_to_whitespace) return count_whitespace_tokens(text);
    throw;
  }
}

std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path) {
  std::vector<ReasoningTrace> traces;
  for_each_jsonl(path, [&](std::size_t line_no, const Json& rec) {
    try {
      ReasoningTrace t;
      t.id = rec.at("id").get<std::string>();
      t.question = rec.at("question").get<std::string>();
      for (const auto& s : rec.at("steps")) {
        t.steps.push_back({static_cast<int>(t.steps.size()) + 1, s.get<std::string>()});
      }
      if (t.steps.empty()) throw Error("steps must be nonempty");
      t.gold_answer = AnswerValue::from_raw(rec.at("gold_answer").get<std::string>());
      t.source = trace_source_from_string(rec.value("source", "teacher"));
      t.teacher_token_count = count_whitespace_tokens(render_steps(t.steps));
      traces.push_back(std::move(t));
    } catch (const Json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const Error& e) {
      throw MalformedRecord(line_no, e.what());
    }
  });
  return traces;
}

void write_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces) {
  std::vector<Json> records;
  records.reserve(traces.size());
  for (const auto& t : traces) {
    Json steps = Json::array();
    for (const auto& s : t.steps) steps.push_back(s.text);
    records.push_back({{"id", t.id},
                       {"question", t.question},
                       {"steps", steps},
                       {"gold_answer", t.gold_answer.raw},
                       {"source", to_string(t.source)}});
  }
  write_jsonl(path, records);
}

}  // namespace cotc
