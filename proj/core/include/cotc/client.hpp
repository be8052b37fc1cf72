#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace cotc {

struct DecodingParams {
  int n = 1;
  double temperature = 1.0;
  int max_new_tokens = 512;
  std::optional<std::uint64_t> seed;
  bool want_logprobs = false;

  static DecodingParams greedy(int max_new = 512) {
    DecodingParams p;
    p.temperature = 0.0;
    p.max_new_tokens = max_new;
    return p;
  }
};

struct Completion {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;
  std::optional<int> token_count;
};

struct ClientCapabilities {
  bool returns_token_logprobs = false;
  bool returns_token_count = false;
};

// Request/response boundary, abstracted so sessions can be recorded and
// replayed byte-for-byte. Bodies are canonical JSON strings (nlohmann keeps
// object keys sorted).
class Transport {
 public:
  virtual ~Transport() = default;
  // Throws BackendError on failure.
  virtual std::string post(const std::string& path, const std::string& body) = 0;
};

class HttpTransport final : public Transport {
 public:
  // endpoint like "http://127.0.0.1:8000"; auth_token sent as a Bearer header
  // when nonempty.
  HttpTransport(std::string endpoint, std::string auth_token = {});
  std::string post(const std::string& path, const std::string& body) override;

 private:
  std::string endpoint_;
  std::string auth_token_;
};

// Wraps another transport and appends {path, request, response} JSONL records
// to a session file.
class RecordingTransport final : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path record_file);
  std::string post(const std::string& path, const std::string& body) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path file_;
  std::mutex mu_;
};

// Serves responses from a recorded session, keyed by (path, body); repeated
// identical requests replay in recorded order.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& record_file);
  std::string post(const std::string& path, const std::string& body) override;

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::vector<std::string>> responses_;
  std::unordered_map<std::string, std::size_t> cursor_;
};

// Test/demo transport backed by a callback.
class ScriptedTransport final : public Transport {
 public:
  using Handler = std::function<std::string(const std::string& path, const nlohmann::json& body)>;
  explicit ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}
  std::string post(const std::string& path, const std::string& body) override;

 private:
  Handler handler_;
};

struct RetryPolicy {
  int attempts = 3;
  int initial_backoff_ms = 1000;  // doubled after every failed attempt
};

// Client for an inference server speaking the common completions-over-HTTP
// convention: POST /v1/completions with JSON
// {prompt, n, temperature, max_tokens, seed, logprobs} returning
// {choices: [{text, logprobs: {tokens, token_logprobs}, token_count}]}.
// Scoring a fixed completion under the served model uses POST /v1/score with
// {prompt, completion} returning {token_logprobs}.
class PolicyClient {
 public:
  PolicyClient(std::shared_ptr<Transport> transport, ClientCapabilities caps = {},
               RetryPolicy retry = {});

  // Reads COTC_API_TOKEN; empty when unset.
  static std::string auth_token_from_env();

  const ClientCapabilities& capabilities() const { return caps_; }

  // Generates params.n completions. Retries per policy; throws BackendError
  // once attempts are exhausted.
  std::vector<Completion> generate(const std::string& prompt, const DecodingParams& params);

  // Per-token log-probabilities of `completion` given `prompt`.
  std::vector<double> score(const std::string& prompt, const std::string& completion);

 private:
  std::string post_with_retry(const std::string& path, const std::string& body);

  std::shared_ptr<Transport> transport_;
  ClientCapabilities caps_;
  RetryPolicy retry_;
};

}  // namespace cotc
