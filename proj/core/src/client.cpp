#include "cotc/client.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "cotc/errors.hpp"
#include "cotc/io.hpp"

namespace cotc {

HttpTransport::HttpTransport(std::string endpoint, std::string auth_token)
    : endpoint_(std::move(endpoint)), auth_token_(std::move(auth_token)) {}

std::string HttpTransport::post(const std::string& path, const std::string& body) {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(10);
  client.set_read_timeout(300);
  httplib::Headers headers;
  if (!auth_token_.empty()) headers.emplace("Authorization", "Bearer " + auth_token_);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    throw BackendError("POST " + endpoint_ + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendError("POST " + endpoint_ + path + " returned " + std::to_string(res->status));
  }
  return res->body;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner,
                                       std::filesystem::path record_file)
    : inner_(std::move(inner)), file_(std::move(record_file)) {
  if (auto dir = file_.parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream(file_, std::ios::trunc);  // start a fresh session
}

std::string RecordingTransport::post(const std::string& path, const std::string& body) {
  std::string response = inner_->post(path, body);
  Json rec{{"path", path}, {"request", body}, {"response", response}};
  std::lock_guard lock(mu_);
  std::ofstream out(file_, std::ios::app);
  out << rec.dump() << '\n';
  return response;
}

ReplayTransport::ReplayTransport(const std::filesystem::path& record_file) {
  for_each_jsonl(record_file, [&](std::size_t, const Json& rec) {
    const std::string key =
        rec.at("path").get<std::string>() + '\n' + rec.at("request").get<std::string>();
    responses_[key].push_back(rec.at("response").get<std::string>());
  });
}

std::string ReplayTransport::post(const std::string& path, const std::string& body) {
  const std::string key = path + '\n' + body;
  std::lock_guard lock(mu_);
  auto it = responses_.find(key);
  if (it == responses_.end()) throw BackendError("replay session has no response for " + path);
  auto& cursor = cursor_[key];
  if (cursor >= it->second.size())
    throw BackendError("replay session exhausted responses for " + path);
  return it->second[cursor++];
}

std::string ScriptedTransport::post(const std::string& path, const std::string& body) {
  return handler_(path, Json::parse(body));
}

PolicyClient::PolicyClient(std::shared_ptr<Transport> transport, ClientCapabilities caps,
                           RetryPolicy retry)
    : transport_(std::move(transport)), caps_(caps), retry_(retry) {}

std::string PolicyClient::auth_token_from_env() {
  const char* token = std::getenv("COTC_API_TOKEN");
  return token ? token : "";
}

std::string PolicyClient::post_with_retry(const std::string& path, const std::string& body) {
  int backoff_ms = retry_.initial_backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      return transport_->post(path, body);
    } catch (const BackendError&) {
      if (attempt >= retry_.attempts) throw;
      if (backoff_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
}

std::vector<Completion> PolicyClient::generate(const std::string& prompt,
                                               const DecodingParams& params) {
  Json body{{"prompt", prompt},
            {"n", params.n},
            {"temperature", params.temperature},
            {"max_tokens", params.max_new_tokens}};
  if (params.seed) body["seed"] = *params.seed;
  if (params.want_logprobs) body["logprobs"] = true;

  const std::string raw = post_with_retry("/v1/completions", body.dump());
  Json res;
  try {
    res = Json::parse(raw);
  } catch (const Json::parse_error& e) {
    throw BackendError(std::string("malformed completion response: ") + e.what());
  }

  std::vector<Completion> out;
  try {
    for (const auto& choice : res.at("choices")) {
      Completion c;
      c.text = choice.at("text").get<std::string>();
      if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
        const auto& lp = choice.at("logprobs");
        if (lp.contains("tokens")) c.tokens = lp.at("tokens").get<std::vector<std::string>>();
        if (lp.contains("token_logprobs"))
          c.token_logprobs = lp.at("token_logprobs").get<std::vector<double>>();
      }
      if (choice.contains("token_count")) {
        c.token_count = choice.at("token_count").get<int>();
      } else if (!c.tokens.empty()) {
        c.token_count = static_cast<int>(c.tokens.size());
      }
      out.push_back(std::move(c));
    }
  } catch (const Json::exception& e) {
    throw BackendError(std::string("malformed completion response: ") + e.what());
  }
  return out;
}

std::vector<double> PolicyClient::score(const std::string& prompt, const std::string& completion) {
  Json body{{"prompt", prompt}, {"completion", completion}};
  const std::string raw = post_with_retry("/v1/score", body.dump());
  try {
    return Json::parse(raw).at("token_logprobs").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw BackendError(std::string("malformed score response: ") + e.what());
  }
}

}  // namespace cotc
