#pragma once

// Hosted-model client: endpoint configuration, HTTP transport with retries,
// an on-disk response cache, a shared request-rate cap, and resumable
// labeling sessions.

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "conceptlab/exemplar.hpp"
#include "conceptlab/prompt.hpp"
#include "json.hpp"

namespace conceptlab {

struct EndpointConfig {
  std::string name;  // label used for output paths
  std::string base_url;
  std::string model;
  std::string api = "chat";  // chat | completion
  double temperature = 0.7;
  int top_logprobs = 10;
  int max_tokens = 256;
  double timeout_seconds = 60;
  int max_retries = 4;
  int backoff_ms = 500;
  std::string credential_env;  // empty: no Authorization header
  std::optional<std::size_t> max_sets;
  double requests_per_second = 0;  // 0: unlimited

  void validate() const;
  static EndpointConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Hash of the fields that change model output; part of the cache key.
  std::string fingerprint() const;
  // Request path relative to base_url.
  std::string path() const;
};

struct HttpResult {
  int status = 0;  // 0: connection-level failure
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post(const std::string& path, const std::string& body,
                          const std::map<std::string, std::string>& headers) = 0;
};

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(const EndpointConfig& config);
  ~HttpTransport() override;
  HttpResult post(const std::string& path, const std::string& body,
                  const std::map<std::string, std::string>& headers) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Spaces requests so that at most `per_second` start in any second, across
// all sessions sharing the limiter.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}
  void acquire();

 private:
  double per_second_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

class ResponseCache {
 public:
  explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {}
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& request, const std::string& response) const;

 private:
  std::string dir_;
};

struct ClientStats {
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
};

class LlmClient {
 public:
  LlmClient(EndpointConfig config, Transport& transport, ResponseCache* cache = nullptr,
            RateLimiter* limiter = nullptr);

  // Sends a request body; returns the raw response body. Retries 429, 5xx
  // and connection failures with exponential backoff, then throws
  // TransportError. Other statuses throw immediately.
  std::string send(const nlohmann::json& request);

  const EndpointConfig& config() const { return config_; }
  const ClientStats& stats() const { return stats_; }
  // Replaces the sleep used between retries (tests).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleep_ = std::move(sleeper); }

 private:
  EndpointConfig config_;
  Transport& transport_;
  ResponseCache* cache_;
  RateLimiter* limiter_;
  ClientStats stats_;
  std::function<void(std::chrono::milliseconds)> sleep_;
};

// Request body for a prompt in the endpoint's wire format.
nlohmann::json make_request(const EndpointConfig& config, const PromptBundle& prompt);

struct ReplyContent {
  std::string text;
  // Top-k alternatives at each generated token, when returned.
  std::vector<std::string> tokens;
  std::vector<std::vector<TokenLogprob>> top;
};

// Parses chat-completions or completions responses. Throws TransportError on
// bodies that are not in either shape.
ReplyContent parse_reply(const EndpointConfig& config, const std::string& body);

struct ObjectResult {
  std::string object;
  bool gold = false;
  std::optional<bool> label;
  std::string reason;
  std::optional<double> p_true;
};

struct SetRecord {
  std::size_t set_index = 0;
  std::vector<nlohmann::json> exchanges;  // {"request": ..., "response": raw text}
  std::vector<ObjectResult> objects;
  std::optional<std::string> rule_text;
};

struct SessionTranscript {
  std::string rule_id;
  std::string model;
  std::string mode;
  std::string endpoint;  // fingerprint
  std::size_t planned_sets = 0;
  std::vector<SetRecord> sets;

  std::size_t excluded() const;
  std::size_t labeled() const;
  bool complete() const { return sets.size() == planned_sets; }
  nlohmann::json to_json() const;
  static SessionTranscript from_json(const nlohmann::json& j);
};

// Runs (or resumes) a labeling session. With a transcript path, progress is
// written after every set and a matching transcript there is resumed.
SessionTranscript run_session(const ExemplarList& list, LlmClient& client, PromptMode mode,
                              const std::string& transcript_path = "");

}  // namespace conceptlab
