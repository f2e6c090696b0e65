#include "conceptlab/llm.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "httplib.h"

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"

namespace conceptlab {

namespace {

// "https://host:port/v1" -> {"https://host:port", "/v1"}
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string path = url.substr(slash);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, slash), path};
}

}  // namespace

// ---- EndpointConfig --------------------------------------------------------

void EndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
  split_url(base_url);
  if (model.empty()) throw ConfigError("endpoint model is empty");
  if (api != "chat" && api != "completion") throw ConfigError("endpoint api must be chat or completion");
  if (!(temperature >= 0)) throw ConfigError("temperature must be >= 0");
  if (top_logprobs < 1) throw ConfigError("top_logprobs must be >= 1");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (max_retries < 0 || backoff_ms < 0 || !(timeout_seconds > 0)) {
    throw ConfigError("bad retry or timeout settings");
  }
  if (max_sets && *max_sets == 0) throw ConfigError("max_sets must be positive");
  if (requests_per_second < 0) throw ConfigError("requests_per_second must be >= 0");
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& j) {
  EndpointConfig c;
  try {
    c.base_url = j.at("base_url").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.name = j.value("name", c.model);
    c.api = j.value("api", c.api);
    c.temperature = j.value("temperature", c.temperature);
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.credential_env = j.value("credential_env", c.credential_env);
    if (j.contains("max_sets") && !j.at("max_sets").is_null()) c.max_sets = j.at("max_sets").get<std::size_t>();
    c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("endpoint config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json EndpointConfig::to_json() const {
  nlohmann::json j{{"name", name},
                   {"base_url", base_url},
                   {"model", model},
                   {"api", api},
                   {"temperature", temperature},
                   {"top_logprobs", top_logprobs},
                   {"max_tokens", max_tokens},
                   {"timeout_seconds", timeout_seconds},
                   {"max_retries", max_retries},
                   {"backoff_ms", backoff_ms},
                   {"credential_env", credential_env},
                   {"requests_per_second", requests_per_second}};
  j["max_sets"] = max_sets ? nlohmann::json(*max_sets) : nlohmann::json(nullptr);
  return j;
}

std::string EndpointConfig::fingerprint() const {
  nlohmann::json j{{"base_url", base_url}, {"model", model}, {"api", api},
                   {"temperature", temperature}, {"top_logprobs", top_logprobs},
                   {"max_tokens", max_tokens}};
  return sha256_hex(j.dump());
}

std::string EndpointConfig::path() const {
  return split_url(base_url).second + (api == "chat" ? "/chat/completions" : "/completions");
}

// ---- transport --------------------------------------------------------------

struct HttpTransport::Impl {
  explicit Impl(const EndpointConfig& c) : client(split_url(c.base_url).first) {
    const auto secs = static_cast<time_t>(c.timeout_seconds);
    const auto usecs = static_cast<time_t>((c.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
  }
  httplib::Client client;
};

HttpTransport::HttpTransport(const EndpointConfig& config) : impl_(std::make_unique<Impl>(config)) {}
HttpTransport::~HttpTransport() = default;

HttpResult HttpTransport::post(const std::string& path, const std::string& body,
                               const std::map<std::string, std::string>& headers) {
  httplib::Headers h(headers.begin(), headers.end());
  auto res = impl_->client.Post(path, h, body, "application/json");
  if (!res) return {0, "", httplib::to_string(res.error())};
  return {res->status, res->body, ""};
}

void RateLimiter::acquire() {
  if (per_second_ <= 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(1.0 / per_second_));
  }
  std::this_thread::sleep_until(slot);
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = std::filesystem::path(dir_) / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path.string())).at("response").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // a torn or foreign file is a miss
  }
}

void ResponseCache::put(const std::string& key, const std::string& request,
                        const std::string& response) const {
  nlohmann::json j{{"request", request}, {"response", response}};
  write_file_atomic((std::filesystem::path(dir_) / (key + ".json")).string(), j.dump(1) + "\n");
}

// ---- client -----------------------------------------------------------------

LlmClient::LlmClient(EndpointConfig config, Transport& transport, ResponseCache* cache,
                     RateLimiter* limiter)
    : config_(std::move(config)), transport_(transport), cache_(cache), limiter_(limiter),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  config_.validate();
}

std::string LlmClient::send(const nlohmann::json& request) {
  const std::string body = request.dump();
  const std::string key = sha256_hex(config_.fingerprint() + "\n" + body);
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++stats_.cache_hits;
      return *hit;
    }
  }
  std::map<std::string, std::string> headers;
  if (!config_.credential_env.empty()) {
    const char* token = std::getenv(config_.credential_env.c_str());
    if (!token || !*token) throw ConfigError("credential variable " + config_.credential_env + " is not set");
    headers["Authorization"] = std::string("Bearer ") + token;
  }
  const std::string path = config_.path();
  for (int attempt = 0;; ++attempt) {
    if (limiter_) limiter_->acquire();
    ++stats_.network_calls;
    HttpResult r = transport_.post(path, body, headers);
    if (r.status >= 200 && r.status < 300) {
      if (cache_) cache_->put(key, body, r.body);
      return r.body;
    }
    std::string what = r.status == 0 ? "connection failed: " + r.error
                                     : "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 200);
    const bool retryable = r.status == 0 || r.status == 429 || r.status >= 500;
    if (!retryable) throw TransportError(what);
    if (attempt >= config_.max_retries) {
      throw TransportError(what + " (after " + std::to_string(attempt + 1) + " attempts)");
    }
    ++stats_.retries;
    sleep_(std::chrono::milliseconds(static_cast<long>(config_.backoff_ms) << attempt));
  }
}

nlohmann::json make_request(const EndpointConfig& config, const PromptBundle& prompt) {
  nlohmann::json j{{"model", config.model}, {"temperature", config.temperature},
                   {"max_tokens", config.max_tokens}};
  if (config.api == "chat") {
    if (!is_chat(prompt.mode)) throw ConfigError("completion prompt sent to a chat endpoint");
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& t : prompt.turns) messages.push_back({{"role", t.role}, {"content", t.text}});
    j["messages"] = std::move(messages);
    j["logprobs"] = true;
    j["top_logprobs"] = config.top_logprobs;
  } else {
    if (is_chat(prompt.mode)) throw ConfigError("chat prompt sent to a completion endpoint");
    j["prompt"] = prompt.prefix;
    j["logprobs"] = config.top_logprobs;
  }
  return j;
}

ReplyContent parse_reply(const EndpointConfig& config, const std::string& body) {
  ReplyContent out;
  try {
    auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (config.api == "chat") {
      const auto& content = choice.at("message").at("content");
      out.text = content.is_null() ? "" : content.get<std::string>();
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        for (const auto& tok : choice["logprobs"]["content"]) {
          out.tokens.push_back(tok.at("token").get<std::string>());
          std::vector<TokenLogprob> top;
          for (const auto& alt : tok.value("top_logprobs", nlohmann::json::array())) {
            top.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
          }
          out.top.push_back(std::move(top));
        }
      }
    } else {
      out.text = choice.at("text").get<std::string>();
      if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
        const auto& lp = choice["logprobs"];
        for (const auto& t : lp.value("tokens", nlohmann::json::array())) out.tokens.push_back(t.get<std::string>());
        for (const auto& alts : lp.value("top_logprobs", nlohmann::json::array())) {
          std::vector<TokenLogprob> top;
          if (alts.is_object()) {
            for (const auto& [tok, v] : alts.items()) top.push_back({tok, v.get<double>()});
          }
          out.top.push_back(std::move(top));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected response body: ") + e.what());
  }
  return out;
}

// ---- sessions ---------------------------------------------------------------

namespace {

std::optional<double> safe_true_probability(const std::vector<TokenLogprob>& top) {
  if (top.empty()) return std::nullopt;
  try {
    return true_probability(top);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

// Token positions holding the label of each "->" line, in order.
std::vector<std::size_t> label_positions(const ReplyContent& reply) {
  std::vector<std::size_t> out;
  std::string seen;
  for (std::size_t i = 0; i < reply.tokens.size(); ++i) {
    const std::string& tok = reply.tokens[i];
    std::string t = trim(tok);
    if (!t.empty()) {
      std::string before = trim(seen);
      if (before.size() >= 2 && before.compare(before.size() - 2, 2, "->") == 0) out.push_back(i);
    }
    seen += tok;
    if (auto nl = seen.rfind('\n'); nl != std::string::npos) seen.erase(0, nl + 1);
  }
  return out;
}

std::optional<std::size_t> first_content_token(const ReplyContent& reply) {
  for (std::size_t i = 0; i < reply.tokens.size(); ++i) {
    if (!trim(reply.tokens[i]).empty()) return i;
  }
  return std::nullopt;
}

nlohmann::json set_to_json(const SetRecord& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    nlohmann::json jo{{"object", o.object}, {"gold", o.gold}};
    jo["label"] = o.label ? nlohmann::json(*o.label) : nlohmann::json(nullptr);
    if (!o.reason.empty()) jo["reason"] = o.reason;
    jo["p_true"] = o.p_true ? nlohmann::json(*o.p_true) : nlohmann::json(nullptr);
    objs.push_back(std::move(jo));
  }
  nlohmann::json j{{"set_index", s.set_index}, {"exchanges", s.exchanges}, {"objects", objs}};
  j["rule_text"] = s.rule_text ? nlohmann::json(*s.rule_text) : nlohmann::json(nullptr);
  return j;
}

SetRecord set_from_json(const nlohmann::json& j) {
  SetRecord s;
  s.set_index = j.at("set_index").get<std::size_t>();
  for (const auto& e : j.at("exchanges")) s.exchanges.push_back(e);
  for (const auto& jo : j.at("objects")) {
    ObjectResult o;
    o.object = jo.at("object").get<std::string>();
    o.gold = jo.at("gold").get<bool>();
    if (!jo.at("label").is_null()) o.label = jo.at("label").get<bool>();
    o.reason = jo.value("reason", "");
    if (!jo.at("p_true").is_null()) o.p_true = jo.at("p_true").get<double>();
    s.objects.push_back(std::move(o));
  }
  if (!j.at("rule_text").is_null()) s.rule_text = j.at("rule_text").get<std::string>();
  return s;
}

}  // namespace

std::size_t SessionTranscript::excluded() const {
  std::size_t n = 0;
  for (const auto& s : sets) {
    for (const auto& o : s.objects) n += !o.label.has_value();
  }
  return n;
}

std::size_t SessionTranscript::labeled() const {
  std::size_t n = 0;
  for (const auto& s : sets) {
    for (const auto& o : s.objects) n += o.label.has_value();
  }
  return n;
}

nlohmann::json SessionTranscript::to_json() const {
  nlohmann::json js = nlohmann::json::array();
  for (const auto& s : sets) js.push_back(set_to_json(s));
  return {{"rule_id", rule_id}, {"model", model},   {"mode", mode},
          {"endpoint", endpoint}, {"planned_sets", planned_sets}, {"excluded", excluded()},
          {"sets", js}};
}

SessionTranscript SessionTranscript::from_json(const nlohmann::json& j) {
  SessionTranscript t;
  try {
    t.rule_id = j.at("rule_id").get<std::string>();
    t.model = j.at("model").get<std::string>();
    t.mode = j.at("mode").get<std::string>();
    t.endpoint = j.at("endpoint").get<std::string>();
    t.planned_sets = j.at("planned_sets").get<std::size_t>();
    for (const auto& s : j.at("sets")) t.sets.push_back(set_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transcript: ") + e.what());
  }
  return t;
}

SessionTranscript run_session(const ExemplarList& list, LlmClient& client, PromptMode mode,
                              const std::string& transcript_path) {
  const EndpointConfig& cfg = client.config();
  if (is_chat(mode) != (cfg.api == "chat")) {
    throw ConfigError("prompt mode " + std::string(prompt_mode_name(mode)) + " does not fit api " + cfg.api);
  }
  SessionTranscript t;
  t.rule_id = list.rule_id;
  t.model = cfg.name;
  t.mode = std::string(prompt_mode_name(mode));
  t.endpoint = cfg.fingerprint();
  t.planned_sets = cfg.max_sets ? std::min(*cfg.max_sets, list.sets.size()) : list.sets.size();

  if (!transcript_path.empty() && std::filesystem::exists(transcript_path)) {
    SessionTranscript prev;
    try {
      prev = SessionTranscript::from_json(nlohmann::json::parse(read_file(transcript_path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(transcript_path + ": " + e.what());
    }
    if (prev.rule_id != t.rule_id || prev.model != t.model || prev.mode != t.mode ||
        prev.endpoint != t.endpoint || prev.planned_sets != t.planned_sets) {
      throw ConfigError(transcript_path + " belongs to a different session");
    }
    t.sets = std::move(prev.sets);
  }

  for (std::size_t s = t.sets.size(); s < t.planned_sets; ++s) {
    const auto& set = list.sets[s];
    SetRecord rec;
    rec.set_index = s;
    std::vector<std::string> descs;
    for (std::size_t i = 0; i < set.objects.size(); ++i) {
      descs.push_back(describe(set.objects[i], list.vocab));
      rec.objects.push_back({descs.back(), static_cast<bool>(set.labels[i]), std::nullopt, "", std::nullopt});
    }
    if (is_chat(mode)) {
      auto request = make_request(cfg, build_prompt(list, s, mode));
      std::string raw = client.send(request);
      rec.exchanges.push_back({{"request", request}, {"response", raw}});
      ReplyContent reply = parse_reply(cfg, raw);
      Extraction ex = extract_chat_labels(reply.text, descs);
      rec.rule_text = ex.rule_text;
      auto positions = label_positions(reply);
      for (std::size_t i = 0; i < descs.size(); ++i) {
        rec.objects[i].label = ex.labels[i].label;
        rec.objects[i].reason = ex.labels[i].reason;
        if (ex.labels[i].label && ex.line_of_object[i] && *ex.line_of_object[i] < positions.size()) {
          rec.objects[i].p_true = safe_true_probability(reply.top.at(positions[*ex.line_of_object[i]]));
        }
      }
    } else {
      for (std::size_t i = 0; i < descs.size(); ++i) {
        auto request = make_request(cfg, build_prompt(list, s, mode, i));
        std::string raw = client.send(request);
        rec.exchanges.push_back({{"request", request}, {"response", raw}});
        ReplyContent reply = parse_reply(cfg, raw);
        ObjectLabel l = extract_completion_label(reply.text);
        rec.objects[i].label = l.label;
        rec.objects[i].reason = l.reason;
        if (auto pos = first_content_token(reply); pos && *pos < reply.top.size()) {
          rec.objects[i].p_true = safe_true_probability(reply.top[*pos]);
        }
      }
    }
    t.sets.push_back(std::move(rec));
    if (!transcript_path.empty()) write_file_atomic(transcript_path, t.to_json().dump(1) + "\n");
  }
  return t;
}

}  // namespace conceptlab
