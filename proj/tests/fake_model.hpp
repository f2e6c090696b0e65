#pragma once

// Stand-ins for a hosted model: a scripted transport and a toy responder
// that labels objects by a keyword and reports token logprobs.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "conceptlab/io.hpp"
#include "conceptlab/llm.hpp"

namespace conceptlab::testing {

class ScriptedTransport : public Transport {
 public:
  using Handler = std::function<HttpResult(const nlohmann::json& request)>;
  explicit ScriptedTransport(Handler h) : handler_(std::move(h)) {}
  HttpResult post(const std::string& path, const std::string& body,
                  const std::map<std::string, std::string>& headers) override {
    ++calls;
    last_path = path;
    last_headers = headers;
    return handler_(nlohmann::json::parse(body));
  }
  int calls = 0;
  std::string last_path;
  std::map<std::string, std::string> last_headers;

 private:
  Handler handler_;
};

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Chat reply body; each label token gets top alternatives with P(True) = p.
inline std::string chat_body(const std::vector<std::pair<std::string, std::string>>& lines, double p) {
  std::string text;
  nlohmann::json content = nlohmann::json::array();
  auto token = [&](const std::string& t, nlohmann::json top = nlohmann::json::array()) {
    text += t;
    content.push_back({{"token", t}, {"logprob", -0.1}, {"top_logprobs", top}});
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) token("\n");
    token("-");
    for (const auto& w : split_lines(lines[i].first)) {
      std::istringstream words(w);
      for (std::string word; words >> word;) token(" " + word);
    }
    token(" ->");
    token(" " + lines[i].second, nlohmann::json::array({{{"token", " True"}, {"logprob", std::log(p * 0.9)}},
                                                        {{"token", "true"}, {"logprob", std::log(p * 0.1)}},
                                                        {{"token", " False"}, {"logprob", std::log(1 - p)}},
                                                        {{"token", " Maybe"}, {"logprob", -5.0}}}));
  }
  nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}},
                                 {"logprobs", {{"content", content}}}}}}};
  return j.dump();
}

inline std::string completion_body(const std::string& text, double p) {
  nlohmann::json top = nlohmann::json::array({nlohmann::json{{" True", std::log(p)}, {" False", std::log(1 - p)}}});
  nlohmann::json j{{"choices", {{{"text", text}, {"logprobs", {{"tokens", {text}}, {"top_logprobs", top}}}}}}};
  return j.dump();
}

// Labels an object True iff its description contains `keyword`.
inline ScriptedTransport::Handler keyword_model(std::string keyword) {
  return [keyword](const nlohmann::json& req) -> HttpResult {
    if (req.contains("messages")) {
      const std::string last = req["messages"].back()["content"].get<std::string>();
      std::vector<std::pair<std::string, std::string>> lines;
      for (const auto& l : split_lines(last)) {
        if (l.rfind("- ", 0) != 0) continue;
        std::string obj = l.substr(2);
        lines.push_back({obj, obj.find(keyword) != std::string::npos ? "True" : "False"});
      }
      return {200, chat_body(lines, 0.8), ""};
    }
    const std::string prompt = req.at("prompt").get<std::string>();
    const std::string last = prompt.substr(prompt.rfind("\n- ") + 3);
    const bool yes = last.find(keyword) != std::string::npos;
    return {200, completion_body(yes ? " True" : " False", yes ? 0.8 : 0.2), ""};
  };
}

// Hand-built so the golden files do not depend on the list generator.
inline ExemplarList fixture_list() {
  const FeatureVocab vocab;
  ExemplarList list = generate_list("blue", "(is-color blue)", parse_concept("(is-color blue)", vocab), vocab, 0, 0);
  auto o = [&](const char* t) { return *parse_object(t, vocab); };
  list.sets.push_back({{o("large yellow triangle"), o("medium blue rectangle")}, {false, true}});
  list.sets.push_back({{o("small blue circle"), o("small green circle"), o("large blue triangle")},
                       {true, false, true}});
  list.sets.push_back({{o("medium green rectangle")}, {false}});
  return list;
}

}  // namespace conceptlab::testing
