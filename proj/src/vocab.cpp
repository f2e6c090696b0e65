#include "conceptlab/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "conceptlab/error.hpp"
#include "json.hpp"

namespace conceptlab {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Size: return "size";
    case Dimension::Color: return "color";
    case Dimension::Shape: return "shape";
  }
  return "?";
}

FeatureVocab::FeatureVocab()
    : FeatureVocab({"small", "medium", "large"}, {"blue", "green", "yellow"},
                   {"circle", "rectangle", "triangle"}) {}

FeatureVocab::FeatureVocab(std::vector<std::string> sizes, std::vector<std::string> colors,
                           std::vector<std::string> shapes)
    : sizes_(std::move(sizes)), colors_(std::move(colors)), shapes_(std::move(shapes)) {
  validate();
}

FeatureVocab FeatureVocab::prose() {
  return FeatureVocab({"small", "medium", "large"}, {"blue", "green", "red"},
                      {"circle", "square", "triangle"});
}

void FeatureVocab::validate() const {
  for (auto d : {Dimension::Size, Dimension::Color, Dimension::Shape}) {
    const auto& v = values(d);
    if (v.empty()) {
      throw ConfigError("vocab: " + std::string(dimension_name(d)) + " list is empty");
    }
    if (v.size() > 255) {
      throw ConfigError("vocab: too many " + std::string(dimension_name(d)) + " values");
    }
    std::set<std::string> seen;
    for (const auto& name : v) {
      if (name.empty() || name.find_first_of(" \t\r\n()#") != std::string::npos) {
        throw ConfigError("vocab: invalid value name '" + name + "'");
      }
      if (!seen.insert(lower(name)).second) {
        throw ConfigError("vocab: duplicate " + std::string(dimension_name(d)) + " '" + name + "'");
      }
    }
  }
}

const std::vector<std::string>& FeatureVocab::values(Dimension d) const {
  switch (d) {
    case Dimension::Size: return sizes_;
    case Dimension::Color: return colors_;
    case Dimension::Shape: return shapes_;
  }
  return sizes_;
}

std::optional<std::uint8_t> FeatureVocab::find(Dimension d, std::string_view name) const {
  const auto& v = values(d);
  const auto key = lower(name);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (lower(v[i]) == key) return static_cast<std::uint8_t>(i);
  }
  return std::nullopt;
}

std::size_t FeatureVocab::universe_size() const {
  return sizes_.size() * colors_.size() * shapes_.size();
}

nlohmann::json FeatureVocab::to_json() const {
  return {{"sizes", sizes_}, {"colors", colors_}, {"shapes", shapes_}};
}

FeatureVocab FeatureVocab::from_json(const nlohmann::json& j) {
  try {
    return FeatureVocab(j.at("sizes").get<std::vector<std::string>>(),
                        j.at("colors").get<std::vector<std::string>>(),
                        j.at("shapes").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("vocab: ") + e.what());
  }
}

FeatureVocab FeatureVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocab file " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("vocab " + path + ": " + e.what());
  }
}

bool in_range(const Obj& o, const FeatureVocab& vocab) {
  return o.size < vocab.sizes().size() && o.color < vocab.colors().size() &&
         o.shape < vocab.shapes().size();
}

std::size_t object_index(const Obj& o, const FeatureVocab& vocab) {
  return (static_cast<std::size_t>(o.size) * vocab.colors().size() + o.color) *
             vocab.shapes().size() +
         o.shape;
}

Obj object_at(std::size_t index, const FeatureVocab& vocab) {
  const auto ns = vocab.shapes().size();
  const auto nc = vocab.colors().size();
  Obj o;
  o.shape = static_cast<std::uint8_t>(index % ns);
  index /= ns;
  o.color = static_cast<std::uint8_t>(index % nc);
  o.size = static_cast<std::uint8_t>(index / nc);
  return o;
}

std::string describe(const Obj& o, const FeatureVocab& vocab) {
  return vocab.sizes().at(o.size) + " " + vocab.colors().at(o.color) + " " +
         vocab.shapes().at(o.shape);
}

std::optional<Obj> parse_object(std::string_view text, const FeatureVocab& vocab) {
  std::istringstream in{std::string(text)};
  std::string size, color, shape, extra;
  if (!(in >> size >> color >> shape) || (in >> extra)) return std::nullopt;
  auto s = vocab.find(Dimension::Size, size);
  auto c = vocab.find(Dimension::Color, color);
  auto h = vocab.find(Dimension::Shape, shape);
  if (!s || !c || !h) return std::nullopt;
  return Obj{*s, *c, *h};
}

Context::Context(std::span<const Obj> objects, std::size_t target)
    : count_(objects.size()), target_(target) {
  if (objects.empty() || objects.size() > kMaxSetSize) {
    throw DataError("context must hold 1.." + std::to_string(kMaxSetSize) + " objects, got " +
                    std::to_string(objects.size()));
  }
  if (target >= objects.size()) {
    throw DataError("context target " + std::to_string(target) + " out of range");
  }
  std::copy(objects.begin(), objects.end(), objects_.begin());
}

Context Context::with_target(std::size_t target) const {
  return Context(objects(), target);
}

bool operator==(const Context& a, const Context& b) {
  return a.target_ == b.target_ && std::ranges::equal(a.objects(), b.objects());
}

}  // namespace conceptlab
