#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace conceptlab {

enum class Dimension : std::uint8_t { Size, Color, Shape };

std::string_view dimension_name(Dimension d);

// Named feature values for the three object dimensions. Sizes are ordered
// by index (smallest first).
class FeatureVocab {
 public:
  // {small, medium, large} x {blue, green, yellow} x {circle, rectangle, triangle}
  FeatureVocab();
  FeatureVocab(std::vector<std::string> sizes, std::vector<std::string> colors,
               std::vector<std::string> shapes);

  // The vocabulary named in the original task prose (red/square instead of
  // yellow/rectangle).
  static FeatureVocab prose();

  const std::vector<std::string>& values(Dimension d) const;
  const std::vector<std::string>& sizes() const { return sizes_; }
  const std::vector<std::string>& colors() const { return colors_; }
  const std::vector<std::string>& shapes() const { return shapes_; }

  std::size_t cardinality(Dimension d) const { return values(d).size(); }
  std::optional<std::uint8_t> find(Dimension d, std::string_view name) const;

  // Number of distinct objects, |sizes| * |colors| * |shapes|.
  std::size_t universe_size() const;

  nlohmann::json to_json() const;
  static FeatureVocab from_json(const nlohmann::json& j);
  static FeatureVocab load(const std::string& path);

  friend bool operator==(const FeatureVocab&, const FeatureVocab&) = default;

 private:
  void validate() const;

  std::vector<std::string> sizes_;
  std::vector<std::string> colors_;
  std::vector<std::string> shapes_;
};

struct Obj {
  std::uint8_t size = 0;
  std::uint8_t color = 0;
  std::uint8_t shape = 0;

  std::uint8_t get(Dimension d) const {
    switch (d) {
      case Dimension::Size: return size;
      case Dimension::Color: return color;
      case Dimension::Shape: return shape;
    }
    return 0;
  }

  friend auto operator<=>(const Obj&, const Obj&) = default;
};

bool in_range(const Obj& o, const FeatureVocab& vocab);

// Object <-> dense index in [0, universe_size).
std::size_t object_index(const Obj& o, const FeatureVocab& vocab);
Obj object_at(std::size_t index, const FeatureVocab& vocab);

// "medium blue rectangle"
std::string describe(const Obj& o, const FeatureVocab& vocab);
// Inverse of describe(); whitespace-insensitive, case-insensitive.
std::optional<Obj> parse_object(std::string_view text, const FeatureVocab& vocab);

inline constexpr std::size_t kMaxSetSize = 5;

// One displayed set of objects and the position of the object being
// classified.
class Context {
 public:
  Context(std::span<const Obj> objects, std::size_t target);
  Context(std::initializer_list<Obj> objects, std::size_t target)
      : Context(std::span<const Obj>(objects.begin(), objects.size()), target) {}

  std::span<const Obj> objects() const { return {objects_.data(), count_}; }
  std::size_t size() const { return count_; }
  std::size_t target() const { return target_; }
  const Obj& operator[](std::size_t i) const { return objects_[i]; }
  const Obj& target_object() const { return objects_[target_]; }

  Context with_target(std::size_t target) const;

  friend bool operator==(const Context& a, const Context& b);

 private:
  std::array<Obj, kMaxSetSize> objects_{};
  std::size_t count_ = 0;
  std::size_t target_ = 0;
};

}  // namespace conceptlab
