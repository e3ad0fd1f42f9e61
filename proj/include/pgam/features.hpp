#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pgam {

// The five model inputs, in the fixed order used for columns, boosting
// sweeps and serialization.
enum class Feature : std::uint8_t { Time = 0, Temperature, Windspeed, Weekday, Workday };

inline constexpr std::size_t kFeatureCount = 5;

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::Time, Feature::Temperature, Feature::Windspeed, Feature::Weekday,
    Feature::Workday};

enum class FeatureKind { Numeric, Categorical };

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

std::string_view feature_name(Feature f);
std::string_view feature_display_name(Feature f);
FeatureKind feature_kind(Feature f);
// Accepts both "windspeed" and "Windspeed".
std::optional<Feature> parse_feature(std::string_view name);

class FeatureSet {
 public:
  constexpr FeatureSet() = default;
  constexpr FeatureSet(std::initializer_list<Feature> fs) {
    for (Feature f : fs) bits_ |= mask(f);
  }

  constexpr bool contains(Feature f) const { return (bits_ & mask(f)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr void insert(Feature f) { bits_ |= mask(f); }
  constexpr FeatureSet minus(FeatureSet other) const {
    FeatureSet r;
    r.bits_ = static_cast<std::uint8_t>(bits_ & ~other.bits_);
    return r;
  }
  constexpr FeatureSet intersect(FeatureSet other) const {
    FeatureSet r;
    r.bits_ = static_cast<std::uint8_t>(bits_ & other.bits_);
    return r;
  }
  constexpr std::uint8_t bits() const { return bits_; }
  std::size_t size() const;

  // "{}" or "{Weekday,Windspeed}".
  std::string to_string() const;
  static FeatureSet parse(std::string_view text);

  friend constexpr bool operator==(FeatureSet a, FeatureSet b) { return a.bits_ == b.bits_; }

 private:
  static constexpr std::uint8_t mask(Feature f) {
    return static_cast<std::uint8_t>(1u << index_of(f));
  }
  std::uint8_t bits_ = 0;
};

}  // namespace pgam
