#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "pgam/features.hpp"

namespace pgam {

enum class Hyperparameter { ExcludedFeatures = 0, NumberInteractions, PatternGranularity, ForcedMonotonicity };

inline constexpr std::size_t kHyperparameterCount = 4;

inline constexpr std::array<Hyperparameter, kHyperparameterCount> kAllHyperparameters = {
    Hyperparameter::ExcludedFeatures, Hyperparameter::NumberInteractions,
    Hyperparameter::PatternGranularity, Hyperparameter::ForcedMonotonicity};

std::string_view hyperparameter_name(Hyperparameter h);

// 1-based level index per hyperparameter, matching the grid's numbering.
using LevelIndices = std::array<int, kHyperparameterCount>;

// One hyperparameter level, e.g. NumberInteractions(3).
struct LevelKey {
  Hyperparameter hyper = Hyperparameter::ExcludedFeatures;
  int level = 1;

  std::string label() const;
  friend auto operator<=>(const LevelKey&, const LevelKey&) = default;
};

struct GamConfig {
  // Grid levels the config was enumerated from. These stay fixed through
  // canonicalization and drive both the config id and the bandit context.
  LevelIndices levels{1, 1, 1, 1};
  FeatureSet excluded;
  int n_interactions = 1;
  int granularity = 256;
  FeatureSet monotonic;

  // "ex1.in2.gr3.mo1"
  std::string id() const;
  bool is_canonical() const { return monotonic.intersect(excluded).empty(); }
  FeatureSet included() const;
  std::string describe() const;

  // Same effective model specification (level indices ignored).
  bool same_effect(const GamConfig& other) const;
};

// Level lists for the four hyperparameters.
struct GridSpec {
  std::vector<FeatureSet> excluded;
  std::vector<int> interactions;
  std::vector<int> granularity;
  std::vector<FeatureSet> monotonic;

  // Excluded {}, {Weekday}, {Windspeed}, {Weekday, Windspeed};
  // interactions 1, 2, 3; granularity 8, 16, 256;
  // monotonic {}, {Temperature}, {Windspeed}, {Temperature, Windspeed}.
  static GridSpec table1();

  std::array<std::size_t, kHyperparameterCount> block_sizes() const;
  std::size_t context_dimension() const;
  std::size_t size() const;

  // Config at the given levels; throws when a level is out of range.
  GamConfig make(const LevelIndices& levels) const;
  GamConfig from_id(std::string_view config_id) const;
};

LevelIndices parse_config_id(std::string_view config_id);

// Full cross-product, lexicographic in level indices (excluded slowest).
std::vector<GamConfig> enumerate_grid(const GridSpec& spec);

// monotonic := monotonic \ excluded.
GamConfig canonicalize(const GamConfig& config);

// Canonicalize each, keep the first of every group with equal effect.
std::vector<GamConfig> dedupe(const std::vector<GamConfig>& configs);

}  // namespace pgam
