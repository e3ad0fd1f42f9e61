#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgam/binning.hpp"
#include "pgam/config.hpp"
#include "pgam/dataset.hpp"
#include "pgam/features.hpp"
#include "pgam/pava.hpp"

namespace pgam {

struct FitParams {
  int rounds = 300;
  int interaction_rounds = 100;
  double learning_rate = 0.05;
  // Per-axis bin cap used when ranking candidate pairs.
  std::size_t interaction_score_bins = 8;
  // Per-axis bin cap of the boosted interaction grids.
  std::size_t interaction_bins = 32;
  // Recorded with the zoo; training itself is deterministic.
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const FitParams&, const FitParams&) = default;
};

struct Metrics {
  double r_squared = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct ShapeFunction {
  Feature feature = Feature::Time;
  Binning binning;
  std::vector<double> values;
  // Training rows per bin.
  std::vector<double> weights;
  std::optional<Direction> monotone;
};

struct InteractionTerm {
  Feature first = Feature::Time;
  Feature second = Feature::Temperature;
  Binning first_binning;
  Binning second_binning;
  // Row-major, first axis outer.
  std::vector<double> values;
  std::vector<double> weights;

  double at(std::size_t i, std::size_t j) const { return values[i * second_binning.bin_count() + j]; }
};

struct GamModel {
  GamConfig config;
  double intercept = 0.0;
  std::vector<ShapeFunction> shapes;
  std::vector<InteractionTerm> interactions;
  std::optional<Metrics> train_metrics;
  std::optional<Metrics> test_metrics;

  const ShapeFunction* shape(Feature f) const;
};

struct FitTrace {
  // Training SSE before boosting and after each main-effect round.
  std::vector<double> main_sse;
  std::vector<double> interaction_sse;
  // Every candidate pair with its SSE-reduction score, best first.
  std::vector<std::pair<std::pair<Feature, Feature>, double>> pair_scores;
};

// Cyclic boosting of main effects, pair detection, pair boosting, monotone
// projection, then re-centering into the intercept. Pure and deterministic.
GamModel fit_gam(const Dataset& train, const GamConfig& config, const FitParams& params = {},
                 FitTrace* trace = nullptr);

double predict(const GamModel& model, const FeatureRecord& row);
std::vector<double> predict(const GamModel& model, const Dataset& data);

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets);
Metrics evaluate(const GamModel& model, const Dataset& data);

}  // namespace pgam
