#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgam/config.hpp"
#include "pgam/dataset.hpp"
#include "pgam/gam.hpp"

namespace pgam {

inline constexpr std::string_view kZooFormatVersion = "pgam-zoo/1";

struct ZooEntry {
  std::string config_id;
  GamConfig config;
  GamModel model;

  const Metrics& test_metrics() const;
};

struct ModelZoo {
  std::string dataset_fingerprint;
  FitParams params;
  double train_fraction = 0.8;
  GridSpec grid = GridSpec::table1();
  // Sorted by config_id.
  std::vector<ZooEntry> entries;

  const ZooEntry* find(std::string_view config_id) const;
  const ZooEntry& at(std::string_view config_id) const;
  double best_r_squared() const;
};

// Absolute floor on test R², or "within eps of the best".
struct ThresholdRule {
  enum class Kind { Absolute, Relative };
  Kind kind = Kind::Absolute;
  double value = 0.83;

  static ThresholdRule absolute(double floor) { return {Kind::Absolute, floor}; }
  static ThresholdRule relative(double eps) { return {Kind::Relative, eps}; }
  // "0.83", "-inf", or "eps:0.05".
  static ThresholdRule parse(std::string_view text);
  std::string to_string() const;

  bool admits(double r_squared, double best_r_squared) const;
};

struct RashomonSet {
  ThresholdRule rule;
  std::vector<std::string> members;
  double best_r_squared = 0.0;
};

// Fits one model per config on the first `train_fraction` of the rows and
// scores it on the rest. Entries are independent; `threads` == 0 picks the
// hardware concurrency.
ModelZoo build_zoo(const Dataset& ds, const std::vector<GamConfig>& configs, const FitParams& params,
                   double train_fraction, const GridSpec& grid = GridSpec::table1(),
                   unsigned threads = 0);

RashomonSet filter_rashomon(const ModelZoo& zoo, const ThresholdRule& rule);

nlohmann::json model_to_json(const GamModel& model);
GamModel model_from_json(const nlohmann::json& j);

// Directory layout: manifest.json plus models/<config_id>.json.
void save_zoo(const ModelZoo& zoo, const std::filesystem::path& dir);
// Fingerprint mismatches against `expected_fingerprint` are reported in
// `warnings`, not thrown.
ModelZoo load_zoo(const std::filesystem::path& dir,
                  const std::optional<std::string>& expected_fingerprint = std::nullopt,
                  std::vector<std::string>* warnings = nullptr);

}  // namespace pgam
