#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgam/gam.hpp"

namespace pgam {

struct ShapeSeries {
  std::string feature;
  std::string kind;  // "numeric" | "categorical"
  std::vector<std::string> labels;
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::string> monotone;
};

struct Heatmap {
  std::string x_feature;
  std::string y_feature;
  std::vector<std::string> x_labels;
  std::vector<std::string> y_labels;
  // values[i][j] for x bin i, y bin j.
  std::vector<std::vector<double>> values;
};

struct VizBundle {
  std::string config_id;
  double intercept = 0.0;
  std::vector<ShapeSeries> shapes;
  std::vector<Heatmap> heatmaps;
  std::optional<Metrics> train_metrics;
  std::optional<Metrics> test_metrics;
};

VizBundle export_viz(const GamModel& model);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const VizBundle& viz);

}  // namespace pgam
