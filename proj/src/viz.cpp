#include "pgam/viz.hpp"

#include <cmath>
#include <cstdio>

namespace pgam {
namespace {

std::string category_label(Feature f, double value) {
  static const char* kWeekdays[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
  const auto v = static_cast<long>(std::lround(value));
  if (f == Feature::Weekday && v >= 0 && v < 7 && static_cast<double>(v) == value) return kWeekdays[v];
  if (f == Feature::Workday && (value == 0.0 || value == 1.0)) return value == 1.0 ? "Yes" : "No";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", value);
  return buf;
}

std::vector<std::string> labels_for(Feature f, const Binning& b) {
  std::vector<std::string> out;
  out.reserve(b.bin_count());
  for (double rep : b.representatives) {
    if (feature_kind(f) == FeatureKind::Categorical) {
      out.push_back(category_label(f, rep));
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", rep);
      out.push_back(buf);
    }
  }
  return out;
}

}  // namespace

VizBundle export_viz(const GamModel& model) {
  VizBundle v;
  v.config_id = model.config.id();
  v.intercept = model.intercept;
  v.train_metrics = model.train_metrics;
  v.test_metrics = model.test_metrics;
  for (const auto& s : model.shapes) {
    ShapeSeries series;
    series.feature = std::string(feature_name(s.feature));
    series.kind = feature_kind(s.feature) == FeatureKind::Numeric ? "numeric" : "categorical";
    series.labels = labels_for(s.feature, s.binning);
    series.x = s.binning.representatives;
    series.y = s.values;
    if (s.monotone) series.monotone = *s.monotone == Direction::Increasing ? "increasing" : "decreasing";
    v.shapes.push_back(std::move(series));
  }
  for (const auto& t : model.interactions) {
    Heatmap h;
    h.x_feature = std::string(feature_name(t.first));
    h.y_feature = std::string(feature_name(t.second));
    h.x_labels = labels_for(t.first, t.first_binning);
    h.y_labels = labels_for(t.second, t.second_binning);
    const std::size_t nx = t.first_binning.bin_count(), ny = t.second_binning.bin_count();
    h.values.assign(nx, std::vector<double>(ny));
    for (std::size_t i = 0; i < nx; ++i)
      for (std::size_t j = 0; j < ny; ++j) h.values[i][j] = t.at(i, j);
    v.heatmaps.push_back(std::move(h));
  }
  return v;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"r_squared", m.r_squared}, {"rmse", m.rmse}, {"n", m.n}};
}

nlohmann::json to_json(const VizBundle& viz) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : viz.shapes) {
    nlohmann::json j = {{"feature", s.feature}, {"kind", s.kind}, {"labels", s.labels}, {"x", s.x}, {"y", s.y}};
    j["monotone"] = s.monotone ? nlohmann::json(*s.monotone) : nlohmann::json(nullptr);
    shapes.push_back(std::move(j));
  }
  nlohmann::json heatmaps = nlohmann::json::array();
  for (const auto& h : viz.heatmaps) {
    heatmaps.push_back({{"x_feature", h.x_feature},
                        {"y_feature", h.y_feature},
                        {"x_labels", h.x_labels},
                        {"y_labels", h.y_labels},
                        {"values", h.values}});
  }
  nlohmann::json out = {{"config_id", viz.config_id},
                        {"intercept", viz.intercept},
                        {"shapes", std::move(shapes)},
                        {"heatmaps", std::move(heatmaps)}};
  out["train_metrics"] = viz.train_metrics ? to_json(*viz.train_metrics) : nlohmann::json(nullptr);
  out["test_metrics"] = viz.test_metrics ? to_json(*viz.test_metrics) : nlohmann::json(nullptr);
  return out;
}

}  // namespace pgam
