#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgam/features.hpp"

namespace pgam {

using FeatureRecord = std::array<double, kFeatureCount>;

// Maps source CSV columns onto the five features plus target. Each feature
// value is multiplied by its scale after parsing (the UCI file stores
// temperature and windspeed normalized to [0, 1]).
//
// Schema files are plain `key = value` lines; '#' starts a comment. Keys
// not given keep their uci_hourly() values.
//
//   time = hr
//   temperature = temp
//   temperature.scale = 41
//   windspeed = windspeed
//   windspeed.scale = 67
//   weekday = weekday
//   workday = workingday
//   target = cnt
//   year = yr          # optional; required only when filtering by year
struct ColumnMapping {
  std::array<std::string, kFeatureCount> source;
  std::array<double, kFeatureCount> scale{1.0, 1.0, 1.0, 1.0, 1.0};
  std::string target;
  std::string year;

  static ColumnMapping uci_hourly();
  static ColumnMapping from_schema_file(const std::filesystem::path& path);
  static ColumnMapping parse_schema(const std::string& text);
};

// Immutable column store of the five features plus target, rows in file
// (temporal) order.
class Dataset {
 public:
  Dataset(std::array<std::vector<double>, kFeatureCount> columns, std::vector<double> target);

  std::size_t size() const { return target_.size(); }
  std::span<const double> column(Feature f) const { return columns_[index_of(f)]; }
  std::span<const double> target() const { return target_; }
  FeatureRecord row(std::size_t i) const;

  // Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

  // FNV-1a 64 over the bit patterns of every cell, hex encoded.
  std::string fingerprint() const;

 private:
  std::array<std::vector<double>, kFeatureCount> columns_;
  std::vector<double> target_;
};

Dataset load_dataset(const std::filesystem::path& path,
                     const ColumnMapping& mapping = ColumnMapping::uci_hourly(),
                     const std::optional<std::string>& year_filter = std::nullopt);

// First ceil(n * train_fraction) rows train, the rest test.
std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, double train_fraction);

}  // namespace pgam
