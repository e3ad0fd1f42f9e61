#include "pgam/features.hpp"

#include <algorithm>
#include <cctype>

#include "pgam/error.hpp"

namespace pgam {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::MissingFile: return "missing_file";
    case ErrorCode::MissingColumn: return "missing_column";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::EmptyResult: return "empty_result";
    case ErrorCode::NotCanonical: return "not_canonical";
    case ErrorCode::UndefinedMetric: return "undefined_metric";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Exhausted: return "exhausted";
    case ErrorCode::NoValidModel: return "no_valid_model";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Corrupt: return "corrupt";
    case ErrorCode::VersionMismatch: return "version_mismatch";
    case ErrorCode::Finalized: return "finalized";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::Time: return "time";
    case Feature::Temperature: return "temperature";
    case Feature::Windspeed: return "windspeed";
    case Feature::Weekday: return "weekday";
    case Feature::Workday: return "workday";
  }
  return "?";
}

std::string_view feature_display_name(Feature f) {
  switch (f) {
    case Feature::Time: return "Time";
    case Feature::Temperature: return "Temperature";
    case Feature::Windspeed: return "Windspeed";
    case Feature::Weekday: return "Weekday";
    case Feature::Workday: return "Workday";
  }
  return "?";
}

FeatureKind feature_kind(Feature f) {
  return (f == Feature::Weekday || f == Feature::Workday) ? FeatureKind::Categorical
                                                          : FeatureKind::Numeric;
}

std::optional<Feature> parse_feature(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Feature f : kAllFeatures) {
    if (feature_name(f) == lower) return f;
  }
  return std::nullopt;
}

std::size_t FeatureSet::size() const {
  std::size_t n = 0;
  for (Feature f : kAllFeatures) n += contains(f) ? 1 : 0;
  return n;
}

std::string FeatureSet::to_string() const {
  std::vector<std::string_view> names;
  for (Feature f : kAllFeatures)
    if (contains(f)) names.push_back(feature_display_name(f));
  std::sort(names.begin(), names.end());
  std::string out = "{";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ",";
    out += names[i];
  }
  return out + "}";
}

FeatureSet FeatureSet::parse(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.front())) || s.front() == '{'))
      s.remove_prefix(1);
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) || s.back() == '}'))
      s.remove_suffix(1);
    return s;
  };
  FeatureSet out;
  std::string_view body = trim(text);
  while (!body.empty()) {
    auto comma = body.find(',');
    std::string_view item = trim(body.substr(0, comma));
    if (!item.empty()) {
      auto f = parse_feature(item);
      if (!f) throw Error(ErrorCode::ParseError, "unknown feature '" + std::string(item) + "'");
      out.insert(*f);
    }
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace pgam
