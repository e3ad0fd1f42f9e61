#include "pgam/config.hpp"

#include <charconv>

#include "pgam/error.hpp"

namespace pgam {
namespace {

constexpr std::array<const char*, kHyperparameterCount> kIdPrefix = {"ex", "in", "gr", "mo"};

}  // namespace

std::string_view hyperparameter_name(Hyperparameter h) {
  switch (h) {
    case Hyperparameter::ExcludedFeatures: return "ExcludedFeatures";
    case Hyperparameter::NumberInteractions: return "NumberInteractions";
    case Hyperparameter::PatternGranularity: return "PatternGranularity";
    case Hyperparameter::ForcedMonotonicity: return "ForcedMonotonicity";
  }
  return "?";
}

std::string LevelKey::label() const {
  return std::string(hyperparameter_name(hyper)) + "(" + std::to_string(level) + ")";
}

std::string GamConfig::id() const {
  std::string out;
  for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
    if (h) out += '.';
    out += kIdPrefix[h];
    out += std::to_string(levels[h]);
  }
  return out;
}

FeatureSet GamConfig::included() const {
  FeatureSet all;
  for (Feature f : kAllFeatures) all.insert(f);
  return all.minus(excluded);
}

std::string GamConfig::describe() const {
  return "excluded=" + excluded.to_string() + " interactions=" + std::to_string(n_interactions) +
         " granularity=" + std::to_string(granularity) + " monotonic=" + monotonic.to_string();
}

bool GamConfig::same_effect(const GamConfig& other) const {
  return excluded == other.excluded && n_interactions == other.n_interactions &&
         granularity == other.granularity && monotonic == other.monotonic;
}

GridSpec GridSpec::table1() {
  GridSpec g;
  g.excluded = {FeatureSet{}, FeatureSet{Feature::Weekday}, FeatureSet{Feature::Windspeed},
                FeatureSet{Feature::Weekday, Feature::Windspeed}};
  g.interactions = {1, 2, 3};
  g.granularity = {8, 16, 256};
  g.monotonic = {FeatureSet{}, FeatureSet{Feature::Temperature}, FeatureSet{Feature::Windspeed},
                 FeatureSet{Feature::Temperature, Feature::Windspeed}};
  return g;
}

std::array<std::size_t, kHyperparameterCount> GridSpec::block_sizes() const {
  return {excluded.size(), interactions.size(), granularity.size(), monotonic.size()};
}

std::size_t GridSpec::context_dimension() const {
  std::size_t k = 0;
  for (auto b : block_sizes()) k += b;
  return k;
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (auto b : block_sizes()) n *= b;
  return n;
}

GamConfig GridSpec::make(const LevelIndices& levels) const {
  auto sizes = block_sizes();
  for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
    if (levels[h] < 1 || static_cast<std::size_t>(levels[h]) > sizes[h])
      throw Error(ErrorCode::InvalidArgument,
                  std::string(hyperparameter_name(kAllHyperparameters[h])) + " level " +
                      std::to_string(levels[h]) + " outside grid (1.." + std::to_string(sizes[h]) + ")");
  }
  GamConfig c;
  c.levels = levels;
  c.excluded = excluded[static_cast<std::size_t>(levels[0] - 1)];
  c.n_interactions = interactions[static_cast<std::size_t>(levels[1] - 1)];
  c.granularity = granularity[static_cast<std::size_t>(levels[2] - 1)];
  c.monotonic = monotonic[static_cast<std::size_t>(levels[3] - 1)];
  return c;
}

GamConfig GridSpec::from_id(std::string_view config_id) const {
  return canonicalize(make(parse_config_id(config_id)));
}

LevelIndices parse_config_id(std::string_view config_id) {
  LevelIndices levels{};
  std::string_view rest = config_id;
  for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
    auto dot = rest.find('.');
    std::string_view part = rest.substr(0, dot);
    if (part.size() < 3 || part.substr(0, 2) != kIdPrefix[h])
      throw Error(ErrorCode::ParseError, "malformed config id '" + std::string(config_id) + "'");
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data() + 2, part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size())
      throw Error(ErrorCode::ParseError, "malformed config id '" + std::string(config_id) + "'");
    levels[h] = v;
    if (h + 1 < kHyperparameterCount) {
      if (dot == std::string_view::npos)
        throw Error(ErrorCode::ParseError, "malformed config id '" + std::string(config_id) + "'");
      rest.remove_prefix(dot + 1);
    } else if (dot != std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "malformed config id '" + std::string(config_id) + "'");
    }
  }
  return levels;
}

std::vector<GamConfig> enumerate_grid(const GridSpec& spec) {
  auto sizes = spec.block_sizes();
  for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
    if (sizes[h] == 0)
      throw Error(ErrorCode::InvalidArgument,
                  "empty level list for " + std::string(hyperparameter_name(kAllHyperparameters[h])));
  }
  std::vector<GamConfig> out;
  out.reserve(spec.size());
  for (int a = 1; a <= static_cast<int>(sizes[0]); ++a)
    for (int b = 1; b <= static_cast<int>(sizes[1]); ++b)
      for (int c = 1; c <= static_cast<int>(sizes[2]); ++c)
        for (int d = 1; d <= static_cast<int>(sizes[3]); ++d) out.push_back(spec.make({a, b, c, d}));
  return out;
}

GamConfig canonicalize(const GamConfig& config) {
  GamConfig c = config;
  c.monotonic = c.monotonic.minus(c.excluded);
  return c;
}

std::vector<GamConfig> dedupe(const std::vector<GamConfig>& configs) {
  std::vector<GamConfig> out;
  for (const GamConfig& raw : configs) {
    GamConfig c = canonicalize(raw);
    bool seen = false;
    for (const GamConfig& kept : out) {
      if (kept.same_effect(c)) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(c);
  }
  return out;
}

}  // namespace pgam
