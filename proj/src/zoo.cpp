#include "pgam/zoo.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "pgam/error.hpp"
#include "pgam/io.hpp"

namespace pgam {
namespace {

using nlohmann::json;

json binning_to_json(const Binning& b) {
  return {{"cuts", b.cuts}, {"representatives", b.representatives}};
}

Binning binning_from_json(const json& j) {
  Binning b;
  b.cuts = j.at("cuts").get<std::vector<double>>();
  b.representatives = j.at("representatives").get<std::vector<double>>();
  if (b.representatives.size() != b.bin_count()) throw Error(ErrorCode::Corrupt, "binning size mismatch");
  return b;
}

Feature feature_from_json(const json& j) {
  auto f = parse_feature(j.get<std::string>());
  if (!f) throw Error(ErrorCode::Corrupt, "unknown feature " + j.dump());
  return *f;
}

json metrics_json(const std::optional<Metrics>& m) {
  if (!m) return nullptr;
  return {{"r_squared", m->r_squared}, {"rmse", m->rmse}, {"n", m->n}};
}

std::optional<Metrics> metrics_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  Metrics m;
  m.r_squared = j.at("r_squared").get<double>();
  m.rmse = j.at("rmse").get<double>();
  m.n = j.at("n").get<std::size_t>();
  return m;
}

json params_to_json(const FitParams& p) {
  return {{"rounds", p.rounds},
          {"interaction_rounds", p.interaction_rounds},
          {"learning_rate", p.learning_rate},
          {"interaction_score_bins", p.interaction_score_bins},
          {"interaction_bins", p.interaction_bins},
          {"seed", p.seed}};
}

FitParams params_from_json(const json& j) {
  FitParams p;
  p.rounds = j.at("rounds").get<int>();
  p.interaction_rounds = j.at("interaction_rounds").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.interaction_score_bins = j.at("interaction_score_bins").get<std::size_t>();
  p.interaction_bins = j.at("interaction_bins").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json grid_to_json(const GridSpec& g) {
  auto sets = [](const std::vector<FeatureSet>& v) {
    json a = json::array();
    for (auto s : v) a.push_back(s.to_string());
    return a;
  };
  return {{"excluded", sets(g.excluded)},
          {"interactions", g.interactions},
          {"granularity", g.granularity},
          {"monotonic", sets(g.monotonic)}};
}

GridSpec grid_from_json(const json& j) {
  auto sets = [](const json& a) {
    std::vector<FeatureSet> v;
    for (const auto& s : a) v.push_back(FeatureSet::parse(s.get<std::string>()));
    return v;
  };
  GridSpec g;
  g.excluded = sets(j.at("excluded"));
  g.interactions = j.at("interactions").get<std::vector<int>>();
  g.granularity = j.at("granularity").get<std::vector<int>>();
  g.monotonic = sets(j.at("monotonic"));
  return g;
}

std::string dump(const json& j) { return j.dump(1) + "\n"; }

}  // namespace

const Metrics& ZooEntry::test_metrics() const {
  if (!model.test_metrics) throw Error(ErrorCode::Corrupt, "zoo entry " + config_id + " has no test metrics");
  return *model.test_metrics;
}

const ZooEntry* ModelZoo::find(std::string_view config_id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), config_id,
                             [](const ZooEntry& e, std::string_view id) { return e.config_id < id; });
  if (it == entries.end() || it->config_id != config_id) return nullptr;
  return &*it;
}

const ZooEntry& ModelZoo::at(std::string_view config_id) const {
  const ZooEntry* e = find(config_id);
  if (!e) throw Error(ErrorCode::NotFound, "unknown config_id '" + std::string(config_id) + "'");
  return *e;
}

double ModelZoo::best_r_squared() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& e : entries) best = std::max(best, e.test_metrics().r_squared);
  return best;
}

ThresholdRule ThresholdRule::parse(std::string_view text) {
  bool relative = false;
  if (text.starts_with("eps:")) {
    relative = true;
    text.remove_prefix(4);
  }
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || std::isnan(v))
    throw Error(ErrorCode::ParseError, "bad threshold '" + std::string(text) + "' (expected R2 floor or eps:VALUE)");
  if (relative && !(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be >= 0");
  return relative ? ThresholdRule::relative(v) : ThresholdRule::absolute(v);
}

std::string ThresholdRule::to_string() const {
  std::string v = std::isinf(value) ? (value < 0 ? "-inf" : "inf") : format_double(value);
  return kind == Kind::Relative ? "eps:" + v : v;
}

bool ThresholdRule::admits(double r_squared, double best_r_squared) const {
  if (kind == Kind::Absolute) return r_squared >= value;
  return r_squared >= best_r_squared - value;
}

ModelZoo build_zoo(const Dataset& ds, const std::vector<GamConfig>& configs, const FitParams& params,
                   double train_fraction, const GridSpec& grid, unsigned threads) {
  params.validate();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!configs[i].is_canonical())
      throw Error(ErrorCode::NotCanonical, "config " + configs[i].id() + " is not canonical");
    for (std::size_t j = 0; j < i; ++j) {
      if (configs[j].id() == configs[i].id() || configs[j].same_effect(configs[i]))
        throw Error(ErrorCode::InvalidArgument, "configs " + configs[j].id() + " and " + configs[i].id() +
                                                    " are duplicates");
    }
  }

  auto [train, test] = temporal_split(ds, train_fraction);

  std::vector<std::optional<ZooEntry>> slots(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        ZooEntry e;
        e.config_id = configs[i].id();
        e.config = configs[i];
        e.model = fit_gam(train, configs[i], params);
        e.model.test_metrics = evaluate(e.model, test);
        slots[i] = std::move(e);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, configs.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "config " + configs[i].id() + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "config " + configs[i].id() + ": " + e.what());
    }
  }

  ModelZoo zoo;
  zoo.dataset_fingerprint = ds.fingerprint();
  zoo.params = params;
  zoo.train_fraction = train_fraction;
  zoo.grid = grid;
  for (auto& s : slots) zoo.entries.push_back(std::move(*s));
  std::sort(zoo.entries.begin(), zoo.entries.end(),
            [](const ZooEntry& a, const ZooEntry& b) { return a.config_id < b.config_id; });
  return zoo;
}

RashomonSet filter_rashomon(const ModelZoo& zoo, const ThresholdRule& rule) {
  if (zoo.entries.empty()) throw Error(ErrorCode::InvalidArgument, "filter_rashomon: empty zoo");
  RashomonSet set;
  set.rule = rule;
  set.best_r_squared = zoo.best_r_squared();
  for (const auto& e : zoo.entries) {
    if (rule.admits(e.test_metrics().r_squared, set.best_r_squared)) set.members.push_back(e.config_id);
  }
  if (set.members.empty())
    throw Error(ErrorCode::EmptyResult, "no models clear threshold " + rule.to_string() + " (best test R^2 " +
                                            format_double(set.best_r_squared) + ")");
  return set;
}

json model_to_json(const GamModel& m) {
  json shapes = json::array();
  for (const auto& s : m.shapes) {
    json j = {{"feature", feature_name(s.feature)},
              {"binning", binning_to_json(s.binning)},
              {"values", s.values},
              {"weights", s.weights}};
    j["monotone"] = s.monotone ? json(*s.monotone == Direction::Increasing ? "increasing" : "decreasing") : json(nullptr);
    shapes.push_back(std::move(j));
  }
  json inter = json::array();
  for (const auto& t : m.interactions) {
    inter.push_back({{"first", feature_name(t.first)},
                     {"second", feature_name(t.second)},
                     {"first_binning", binning_to_json(t.first_binning)},
                     {"second_binning", binning_to_json(t.second_binning)},
                     {"values", t.values},
                     {"weights", t.weights}});
  }
  const GamConfig& c = m.config;
  return {{"config_id", c.id()},
          {"config",
           {{"levels", c.levels},
            {"excluded", c.excluded.to_string()},
            {"n_interactions", c.n_interactions},
            {"granularity", c.granularity},
            {"monotonic", c.monotonic.to_string()}}},
          {"intercept", m.intercept},
          {"shapes", std::move(shapes)},
          {"interactions", std::move(inter)},
          {"train_metrics", metrics_json(m.train_metrics)},
          {"test_metrics", metrics_json(m.test_metrics)}};
}

GamModel model_from_json(const json& j) {
  GamModel m;
  const json& c = j.at("config");
  m.config.levels = c.at("levels").get<LevelIndices>();
  m.config.excluded = FeatureSet::parse(c.at("excluded").get<std::string>());
  m.config.n_interactions = c.at("n_interactions").get<int>();
  m.config.granularity = c.at("granularity").get<int>();
  m.config.monotonic = FeatureSet::parse(c.at("monotonic").get<std::string>());
  m.intercept = j.at("intercept").get<double>();
  for (const auto& sj : j.at("shapes")) {
    ShapeFunction s;
    s.feature = feature_from_json(sj.at("feature"));
    s.binning = binning_from_json(sj.at("binning"));
    s.values = sj.at("values").get<std::vector<double>>();
    s.weights = sj.at("weights").get<std::vector<double>>();
    if (s.values.size() != s.binning.bin_count() || s.weights.size() != s.values.size())
      throw Error(ErrorCode::Corrupt, "shape size mismatch");
    if (!sj.at("monotone").is_null())
      s.monotone = sj.at("monotone").get<std::string>() == "increasing" ? Direction::Increasing : Direction::Decreasing;
    m.shapes.push_back(std::move(s));
  }
  for (const auto& tj : j.at("interactions")) {
    InteractionTerm t;
    t.first = feature_from_json(tj.at("first"));
    t.second = feature_from_json(tj.at("second"));
    t.first_binning = binning_from_json(tj.at("first_binning"));
    t.second_binning = binning_from_json(tj.at("second_binning"));
    t.values = tj.at("values").get<std::vector<double>>();
    t.weights = tj.at("weights").get<std::vector<double>>();
    if (t.values.size() != t.first_binning.bin_count() * t.second_binning.bin_count() ||
        t.weights.size() != t.values.size())
      throw Error(ErrorCode::Corrupt, "interaction grid size mismatch");
    m.interactions.push_back(std::move(t));
  }
  m.train_metrics = metrics_from_json(j.at("train_metrics"));
  m.test_metrics = metrics_from_json(j.at("test_metrics"));
  if (j.at("config_id").get<std::string>() != m.config.id()) throw Error(ErrorCode::Corrupt, "config_id mismatch");
  return m;
}

void save_zoo(const ModelZoo& zoo, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "models");
  json index = json::array();
  for (const auto& e : zoo.entries) {
    const std::string file = "models/" + e.config_id + ".json";
    atomic_write(dir / file, dump(model_to_json(e.model)));
    index.push_back({{"config_id", e.config_id},
                     {"file", file},
                     {"test_r_squared", e.test_metrics().r_squared},
                     {"test_rmse", e.test_metrics().rmse}});
  }
  json manifest = {{"format", kZooFormatVersion},
                   {"dataset_fingerprint", zoo.dataset_fingerprint},
                   {"train_fraction", zoo.train_fraction},
                   {"fit_params", params_to_json(zoo.params)},
                   {"grid", grid_to_json(zoo.grid)},
                   {"entries", std::move(index)}};
  atomic_write(dir / "manifest.json", dump(manifest));
}

ModelZoo load_zoo(const std::filesystem::path& dir, const std::optional<std::string>& expected_fingerprint,
                  std::vector<std::string>* warnings) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw Error(ErrorCode::NotFound, "no zoo manifest in " + dir.string());

  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Corrupt, "corrupted manifest " + manifest_path.string() + ": " + e.what());
  }

  ModelZoo zoo;
  try {
    const auto format = manifest.at("format").get<std::string>();
    if (format != kZooFormatVersion)
      throw Error(ErrorCode::VersionMismatch,
                  "zoo format '" + format + "' does not match '" + std::string(kZooFormatVersion) + "'");
    zoo.dataset_fingerprint = manifest.at("dataset_fingerprint").get<std::string>();
    zoo.train_fraction = manifest.at("train_fraction").get<double>();
    zoo.params = params_from_json(manifest.at("fit_params"));
    zoo.grid = grid_from_json(manifest.at("grid"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Corrupt, "corrupted manifest " + manifest_path.string() + ": " + e.what());
  }

  for (const auto& item : manifest.at("entries")) {
    std::string id;
    try {
      id = item.at("config_id").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Corrupt, "corrupted manifest entry: " + std::string(e.what()));
    }
    try {
      ZooEntry e;
      e.config_id = id;
      e.model = model_from_json(json::parse(read_file(dir / item.at("file").get<std::string>())));
      e.config = e.model.config;
      if (e.config_id != e.config.id()) throw Error(ErrorCode::Corrupt, "file holds " + e.config.id());
      if (!e.model.test_metrics) throw Error(ErrorCode::Corrupt, "missing test metrics");
      zoo.entries.push_back(std::move(e));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Corrupt, "model file for " + id + " is corrupt: " + e.what());
    }
  }
  if (zoo.entries.empty()) throw Error(ErrorCode::Corrupt, "zoo manifest lists no models");
  std::sort(zoo.entries.begin(), zoo.entries.end(),
            [](const ZooEntry& a, const ZooEntry& b) { return a.config_id < b.config_id; });
  for (std::size_t i = 1; i < zoo.entries.size(); ++i) {
    if (zoo.entries[i].config_id == zoo.entries[i - 1].config_id)
      throw Error(ErrorCode::Corrupt, "duplicate config_id " + zoo.entries[i].config_id);
  }

  if (expected_fingerprint && *expected_fingerprint != zoo.dataset_fingerprint && warnings) {
    warnings->push_back("dataset fingerprint mismatch: zoo built from " + zoo.dataset_fingerprint +
                        ", current dataset is " + *expected_fingerprint);
  }
  return zoo;
}

}  // namespace pgam
