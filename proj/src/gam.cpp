#include "pgam/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pgam/error.hpp"

namespace pgam {
namespace {

using BinIndex = std::uint32_t;

struct BinnedColumn {
  Binning binning;
  std::vector<BinIndex> index;
  std::vector<double> counts;
};

BinnedColumn bin_column(std::span<const double> values, std::size_t max_bins) {
  BinnedColumn out;
  out.binning = quantile_bin(values, max_bins);
  out.index.resize(values.size());
  out.counts.assign(out.binning.bin_count(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto b = static_cast<BinIndex>(out.binning.bin_of(values[i]));
    out.index[i] = b;
    out.counts[b] += 1.0;
  }
  return out;
}

std::size_t main_effect_bins(Feature f, int granularity) {
  // Categorical features keep one bin per category.
  if (feature_kind(f) == FeatureKind::Categorical) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(granularity);
}

std::size_t interaction_axis_bins(Feature f, std::size_t cap) {
  if (feature_kind(f) == FeatureKind::Categorical) return std::numeric_limits<std::size_t>::max();
  return cap;
}

double sse_of(std::span<const double> residual) {
  double s = 0.0;
  for (double r : residual) s += r * r;
  return s;
}

// Adds learning_rate * (per-cell mean residual) to `values` and removes the
// same amount from the residual.
void boost_step(std::span<const BinIndex> cell, std::size_t n_cells, double learning_rate,
                std::vector<double>& values, std::vector<double>& residual, std::vector<double>& sums,
                std::vector<double>& counts) {
  sums.assign(n_cells, 0.0);
  counts.assign(n_cells, 0.0);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    sums[cell[i]] += residual[i];
    counts[cell[i]] += 1.0;
  }
  for (std::size_t c = 0; c < n_cells; ++c) {
    sums[c] = counts[c] > 0.0 ? learning_rate * (sums[c] / counts[c]) : 0.0;
    values[c] += sums[c];
  }
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= sums[cell[i]];
}

double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  double sw = 0.0, s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += weights[i] * values[i];
    sw += weights[i];
  }
  return sw > 0.0 ? s / sw : 0.0;
}

double weighted_distance(std::span<const double> a, std::span<const double> b, std::span<const double> w) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += w[i] * (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

void FitParams::validate() const {
  if (rounds < 1) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 1");
  if (interaction_rounds < 0) throw Error(ErrorCode::InvalidArgument, "interaction rounds must be >= 0");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "learning rate must lie in (0, 1]");
  if (interaction_score_bins < 1 || interaction_bins < 1)
    throw Error(ErrorCode::InvalidArgument, "interaction bin caps must be >= 1");
}

const ShapeFunction* GamModel::shape(Feature f) const {
  for (const auto& s : shapes)
    if (s.feature == f) return &s;
  return nullptr;
}

GamModel fit_gam(const Dataset& train, const GamConfig& config, const FitParams& params, FitTrace* trace) {
  params.validate();
  if (!config.is_canonical())
    throw Error(ErrorCode::NotCanonical, "config " + config.id() + " is not canonical: monotonic " +
                                             config.monotonic.to_string() + " overlaps excluded " +
                                             config.excluded.to_string());
  if (config.n_interactions < 0) throw Error(ErrorCode::InvalidArgument, "negative interaction count");

  std::vector<Feature> included;
  for (Feature f : kAllFeatures)
    if (!config.excluded.contains(f)) included.push_back(f);
  const std::size_t n_pairs = included.size() * (included.size() - 1) / 2;
  if (static_cast<std::size_t>(config.n_interactions) > n_pairs)
    throw Error(ErrorCode::InvalidArgument, std::to_string(included.size()) + " included features allow only " +
                                                std::to_string(n_pairs) + " pairs, " +
                                                std::to_string(config.n_interactions) + " interactions requested");

  const std::size_t n = train.size();
  const auto target = train.target();

  GamModel model;
  model.config = config;

  std::vector<BinnedColumn> columns;
  columns.reserve(included.size());
  for (Feature f : included) columns.push_back(bin_column(train.column(f), main_effect_bins(f, config.granularity)));

  model.intercept = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = target[i] - model.intercept;

  std::vector<std::vector<double>> shape_values(included.size());
  for (std::size_t k = 0; k < included.size(); ++k) shape_values[k].assign(columns[k].binning.bin_count(), 0.0);

  std::vector<double> sums, counts;
  if (trace) trace->main_sse.push_back(sse_of(residual));
  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t k = 0; k < included.size(); ++k) {
      boost_step(columns[k].index, columns[k].binning.bin_count(), params.learning_rate, shape_values[k], residual,
                 sums, counts);
    }
    if (trace) trace->main_sse.push_back(sse_of(residual));
  }

  // Rank candidate pairs by the SSE reduction of a per-cell residual-mean
  // fit on coarse grids.
  struct Candidate {
    std::size_t a, b;
    double score;
  };
  std::vector<Candidate> candidates;
  if (config.n_interactions > 0 || trace) {
    std::vector<BinnedColumn> coarse;
    for (Feature f : included)
      coarse.push_back(bin_column(train.column(f), interaction_axis_bins(f, params.interaction_score_bins)));
    std::vector<BinIndex> cell(n);
    for (std::size_t a = 0; a < included.size(); ++a) {
      for (std::size_t b = a + 1; b < included.size(); ++b) {
        const std::size_t nb = coarse[b].binning.bin_count();
        const std::size_t n_cells = coarse[a].binning.bin_count() * nb;
        for (std::size_t i = 0; i < n; ++i) cell[i] = static_cast<BinIndex>(coarse[a].index[i] * nb + coarse[b].index[i]);
        sums.assign(n_cells, 0.0);
        counts.assign(n_cells, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          sums[cell[i]] += residual[i];
          counts[cell[i]] += 1.0;
        }
        double score = 0.0;
        for (std::size_t c = 0; c < n_cells; ++c)
          if (counts[c] > 0.0) score += sums[c] * sums[c] / counts[c];
        candidates.push_back({a, b, score});
      }
    }
    auto name_key = [&](const Candidate& c) {
      auto x = feature_name(included[c.a]);
      auto y = feature_name(included[c.b]);
      return x < y ? std::make_pair(x, y) : std::make_pair(y, x);
    };
    std::stable_sort(candidates.begin(), candidates.end(), [&](const Candidate& l, const Candidate& r) {
      if (l.score != r.score) return l.score > r.score;
      return name_key(l) < name_key(r);
    });
    if (trace) {
      for (const auto& c : candidates) trace->pair_scores.push_back({{included[c.a], included[c.b]}, c.score});
    }
  }

  struct ActivePair {
    std::size_t a, b;
    BinnedColumn first, second;
    std::vector<BinIndex> cell;
    std::vector<double> values, weights;
  };
  std::vector<ActivePair> pairs;
  for (int p = 0; p < config.n_interactions; ++p) {
    const Candidate& c = candidates[static_cast<std::size_t>(p)];
    ActivePair ap;
    ap.a = c.a;
    ap.b = c.b;
    ap.first = bin_column(train.column(included[c.a]), interaction_axis_bins(included[c.a], params.interaction_bins));
    ap.second = bin_column(train.column(included[c.b]), interaction_axis_bins(included[c.b], params.interaction_bins));
    const std::size_t nb = ap.second.binning.bin_count();
    const std::size_t n_cells = ap.first.binning.bin_count() * nb;
    ap.cell.resize(n);
    ap.weights.assign(n_cells, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ap.cell[i] = static_cast<BinIndex>(ap.first.index[i] * nb + ap.second.index[i]);
      ap.weights[ap.cell[i]] += 1.0;
    }
    ap.values.assign(n_cells, 0.0);
    pairs.push_back(std::move(ap));
  }
  for (int round = 0; round < params.interaction_rounds && !pairs.empty(); ++round) {
    for (auto& ap : pairs) boost_step(ap.cell, ap.values.size(), params.learning_rate, ap.values, residual, sums, counts);
    if (trace) trace->interaction_sse.push_back(sse_of(residual));
  }

  for (std::size_t k = 0; k < included.size(); ++k) {
    ShapeFunction s;
    s.feature = included[k];
    s.binning = std::move(columns[k].binning);
    s.values = std::move(shape_values[k]);
    s.weights = std::move(columns[k].counts);
    if (config.monotonic.contains(s.feature)) {
      auto up = pava_project(s.values, s.weights, Direction::Increasing);
      auto down = pava_project(s.values, s.weights, Direction::Decreasing);
      // Closer projection wins; ties go to increasing.
      if (weighted_distance(down, s.values, s.weights) < weighted_distance(up, s.values, s.weights)) {
        s.values = std::move(down);
        s.monotone = Direction::Decreasing;
      } else {
        s.values = std::move(up);
        s.monotone = Direction::Increasing;
      }
    }
    const double m = weighted_mean(s.values, s.weights);
    for (double& v : s.values) v -= m;
    model.intercept += m;
    model.shapes.push_back(std::move(s));
  }

  for (auto& ap : pairs) {
    InteractionTerm t;
    t.first = included[ap.a];
    t.second = included[ap.b];
    t.first_binning = std::move(ap.first.binning);
    t.second_binning = std::move(ap.second.binning);
    const double m = weighted_mean(ap.values, ap.weights);
    for (double& v : ap.values) v -= m;
    model.intercept += m;
    t.values = std::move(ap.values);
    t.weights = std::move(ap.weights);
    model.interactions.push_back(std::move(t));
  }

  try {
    model.train_metrics = evaluate(model, train);
  } catch (const UndefinedMetricError&) {
    model.train_metrics.reset();
  }
  return model;
}

double predict(const GamModel& model, const FeatureRecord& row) {
  double y = model.intercept;
  for (const auto& s : model.shapes) {
    double x = row[index_of(s.feature)];
    if (std::isnan(x))
      throw Error(ErrorCode::InvalidArgument, "missing feature value: " + std::string(feature_name(s.feature)));
    y += s.values[s.binning.bin_of(x)];
  }
  for (const auto& t : model.interactions) {
    double xa = row[index_of(t.first)];
    double xb = row[index_of(t.second)];
    if (std::isnan(xa) || std::isnan(xb))
      throw Error(ErrorCode::InvalidArgument, "missing feature value for interaction");
    y += t.at(t.first_binning.bin_of(xa), t.second_binning.bin_of(xb));
  }
  return y;
}

std::vector<double> predict(const GamModel& model, const Dataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict(model, data.row(i));
  return out;
}

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw Error(ErrorCode::InvalidArgument, "prediction/target length mismatch");
  if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "metrics over an empty set");
  const double n = static_cast<double>(targets.size());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sse += (predictions[i] - targets[i]) * (predictions[i] - targets[i]);
    sst += (targets[i] - mean) * (targets[i] - mean);
  }
  Metrics m;
  m.n = targets.size();
  m.rmse = std::sqrt(sse / n);
  if (sst == 0.0) throw UndefinedMetricError(m.rmse);
  m.r_squared = 1.0 - sse / sst;
  return m;
}

Metrics evaluate(const GamModel& model, const Dataset& data) {
  auto p = predict(model, data);
  return compute_metrics(p, data.target());
}

}  // namespace pgam
