#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgam/bandit.hpp"
#include "pgam/config.hpp"

namespace pgam {

// All levels of a grid in context order.
std::vector<LevelKey> all_levels(std::span<const std::size_t> blocks);
std::size_t context_position(const LevelKey& level, std::span<const std::size_t> blocks);

// |Σ|^{1/k} of a diagonal covariance, i.e. the geometric mean of the
// variances (log-space).
double normalized_determinant(std::span<const double> variances);
double normalized_determinant(const RewardPosterior& posterior);

// Bits.
double shannon_entropy(double p);

struct RewardSample {
  std::string user;
  LevelKey level;
  std::vector<int> rewards;
};

// 1 - H(fraction of +1 rewards).
double information_gain(std::span<const int> rewards);
double information_gain(const RewardSample& sample);

// E[IG] of n independent rewards that are +1 with probability p.
double expected_information_gain(std::size_t n, double p = 0.5);

// Rewards of every round whose shown config carried `level`.
std::vector<int> level_rewards(const Transcript& t, const LevelKey& level);
int cumulative_reward(const Transcript& t, const LevelKey& level);

// (round, |Σ|^{1/k}) with the prior at round 0, from the stored variances.
std::vector<std::pair<int, double>> convergence_trace(const Transcript& t);

// Same trace recomputed from (context, reward) pairs via update_posterior.
std::vector<std::pair<int, double>> replay_trace(const Transcript& t);

// Average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

// Linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct Report {
  struct Band {
    int round = 0;
    std::size_t users = 0;
    double q20 = 0, q50 = 0, q80 = 0;
  };
  struct Association {
    std::string user;
    std::string level;
    int cumulative_reward = 0;
    double posterior_mean = 0;
  };
  struct LevelSummary {
    std::string level;
    std::size_t users = 0;  // users who were shown the level
    double mean_information_gain = 0;
    double median_mean_reward = 0;
    std::vector<std::size_t> histogram;  // counts over kHistogramEdges
  };

  // Mean-reward histogram edges: 10 equal bins over [-1, 1].
  static std::vector<double> histogram_edges();

  std::size_t sessions = 0;
  std::size_t excluded_sessions = 0;
  std::vector<Band> convergence;
  std::vector<Association> association;
  double spearman_rho = 0;
  std::vector<LevelSummary> levels;
  double grand_mean_information_gain = 0;
  std::size_t information_gain_values = 0;
  std::size_t unshown_level_pairs = 0;
  std::vector<std::string> final_configs;  // one per finalized session
  std::size_t distinct_final_configs = 0;
  std::vector<std::string> warnings;
};

// Sessions are sorted by id before aggregation, so input order never
// matters. Zero-round sessions are skipped with a warning.
Report aggregate_report(std::vector<Transcript> sessions);

nlohmann::json to_json(const Report& report);

// convergence.csv, association.csv, information_gain.csv,
// mean_reward_histogram.csv, summary.csv; with `plot`, one SVG per figure.
void write_report(const Report& report, const std::filesystem::path& dir, bool plot = false);

}  // namespace pgam
