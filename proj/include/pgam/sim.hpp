#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pgam/analysis.hpp"
#include "pgam/bandit.hpp"
#include "pgam/config.hpp"

namespace pgam {

// Synthetic rater: rating = clamp(round(4 + scale * u + eps), 1, 7) with
// u = theta . x and eps ~ N(0, noise^2). In pairwise mode u is instead the
// sum of pair_theta over every pair of active context positions.
struct SimUser {
  std::vector<double> theta;
  double scale = 1.5;
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::vector<double> pair_theta;  // k*k row-major, pairwise mode only
  std::optional<LevelKey> target;  // deterministic-level users

  bool pairwise() const { return !pair_theta.empty(); }
};

struct UserKind {
  enum class Tag { Heterogeneous, Homogeneous, DeterministicLevel, UniformRandom, Pairwise };
  Tag tag = Tag::Heterogeneous;
  std::vector<double> shared_theta;  // homogeneous
  LevelKey level;                    // deterministic-level
  bool cycle = false;                // user i targets level i mod k
  double scale = 1.5;
  double noise = 0.5;

  static UserKind heterogeneous() { return {}; }
  static UserKind homogeneous(std::vector<double> theta);
  static UserKind deterministic(LevelKey level);
  static UserKind deterministic_cycle();
  static UserKind uniform_random(double noise = 3.0);
  static UserKind pairwise_kind() {
    UserKind k;
    k.tag = Tag::Pairwise;
    return k;
  }

  // "het", "hom", "det:<Hyperparameter>(<level>)" / "det:in3", "det:cycle",
  // "rand", "pair".
  static UserKind parse(const std::string& text);
  std::string to_string() const;
};

SimUser make_user(std::uint64_t seed, const UserKind& kind, std::size_t k = 14,
                  std::span<const std::size_t> blocks = {});

int rate(const SimUser& user, const ContextVector& context, std::mt19937_64& rng);
int rate(const SimUser& user, const GamConfig& config, std::mt19937_64& rng,
         const GridSpec& grid = GridSpec::table1());

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct ExperimentSettings {
  std::size_t n_users = 53;
  int rounds = 12;
  PolicySettings policy;
  UserKind kind;
  std::uint64_t seed = 0;
  GridSpec grid = GridSpec::table1();
  unsigned threads = 1;
};

struct ExperimentResult {
  std::vector<Transcript> transcripts;
  std::vector<SimUser> users;
  std::uint64_t seed = 0;
  Report report;
};

// Runs one treatment session per user: select_validated -> rate ->
// rating_to_reward -> update_posterior for `rounds` rounds, then
// final_selection. A null validator accepts every arm.
ExperimentResult run_experiment(const std::vector<Arm>& arms, const ExperimentSettings& settings,
                                const Validator& validator = {});

// transcripts/<session>.csv plus report files under `dir/report`.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir,
                      bool plot = false);

}  // namespace pgam
