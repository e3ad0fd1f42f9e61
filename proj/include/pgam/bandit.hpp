#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pgam/config.hpp"
#include "pgam/zoo.hpp"

namespace pgam {

// One-hot encoding of a config's grid levels: one block per hyperparameter.
struct ContextVector {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t active_count() const;
  friend bool operator==(const ContextVector&, const ContextVector&) = default;
};

ContextVector encode_context(const GamConfig& config, const GridSpec& grid = GridSpec::table1());

double score(std::span<const double> weights, const ContextVector& context);

// Diagonal Gaussian over reward-model weights.
struct RewardPosterior {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<int> counts;

  std::size_t dimension() const { return mean.size(); }
  friend bool operator==(const RewardPosterior&, const RewardPosterior&) = default;
};

RewardPosterior init_posterior(std::size_t k, double prior_mean = 0.0, double prior_var = 0.5);

// +1 iff rating >= cutoff.
int rating_to_reward(int rating, int cutoff = 5);

// Independent conjugate Normal update of every active weight; inactive
// weights are returned untouched.
RewardPosterior update_posterior(const RewardPosterior& posterior, const ContextVector& context,
                                 int reward, double noise_var = 1.0);

struct Arm {
  std::string config_id;
  ContextVector context;
};

// Arms sorted by config id.
std::vector<Arm> make_arms(const std::vector<std::string>& config_ids,
                           const GridSpec& grid = GridSpec::table1());

struct PolicySettings {
  int cutoff = 5;
  double noise_var = 1.0;
  int max_rounds = 12;
  bool no_repeat = true;
  std::uint64_t seed = 0;
  double prior_mean = 0.0;
  double prior_var = 0.5;

  void validate() const;
  friend bool operator==(const PolicySettings&, const PolicySettings&) = default;
};

enum class SessionMode { Treatment, Control };
enum class SessionStatus { Active, Finalized };

const char* to_string(SessionMode m);
SessionMode parse_session_mode(std::string_view s);

struct Selection {
  std::string config_id;
  // Thompson draw that produced the choice; empty for random assignment.
  std::vector<double> sampled_weights;

  friend bool operator==(const Selection&, const Selection&) = default;
};

struct InteractionRecord {
  int round = 0;
  std::string config_id;
  ContextVector context;
  std::vector<double> sampled_weights;
  int rating = 0;
  int reward = 0;
  // Posterior after this round's update.
  std::vector<double> mean;
  std::vector<double> variance;
  std::int64_t timestamp = 0;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Serializable session state; also the analysis input.
struct Transcript {
  std::string session_id;
  SessionMode mode = SessionMode::Treatment;
  SessionStatus status = SessionStatus::Active;
  PolicySettings settings;
  std::vector<std::size_t> blocks{4, 3, 3, 4};
  std::vector<std::string> arms;
  std::optional<std::string> final_config;
  std::optional<Selection> pending;
  std::vector<InteractionRecord> records;

  std::size_t dimension() const;
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

// Comma-separated transcript: '#'-prefixed key=value metadata lines, a
// header row, then one row per round. Vector fields are ';'-joined and
// reals are written with 17 significant digits.
void write_transcript(std::ostream& out, const Transcript& t);
std::string transcript_to_string(const Transcript& t);
Transcript read_transcript(std::istream& in);
Transcript parse_transcript(const std::string& text);

class Session {
 public:
  Session(std::string id, std::vector<Arm> arms, PolicySettings settings,
          SessionMode mode = SessionMode::Treatment,
          std::vector<std::size_t> blocks = {4, 3, 3, 4});

  // Rebuilds a session by replaying the transcript's ratings; throws Corrupt
  // if the stored posteriors disagree with the replay.
  static Session restore(const Transcript& t, const GridSpec& grid = GridSpec::table1());

  const std::string& id() const { return state_.session_id; }
  SessionMode mode() const { return state_.mode; }
  const PolicySettings& settings() const { return state_.settings; }
  const std::vector<Arm>& arms() const { return arms_; }
  const Arm* find_arm(std::string_view config_id) const;
  const RewardPosterior& posterior() const { return posterior_; }
  const std::vector<InteractionRecord>& history() const { return state_.records; }
  bool finalized() const { return state_.status == SessionStatus::Finalized; }
  const std::optional<std::string>& final_config() const { return state_.final_config; }
  int rounds_done() const { return static_cast<int>(state_.records.size()); }
  bool rounds_remaining() const { return rounds_done() < state_.settings.max_rounds; }

  // Arms still selectable this round (unshown ones when no-repeat is on).
  std::vector<const Arm*> eligible_arms() const;

  // Independent stream per (round, purpose) derived from the session seed.
  std::mt19937_64 round_rng(int round, std::uint64_t stream = 0) const;

  const std::optional<Selection>& pending() const { return state_.pending; }
  void set_pending(Selection selection);

  // Converts the rating, updates the posterior (treatment only) and appends
  // the record. Requires a pending selection.
  const InteractionRecord& submit_rating(int rating, std::int64_t timestamp = 0);

  void mark_finalized(std::string config_id);

  const Transcript& transcript() const { return state_; }

 private:
  void check_active() const;

  std::vector<Arm> arms_;
  RewardPosterior posterior_;
  Transcript state_;
};

// Samples w ~ N(mean, diag(variance)) and returns the arm with the highest
// w . x (ties to the smallest config id). `arms` must be sorted by id.
Selection thompson_select(const RewardPosterior& posterior, std::span<const Arm* const> arms,
                          std::mt19937_64& rng);

// Same over the session's eligible arms minus `rejected`. Throws Exhausted
// when nothing is eligible.
Selection thompson_select(const Session& session, std::mt19937_64& rng,
                          std::span<const std::string> rejected = {});

// Arm with the highest mean . x, ties to the smallest id.
const Arm& posterior_argmax(const RewardPosterior& posterior, std::span<const Arm> arms);

bool validate_model(std::string_view config_id, const ModelZoo& zoo, const ThresholdRule& rule);

using Validator = std::function<bool(const std::string&)>;

// Thompson selection with backtracking: an arm failing validation is
// dropped for this round and the posterior is re-sampled.
Selection select_validated(const Session& session, const Validator& validator, std::mt19937_64& rng);
Selection select_validated(const Session& session, const ModelZoo& zoo, const ThresholdRule& rule,
                           std::mt19937_64& rng);

// Posterior-mean argmax over all arms; marks the session finalized.
std::string final_selection(Session& session);

std::string random_assign(std::span<const std::string> arms, std::mt19937_64& rng);

}  // namespace pgam
