#include "pgam/bandit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pgam/error.hpp"
#include "pgam/io.hpp"

namespace pgam {

std::size_t ContextVector::active_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

ContextVector encode_context(const GamConfig& config, const GridSpec& grid) {
  const auto sizes = grid.block_sizes();
  ContextVector x;
  x.bits.assign(grid.context_dimension(), 0);
  std::size_t offset = 0;
  for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
    const int level = config.levels[h];
    if (level < 1 || static_cast<std::size_t>(level) > sizes[h])
      throw Error(ErrorCode::InvalidArgument, std::string(hyperparameter_name(kAllHyperparameters[h])) + " level " +
                                                  std::to_string(level) + " outside grid");
    x.bits[offset + static_cast<std::size_t>(level - 1)] = 1;
    offset += sizes[h];
  }
  return x;
}

double score(std::span<const double> weights, const ContextVector& context) {
  double s = 0.0;
  for (std::size_t j = 0; j < context.bits.size(); ++j)
    if (context.bits[j]) s += weights[j];
  return s;
}

RewardPosterior init_posterior(std::size_t k, double prior_mean, double prior_var) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "posterior dimension must be >= 1");
  if (!(prior_var > 0.0) || !std::isfinite(prior_var))
    throw Error(ErrorCode::InvalidArgument, "prior variance must be positive");
  return {std::vector<double>(k, prior_mean), std::vector<double>(k, prior_var), std::vector<int>(k, 0)};
}

int rating_to_reward(int rating, int cutoff) {
  if (rating < 1 || rating > 7)
    throw Error(ErrorCode::InvalidArgument, "rating " + std::to_string(rating) + " outside 1..7");
  if (cutoff < 2 || cutoff > 7) throw Error(ErrorCode::InvalidArgument, "cutoff must lie in 2..7");
  return rating >= cutoff ? +1 : -1;
}

RewardPosterior update_posterior(const RewardPosterior& posterior, const ContextVector& context, int reward,
                                 double noise_var) {
  if (context.size() != posterior.dimension())
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch: context " + std::to_string(context.size()) +
                                                ", posterior " + std::to_string(posterior.dimension()));
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (reward != 1 && reward != -1) throw Error(ErrorCode::InvalidArgument, "reward must be +1 or -1");

  RewardPosterior out = posterior;
  for (std::size_t j = 0; j < context.size(); ++j) {
    if (!context.bits[j]) continue;
    const double prior_precision = 1.0 / posterior.variance[j];
    const double precision = prior_precision + 1.0 / noise_var;
    out.variance[j] = 1.0 / precision;
    out.mean[j] = out.variance[j] * (posterior.mean[j] * prior_precision + reward / noise_var);
    ++out.counts[j];
  }
  return out;
}

std::vector<Arm> make_arms(const std::vector<std::string>& config_ids, const GridSpec& grid) {
  std::vector<Arm> arms;
  arms.reserve(config_ids.size());
  for (const auto& id : config_ids) arms.push_back({id, encode_context(grid.make(parse_config_id(id)), grid)});
  std::sort(arms.begin(), arms.end(), [](const Arm& a, const Arm& b) { return a.config_id < b.config_id; });
  return arms;
}

void PolicySettings::validate() const {
  if (cutoff < 2 || cutoff > 7) throw Error(ErrorCode::InvalidArgument, "cutoff must lie in 2..7");
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max rounds must be >= 1");
  if (!(prior_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "prior variance must be positive");
}

const char* to_string(SessionMode m) { return m == SessionMode::Treatment ? "treatment" : "control"; }

SessionMode parse_session_mode(std::string_view s) {
  if (s == "treatment") return SessionMode::Treatment;
  if (s == "control") return SessionMode::Control;
  throw Error(ErrorCode::InvalidArgument, "mode must be 'treatment' or 'control'");
}

std::size_t Transcript::dimension() const { return std::accumulate(blocks.begin(), blocks.end(), std::size_t{0}); }

// ---------------------------------------------------------------- transcript

namespace {

constexpr const char* kTranscriptMagic = "pgam-transcript/1";
constexpr const char* kTranscriptHeader =
    "round,config_id,context,sampled_weights,rating,reward,mean,variance,timestamp";

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view s, const char* what) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::ParseError, std::string("transcript: bad ") + what + " '" + std::string(s) + "'");
  return v;
}

double parse_real(std::string_view s, const char* what) {
  auto v = split_doubles(s, '\x01');
  if (v.size() != 1) throw Error(ErrorCode::ParseError, std::string("transcript: bad ") + what);
  return v[0];
}

std::string join_bits(const ContextVector& x) {
  std::string out;
  for (std::size_t i = 0; i < x.bits.size(); ++i) {
    if (i) out += ';';
    out += x.bits[i] ? '1' : '0';
  }
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void write_transcript(std::ostream& out, const Transcript& t) {
  const auto& s = t.settings;
  out << "# " << kTranscriptMagic << "\n";
  out << "# session_id=" << t.session_id << "\n";
  out << "# mode=" << to_string(t.mode) << "\n";
  out << "# status=" << (t.status == SessionStatus::Finalized ? "finalized" : "active") << "\n";
  out << "# final_config=" << t.final_config.value_or("") << "\n";
  out << "# blocks=" << join_list(t.blocks) << "\n";
  out << "# cutoff=" << s.cutoff << "\n";
  out << "# noise_var=" << format_double(s.noise_var) << "\n";
  out << "# prior_mean=" << format_double(s.prior_mean) << "\n";
  out << "# prior_var=" << format_double(s.prior_var) << "\n";
  out << "# max_rounds=" << s.max_rounds << "\n";
  out << "# no_repeat=" << (s.no_repeat ? 1 : 0) << "\n";
  out << "# seed=" << s.seed << "\n";
  out << "# arms=";
  for (std::size_t i = 0; i < t.arms.size(); ++i) out << (i ? ";" : "") << t.arms[i];
  out << "\n";
  if (t.pending) {
    out << "# pending_config=" << t.pending->config_id << "\n";
    out << "# pending_weights=" << join_doubles(t.pending->sampled_weights) << "\n";
  }
  out << kTranscriptHeader << "\n";
  for (const auto& r : t.records) {
    out << r.round << ',' << r.config_id << ',' << join_bits(r.context) << ',' << join_doubles(r.sampled_weights)
        << ',' << r.rating << ',' << r.reward << ',' << join_doubles(r.mean) << ',' << join_doubles(r.variance) << ','
        << r.timestamp << "\n";
  }
}

std::string transcript_to_string(const Transcript& t) {
  std::ostringstream out;
  write_transcript(out, t);
  return out.str();
}

Transcript read_transcript(std::istream& in) {
  Transcript t;
  std::string line;
  bool magic = false, header = false;
  std::optional<std::string> pending_config;
  std::vector<double> pending_weights;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      std::string_view body(line);
      body.remove_prefix(2);
      if (body == kTranscriptMagic) {
        magic = true;
        continue;
      }
      auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      auto key = body.substr(0, eq);
      auto value = body.substr(eq + 1);
      auto& s = t.settings;
      if (key == "session_id") t.session_id = value;
      else if (key == "mode") t.mode = parse_session_mode(value);
      else if (key == "status") t.status = value == "finalized" ? SessionStatus::Finalized : SessionStatus::Active;
      else if (key == "final_config") { if (!value.empty()) t.final_config = std::string(value); }
      else if (key == "blocks") {
        t.blocks.clear();
        for (auto b : split(value, ',')) t.blocks.push_back(parse_int<std::size_t>(b, "blocks"));
      }
      else if (key == "cutoff") s.cutoff = parse_int<int>(value, "cutoff");
      else if (key == "noise_var") s.noise_var = parse_real(value, "noise_var");
      else if (key == "prior_mean") s.prior_mean = parse_real(value, "prior_mean");
      else if (key == "prior_var") s.prior_var = parse_real(value, "prior_var");
      else if (key == "max_rounds") s.max_rounds = parse_int<int>(value, "max_rounds");
      else if (key == "no_repeat") s.no_repeat = parse_int<int>(value, "no_repeat") != 0;
      else if (key == "seed") s.seed = parse_int<std::uint64_t>(value, "seed");
      else if (key == "arms") {
        t.arms.clear();
        if (!value.empty())
          for (auto a : split(value, ';')) t.arms.emplace_back(a);
      }
      else if (key == "pending_config") pending_config = std::string(value);
      else if (key == "pending_weights") pending_weights = split_doubles(value);
      continue;
    }
    if (!header) {
      if (line != kTranscriptHeader) throw Error(ErrorCode::ParseError, "transcript: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 9)
      throw Error(ErrorCode::ParseError, "transcript: expected 9 fields, got " + std::to_string(f.size()));
    InteractionRecord r;
    r.round = parse_int<int>(f[0], "round");
    r.config_id = f[1];
    for (auto b : split(f[2], ';')) {
      if (b != "0" && b != "1") throw Error(ErrorCode::ParseError, "transcript: bad context bit");
      r.context.bits.push_back(b == "1" ? 1 : 0);
    }
    r.sampled_weights = split_doubles(f[3]);
    r.rating = parse_int<int>(f[4], "rating");
    r.reward = parse_int<int>(f[5], "reward");
    r.mean = split_doubles(f[6]);
    r.variance = split_doubles(f[7]);
    r.timestamp = parse_int<std::int64_t>(f[8], "timestamp");
    t.records.push_back(std::move(r));
  }
  if (!magic || !header) throw Error(ErrorCode::ParseError, "transcript: missing magic line or header");
  if (pending_config) t.pending = Selection{*pending_config, pending_weights};

  const std::size_t k = t.dimension();
  int prev_round = 0;
  for (const auto& r : t.records) {
    if (r.round <= prev_round) throw Error(ErrorCode::ParseError, "transcript: rounds not strictly increasing");
    prev_round = r.round;
    if (r.context.size() != k || r.mean.size() != k || r.variance.size() != k)
      throw Error(ErrorCode::ParseError, "transcript: vector length does not match dimension " + std::to_string(k));
    if (r.reward != rating_to_reward(r.rating, t.settings.cutoff))
      throw Error(ErrorCode::ParseError, "transcript: reward inconsistent with rating at round " +
                                             std::to_string(r.round));
  }
  return t;
}

Transcript parse_transcript(const std::string& text) {
  std::istringstream in(text);
  return read_transcript(in);
}

// ------------------------------------------------------------------- session

Session::Session(std::string id, std::vector<Arm> arms, PolicySettings settings, SessionMode mode,
                 std::vector<std::size_t> blocks) {
  settings.validate();
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "session needs at least one arm");
  std::sort(arms.begin(), arms.end(), [](const Arm& a, const Arm& b) { return a.config_id < b.config_id; });
  const std::size_t k = std::accumulate(blocks.begin(), blocks.end(), std::size_t{0});
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (arms[i].context.size() != k)
      throw Error(ErrorCode::InvalidArgument, "arm " + arms[i].config_id + " context has wrong dimension");
    if (i && arms[i].config_id == arms[i - 1].config_id)
      throw Error(ErrorCode::InvalidArgument, "duplicate arm " + arms[i].config_id);
  }
  state_.session_id = std::move(id);
  state_.mode = mode;
  state_.settings = settings;
  state_.blocks = std::move(blocks);
  for (const auto& a : arms) state_.arms.push_back(a.config_id);
  arms_ = std::move(arms);
  posterior_ = init_posterior(k, settings.prior_mean, settings.prior_var);
}

Session Session::restore(const Transcript& t, const GridSpec& grid) {
  Session s(t.session_id, make_arms(t.arms, grid), t.settings, t.mode, t.blocks);
  for (const auto& r : t.records) {
    s.set_pending({r.config_id, r.sampled_weights});
    const auto& replayed = s.submit_rating(r.rating, r.timestamp);
    if (!(replayed == r))
      throw Error(ErrorCode::Corrupt, "session " + t.session_id + ": round " + std::to_string(r.round) +
                                          " does not match its replay");
  }
  if (t.pending) s.set_pending(*t.pending);
  if (t.status == SessionStatus::Finalized) {
    if (!t.final_config) throw Error(ErrorCode::Corrupt, "finalized session without final config");
    s.mark_finalized(*t.final_config);
  }
  return s;
}

const Arm* Session::find_arm(std::string_view config_id) const {
  auto it = std::lower_bound(arms_.begin(), arms_.end(), config_id,
                             [](const Arm& a, std::string_view id) { return a.config_id < id; });
  if (it == arms_.end() || it->config_id != config_id) return nullptr;
  return &*it;
}

std::vector<const Arm*> Session::eligible_arms() const {
  std::vector<const Arm*> out;
  for (const auto& a : arms_) {
    if (state_.settings.no_repeat &&
        std::any_of(state_.records.begin(), state_.records.end(),
                    [&](const InteractionRecord& r) { return r.config_id == a.config_id; }))
      continue;
    out.push_back(&a);
  }
  return out;
}

std::mt19937_64 Session::round_rng(int round, std::uint64_t stream) const {
  const std::uint64_t seed = state_.settings.seed;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

void Session::check_active() const {
  if (finalized()) throw Error(ErrorCode::Finalized, "session " + id() + " is finalized");
}

void Session::set_pending(Selection selection) {
  check_active();
  if (!rounds_remaining())
    throw Error(ErrorCode::Conflict, "finalize required: session " + id() + " used all " +
                                         std::to_string(state_.settings.max_rounds) + " rounds");
  const Arm* arm = find_arm(selection.config_id);
  if (!arm) throw Error(ErrorCode::NotFound, "config " + selection.config_id + " is not an arm of " + id());
  if (!selection.sampled_weights.empty() && selection.sampled_weights.size() != posterior_.dimension())
    throw Error(ErrorCode::InvalidArgument, "sampled weights have wrong dimension");
  if (state_.settings.no_repeat) {
    for (const auto& r : state_.records)
      if (r.config_id == selection.config_id)
        throw Error(ErrorCode::Conflict, "config " + selection.config_id + " was already shown");
  }
  state_.pending = std::move(selection);
}

const InteractionRecord& Session::submit_rating(int rating, std::int64_t timestamp) {
  check_active();
  const int reward = rating_to_reward(rating, state_.settings.cutoff);
  if (!state_.pending) throw Error(ErrorCode::Conflict, "no pending model for session " + id());

  const Arm* arm = find_arm(state_.pending->config_id);
  if (state_.mode == SessionMode::Treatment)
    posterior_ = update_posterior(posterior_, arm->context, reward, state_.settings.noise_var);

  InteractionRecord r;
  r.round = rounds_done() + 1;
  r.config_id = arm->config_id;
  r.context = arm->context;
  r.sampled_weights = std::move(state_.pending->sampled_weights);
  r.rating = rating;
  r.reward = reward;
  r.mean = posterior_.mean;
  r.variance = posterior_.variance;
  r.timestamp = timestamp;
  state_.pending.reset();
  state_.records.push_back(std::move(r));
  return state_.records.back();
}

void Session::mark_finalized(std::string config_id) {
  check_active();
  if (state_.records.empty()) throw Error(ErrorCode::InvalidArgument, "cannot finalize session " + id() + " with no ratings");
  if (!find_arm(config_id)) throw Error(ErrorCode::NotFound, "final config " + config_id + " is not an arm");
  state_.status = SessionStatus::Finalized;
  state_.final_config = std::move(config_id);
  state_.pending.reset();
}

// ------------------------------------------------------------------ policies

Selection thompson_select(const RewardPosterior& posterior, std::span<const Arm* const> arms,
                          std::mt19937_64& rng) {
  if (arms.empty()) throw Error(ErrorCode::Exhausted, "exhausted: no eligible arms");
  Selection sel;
  sel.sampled_weights.resize(posterior.dimension());
  for (std::size_t j = 0; j < posterior.dimension(); ++j) {
    std::normal_distribution<double> normal(posterior.mean[j], std::sqrt(posterior.variance[j]));
    sel.sampled_weights[j] = normal(rng);
  }
  // Arms are sorted, so the first strict maximum is the smallest id.
  const Arm* best = nullptr;
  double best_score = 0.0;
  for (const Arm* a : arms) {
    double s = score(sel.sampled_weights, a->context);
    if (!best || s > best_score) {
      best = a;
      best_score = s;
    }
  }
  sel.config_id = best->config_id;
  return sel;
}

Selection thompson_select(const Session& session, std::mt19937_64& rng, std::span<const std::string> rejected) {
  if (session.finalized()) throw Error(ErrorCode::Finalized, "session " + session.id() + " is finalized");
  std::vector<const Arm*> eligible;
  for (const Arm* a : session.eligible_arms()) {
    if (std::find(rejected.begin(), rejected.end(), a->config_id) == rejected.end()) eligible.push_back(a);
  }
  if (eligible.empty()) throw Error(ErrorCode::Exhausted, "exhausted: no eligible arms left in " + session.id());
  return thompson_select(session.posterior(), eligible, rng);
}

const Arm& posterior_argmax(const RewardPosterior& posterior, std::span<const Arm> arms) {
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "argmax over no arms");
  const Arm* best = nullptr;
  double best_score = 0.0;
  for (const auto& a : arms) {
    double s = score(posterior.mean, a.context);
    if (!best || s > best_score) {
      best = &a;
      best_score = s;
    }
  }
  return *best;
}

bool validate_model(std::string_view config_id, const ModelZoo& zoo, const ThresholdRule& rule) {
  const ZooEntry& e = zoo.at(config_id);
  return rule.admits(e.test_metrics().r_squared, zoo.best_r_squared());
}

Selection select_validated(const Session& session, const Validator& validator, std::mt19937_64& rng) {
  std::vector<std::string> rejected;
  while (true) {
    Selection sel;
    try {
      sel = thompson_select(session, rng, rejected);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Exhausted && !rejected.empty())
        throw Error(ErrorCode::NoValidModel, "no valid model: all " + std::to_string(rejected.size()) +
                                                 " eligible arms failed validation");
      throw;
    }
    if (!validator || validator(sel.config_id)) return sel;
    rejected.push_back(sel.config_id);
  }
}

Selection select_validated(const Session& session, const ModelZoo& zoo, const ThresholdRule& rule,
                           std::mt19937_64& rng) {
  const double best = zoo.best_r_squared();
  return select_validated(
      session, [&](const std::string& id) { return rule.admits(zoo.at(id).test_metrics().r_squared, best); }, rng);
}

std::string final_selection(Session& session) {
  if (session.finalized()) return *session.final_config();
  if (session.history().empty())
    throw Error(ErrorCode::InvalidArgument, "final selection needs at least one rating");
  const std::string id = posterior_argmax(session.posterior(), session.arms()).config_id;
  session.mark_finalized(id);
  return id;
}

std::string random_assign(std::span<const std::string> arms, std::mt19937_64& rng) {
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "random_assign: no arms");
  std::uniform_int_distribution<std::size_t> pick(0, arms.size() - 1);
  return arms[pick(rng)];
}

}  // namespace pgam
