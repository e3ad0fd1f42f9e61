#include "pgam/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "pgam/error.hpp"
#include "pgam/io.hpp"

namespace pgam {
namespace {

std::vector<std::size_t> resolve_blocks(std::span<const std::size_t> blocks) {
  if (!blocks.empty()) return {blocks.begin(), blocks.end()};
  auto b = GridSpec::table1().block_sizes();
  return {b.begin(), b.end()};
}

constexpr const char* kShortPrefix[] = {"ex", "in", "gr", "mo"};

}  // namespace

UserKind UserKind::homogeneous(std::vector<double> theta) {
  UserKind k;
  k.tag = Tag::Homogeneous;
  k.shared_theta = std::move(theta);
  return k;
}

UserKind UserKind::deterministic(LevelKey level) {
  UserKind k;
  k.tag = Tag::DeterministicLevel;
  k.level = level;
  k.scale = 1.0;
  k.noise = 0.0;
  return k;
}

UserKind UserKind::deterministic_cycle() {
  UserKind k = deterministic({});
  k.cycle = true;
  return k;
}

UserKind UserKind::uniform_random(double noise) {
  UserKind k;
  k.tag = Tag::UniformRandom;
  k.scale = 0.0;
  k.noise = noise;
  return k;
}

UserKind UserKind::parse(const std::string& text) {
  if (text == "het") return heterogeneous();
  if (text == "hom") return homogeneous({});
  if (text == "rand") return uniform_random();
  if (text == "pair") return pairwise_kind();
  if (text == "det:cycle") return deterministic_cycle();
  if (text.starts_with("det:")) {
    const std::string body = text.substr(4);
    for (std::size_t h = 0; h < kHyperparameterCount; ++h) {
      const std::string name(hyperparameter_name(kAllHyperparameters[h]));
      int level = 0;
      if (body.starts_with(kShortPrefix[h]) && body.size() > 2) {
        level = std::atoi(body.c_str() + 2);
      } else if (body.starts_with(name + "(") && body.ends_with(")")) {
        level = std::atoi(body.c_str() + name.size() + 1);
      } else {
        continue;
      }
      if (level < 1) break;
      return deterministic({kAllHyperparameters[h], level});
    }
    throw Error(ErrorCode::InvalidArgument, "bad level in user kind '" + text + "'");
  }
  throw Error(ErrorCode::InvalidArgument, "user kind must be het, hom, rand, pair or det:<level>; got '" + text + "'");
}

std::string UserKind::to_string() const {
  switch (tag) {
    case Tag::Heterogeneous: return "het";
    case Tag::Homogeneous: return "hom";
    case Tag::UniformRandom: return "rand";
    case Tag::Pairwise: return "pair";
    case Tag::DeterministicLevel:
      if (cycle) return "det:cycle";
      return std::string("det:") + kShortPrefix[static_cast<std::size_t>(level.hyper)] + std::to_string(level.level);
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SimUser make_user(std::uint64_t seed, const UserKind& kind, std::size_t k, std::span<const std::size_t> blocks) {
  SimUser u;
  u.seed = seed;
  u.scale = kind.scale;
  u.noise = kind.noise;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (kind.tag) {
    case UserKind::Tag::Heterogeneous:
      u.theta.resize(k);
      for (auto& t : u.theta) t = normal(rng);
      break;
    case UserKind::Tag::Homogeneous:
      if (kind.shared_theta.size() != k)
        throw Error(ErrorCode::InvalidArgument, "homogeneous preference vector must have length " + std::to_string(k));
      u.theta = kind.shared_theta;
      break;
    case UserKind::Tag::DeterministicLevel: {
      const auto b = resolve_blocks(blocks);
      std::size_t offset = 0;
      const auto h = static_cast<std::size_t>(kind.level.hyper);
      if (kind.level.level < 1 || static_cast<std::size_t>(kind.level.level) > b[h])
        throw Error(ErrorCode::InvalidArgument, "level " + kind.level.label() + " outside grid");
      for (std::size_t i = 0; i < h; ++i) offset += b[i];
      u.theta.assign(k, 0.0);
      u.theta.at(offset + static_cast<std::size_t>(kind.level.level - 1)) = 3.0;
      u.target = kind.level;
      break;
    }
    case UserKind::Tag::UniformRandom:
      u.theta.assign(k, 0.0);
      break;
    case UserKind::Tag::Pairwise:
      u.theta.assign(k, 0.0);
      u.pair_theta.assign(k * k, 0.0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) u.pair_theta[i * k + j] = normal(rng);
      break;
  }
  return u;
}

int rate(const SimUser& user, const ContextVector& context, std::mt19937_64& rng) {
  const std::size_t k = context.size();
  if (user.theta.size() != k) throw Error(ErrorCode::InvalidArgument, "user and context dimensions differ");
  double u = 0.0;
  if (user.pairwise()) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        if (context.bits[i] && context.bits[j]) u += user.pair_theta[i * k + j];
  } else {
    u = score(user.theta, context);
  }
  double eps = 0.0;
  if (user.noise > 0.0) eps = std::normal_distribution<double>(0.0, user.noise)(rng);
  const long r = std::lround(4.0 + user.scale * u + eps);
  return static_cast<int>(std::clamp(r, 1L, 7L));
}

int rate(const SimUser& user, const GamConfig& config, std::mt19937_64& rng, const GridSpec& grid) {
  return rate(user, encode_context(config, grid), rng);
}

ExperimentResult run_experiment(const std::vector<Arm>& arms, const ExperimentSettings& settings,
                                const Validator& validator) {
  if (settings.n_users < 1) throw Error(ErrorCode::InvalidArgument, "need at least one user");
  if (settings.rounds < 1) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 1");
  const auto sizes = settings.grid.block_sizes();
  const std::vector<std::size_t> blocks(sizes.begin(), sizes.end());
  const std::size_t k = settings.grid.context_dimension();

  UserKind kind = settings.kind;
  if (kind.tag == UserKind::Tag::Homogeneous && kind.shared_theta.empty()) {
    std::mt19937_64 rng(derive_seed(settings.seed, ~0ull));
    std::normal_distribution<double> normal(0.0, 1.0);
    kind.shared_theta.resize(k);
    for (auto& t : kind.shared_theta) t = normal(rng);
  }

  const auto levels = all_levels(blocks);

  ExperimentResult result;
  result.seed = settings.seed;
  result.transcripts.resize(settings.n_users);
  result.users.resize(settings.n_users);

  auto run_user = [&](std::size_t i) {
    const std::uint64_t user_seed = derive_seed(settings.seed, i);
    UserKind user_kind = kind;
    if (user_kind.cycle) user_kind.level = levels[i % levels.size()];
    SimUser user = make_user(derive_seed(user_seed, 0), user_kind, k, blocks);
    PolicySettings policy = settings.policy;
    policy.seed = derive_seed(user_seed, 1);
    policy.max_rounds = settings.rounds;
    char id[32];
    std::snprintf(id, sizeof id, "sim-%04zu", i);
    Session session(id, arms, policy, SessionMode::Treatment, blocks);
    std::mt19937_64 rating_rng(derive_seed(user_seed, 2));
    for (int round = 1; round <= settings.rounds; ++round) {
      if (session.eligible_arms().empty()) break;
      auto rng = session.round_rng(round);
      Selection sel = select_validated(session, validator, rng);
      const Arm* arm = session.find_arm(sel.config_id);
      session.set_pending(std::move(sel));
      session.submit_rating(rate(user, arm->context, rating_rng));
    }
    if (!session.history().empty()) final_selection(session);
    result.transcripts[i] = session.transcript();
    result.users[i] = std::move(user);
  };

  const unsigned threads =
      std::max(1u, std::min<unsigned>(settings.threads ? settings.threads : std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(settings.n_users)));
  if (threads == 1) {
    for (std::size_t i = 0; i < settings.n_users; ++i) run_user(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i; (i = next++) < settings.n_users;) run_user(i);
          } catch (...) {
            errors[w] = std::current_exception();
            next = settings.n_users;
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  result.report = aggregate_report(result.transcripts);
  return result;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir, bool plot) {
  const auto tdir = dir / "transcripts";
  std::filesystem::create_directories(tdir);
  for (const auto& t : result.transcripts) atomic_write(tdir / (t.session_id + ".csv"), transcript_to_string(t));

  std::string users = "user,seed,scale,noise,target,theta\n";
  for (std::size_t i = 0; i < result.users.size(); ++i) {
    const auto& u = result.users[i];
    users += result.transcripts[i].session_id + ',' + std::to_string(u.seed) + ',' + format_double(u.scale) + ',' +
             format_double(u.noise) + ',' + (u.target ? u.target->label() : "") + ',' + join_doubles(u.theta) + '\n';
  }
  atomic_write(dir / "users.csv", users);
  write_report(result.report, dir / "report", plot);
  atomic_write(dir / "report" / "report.json", to_json(result.report).dump(1) + "\n");
}

}  // namespace pgam
