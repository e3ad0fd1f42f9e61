#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "pgam/bandit.hpp"
#include "pgam/error.hpp"

using namespace pgam;

namespace {

std::vector<std::string> canonical_ids() {
  std::vector<std::string> ids;
  for (const auto& c : dedupe(enumerate_grid(GridSpec::table1()))) ids.push_back(c.id());
  return ids;
}

std::vector<std::size_t> ones_at(const ContextVector& x) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.bits[i]) out.push_back(i);
  return out;
}

ContextVector unit(std::size_t k, std::size_t i) {
  ContextVector x;
  x.bits.assign(k, 0);
  x.bits[i] = 1;
  return x;
}

}  // namespace

TEST_CASE("context encoding") {
  const auto grid = GridSpec::table1();
  CHECK(ones_at(encode_context(grid.make({1, 1, 1, 1}))) == std::vector<std::size_t>{0, 4, 7, 10});
  CHECK(ones_at(encode_context(grid.make({4, 3, 3, 4}))) == std::vector<std::size_t>{3, 6, 9, 13});
  for (const auto& c : enumerate_grid(grid)) CHECK(encode_context(c).active_count() == 4);
}

TEST_CASE("prior and reward mapping") {
  const auto p = init_posterior(14);
  CHECK(p.mean == std::vector<double>(14, 0.0));
  CHECK(p.variance == std::vector<double>(14, 0.5));
  const auto q = init_posterior(1, 2.0, 1.0);
  CHECK(q.mean == std::vector<double>{2.0});
  CHECK(q.variance == std::vector<double>{1.0});
  CHECK_THROWS_AS(init_posterior(14, 0.0, 0.0), Error);

  CHECK(rating_to_reward(7, 5) == 1);
  for (int cutoff = 2; cutoff <= 7; ++cutoff) CHECK(rating_to_reward(1, cutoff) == -1);
  CHECK(rating_to_reward(4, 5) == -1);
  CHECK(rating_to_reward(5, 5) == 1);
  CHECK_THROWS_AS(rating_to_reward(9), Error);
  CHECK_THROWS_AS(rating_to_reward(0), Error);
}

TEST_CASE("conjugate update hand derivations") {
  const auto prior = init_posterior(2);
  const auto x = unit(2, 0);
  const auto one = update_posterior(prior, x, +1, 1.0);
  CHECK(std::abs(one.mean[0] - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(one.variance[0] - 1.0 / 3.0) < 1e-12);
  // Inactive weight untouched exactly.
  CHECK(one.mean[1] == prior.mean[1]);
  CHECK(one.variance[1] == prior.variance[1]);
  CHECK(one.counts == std::vector<int>{1, 0});

  const auto two = update_posterior(one, x, -1, 1.0);
  CHECK(std::abs(two.mean[0] - 0.0) < 1e-12);
  CHECK(std::abs(two.variance[0] - 0.25) < 1e-12);

  CHECK_THROWS_AS(update_posterior(prior, unit(3, 0), 1), Error);
  CHECK_THROWS_AS(update_posterior(prior, x, 1, 0.0), Error);
  CHECK_THROWS_AS(update_posterior(prior, x, 0), Error);
}

TEST_CASE("variance never increases under updates") {
  std::mt19937_64 rng(3);
  auto post = init_posterior(14);
  const auto grid = GridSpec::table1();
  const auto configs = enumerate_grid(grid);
  for (int i = 0; i < 200; ++i) {
    const auto& c = configs[rng() % configs.size()];
    const auto next = update_posterior(post, encode_context(c, grid), rng() % 2 ? 1 : -1);
    for (std::size_t j = 0; j < 14; ++j) CHECK(next.variance[j] <= post.variance[j]);
    post = next;
  }
}

TEST_CASE("thompson selection") {
  const auto grid = GridSpec::table1();
  const auto arms = make_arms(canonical_ids(), grid);

  SUBCASE("degenerate posterior always picks the favoured arm") {
    auto post = init_posterior(14);
    const Arm* target = &arms[37];
    for (std::size_t j = 0; j < 14; ++j) {
      post.mean[j] = target->context.bits[j] ? 1.0 : -1.0;
      post.variance[j] = 1e-12;
    }
    std::vector<const Arm*> all;
    for (const auto& a : arms) all.push_back(&a);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) CHECK(thompson_select(post, all, rng).config_id == target->config_id);
  }

  SUBCASE("two symmetric arms split evenly") {
    auto two = make_arms({"ex1.in1.gr1.mo1", "ex2.in1.gr1.mo1"}, grid);
    std::vector<const Arm*> ptrs{&two[0], &two[1]};
    const auto post = init_posterior(14);
    std::mt19937_64 rng(2024);
    int first = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) first += thompson_select(post, ptrs, rng).config_id == two[0].config_id;
    CHECK(std::abs(first / double(draws) - 0.5) <= 0.02);
  }

  SUBCASE("no-repeat exhausts") {
    auto small = make_arms({"ex1.in1.gr1.mo1", "ex2.in1.gr1.mo1"}, grid);
    PolicySettings s;
    Session session("t", small, s);
    for (int round = 1; round <= 2; ++round) {
      auto rng = session.round_rng(round);
      session.set_pending(thompson_select(session, rng));
      session.submit_rating(6);
    }
    auto rng = session.round_rng(3);
    try {
      thompson_select(session, rng);
      FAIL("expected exhaustion");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Exhausted);
    }
  }
}

TEST_CASE("validated selection backtracks past failing arms") {
  const auto grid = GridSpec::table1();
  auto arms = make_arms({"ex1.in1.gr1.mo1", "ex2.in2.gr2.mo2"}, grid);
  PolicySettings s;
  s.no_repeat = false;
  Session session("v", arms, s);
  auto probe = session.round_rng(1);
  const std::string top = thompson_select(session, probe).config_id;
  const std::string other = top == arms[0].config_id ? arms[1].config_id : arms[0].config_id;
  const Validator reject_top = [&](const std::string& id) { return id != top; };
  auto again = session.round_rng(1);
  CHECK(select_validated(session, reject_top, again).config_id == other);
  std::mt19937_64 rng(5);
  const Validator accept_all = [](const std::string&) { return true; };
  auto r1 = session.round_rng(1), r2 = session.round_rng(1);
  CHECK(select_validated(session, accept_all, r1) == thompson_select(session, r2));
  const Validator reject_all = [](const std::string&) { return false; };
  try {
    select_validated(session, reject_all, rng);
    FAIL("expected no valid model");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoValidModel);
  }
}

TEST_CASE("threshold rules") {
  CHECK(ThresholdRule::absolute(0.83).admits(0.90, 0.95));
  CHECK_FALSE(ThresholdRule::absolute(0.83).admits(0.80, 0.95));
  const auto any = ThresholdRule::parse("-inf");
  CHECK(any.admits(-1e300, 0.9));
  const auto eps = ThresholdRule::parse("eps:0.05");
  CHECK(eps.admits(0.61, 0.65));
  CHECK_FALSE(eps.admits(0.59, 0.65));
  CHECK(ThresholdRule::parse(eps.to_string()).value == eps.value);
  CHECK_THROWS_AS(ThresholdRule::parse("abc"), Error);
}

TEST_CASE("final selection") {
  const auto grid = GridSpec::table1();
  const auto ids = canonical_ids();
  const auto arms = make_arms(ids, grid);

  SUBCASE("all-zero posterior picks the smallest id") {
    CHECK(posterior_argmax(init_posterior(14), arms).config_id == "ex1.in1.gr1.mo1");
  }
  SUBCASE("dominant arm") {
    auto post = init_posterior(14);
    for (std::size_t j = 0; j < 14; ++j) post.mean[j] = arms[50].context.bits[j] ? 2.0 : -2.0;
    CHECK(posterior_argmax(post, arms).config_id == arms[50].config_id);
  }
  SUBCASE("random posteriors match exhaustive scoring") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 1);
    for (int t = 0; t < 200; ++t) {
      auto post = init_posterior(14);
      for (auto& m : post.mean) m = n(rng);
      std::string best;
      double best_score = -1e300;
      for (const auto& id : ids) {
        const auto x = encode_context(grid.from_id(id), grid);
        double s = 0;
        for (std::size_t j = 0; j < 14; ++j) s += x.bits[j] * post.mean[j];
        if (s > best_score) best_score = s, best = id;
      }
      CHECK(posterior_argmax(post, arms).config_id == best);
    }
  }
  SUBCASE("session finalization requires a rating and is idempotent") {
    Session session("f", arms, PolicySettings{});
    CHECK_THROWS_AS(final_selection(session), Error);
    auto rng = session.round_rng(1);
    session.set_pending(thompson_select(session, rng));
    session.submit_rating(7);
    const auto first = final_selection(session);
    CHECK(session.finalized());
    CHECK(final_selection(session) == first);
    CHECK_THROWS_AS(session.submit_rating(5), Error);
  }
}

TEST_CASE("random assignment") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> one{"ex1.in1.gr1.mo1"};
  CHECK(random_assign(one, rng) == one[0]);

  std::vector<std::string> arms;
  for (int i = 0; i < 92; ++i) arms.push_back("arm" + std::to_string(i));
  std::map<std::string, int> counts;
  std::mt19937_64 gen(77);
  const int draws = 92000;
  for (int i = 0; i < draws; ++i) counts[random_assign(arms, gen)]++;
  const double p = 1.0 / 92, sigma = std::sqrt(draws * p * (1 - p));
  CHECK(counts.size() == 92);
  for (const auto& [id, c] : counts) CHECK(std::abs(c - draws * p) <= 3 * sigma);

  std::mt19937_64 a(5), b(5);
  CHECK(random_assign(arms, a) == random_assign(arms, b));
  CHECK_THROWS_AS(random_assign(std::vector<std::string>{}, a), Error);
}

TEST_CASE("session state machine") {
  const auto grid = GridSpec::table1();
  const auto arms = make_arms(canonical_ids(), grid);
  PolicySettings s;
  s.max_rounds = 3;
  Session session("m", arms, s);
  CHECK_THROWS_AS(session.submit_rating(5), Error);  // nothing pending
  for (int r = 1; r <= 3; ++r) {
    auto rng = session.round_rng(r);
    session.set_pending(thompson_select(session, rng));
    CHECK_THROWS_AS(session.submit_rating(9), Error);
    const auto& rec = session.submit_rating(r + 3);
    CHECK(rec.round == r);
  }
  CHECK_FALSE(session.rounds_remaining());
  auto rng = session.round_rng(4);
  CHECK_THROWS_AS(session.set_pending(thompson_select(session, rng)), Error);
  CHECK(session.history()[0].reward == -1);
  CHECK(session.history()[1].reward == 1);
  // Repeat of an already shown arm is refused with no-repeat on.
  Session again("n", arms, PolicySettings{});
  again.set_pending({arms[0].config_id, {}});
  again.submit_rating(5);
  CHECK_THROWS_AS(again.set_pending({arms[0].config_id, {}}), Error);
  CHECK_THROWS_AS(again.set_pending({"ex9.in1.gr1.mo1", {}}), Error);
}

TEST_CASE("control sessions record ratings without learning") {
  const auto arms = make_arms(canonical_ids());
  Session session("c", arms, PolicySettings{}, SessionMode::Control);
  session.set_pending({arms[3].config_id, {}});
  const auto& rec = session.submit_rating(7);
  CHECK(rec.reward == 1);
  CHECK(session.posterior() == init_posterior(14));
}

TEST_CASE("transcripts round-trip and restore identical sessions") {
  const auto arms = make_arms(canonical_ids());
  PolicySettings s;
  s.seed = 99;
  Session session("s000001", arms, s);
  std::mt19937_64 ratings(4);
  for (int r = 1; r <= 7; ++r) {
    auto rng = session.round_rng(r);
    session.set_pending(thompson_select(session, rng));
    session.submit_rating(static_cast<int>(ratings() % 7) + 1, 1700000000 + r);
  }
  auto rng = session.round_rng(8);
  session.set_pending(thompson_select(session, rng));

  const auto text = transcript_to_string(session.transcript());
  const auto parsed = parse_transcript(text);
  CHECK(parsed == session.transcript());
  CHECK(transcript_to_string(parsed) == text);

  const auto restored = Session::restore(parsed);
  CHECK(restored.posterior() == session.posterior());
  CHECK(restored.transcript() == session.transcript());

  SUBCASE("tampered posterior is detected") {
    auto bad = parsed;
    bad.records[3].mean[0] += 1e-3;
    CHECK_THROWS_AS(Session::restore(bad), Error);
  }
  SUBCASE("malformed rows are parse errors") {
    auto cut = text.substr(0, text.size() - 40);
    CHECK_THROWS_AS(parse_transcript(cut + "\n1,2\n"), Error);
    CHECK_THROWS_AS(parse_transcript("round,config_id\n"), Error);
  }
}
