#include "pgam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "pgam/error.hpp"
#include "pgam/io.hpp"

namespace pgam {

std::vector<LevelKey> all_levels(std::span<const std::size_t> blocks) {
  if (blocks.size() != kHyperparameterCount)
    throw Error(ErrorCode::InvalidArgument, "expected one block per hyperparameter");
  std::vector<LevelKey> out;
  for (std::size_t h = 0; h < blocks.size(); ++h)
    for (std::size_t j = 1; j <= blocks[h]; ++j) out.push_back({kAllHyperparameters[h], static_cast<int>(j)});
  return out;
}

std::size_t context_position(const LevelKey& level, std::span<const std::size_t> blocks) {
  const auto h = static_cast<std::size_t>(level.hyper);
  if (h >= blocks.size() || level.level < 1 || static_cast<std::size_t>(level.level) > blocks[h])
    throw Error(ErrorCode::InvalidArgument, "level " + level.label() + " outside grid");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < h; ++i) offset += blocks[i];
  return offset + static_cast<std::size_t>(level.level - 1);
}

double normalized_determinant(std::span<const double> variances) {
  if (variances.empty()) throw Error(ErrorCode::InvalidArgument, "normalized determinant of empty covariance");
  double log_sum = 0.0;
  for (double v : variances) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidArgument, "variances must be positive and finite");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(variances.size()));
}

double normalized_determinant(const RewardPosterior& posterior) { return normalized_determinant(posterior.variance); }

double shannon_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "probability outside [0,1]");
  auto term = [](double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; };
  return term(p) + term(1.0 - p);
}

double information_gain(std::span<const int> rewards) {
  if (rewards.empty()) throw Error(ErrorCode::InvalidArgument, "information gain of empty sample");
  std::size_t pos = 0;
  for (int r : rewards) {
    if (r != 1 && r != -1) throw Error(ErrorCode::InvalidArgument, "rewards must be +1 or -1");
    if (r == 1) ++pos;
  }
  return 1.0 - shannon_entropy(static_cast<double>(pos) / static_cast<double>(rewards.size()));
}

double information_gain(const RewardSample& sample) { return information_gain(sample.rewards); }

double expected_information_gain(std::size_t n, double p) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "expected information gain needs n >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "probability outside [0,1]");
  double e = 0.0;
  for (std::size_t s = 0; s <= n; ++s) {
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(s + 1.0) - std::lgamma(n - s + 1.0) +
                           (s ? s * std::log(p) : 0.0) + (n - s ? (n - s) * std::log1p(-p) : 0.0);
    e += std::exp(log_pmf) * (1.0 - shannon_entropy(static_cast<double>(s) / n));
  }
  return e;
}

std::vector<int> level_rewards(const Transcript& t, const LevelKey& level) {
  const std::size_t p = context_position(level, t.blocks);
  std::vector<int> out;
  for (const auto& r : t.records)
    if (p < r.context.size() && r.context.bits[p]) out.push_back(r.reward);
  return out;
}

int cumulative_reward(const Transcript& t, const LevelKey& level) {
  auto rewards = level_rewards(t, level);
  return std::accumulate(rewards.begin(), rewards.end(), 0);
}

std::vector<std::pair<int, double>> convergence_trace(const Transcript& t) {
  const std::size_t k = t.dimension();
  std::vector<std::pair<int, double>> out;
  out.emplace_back(0, normalized_determinant(std::vector<double>(k, t.settings.prior_var)));
  for (const auto& r : t.records) {
    if (r.variance.size() != k) throw Error(ErrorCode::ParseError, "malformed transcript: variance length");
    out.emplace_back(r.round, normalized_determinant(r.variance));
  }
  return out;
}

std::vector<std::pair<int, double>> replay_trace(const Transcript& t) {
  RewardPosterior post = init_posterior(t.dimension(), t.settings.prior_mean, t.settings.prior_var);
  std::vector<std::pair<int, double>> out;
  out.emplace_back(0, normalized_determinant(post));
  for (const auto& r : t.records) {
    if (t.mode == SessionMode::Treatment) post = update_posterior(post, r.context, r.reward, t.settings.noise_var);
    out.emplace_back(r.round, normalized_determinant(post));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "spearman: length mismatch");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> Report::histogram_edges() {
  std::vector<double> edges;
  for (int i = 0; i <= 10; ++i) edges.push_back(-1.0 + 0.2 * i);
  edges.back() = 1.0;
  return edges;
}

Report aggregate_report(std::vector<Transcript> sessions) {
  if (sessions.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate_report needs at least one session");
  std::sort(sessions.begin(), sessions.end(),
            [](const Transcript& a, const Transcript& b) { return a.session_id < b.session_id; });

  Report rep;
  std::vector<const Transcript*> used;
  for (const auto& t : sessions) {
    if (t.records.empty()) {
      ++rep.excluded_sessions;
      rep.warnings.push_back("session " + t.session_id + " has zero rounds; excluded");
      continue;
    }
    if (!used.empty() && t.blocks != used.front()->blocks)
      throw Error(ErrorCode::InvalidArgument, "session " + t.session_id + " uses a different grid");
    used.push_back(&t);
  }
  rep.sessions = used.size();
  for (const auto& t : sessions)
    if (t.status == SessionStatus::Finalized && t.final_config) rep.final_configs.push_back(*t.final_config);
  rep.distinct_final_configs = std::set<std::string>(rep.final_configs.begin(), rep.final_configs.end()).size();
  if (used.empty()) {
    rep.warnings.push_back("no sessions with ratings");
    rep.spearman_rho = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }

  // (a) convergence bands
  std::vector<std::vector<double>> by_round;
  for (const Transcript* t : used) {
    auto trace = convergence_trace(*t);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (by_round.size() <= i) by_round.emplace_back();
      by_round[i].push_back(trace[i].second);
    }
  }
  for (std::size_t r = 0; r < by_round.size(); ++r) {
    rep.convergence.push_back({static_cast<int>(r), by_round[r].size(), quantile(by_round[r], 0.2),
                               quantile(by_round[r], 0.5), quantile(by_round[r], 0.8)});
  }

  // (b)-(d) per (user, level)
  const auto levels = all_levels(used.front()->blocks);
  std::vector<double> cum, mean;
  double ig_sum = 0.0;
  for (const auto& level : levels) {
    const std::size_t p = context_position(level, used.front()->blocks);
    Report::LevelSummary summary;
    summary.level = level.label();
    summary.histogram.assign(10, 0);
    std::vector<double> mean_rewards;
    double level_ig = 0.0;
    for (const Transcript* t : used) {
      auto rewards = level_rewards(*t, level);
      if (rewards.empty()) {
        ++rep.unshown_level_pairs;
        continue;
      }
      const int s = std::accumulate(rewards.begin(), rewards.end(), 0);
      const int n = static_cast<int>(rewards.size());
      const double ig = information_gain(rewards);
      level_ig += ig;
      ig_sum += ig;
      ++rep.information_gain_values;
      mean_rewards.push_back(static_cast<double>(s) / n);
      // Exact bin of s/n over 10 equal bins on [-1, 1].
      summary.histogram[static_cast<std::size_t>(std::min(9, ((s + n) * 5) / n))]++;

      const double mu = t->records.back().mean[p];
      rep.association.push_back({t->session_id, summary.level, s, mu});
      cum.push_back(s);
      mean.push_back(mu);
    }
    summary.users = mean_rewards.size();
    if (summary.users) {
      summary.mean_information_gain = level_ig / static_cast<double>(summary.users);
      summary.median_mean_reward = quantile(mean_rewards, 0.5);
    } else {
      summary.mean_information_gain = std::numeric_limits<double>::quiet_NaN();
      summary.median_mean_reward = std::numeric_limits<double>::quiet_NaN();
      rep.warnings.push_back("level " + summary.level + " was never shown");
    }
    rep.levels.push_back(std::move(summary));
  }
  if (rep.unshown_level_pairs)
    rep.warnings.push_back(std::to_string(rep.unshown_level_pairs) +
                           " (user, level) pairs never shown; excluded from IG and mean-reward aggregates");
  rep.grand_mean_information_gain = rep.information_gain_values
                                        ? ig_sum / static_cast<double>(rep.information_gain_values)
                                        : std::numeric_limits<double>::quiet_NaN();
  rep.spearman_rho = spearman(cum, mean);
  if (std::isnan(rep.spearman_rho)) rep.warnings.push_back("rank correlation undefined (constant input)");
  return rep;
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const Report& r) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& b : r.convergence)
    conv.push_back({{"round", b.round}, {"users", b.users}, {"q20", b.q20}, {"q50", b.q50}, {"q80", b.q80}});
  nlohmann::json assoc = nlohmann::json::array();
  for (const auto& a : r.association)
    assoc.push_back({{"user", a.user},
                     {"level", a.level},
                     {"cumulative_reward", a.cumulative_reward},
                     {"posterior_mean", a.posterior_mean}});
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"level", l.level},
                      {"users", l.users},
                      {"mean_information_gain", num(l.mean_information_gain)},
                      {"median_mean_reward", num(l.median_mean_reward)},
                      {"histogram", l.histogram}});
  return {{"sessions", r.sessions},
          {"excluded_sessions", r.excluded_sessions},
          {"convergence", conv},
          {"association", assoc},
          {"spearman_rho", num(r.spearman_rho)},
          {"levels", levels},
          {"histogram_edges", Report::histogram_edges()},
          {"grand_mean_information_gain", num(r.grand_mean_information_gain)},
          {"information_gain_values", r.information_gain_values},
          {"unshown_level_pairs", r.unshown_level_pairs},
          {"final_configs", r.final_configs},
          {"distinct_final_configs", r.distinct_final_configs},
          {"warnings", r.warnings}};
}

// ----------------------------------------------------------------- export

namespace {

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

struct Svg {
  double width = 640, height = 400, margin = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::ostringstream body;

  double px(double x) const { return margin + (x - x0) / (x1 - x0) * (width - 2 * margin); }
  double py(double y) const { return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color, double w = 1.5) {
    body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << w << "\" points=\"";
    for (const auto& [x, y] : pts) body << px(x) << ',' << py(y) << ' ';
    body << "\"/>\n";
  }
  void rect(double xa, double ya, double xb, double yb, const char* color) {
    body << "<rect x=\"" << px(std::min(xa, xb)) << "\" y=\"" << py(std::max(ya, yb)) << "\" width=\""
         << std::abs(px(xb) - px(xa)) << "\" height=\"" << std::abs(py(yb) - py(ya)) << "\" fill=\"" << color
         << "\"/>\n";
  }
  void dot(double x, double y) {
    body << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11, const char* anchor = "middle") {
    body << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
         << "\">" << s << "</text>\n";
  }
  std::string str(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n";
    char buf[64];
    for (double y : {y0, y1}) {
      std::snprintf(buf, sizeof buf, "%.3g", y);
      out << "<text x=\"" << margin - 5 << "\" y=\"" << py(y) + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << buf
          << "</text>\n";
    }
    for (double x : {x0, x1}) {
      std::snprintf(buf, sizeof buf, "%.3g", x);
      out << "<text x=\"" << px(x) << "\" y=\"" << height - margin + 14 << "\" font-size=\"10\" text-anchor=\"middle\">"
          << buf << "</text>\n";
    }
    out << "<text x=\"" << width / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">" << title << "</text>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << xlabel << "</text>\n";
    out << "<text x=\"14\" y=\"" << height / 2 << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << height / 2 << ")\">" << ylabel << "</text>\n";
    out << body.str() << "</svg>\n";
    return out.str();
  }
};

void plot_convergence(const Report& r, const std::filesystem::path& path) {
  Svg svg;
  svg.x1 = std::max<double>(1, r.convergence.empty() ? 1 : r.convergence.back().round);
  svg.y0 = 0;
  for (const auto& b : r.convergence) svg.y1 = std::max(svg.y1, b.q80);
  std::vector<std::pair<double, double>> lo, mid, hi;
  for (const auto& b : r.convergence) {
    lo.emplace_back(b.round, b.q20);
    mid.emplace_back(b.round, b.q50);
    hi.emplace_back(b.round, b.q80);
  }
  svg.polyline(lo, "#9ecae1");
  svg.polyline(hi, "#9ecae1");
  svg.polyline(mid, "#08519c", 2.5);
  atomic_write(path, svg.str("Posterior convergence (20/50/80%)", "round", "|S|^(1/k)"));
}

void plot_association(const Report& r, const std::filesystem::path& path) {
  Svg svg;
  double cmin = 0, cmax = 1, mmin = 0, mmax = 0.1;
  for (const auto& a : r.association) {
    cmin = std::min<double>(cmin, a.cumulative_reward);
    cmax = std::max<double>(cmax, a.cumulative_reward);
    mmin = std::min(mmin, a.posterior_mean);
    mmax = std::max(mmax, a.posterior_mean);
  }
  svg.x0 = cmin, svg.x1 = cmax, svg.y0 = mmin, svg.y1 = mmax;
  for (const auto& a : r.association) svg.dot(a.cumulative_reward, a.posterior_mean);
  char title[96];
  std::snprintf(title, sizeof title, "Cumulative reward vs posterior mean (rho = %.3f)", r.spearman_rho);
  atomic_write(path, svg.str(title, "cumulative reward", "posterior mean"));
}

void plot_levels(const Report& r, const std::filesystem::path& path, bool ig) {
  Svg svg;
  svg.width = 900;
  svg.margin = 60;
  svg.x0 = 0;
  svg.x1 = static_cast<double>(std::max<std::size_t>(1, r.levels.size()));
  svg.y0 = ig ? 0.0 : -1.0;
  svg.y1 = 1.0;
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    const double v = ig ? r.levels[i].mean_information_gain : r.levels[i].median_mean_reward;
    if (std::isfinite(v)) svg.rect(i + 0.15, 0.0, i + 0.85, v, ig ? "#6baed6" : "#fd8d3c");
    svg.text(svg.px(i + 0.5), svg.height - svg.margin + 28, r.levels[i].level, 8);
  }
  if (ig)
    atomic_write(path, svg.str("Mean information gain per level", "level", "IG"));
  else
    atomic_write(path, svg.str("Median of users' mean reward per level", "level", "mean reward"));
}

}  // namespace

void write_report(const Report& r, const std::filesystem::path& dir, bool plot) {
  std::filesystem::create_directories(dir);
  {
    std::ostringstream out;
    out << "round,users,q20,q50,q80\n";
    for (const auto& b : r.convergence)
      out << b.round << ',' << b.users << ',' << fmt(b.q20) << ',' << fmt(b.q50) << ',' << fmt(b.q80) << '\n';
    atomic_write(dir / "convergence.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "user,level,cumulative_reward,posterior_mean\n";
    for (const auto& a : r.association)
      out << a.user << ',' << a.level << ',' << a.cumulative_reward << ',' << fmt(a.posterior_mean) << '\n';
    atomic_write(dir / "association.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "level,users,mean_information_gain,median_mean_reward\n";
    for (const auto& l : r.levels)
      out << l.level << ',' << l.users << ',' << fmt(l.mean_information_gain) << ',' << fmt(l.median_mean_reward)
          << '\n';
    atomic_write(dir / "information_gain.csv", out.str());
  }
  {
    const auto edges = Report::histogram_edges();
    std::ostringstream out;
    out << "level,bin_low,bin_high,count\n";
    for (const auto& l : r.levels)
      for (std::size_t b = 0; b < l.histogram.size(); ++b)
        out << l.level << ',' << fmt(edges[b]) << ',' << fmt(edges[b + 1]) << ',' << l.histogram[b] << '\n';
    atomic_write(dir / "mean_reward_histogram.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "key,value\n";
    out << "sessions," << r.sessions << '\n';
    out << "excluded_sessions," << r.excluded_sessions << '\n';
    out << "spearman_rho," << fmt(r.spearman_rho) << '\n';
    out << "grand_mean_information_gain," << fmt(r.grand_mean_information_gain) << '\n';
    out << "information_gain_values," << r.information_gain_values << '\n';
    out << "unshown_level_pairs," << r.unshown_level_pairs << '\n';
    out << "finalized_sessions," << r.final_configs.size() << '\n';
    out << "distinct_final_configs," << r.distinct_final_configs << '\n';
    atomic_write(dir / "summary.csv", out.str());
  }
  if (plot) {
    plot_convergence(r, dir / "convergence.svg");
    plot_association(r, dir / "association.svg");
    plot_levels(r, dir / "information_gain.svg", true);
    plot_levels(r, dir / "mean_reward.svg", false);
  }
}

}  // namespace pgam
