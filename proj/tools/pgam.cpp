// pgam: build model zoos, run simulated or live personalization sessions and
// export analysis reports.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pgam/analysis.hpp"
#include "pgam/bandit.hpp"
#include "pgam/config.hpp"
#include "pgam/dataset.hpp"
#include "pgam/error.hpp"
#include "pgam/io.hpp"
#include "pgam/service.hpp"
#include "pgam/sim.hpp"
#include "pgam/viz.hpp"
#include "pgam/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kPublishedDistinctConfigs = 92;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

pgam::ColumnMapping mapping_for(const fs::path& data, const std::string& schema) {
  if (!schema.empty()) return pgam::ColumnMapping::from_schema_file(schema);
  auto sibling = data;
  sibling.replace_extension(".schema");
  if (fs::exists(sibling)) return pgam::ColumnMapping::from_schema_file(sibling);
  return pgam::ColumnMapping::uci_hourly();
}

std::vector<pgam::Arm> arms_from(const std::optional<pgam::ModelZoo>& zoo, const pgam::ThresholdRule& rule,
                                 const pgam::GridSpec& grid) {
  std::vector<std::string> ids;
  if (zoo) {
    ids = pgam::filter_rashomon(*zoo, rule).members;
  } else {
    for (const auto& c : pgam::dedupe(pgam::enumerate_grid(grid))) ids.push_back(c.id());
  }
  return pgam::make_arms(ids, grid);
}

std::vector<pgam::Transcript> read_transcripts(const fs::path& dir) {
  std::vector<pgam::Transcript> out;
  if (!fs::is_directory(dir)) throw pgam::Error(pgam::ErrorCode::NotFound, "no such directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(pgam::parse_transcript(pgam::read_file(f)));
  return out;
}

pgam::HttpFrontend* g_frontend = nullptr;

void on_signal(int) {
  if (g_frontend) g_frontend->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized GAM zoo, bandit sessions and analysis"};
  app.require_subcommand(1);

  // grid-report
  auto* grid_cmd = app.add_subcommand("grid-report", "Enumerate the hyperparameter grid and count distinct configs");
  bool grid_json = false;
  grid_cmd->add_flag("--json", grid_json, "Print JSON");

  // build-zoo
  auto* zoo_cmd = app.add_subcommand("build-zoo", "Train one GAM per canonical grid config");
  fs::path data_path = "data/bikeshare_2011.csv";
  std::string schema, year;
  fs::path zoo_out;
  double train_fraction = 0.8;
  pgam::FitParams fit;
  unsigned threads = 0;
  std::vector<std::string> only;
  zoo_cmd->add_option("--data", data_path, "Hourly rentals CSV")->capture_default_str();
  zoo_cmd->add_option("--schema", schema, "Column mapping file (default: <data>.schema, else UCI names)");
  zoo_cmd->add_option("--year", year, "Keep rows whose year column equals this value");
  zoo_cmd->add_option("--out", zoo_out, "Output directory")->required();
  zoo_cmd->add_option("--train-fraction", train_fraction, "Leading fraction used for training")->capture_default_str();
  zoo_cmd->add_option("--rounds", fit.rounds, "Main-effect boosting rounds")->capture_default_str();
  zoo_cmd->add_option("--interaction-rounds", fit.interaction_rounds)->capture_default_str();
  zoo_cmd->add_option("--learning-rate", fit.learning_rate)->capture_default_str();
  zoo_cmd->add_option("--interaction-bins", fit.interaction_bins)->capture_default_str();
  zoo_cmd->add_option("--seed", fit.seed)->capture_default_str();
  zoo_cmd->add_option("--threads", threads, "0 = hardware concurrency")->capture_default_str();
  zoo_cmd->add_option("--only", only, "Restrict to these config ids");

  // rashomon
  auto* rash_cmd = app.add_subcommand("rashomon", "List zoo members that clear a threshold");
  fs::path rash_zoo;
  std::string rash_rule = "eps:0.05";
  rash_cmd->add_option("--zoo", rash_zoo)->required();
  rash_cmd->add_option("--rule", rash_rule, "R^2 floor like 0.83, or eps:<delta> relative to the best")
      ->capture_default_str();

  // describe
  auto* desc_cmd = app.add_subcommand("describe", "Print a model's shape functions and heatmaps as JSON");
  fs::path desc_zoo;
  std::string desc_id;
  desc_cmd->add_option("--zoo", desc_zoo)->required();
  desc_cmd->add_option("--config", desc_id)->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run simulated personalization sessions");
  fs::path sim_zoo, sim_out;
  pgam::ExperimentSettings sim;
  std::string sim_kind = "het", sim_rule = "eps:0.05";
  bool sim_plot = false, sim_allow_repeat = false;
  sim_cmd->add_option("--zoo", sim_zoo, "Zoo directory (default: every canonical config, unvalidated)");
  sim_cmd->add_option("--users", sim.n_users)->capture_default_str();
  sim_cmd->add_option("--rounds", sim.rounds)->capture_default_str();
  sim_cmd->add_option("--kind", sim_kind, "het | hom | rand | pair | det:<level> (e.g. det:in3) | det:cycle")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--cutoff", sim.policy.cutoff)->capture_default_str();
  sim_cmd->add_option("--rule", sim_rule)->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads)->capture_default_str();
  sim_cmd->add_flag("--allow-repeat", sim_allow_repeat, "Allow an arm to be shown more than once");
  sim_cmd->add_flag("--plot", sim_plot, "Also write SVG figures");
  sim_cmd->add_option("--out", sim_out)->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
  fs::path serve_zoo;
  pgam::ServiceOptions opts;
  std::string serve_rule = opts.rule.to_string(), host = "0.0.0.0";
  serve_cmd->add_option("--zoo", serve_zoo)->required();
  auto* store_opt = serve_cmd->add_option("--store", opts.store_dir, "Session store (env PGAM_STORE)");
  auto* port_opt = serve_cmd->add_option("--port", opts.port, "TCP port (env PGAM_PORT)");
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--rounds", opts.defaults.max_rounds)->capture_default_str();
  serve_cmd->add_option("--cutoff", opts.defaults.cutoff)->capture_default_str();
  serve_cmd->add_option("--seed", opts.seed)->capture_default_str();
  serve_cmd->add_option("--rule", serve_rule)->capture_default_str();

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "Aggregate session transcripts into report files");
  fs::path an_store, an_transcripts, an_out;
  bool an_plot = false, an_active = false;
  an_cmd->add_option("--store", an_store, "Service store directory");
  an_cmd->add_option("--transcripts", an_transcripts, "Directory of transcript CSV files");
  an_cmd->add_option("--out", an_out)->required();
  an_cmd->add_flag("--plot", an_plot);
  an_cmd->add_flag("--include-active", an_active, "Also aggregate sessions that were never finalized");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*grid_cmd) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto grid = pgam::GridSpec::table1();
      const auto all = pgam::enumerate_grid(grid);
      const auto distinct = pgam::dedupe(all);
      const bool idempotent = pgam::dedupe(distinct).size() == distinct.size();
      const double elapsed = seconds_since(t0);
      const std::string note =
          "dropping monotonicity on excluded features merges " + std::to_string(all.size() - distinct.size()) +
          " configs; the published count of " + std::to_string(kPublishedDistinctConfigs) +
          " is not reproduced by this rule";
      if (grid_json) {
        std::vector<std::string> ids;
        for (const auto& c : distinct) ids.push_back(c.id());
        std::cout << json{{"enumerated", all.size()},
                          {"canonical", distinct.size()},
                          {"published", kPublishedDistinctConfigs},
                          {"idempotent", idempotent},
                          {"note", note},
                          {"seconds", elapsed},
                          {"configs", ids}}
                         .dump(1)
                  << "\n";
      } else {
        std::printf("enumerated  %zu\ncanonical   %zu\npublished   %d\nidempotent  %s\nnote        %s\n", all.size(),
                    distinct.size(), kPublishedDistinctConfigs, idempotent ? "yes" : "no", note.c_str());
      }
      return 0;
    }

    if (*zoo_cmd) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto mapping = mapping_for(data_path, schema);
      const auto ds = pgam::load_dataset(data_path, mapping, year.empty() ? std::nullopt : std::optional(year));
      const auto grid = pgam::GridSpec::table1();
      auto configs = pgam::dedupe(pgam::enumerate_grid(grid));
      if (!only.empty()) {
        std::vector<pgam::GamConfig> picked;
        for (const auto& id : only) picked.push_back(pgam::canonicalize(grid.from_id(id)));
        configs = std::move(picked);
      }
      std::fprintf(stderr, "fitting %zu configs on %zu rows\n", configs.size(), ds.size());
      const auto zoo = pgam::build_zoo(ds, configs, fit, train_fraction, grid, threads);
      pgam::save_zoo(zoo, zoo_out);
      const auto best = std::max_element(zoo.entries.begin(), zoo.entries.end(), [](const auto& a, const auto& b) {
        return a.test_metrics().r_squared < b.test_metrics().r_squared;
      });
      const auto within = pgam::filter_rashomon(zoo, pgam::ThresholdRule::relative(0.05)).members.size();
      std::printf("models      %zu\nbest        %s  test R^2 %.4f  RMSE %.2f\nwithin 0.05 %zu (%.1f%%)\nseconds     %.1f\n",
                  zoo.entries.size(), best->config_id.c_str(), best->test_metrics().r_squared,
                  best->test_metrics().rmse, within, 100.0 * within / zoo.entries.size(), seconds_since(t0));
      return 0;
    }

    if (*rash_cmd) {
      std::vector<std::string> warnings;
      const auto zoo = pgam::load_zoo(rash_zoo, std::nullopt, &warnings);
      const auto set = pgam::filter_rashomon(zoo, pgam::ThresholdRule::parse(rash_rule));
      std::printf("rule %s  best %.4f  members %zu/%zu\n", set.rule.to_string().c_str(), set.best_r_squared,
                  set.members.size(), zoo.entries.size());
      for (const auto& id : set.members) {
        const auto& m = zoo.at(id).test_metrics();
        std::printf("%s  %.4f  %s\n", id.c_str(), m.r_squared, zoo.at(id).config.describe().c_str());
      }
      return 0;
    }

    if (*desc_cmd) {
      const auto zoo = pgam::load_zoo(desc_zoo);
      std::cout << pgam::to_json(pgam::export_viz(zoo.at(desc_id).model)).dump(1) << "\n";
      return 0;
    }

    if (*sim_cmd) {
      const auto t0 = std::chrono::steady_clock::now();
      std::optional<pgam::ModelZoo> zoo;
      if (!sim_zoo.empty()) zoo = pgam::load_zoo(sim_zoo);
      const auto rule = pgam::ThresholdRule::parse(sim_rule);
      sim.kind = pgam::UserKind::parse(sim_kind);
      sim.policy.no_repeat = !sim_allow_repeat;
      const auto arms = arms_from(zoo, rule, sim.grid);
      pgam::Validator validator;
      if (zoo) {
        const double best = zoo->best_r_squared();
        validator = [&](const std::string& id) { return rule.admits(zoo->at(id).test_metrics().r_squared, best); };
      }
      const auto result = pgam::run_experiment(arms, sim, validator);
      pgam::write_experiment(result, sim_out, sim_plot);
      const auto& r = result.report;
      std::printf("users %zu  arms %zu  rounds %d  kind %s\n", sim.n_users, arms.size(), sim.rounds,
                  sim.kind.to_string().c_str());
      std::printf("median final |S|^(1/k) %.4f  spearman %.4f  grand mean IG %.4f  distinct finals %zu  %.1fs\n",
                  r.convergence.empty() ? 0.0 : r.convergence.back().q50, r.spearman_rho,
                  r.grand_mean_information_gain, r.distinct_final_configs, seconds_since(t0));
      return 0;
    }

    if (*serve_cmd) {
      if (port_opt->count() == 0)
        if (const char* env = std::getenv("PGAM_PORT")) opts.port = std::stoi(env);
      if (store_opt->count() == 0) {
        if (const char* env = std::getenv("PGAM_STORE"))
          opts.store_dir = env;
        else
          opts.store_dir = "store";
      }
      opts.zoo_dir = serve_zoo;
      opts.rule = pgam::ThresholdRule::parse(serve_rule);
      std::vector<std::string> warnings;
      pgam::SessionService service(pgam::load_zoo(serve_zoo, std::nullopt, &warnings), opts);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      pgam::HttpFrontend frontend(service);
      g_frontend = &frontend;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "serving %zu arms on %s:%d, store %s\n", service.rashomon().members.size(), host.c_str(),
                   opts.port, opts.store_dir.c_str());
      if (!frontend.listen(host, opts.port)) {
        std::fprintf(stderr, "error: cannot listen on %s:%d\n", host.c_str(), opts.port);
        return 1;
      }
      return 0;
    }

    if (*an_cmd) {
      if (an_store.empty() == an_transcripts.empty()) {
        std::fprintf(stderr, "error: give exactly one of --store or --transcripts\n");
        return 2;
      }
      std::vector<pgam::Transcript> sessions;
      if (!an_store.empty()) {
        sessions = pgam::SessionStore(an_store).load_all();
      } else {
        sessions = read_transcripts(an_transcripts);
      }
      if (!an_active)
        std::erase_if(sessions, [](const auto& t) { return t.status != pgam::SessionStatus::Finalized; });
      if (sessions.empty()) {
        std::fprintf(stderr, "error: no sessions to analyze\n");
        return 1;
      }
      const auto report = pgam::aggregate_report(std::move(sessions));
      pgam::write_report(report, an_out, an_plot);
      pgam::atomic_write(an_out / "report.json", pgam::to_json(report).dump(1) + "\n");
      for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("sessions %zu  spearman %.4f  grand mean IG %.4f  distinct finals %zu\n", report.sessions,
                  report.spearman_rho, report.grand_mean_information_gain, report.distinct_final_configs);
      return 0;
    }
  } catch (const pgam::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(pgam::error_code_name(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
