#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pgam/analysis.hpp"
#include "pgam/bandit.hpp"
#include "pgam/error.hpp"
#include "pgam/service.hpp"
#include "pgam/sim.hpp"
#include "pgam/viz.hpp"
#include "pgam/zoo.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::string> canonical_ids() {
  std::vector<std::string> ids;
  for (const auto& c : pgam::dedupe(pgam::enumerate_grid(pgam::GridSpec::table1()))) ids.push_back(c.id());
  return ids;
}

// Minimal bandit session over config ids, without model payloads.
class PySession {
 public:
  PySession(std::vector<std::string> arms, std::uint64_t seed, int max_rounds, int cutoff, const std::string& mode)
      : session_("py", pgam::make_arms(arms.empty() ? canonical_ids() : arms), settings(seed, max_rounds, cutoff),
                 pgam::parse_session_mode(mode)) {}

  std::string next() {
    if (session_.pending()) return session_.pending()->config_id;
    const int round = session_.rounds_done() + 1;
    pgam::Selection sel;
    if (session_.mode() == pgam::SessionMode::Treatment) {
      auto rng = session_.round_rng(round);
      sel = pgam::thompson_select(session_, rng);
    } else {
      std::vector<std::string> eligible;
      for (const auto* a : session_.eligible_arms()) eligible.push_back(a->config_id);
      auto rng = session_.round_rng(round, 1);
      sel.config_id = pgam::random_assign(eligible, rng);
    }
    session_.set_pending(sel);
    return sel.config_id;
  }
  int rate(int rating) { return session_.submit_rating(rating).reward; }
  std::string finalize() { return pgam::final_selection(session_); }
  std::vector<double> mean() const { return session_.posterior().mean; }
  std::vector<double> variance() const { return session_.posterior().variance; }
  int rounds() const { return session_.rounds_done(); }
  std::string transcript() const { return pgam::transcript_to_string(session_.transcript()); }

 private:
  static pgam::PolicySettings settings(std::uint64_t seed, int max_rounds, int cutoff) {
    pgam::PolicySettings s;
    s.seed = seed;
    s.max_rounds = max_rounds;
    s.cutoff = cutoff;
    return s;
  }
  pgam::Session session_;
};

class PyService {
 public:
  PyService(const std::filesystem::path& zoo, const std::filesystem::path& store, std::uint64_t seed,
            const std::string& rule, int max_rounds)
      : service_(pgam::load_zoo(zoo), options(zoo, store, seed, rule, max_rounds)) {}

  py::object create_session(const py::object& request) { return to_py(service_.create_session(from_py(request))); }
  py::object next_model(const std::string& id) { return to_py(service_.next_model(id)); }
  py::object submit_rating(const std::string& id, int rating) {
    return to_py(service_.submit_rating(id, json{{"rating", rating}}));
  }
  py::object finalize(const std::string& id) { return to_py(service_.finalize(id)); }
  py::object analysis(const std::optional<std::string>& id) {
    return to_py(id ? service_.session_analysis(*id) : service_.analysis_all());
  }
  py::object models() const { return to_py(service_.models()); }

 private:
  static pgam::ServiceOptions options(const std::filesystem::path& zoo, const std::filesystem::path& store,
                                      std::uint64_t seed, const std::string& rule, int max_rounds) {
    pgam::ServiceOptions o;
    o.zoo_dir = zoo;
    o.store_dir = store;
    o.seed = seed;
    o.rule = pgam::ThresholdRule::parse(rule);
    o.defaults.max_rounds = max_rounds;
    return o;
  }
  pgam::SessionService service_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Personalized GAM selection: grid, zoo, bandit sessions and analysis";

  static py::exception<pgam::Error> error(m, "PgamError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const pgam::Error& e) {
      py::set_error(error, (std::string(pgam::error_code_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("grid_report", [] {
    const auto all = pgam::enumerate_grid(pgam::GridSpec::table1());
    const auto distinct = pgam::dedupe(all);
    return py::dict(py::arg("enumerated") = all.size(), py::arg("canonical") = distinct.size(),
                    py::arg("idempotent") = pgam::dedupe(distinct).size() == distinct.size());
  });
  m.def("canonical_config_ids", &canonical_ids);
  m.def("describe_config", [](const std::string& id) { return pgam::GridSpec::table1().from_id(id).describe(); });
  m.def("encode_context", [](const std::string& id) {
    return pgam::encode_context(pgam::GridSpec::table1().from_id(id)).bits;
  });

  py::class_<pgam::Dataset>(m, "Dataset")
      .def("__len__", &pgam::Dataset::size)
      .def_property_readonly("fingerprint", &pgam::Dataset::fingerprint);
  m.def(
      "load_dataset",
      [](const std::filesystem::path& path, const std::optional<std::filesystem::path>& schema) {
        return pgam::load_dataset(path, schema ? pgam::ColumnMapping::from_schema_file(*schema)
                                               : pgam::ColumnMapping::uci_hourly());
      },
      py::arg("path"), py::arg("schema") = py::none());

  py::class_<pgam::ModelZoo>(m, "ModelZoo")
      .def_property_readonly("config_ids",
                             [](const pgam::ModelZoo& z) {
                               std::vector<std::string> ids;
                               for (const auto& e : z.entries) ids.push_back(e.config_id);
                               return ids;
                             })
      .def_readonly("dataset_fingerprint", &pgam::ModelZoo::dataset_fingerprint)
      .def("best_r_squared", &pgam::ModelZoo::best_r_squared)
      .def("metrics",
           [](const pgam::ModelZoo& z, const std::string& id) { return to_py(pgam::to_json(z.at(id).test_metrics())); })
      .def("viz", [](const pgam::ModelZoo& z, const std::string& id) {
        return to_py(pgam::to_json(pgam::export_viz(z.at(id).model)));
      })
      .def("rashomon", [](const pgam::ModelZoo& z, const std::string& rule) {
        return pgam::filter_rashomon(z, pgam::ThresholdRule::parse(rule)).members;
      }, py::arg("rule") = "eps:0.05")
      .def("save", [](const pgam::ModelZoo& z, const std::filesystem::path& dir) { pgam::save_zoo(z, dir); });

  m.def(
      "build_zoo",
      [](const pgam::Dataset& ds, std::vector<std::string> config_ids, int rounds, int interaction_rounds,
         double train_fraction, unsigned threads) {
        const auto grid = pgam::GridSpec::table1();
        std::vector<pgam::GamConfig> configs;
        if (config_ids.empty()) config_ids = canonical_ids();
        for (const auto& id : config_ids) configs.push_back(pgam::canonicalize(grid.from_id(id)));
        pgam::FitParams p;
        p.rounds = rounds;
        p.interaction_rounds = interaction_rounds;
        py::gil_scoped_release release;
        return pgam::build_zoo(ds, pgam::dedupe(configs), p, train_fraction, grid, threads);
      },
      py::arg("dataset"), py::arg("config_ids") = std::vector<std::string>{}, py::arg("rounds") = 300,
      py::arg("interaction_rounds") = 100, py::arg("train_fraction") = 0.8, py::arg("threads") = 0);
  m.def("load_zoo", [](const std::filesystem::path& dir) { return pgam::load_zoo(dir); });

  m.def("normalized_determinant", [](const std::vector<double>& v) { return pgam::normalized_determinant(v); });
  m.def("shannon_entropy", &pgam::shannon_entropy);
  m.def("information_gain", [](const std::vector<int>& r) { return pgam::information_gain(r); });
  m.def("rating_to_reward", &pgam::rating_to_reward, py::arg("rating"), py::arg("cutoff") = 5);

  py::class_<PySession>(m, "Session")
      .def(py::init<std::vector<std::string>, std::uint64_t, int, int, const std::string&>(),
           py::arg("arms") = std::vector<std::string>{}, py::arg("seed") = 0, py::arg("max_rounds") = 12,
           py::arg("cutoff") = 5, py::arg("mode") = "treatment")
      .def("next", &PySession::next)
      .def("rate", &PySession::rate)
      .def("finalize", &PySession::finalize)
      .def_property_readonly("mean", &PySession::mean)
      .def_property_readonly("variance", &PySession::variance)
      .def_property_readonly("rounds", &PySession::rounds)
      .def("transcript", &PySession::transcript);

  py::class_<PyService>(m, "Service")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&, std::uint64_t, const std::string&, int>(),
           py::arg("zoo"), py::arg("store"), py::arg("seed") = 0, py::arg("rule") = "eps:0.05",
           py::arg("max_rounds") = 12)
      .def("create_session", &PyService::create_session, py::arg("request") = py::none())
      .def("next_model", &PyService::next_model)
      .def("submit_rating", &PyService::submit_rating)
      .def("finalize", &PyService::finalize)
      .def("analysis", &PyService::analysis, py::arg("session_id") = py::none())
      .def("models", &PyService::models);

  m.def(
      "simulate",
      [](const std::string& kind, std::size_t users, int rounds, std::uint64_t seed,
         const std::optional<std::filesystem::path>& out) {
        pgam::ExperimentSettings es;
        es.kind = pgam::UserKind::parse(kind);
        es.n_users = users;
        es.rounds = rounds;
        es.seed = seed;
        pgam::ExperimentResult res;
        {
          py::gil_scoped_release release;
          res = pgam::run_experiment(pgam::make_arms(canonical_ids()), es);
          if (out) pgam::write_experiment(res, *out);
        }
        return to_py(pgam::to_json(res.report));
      },
      py::arg("kind") = "het", py::arg("users") = 53, py::arg("rounds") = 12, py::arg("seed") = 0,
      py::arg("out") = py::none());
  m.def("analyze", [](const std::vector<std::string>& transcripts) {
    std::vector<pgam::Transcript> ts;
    for (const auto& t : transcripts) ts.push_back(pgam::parse_transcript(t));
    return to_py(pgam::to_json(pgam::aggregate_report(ts)));
  });
}
