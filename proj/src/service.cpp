#include "pgam/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include <httplib.h>

#include "pgam/analysis.hpp"
#include "pgam/error.hpp"
#include "pgam/io.hpp"
#include "pgam/sim.hpp"
#include "pgam/viz.hpp"

namespace pgam {

using nlohmann::json;

// --------------------------------------------------------------------- store

namespace {

constexpr const char* kStoreFormat = "pgam-store/1";

}  // namespace

SessionStore::SessionStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "sessions");
  const auto index = root_ / "index.json";
  std::set<std::string> ids;
  if (std::filesystem::exists(index)) {
    json j;
    try {
      j = json::parse(read_file(index));
      if (j.at("format") != kStoreFormat)
        throw Error(ErrorCode::VersionMismatch, "store index format " + j.at("format").dump());
      next_id_ = j.at("next_id").get<std::uint64_t>();
      for (const auto& id : j.at("sessions")) ids.insert(id.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Corrupt, "store index is corrupt: " + std::string(e.what()));
    }
  }
  // A crash between the transcript write and the index write leaves an
  // unindexed transcript behind; adopt it.
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "sessions")) {
    if (entry.path().extension() != ".csv") continue;
    ids.insert(entry.path().stem().string());
  }
  ids_.assign(ids.begin(), ids.end());
  for (const auto& id : ids_) {
    unsigned long long n = 0;
    if (std::sscanf(id.c_str(), "s%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
  }
}

std::filesystem::path SessionStore::session_path(const std::string& id) const {
  return root_ / "sessions" / (id + ".csv");
}

std::vector<std::string> SessionStore::session_ids() const { return ids_; }

bool SessionStore::contains(const std::string& id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

Transcript SessionStore::load(const std::string& id) const {
  if (!contains(id)) throw Error(ErrorCode::NotFound, "unknown session " + id);
  try {
    return parse_transcript(read_file(session_path(id)));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::InvalidArgument)
      throw Error(ErrorCode::Corrupt, "session " + id + " is corrupt: " + e.what());
    throw;
  }
}

std::vector<Transcript> SessionStore::load_all() const {
  std::vector<Transcript> out;
  for (const auto& id : ids_) out.push_back(load(id));
  return out;
}

void SessionStore::save(const Transcript& t) {
  atomic_write(session_path(t.session_id), transcript_to_string(t));
  if (!contains(t.session_id)) {
    ids_.insert(std::upper_bound(ids_.begin(), ids_.end(), t.session_id), t.session_id);
    write_index();
  }
}

std::string SessionStore::allocate_id() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
  write_index();
  return buf;
}

void SessionStore::write_index() const {
  json j = {{"format", kStoreFormat}, {"next_id", next_id_}, {"sessions", ids_}};
  atomic_write(root_ / "index.json", j.dump(1) + "\n");
}

// ------------------------------------------------------------------- service

namespace {

json settings_json(const PolicySettings& s) {
  return {{"cutoff", s.cutoff},     {"noise_var", s.noise_var},   {"max_rounds", s.max_rounds},
          {"no_repeat", s.no_repeat}, {"seed", s.seed},           {"prior_mean", s.prior_mean},
          {"prior_var", s.prior_var}};
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* what) {
  if (!obj.is_object()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(ErrorCode::InvalidArgument, std::string("unknown field '") + key + "' in " + what);
  }
}

template <class T>
T field(const json& obj, const char* key, const char* what) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' in " + what + " has the wrong type");
  }
}

json metrics_json(const GamModel& m) {
  return {{"train", m.train_metrics ? to_json(*m.train_metrics) : json(nullptr)},
          {"test", m.test_metrics ? to_json(*m.test_metrics) : json(nullptr)}};
}

std::int64_t wall_clock() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

SessionService::SessionService(ModelZoo zoo, ServiceOptions options, Clock clock)
    : zoo_(std::move(zoo)),
      options_(std::move(options)),
      clock_(clock ? std::move(clock) : Clock(wall_clock)),
      store_(options_.store_dir) {
  options_.defaults.validate();
  if (zoo_.entries.empty()) throw Error(ErrorCode::InvalidArgument, "zoo not loaded: no models");
  rashomon_ = filter_rashomon(zoo_, options_.rule);
  arm_ids_ = rashomon_.members;
  std::sort(arm_ids_.begin(), arm_ids_.end());
  for (const auto& id : store_.session_ids()) {
    auto slot = std::make_unique<Slot>();
    slot->session = std::make_unique<Session>(Session::restore(store_.load(id), zoo_.grid));
    sessions_.emplace(id, std::move(slot));
  }
}

SessionService::Slot& SessionService::slot(const std::string& id) {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "unknown session " + id);
  return *it->second;
}

std::vector<std::string> SessionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

Transcript SessionService::transcript(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  return s.session->transcript();
}

json SessionService::descriptor(const Session& s) const {
  return {{"id", s.id()},
          {"mode", to_string(s.mode())},
          {"status", s.finalized() ? "finalized" : "active"},
          {"round", s.rounds_done()},
          {"arms", s.arms().size()},
          {"settings", settings_json(s.settings())},
          {"pending", s.pending() ? json(s.pending()->config_id) : json(nullptr)},
          {"final_config", s.final_config() ? json(*s.final_config()) : json(nullptr)}};
}

json SessionService::presentation(const Session& s, const Selection& sel) const {
  const auto& model = zoo_.at(sel.config_id).model;
  return {{"session_id", s.id()},
          {"round", s.rounds_done() + 1},
          {"config_id", sel.config_id},
          {"description", model.config.describe()},
          {"viz", to_json(export_viz(model))},
          {"metrics", metrics_json(model)}};
}

json SessionService::create_session(const json& request) {
  const json req = request.is_null() ? json::object() : request;
  reject_unknown(req, {"mode", "overrides"}, "session request");
  const SessionMode mode =
      req.contains("mode") ? parse_session_mode(field<std::string>(req, "mode", "session request")) : SessionMode::Treatment;

  PolicySettings settings = options_.defaults;
  bool seeded = false;
  if (req.contains("overrides")) {
    const json& o = req.at("overrides");
    reject_unknown(o, {"cutoff", "noise_var", "max_rounds", "no_repeat", "seed", "prior_mean", "prior_var"},
                   "overrides");
    const char* w = "overrides";
    if (o.contains("cutoff")) settings.cutoff = field<int>(o, "cutoff", w);
    if (o.contains("noise_var")) settings.noise_var = field<double>(o, "noise_var", w);
    if (o.contains("max_rounds")) settings.max_rounds = field<int>(o, "max_rounds", w);
    if (o.contains("no_repeat")) settings.no_repeat = field<bool>(o, "no_repeat", w);
    if (o.contains("prior_mean")) settings.prior_mean = field<double>(o, "prior_mean", w);
    if (o.contains("prior_var")) settings.prior_var = field<double>(o, "prior_var", w);
    if (o.contains("seed")) {
      settings.seed = field<std::uint64_t>(o, "seed", w);
      seeded = true;
    }
  }
  settings.validate();

  std::unique_ptr<Slot> fresh;
  {
    std::lock_guard store_lock(store_mutex_);
    const std::string id = store_.allocate_id();
    if (!seeded) settings.seed = derive_seed(options_.seed, std::stoull(id.substr(1)));
    const auto blocks = zoo_.grid.block_sizes();
    fresh = std::make_unique<Slot>();
    fresh->session = std::make_unique<Session>(id, make_arms(arm_ids_, zoo_.grid), settings, mode,
                                               std::vector<std::size_t>(blocks.begin(), blocks.end()));
    store_.save(fresh->session->transcript());
  }
  json out = descriptor(*fresh->session);
  std::unique_lock lock(sessions_mutex_);
  sessions_.emplace(fresh->session->id(), std::move(fresh));
  return out;
}

json SessionService::get_session(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  return descriptor(*s.session);
}

json SessionService::next_model(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  Session& session = *s.session;
  if (session.finalized()) throw Error(ErrorCode::Finalized, "session " + id + " is finalized");
  if (session.pending()) return presentation(session, *session.pending());
  if (!session.rounds_remaining())
    throw Error(ErrorCode::Conflict, "finalize required: all " + std::to_string(session.settings().max_rounds) +
                                         " rounds used");

  const int round = session.rounds_done() + 1;
  Selection sel;
  if (session.mode() == SessionMode::Treatment) {
    auto rng = session.round_rng(round, 0);
    sel = select_validated(session, zoo_, options_.rule, rng);
  } else {
    std::vector<std::string> eligible;
    for (const Arm* a : session.eligible_arms()) eligible.push_back(a->config_id);
    if (eligible.empty()) throw Error(ErrorCode::Exhausted, "exhausted: no eligible arms left in " + id);
    auto rng = session.round_rng(round, 1);
    sel.config_id = random_assign(eligible, rng);
  }
  Session next = session;
  next.set_pending(sel);
  {
    std::lock_guard store_lock(store_mutex_);
    store_.save(next.transcript());
  }
  session = std::move(next);
  return presentation(session, sel);
}

json SessionService::submit_rating(const std::string& id, const json& request) {
  reject_unknown(request, {"rating"}, "rating request");
  if (!request.contains("rating") || !request.at("rating").is_number_integer())
    throw Error(ErrorCode::InvalidArgument, "rating must be an integer in 1..7");
  const int rating = request.at("rating").get<int>();

  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  Session next = *s.session;
  const InteractionRecord& rec = next.submit_rating(rating, clock_());
  json out = {{"session_id", id},
              {"round", rec.round},
              {"reward", rec.reward},
              {"rounds_remaining", next.settings().max_rounds - next.rounds_done()}};
  {
    std::lock_guard store_lock(store_mutex_);
    store_.save(next.transcript());
  }
  *s.session = std::move(next);
  return out;
}

json SessionService::finalize(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  Session& session = *s.session;
  if (!session.finalized()) {
    if (session.history().empty())
      throw Error(ErrorCode::Conflict, "cannot finalize session " + id + " with zero ratings");
    Session next = session;
    if (next.mode() == SessionMode::Treatment) {
      final_selection(next);
    } else {
      std::vector<std::string> ids;
      for (const auto& a : next.arms()) ids.push_back(a.config_id);
      auto rng = next.round_rng(0, 2);
      next.mark_finalized(random_assign(ids, rng));
    }
    {
      std::lock_guard store_lock(store_mutex_);
      store_.save(next.transcript());
    }
    session = std::move(next);
  }
  const auto& model = zoo_.at(*session.final_config()).model;
  return {{"session_id", id},
          {"mode", to_string(session.mode())},
          {"config_id", *session.final_config()},
          {"description", model.config.describe()},
          {"viz", to_json(export_viz(model))},
          {"metrics", metrics_json(model)}};
}

json SessionService::session_analysis(const std::string& id) {
  const Transcript t = transcript(id);
  json trace = json::array();
  for (const auto& [round, value] : convergence_trace(t)) trace.push_back({{"round", round}, {"value", value}});
  json levels = json::array();
  const auto& mean = t.records.empty() ? std::vector<double>(t.dimension(), t.settings.prior_mean)
                                       : t.records.back().mean;
  for (const auto& level : all_levels(t.blocks)) {
    auto rewards = level_rewards(t, level);
    levels.push_back({{"level", level.label()},
                      {"shown", rewards.size()},
                      {"cumulative_reward", cumulative_reward(t, level)},
                      {"information_gain", rewards.empty() ? json(nullptr) : json(information_gain(rewards))},
                      {"posterior_mean", mean[context_position(level, t.blocks)]}});
  }
  return {{"session_id", t.session_id},
          {"mode", to_string(t.mode)},
          {"rounds", t.records.size()},
          {"convergence", trace},
          {"levels", levels},
          {"final_config", t.final_config ? json(*t.final_config) : json(nullptr)}};
}

json SessionService::analysis_all() {
  std::vector<Transcript> finalized;
  for (const auto& id : session_ids()) {
    Transcript t = transcript(id);
    if (t.status == SessionStatus::Finalized) finalized.push_back(std::move(t));
  }
  if (finalized.empty()) {
    Report empty;
    empty.spearman_rho = std::numeric_limits<double>::quiet_NaN();
    empty.grand_mean_information_gain = std::numeric_limits<double>::quiet_NaN();
    empty.warnings.push_back("no finalized sessions");
    return to_json(empty);
  }
  return to_json(aggregate_report(std::move(finalized)));
}

json SessionService::models() const {
  json members = json::array();
  for (const auto& id : rashomon_.members) {
    const auto& e = zoo_.at(id);
    members.push_back({{"config_id", id},
                       {"description", e.config.describe()},
                       {"levels", e.config.levels},
                       {"metrics", metrics_json(e.model)}});
  }
  return {{"rule", rashomon_.rule.to_string()},
          {"best_r_squared", rashomon_.best_r_squared},
          {"zoo_size", zoo_.entries.size()},
          {"members", members}};
}

json SessionService::model_viz(const std::string& config_id) const {
  return to_json(export_viz(zoo_.at(config_id).model));
}

json SessionService::config() const {
  return {{"port", options_.port},
          {"store", options_.store_dir.string()},
          {"zoo", options_.zoo_dir.string()},
          {"seed", options_.seed},
          {"rule", options_.rule.to_string()},
          {"defaults", settings_json(options_.defaults)},
          {"arms", arm_ids_.size()},
          {"dataset_fingerprint", zoo_.dataset_fingerprint}};
}

// ---------------------------------------------------------------------- http

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Conflict:
    case ErrorCode::Finalized:
    case ErrorCode::Exhausted:
    case ErrorCode::NoValidModel:
      return 409;
    default:
      return 500;
  }
}

struct HttpFrontend::Impl {
  SessionService& service;
  httplib::Server server;

  explicit Impl(SessionService& s) : service(s) {}

  using Handler = std::function<json(const httplib::Request&)>;

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, 200, h(req));
      } catch (const Error& e) {
        reply(res, http_status_for(e.code()), {{"error", error_code_name(e.code())}, {"message", e.what()}});
      } catch (const json::exception& e) {
        reply(res, 400, {{"error", "invalid_argument"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  static json body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, std::string("request body is not valid JSON: ") + e.what());
    }
  }

  void routes() {
    auto& s = service;
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/health", wrap([](const auto&) { return json{{"status", "ok"}}; }));
    server.Get("/config", wrap([&s](const auto&) { return s.config(); }));
    server.Get("/models", wrap([&s](const auto&) { return s.models(); }));
    server.Get("/models/:config_id/viz", wrap([&s](const auto& r) { return s.model_viz(r.path_params.at("config_id")); }));
    server.Get("/sessions", wrap([&s](const auto&) { return json{{"sessions", s.session_ids()}}; }));
    server.Post("/sessions", wrap([&s](const auto& r) { return s.create_session(body(r)); }));
    server.Get("/sessions/:id", wrap([&s](const auto& r) { return s.get_session(r.path_params.at("id")); }));
    server.Get("/sessions/:id/next", wrap([&s](const auto& r) { return s.next_model(r.path_params.at("id")); }));
    server.Post("/sessions/:id/rating",
                wrap([&s](const auto& r) { return s.submit_rating(r.path_params.at("id"), body(r)); }));
    server.Post("/sessions/:id/finalize", wrap([&s](const auto& r) { return s.finalize(r.path_params.at("id")); }));
    server.Get("/sessions/:id/analysis",
               wrap([&s](const auto& r) { return s.session_analysis(r.path_params.at("id")); }));
    server.Get("/sessions/:id/transcript", [&s](const httplib::Request& r, httplib::Response& res) {
      try {
        res.set_content(transcript_to_string(s.transcript(r.path_params.at("id"))), "text/csv");
      } catch (const Error& e) {
        reply(res, http_status_for(e.code()), {{"error", error_code_name(e.code())}, {"message", e.what()}});
      }
    });
    server.Get("/analysis", wrap([&s](const auto&) { return s.analysis_all(); }));
  }
};

HttpFrontend::HttpFrontend(SessionService& service) : impl_(std::make_unique<Impl>(service)) { impl_->routes(); }

HttpFrontend::~HttpFrontend() { stop(); }

bool HttpFrontend::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpFrontend::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpFrontend::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

void HttpFrontend::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace pgam
