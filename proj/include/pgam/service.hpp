#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgam/bandit.hpp"
#include "pgam/error.hpp"
#include "pgam/zoo.hpp"

namespace pgam {

// One transcript file per session under <root>/sessions plus index.json.
// Every write goes to a temp file first and is renamed into place.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::vector<std::string> session_ids() const;
  bool contains(const std::string& id) const;
  Transcript load(const std::string& id) const;
  std::vector<Transcript> load_all() const;
  void save(const Transcript& t);
  // Returns a fresh id and persists the counter.
  std::string allocate_id();

 private:
  std::filesystem::path session_path(const std::string& id) const;
  void write_index() const;

  std::filesystem::path root_;
  std::vector<std::string> ids_;
  std::uint64_t next_id_ = 1;
};


struct ServiceOptions {
  PolicySettings defaults;
  ThresholdRule rule = ThresholdRule::relative(0.05);
  std::uint64_t seed = 0;
  std::filesystem::path zoo_dir;
  std::filesystem::path store_dir;
  int port = 8080;
};

// Transport-independent backend. Requests and responses are JSON objects;
// errors are pgam::Error with an ErrorCode the HTTP layer maps to a status.
class SessionService {
 public:
  using Clock = std::function<std::int64_t()>;

  SessionService(ModelZoo zoo, ServiceOptions options, Clock clock = {});

  nlohmann::json create_session(const nlohmann::json& request);
  nlohmann::json get_session(const std::string& id);
  nlohmann::json next_model(const std::string& id);
  nlohmann::json submit_rating(const std::string& id, const nlohmann::json& request);
  nlohmann::json finalize(const std::string& id);
  nlohmann::json session_analysis(const std::string& id);
  nlohmann::json analysis_all();
  nlohmann::json models() const;
  nlohmann::json model_viz(const std::string& config_id) const;
  nlohmann::json config() const;

  std::vector<std::string> session_ids() const;
  Transcript transcript(const std::string& id);
  const RashomonSet& rashomon() const { return rashomon_; }

 private:
  struct Slot {
    std::mutex mutex;
    std::unique_ptr<Session> session;
  };

  Slot& slot(const std::string& id);
  nlohmann::json presentation(const Session& s, const Selection& sel) const;
  nlohmann::json descriptor(const Session& s) const;

  ModelZoo zoo_;
  ServiceOptions options_;
  Clock clock_;
  RashomonSet rashomon_;
  std::vector<std::string> arm_ids_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
  std::mutex store_mutex_;
  SessionStore store_;
};

// HTTP front end over SessionService (cpp-httplib).
class HttpFrontend {
 public:
  explicit HttpFrontend(SessionService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  // Blocks until stop().
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port; follow with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status_for(ErrorCode code);

}  // namespace pgam
