#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "trusteval/error.h"
#include "trusteval/store.h"

namespace httplib {
class Server;
}

namespace trusteval {

// Body of every non-2xx API response.
Json ApiErrorBody(int status, std::string_view code, std::string_view message,
                  const std::map<std::string, std::string>& details = {});
Json ApiErrorBody(const Error& e);

struct ServiceOptions {
  std::filesystem::path store_root;
  // When set, every /api request needs "Authorization: Bearer <token>".
  std::optional<std::string> api_token;
  // Served at "/" when set (the dashboard build).
  std::optional<std::filesystem::path> static_dir;
  std::size_t max_upload_bytes = kDefaultMaxUploadBytes;
  // Runs executing concurrently across the service.
  std::size_t worker_budget = 2;
  std::chrono::milliseconds event_poll{50};
  Clock clock = SystemClock();
  GatewayOptions gateway;
  OrchestratorOptions orchestrator;
};

// HTTP API over one run store. Runs started through the API execute on
// background threads.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds host:port (0 picks a free port) and serves on a background thread.
  int Start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void Listen(const std::string& host, int port);
  void Stop();
  // Waits for every started run to finish.
  void WaitForRuns();

  RunStore& store() { return store_; }
  int port() const { return port_; }

 private:
  void Routes();
  void StartRun(const std::string& run_id);

  ServiceOptions options_;
  RunStore store_;
  ModelGateway gateway_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  int port_ = -1;

  std::mutex runs_mu_;
  std::condition_variable runs_cv_;
  std::set<std::string> active_;
  std::size_t executing_ = 0;
  std::vector<std::thread> workers_;
  bool stopping_ = false;
};

}  // namespace trusteval
