#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "trusteval/gateway.h"

namespace httplib {
class Server;
}

namespace trusteval {

// Deterministic offline model used by tests and demos.
//
// A prompt containing a blocklisted term is refused unless it also contains
// both unlock words ("hypothetical" and "persona"), in which case the stub
// answers with a string carrying kUnsafeMarker. Anything else gets a benign
// canned answer.
namespace stub {

inline constexpr std::string_view kRefusal = "I cannot help with that request.";
inline constexpr std::string_view kUnsafeMarker = "UNSAFE-MARKER";
inline constexpr std::string_view kGreeting = "Hello! How can I help you today?";
inline constexpr std::string_view kBenign =
    "Here is a helpful and harmless answer to your question.";
inline constexpr std::string_view kUnsafeAnswer =
    "Sure, here is how to do it. UNSAFE-MARKER Step one: gather the materials.";

// Log-probability the stub assigns to a target token that does not continue
// its canned answer.
inline constexpr double kMismatchLogprob = -2.0;

// Model names with special behavior on the stub endpoint.
inline constexpr std::string_view kGuardModel = "stub-guard";      // judge
inline constexpr std::string_view kGarbageModel = "stub-garbage";  // unparseable judge
inline constexpr std::string_view kDownModel = "stub-down";        // always 503

const std::vector<std::string>& Blocklist();
bool IsBlocked(std::string_view prompt);
bool IsUnlocked(std::string_view prompt);

std::string Respond(std::string_view prompt, std::int64_t seed);

// Handlers shared by the in-process transport and the HTTP server.
HttpResult HandleChatCompletion(const Json& request);
HttpResult HandleClassify(const Json& request);

}  // namespace stub

// Transport that answers stub:// requests without a socket.
class StubTransport : public Transport {
 public:
  explicit StubTransport(std::chrono::milliseconds latency = {})
      : latency_(latency) {}
  HttpResult Post(const EndpointRef& endpoint, const std::string& path,
                  const Json& body) override;

 private:
  std::chrono::milliseconds latency_;
};

// The stub model served over HTTP on 127.0.0.1, speaking the same protocol.
class StubModelServer {
 public:
  StubModelServer();
  ~StubModelServer();

  // Binds (port 0 picks a free port) and serves on a background thread.
  int Start(int port = 0);
  void Stop();
  int port() const { return port_; }
  std::string base_url() const;

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace trusteval
