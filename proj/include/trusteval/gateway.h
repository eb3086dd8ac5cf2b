#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trusteval/util.h"

namespace trusteval {

struct GenerationConfig {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 256;
  std::optional<std::string> system_prompt;
  std::optional<std::int64_t> seed;
  std::vector<std::string> stop;

  // Throws kInvalidConfig on out-of-range values.
  void Validate() const;
  std::string Digest() const;
};

struct EndpointRef {
  // http(s)://host:port, or stub:// for the in-process stub model.
  std::string base_url;
  std::string model_name;
  // Name of the environment variable holding a bearer token.
  std::optional<std::string> auth_env;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
  // Total attempts per request, including the first.
  int retry_budget = 3;
  // Endpoint can echo per-token log-probabilities of a supplied target.
  bool logprob_echo = false;

  void Validate() const;
  std::string Key() const { return base_url + "|" + model_name; }
};

// One prompt and the target model's answer to it.
struct PRPair {
  std::string prompt_id;
  std::string prompt_text;
  std::optional<std::string> response_text;
  std::string model_name;
  std::string gen_config_digest;
  std::string created_at;
  std::optional<std::size_t> attempt_index;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

// Raw HTTP exchange. Implementations throw TransportFailure for connection
// problems and timeouts; HTTP error statuses are returned, not thrown.
struct HttpResult {
  int status = 0;
  std::string body;
};

struct TransportFailure {
  bool timeout = false;
  std::string message;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult Post(const EndpointRef& endpoint, const std::string& path,
                          const Json& body) = 0;
};

std::unique_ptr<Transport> MakeHttpTransport();

struct RetryPolicy {
  std::chrono::milliseconds base_delay{250};
  double factor = 2.0;
  double jitter = 0.2;

  // Delay before retry number `retry` (0-based), before jitter.
  std::chrono::milliseconds NominalDelay(int retry) const;
};

struct GatewayOptions {
  RetryPolicy retry;
  Clock clock = SystemClock();
  std::function<void(std::chrono::milliseconds)> sleep;  // default: real sleep
  // Used for base_url "stub://"; default is the in-process stub model.
  std::shared_ptr<Transport> stub_transport;
  // Used for everything else; default is cpp-httplib.
  std::shared_ptr<Transport> http_transport;
};

// Chat-completions client shared by the target and all judges. Enforces
// per-endpoint admission (at most max_in_flight outstanding requests) and
// retries transient failures with exponential backoff. Thread-safe.
class ModelGateway {
 public:
  explicit ModelGateway(GatewayOptions options = {});
  ~ModelGateway();

  ModelGateway(const ModelGateway&) = delete;
  ModelGateway& operator=(const ModelGateway&) = delete;

  // Throws kEndpointUnavailable, kResponseMalformed or kTimeout.
  PRPair Generate(const EndpointRef& endpoint, std::string_view prompt_id,
                  std::string_view prompt, const GenerationConfig& cfg);

  // choices[0].message.content of one chat completion.
  std::string Complete(const EndpointRef& endpoint,
                       const std::vector<ChatMessage>& messages,
                       const GenerationConfig& cfg);

  // Sum of per-token log-probabilities the endpoint assigns to `target` as a
  // continuation of `prompt`. Throws kUnsupported if the endpoint cannot
  // echo log-probabilities.
  double ScoreTargetLogprob(const EndpointRef& endpoint, std::string_view prompt,
                            std::string_view target);

  struct Classification {
    std::string label;
    double score = 0.0;
  };
  // POST {base_url}/classify {text} -> {label, score}.
  Classification Classify(const EndpointRef& endpoint, std::string_view text);

  // Instrumentation.
  std::size_t MaxObservedInFlight(const EndpointRef& endpoint) const;
  std::size_t RequestCount(const EndpointRef& endpoint) const;

  const Clock& clock() const { return options_.clock; }

 private:
  struct Slot {
    mutable std::mutex mu;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::size_t max_observed = 0;
    std::size_t requests = 0;
  };

  Slot& SlotFor(const EndpointRef& endpoint);
  const Slot* FindSlot(const EndpointRef& endpoint) const;
  Json PostWithRetry(const EndpointRef& endpoint, const std::string& path,
                     const Json& body);
  std::chrono::milliseconds Jittered(int retry);

  GatewayOptions options_;
  mutable std::mutex slots_mu_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::mutex rng_mu_;
  Rng jitter_rng_;
};

void to_json(Json& j, const GenerationConfig& c);
void from_json(const Json& j, GenerationConfig& c);
void to_json(Json& j, const EndpointRef& e);
void from_json(const Json& j, EndpointRef& e);
void to_json(Json& j, const PRPair& p);
void from_json(const Json& j, PRPair& p);

}  // namespace trusteval
