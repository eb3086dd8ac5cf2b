#include "trusteval/gateway.h"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "trusteval/error.h"
#include "trusteval/stub_model.h"

namespace trusteval {

void GenerationConfig::Validate() const {
  std::map<std::string, std::string> bad;
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    bad["temperature"] = "must be >= 0";
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) bad["top_p"] = "must be in (0, 1]";
  if (max_tokens < 1) bad["max_tokens"] = "must be >= 1";
  if (!bad.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "invalid generation config", bad);
  }
}

std::string GenerationConfig::Digest() const { return JsonDigest(Json(*this)); }

void EndpointRef::Validate() const {
  std::map<std::string, std::string> bad;
  if (base_url.empty()) bad["base_url"] = "required";
  if (model_name.empty()) bad["model_name"] = "required";
  if (max_in_flight < 1) bad["max_in_flight"] = "must be >= 1";
  if (timeout.count() <= 0) bad["timeout_ms"] = "must be > 0";
  if (retry_budget < 1) bad["retry_budget"] = "must be >= 1";
  if (!bad.empty()) throw Error(ErrorCode::kInvalidConfig, "invalid endpoint", bad);
}

namespace {

class HttpTransport : public Transport {
 public:
  HttpResult Post(const EndpointRef& endpoint, const std::string& path,
                  const Json& body) override {
    // Split "scheme://host:port/prefix" so a path prefix survives.
    std::string origin = endpoint.base_url;
    std::string prefix;
    if (auto scheme = origin.find("://"); scheme != std::string::npos) {
      if (auto slash = origin.find('/', scheme + 3); slash != std::string::npos) {
        prefix = origin.substr(slash);
        origin.resize(slash);
      }
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
        endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (endpoint.auth_env) {
      if (const char* token = std::getenv(endpoint.auth_env->c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }
    auto res = client.Post(prefix + path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      throw TransportFailure{err == httplib::Error::ConnectionTimeout ||
                                 err == httplib::Error::Read,
                             httplib::to_string(err)};
    }
    return {res->status, res->body};
  }
};

bool Transient(int status) { return status == 429 || status >= 500; }

Json MessagesJson(const std::vector<ChatMessage>& messages) {
  Json arr = Json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

Json ChatBody(const EndpointRef& endpoint, const std::vector<ChatMessage>& messages,
              const GenerationConfig& cfg) {
  Json body = {{"model", endpoint.model_name},
               {"messages", MessagesJson(messages)},
               {"temperature", cfg.temperature},
               {"top_p", cfg.top_p},
               {"max_tokens", cfg.max_tokens}};
  if (cfg.seed) body["seed"] = *cfg.seed;
  if (!cfg.stop.empty()) body["stop"] = cfg.stop;
  return body;
}

}  // namespace

std::unique_ptr<Transport> MakeHttpTransport() { return std::make_unique<HttpTransport>(); }

std::chrono::milliseconds RetryPolicy::NominalDelay(int retry) const {
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(base_delay.count() * std::pow(factor, retry)));
}

ModelGateway::ModelGateway(GatewayOptions options)
    : options_(std::move(options)), jitter_rng_(std::random_device{}()) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.stub_transport) options_.stub_transport = std::make_shared<StubTransport>();
  if (!options_.http_transport) options_.http_transport = MakeHttpTransport();
  if (!options_.clock) options_.clock = SystemClock();
}

ModelGateway::~ModelGateway() = default;

ModelGateway::Slot& ModelGateway::SlotFor(const EndpointRef& endpoint) {
  std::lock_guard lock(slots_mu_);
  auto& slot = slots_[endpoint.Key()];
  if (!slot) slot = std::make_unique<Slot>();
  return *slot;
}

const ModelGateway::Slot* ModelGateway::FindSlot(const EndpointRef& endpoint) const {
  std::lock_guard lock(slots_mu_);
  auto it = slots_.find(endpoint.Key());
  return it == slots_.end() ? nullptr : it->second.get();
}

std::size_t ModelGateway::MaxObservedInFlight(const EndpointRef& endpoint) const {
  const Slot* slot = FindSlot(endpoint);
  if (!slot) return 0;
  std::lock_guard lock(slot->mu);
  return slot->max_observed;
}

std::size_t ModelGateway::RequestCount(const EndpointRef& endpoint) const {
  const Slot* slot = FindSlot(endpoint);
  if (!slot) return 0;
  std::lock_guard lock(slot->mu);
  return slot->requests;
}

std::chrono::milliseconds ModelGateway::Jittered(int retry) {
  const auto nominal = options_.retry.NominalDelay(retry);
  double u;
  {
    std::lock_guard lock(rng_mu_);
    u = jitter_rng_.Uniform();
  }
  const double scale = 1.0 + options_.retry.jitter * (2.0 * u - 1.0);
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(std::llround(nominal.count() * scale)));
}

Json ModelGateway::PostWithRetry(const EndpointRef& endpoint, const std::string& path,
                                 const Json& body) {
  endpoint.Validate();
  Transport& transport = endpoint.base_url.starts_with("stub://")
                             ? *options_.stub_transport
                             : *options_.http_transport;
  Slot& slot = SlotFor(endpoint);
  std::string last_error;
  bool last_timeout = false;
  for (int attempt = 0; attempt < endpoint.retry_budget; ++attempt) {
    if (attempt > 0) options_.sleep(Jittered(attempt - 1));
    {
      std::unique_lock lock(slot.mu);
      slot.cv.wait(lock, [&] { return slot.in_flight < endpoint.max_in_flight; });
      ++slot.in_flight;
      ++slot.requests;
      slot.max_observed = std::max(slot.max_observed, slot.in_flight);
    }
    std::optional<HttpResult> result;
    try {
      result = transport.Post(endpoint, path, body);
    } catch (const TransportFailure& f) {
      last_error = f.message;
      last_timeout = f.timeout;
    }
    {
      std::lock_guard lock(slot.mu);
      --slot.in_flight;
    }
    slot.cv.notify_one();
    if (!result) continue;

    if (result->status >= 200 && result->status < 300) {
      try {
        return Json::parse(result->body);
      } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::kResponseMalformed,
                    fmt::format("{} returned invalid JSON: {}", endpoint.base_url, e.what()));
      }
    }
    last_error = fmt::format("HTTP {}", result->status);
    last_timeout = false;
    if (!Transient(result->status)) {
      throw Error(ErrorCode::kEndpointUnavailable,
                  fmt::format("{}{} rejected the request: {}", endpoint.base_url, path,
                              last_error),
                  {{"status", std::to_string(result->status)}});
    }
  }
  throw Error(last_timeout ? ErrorCode::kTimeout : ErrorCode::kEndpointUnavailable,
              fmt::format("{}{} failed after {} attempts: {}", endpoint.base_url, path,
                          endpoint.retry_budget, last_error),
              {{"attempts", std::to_string(endpoint.retry_budget)}});
}

std::string ModelGateway::Complete(const EndpointRef& endpoint,
                                   const std::vector<ChatMessage>& messages,
                                   const GenerationConfig& cfg) {
  cfg.Validate();
  const Json response =
      PostWithRetry(endpoint, "/v1/chat/completions", ChatBody(endpoint, messages, cfg));
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw std::out_of_range("content");
    return content.get<std::string>();
  } catch (const std::exception&) {
    throw Error(ErrorCode::kResponseMalformed,
                endpoint.base_url + " response lacks choices[0].message.content");
  }
}

PRPair ModelGateway::Generate(const EndpointRef& endpoint, std::string_view prompt_id,
                              std::string_view prompt, const GenerationConfig& cfg) {
  std::vector<ChatMessage> messages;
  if (cfg.system_prompt) messages.push_back({"system", *cfg.system_prompt});
  messages.push_back({"user", std::string(prompt)});
  PRPair pair;
  pair.prompt_id = std::string(prompt_id);
  pair.prompt_text = std::string(prompt);
  pair.model_name = endpoint.model_name;
  pair.gen_config_digest = cfg.Digest();
  pair.response_text = Complete(endpoint, messages, cfg);
  pair.created_at = FormatTimestamp(options_.clock());
  return pair;
}

double ModelGateway::ScoreTargetLogprob(const EndpointRef& endpoint,
                                        std::string_view prompt,
                                        std::string_view target) {
  if (!endpoint.logprob_echo) {
    throw Error(ErrorCode::kUnsupported,
                endpoint.model_name + " does not advertise log-probability echo");
  }
  GenerationConfig cfg;
  cfg.max_tokens = 1;
  Json body = ChatBody(endpoint,
                       {{"user", std::string(prompt)}, {"assistant", std::string(target)}},
                       cfg);
  body["logprobs"] = true;
  body["echo"] = true;
  const Json response = PostWithRetry(endpoint, "/v1/chat/completions", body);
  const Json* tokens = nullptr;
  try {
    tokens = &response.at("choices").at(0).at("logprobs").at("content");
  } catch (const std::exception&) {
    throw Error(ErrorCode::kUnsupported,
                endpoint.model_name + " returned no per-token log-probabilities");
  }
  if (!tokens->is_array()) {
    throw Error(ErrorCode::kUnsupported,
                endpoint.model_name + " returned no per-token log-probabilities");
  }
  double sum = 0.0;
  for (const auto& t : *tokens) {
    if (!t.contains("logprob") || !t["logprob"].is_number()) {
      throw Error(ErrorCode::kResponseMalformed, "token entry lacks a numeric logprob");
    }
    sum += t["logprob"].get<double>();
  }
  return sum;
}

ModelGateway::Classification ModelGateway::Classify(const EndpointRef& endpoint,
                                                    std::string_view text) {
  const Json response = PostWithRetry(endpoint, "/classify", {{"text", std::string(text)}});
  try {
    return {response.at("label").get<std::string>(), response.at("score").get<double>()};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kResponseMalformed,
                endpoint.base_url + " classify response lacks label/score");
  }
}

void to_json(Json& j, const GenerationConfig& c) {
  j = Json{{"temperature", c.temperature},
           {"top_p", c.top_p},
           {"max_tokens", c.max_tokens},
           {"system_prompt", c.system_prompt ? Json(*c.system_prompt) : Json()},
           {"seed", c.seed ? Json(*c.seed) : Json()},
           {"stop", c.stop}};
}

void from_json(const Json& j, GenerationConfig& c) {
  c = GenerationConfig{};
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (j.contains("system_prompt") && j["system_prompt"].is_string()) {
    c.system_prompt = j["system_prompt"].get<std::string>();
  }
  if (j.contains("seed") && j["seed"].is_number_integer()) {
    c.seed = j["seed"].get<std::int64_t>();
  }
  if (j.contains("stop") && j["stop"].is_array()) {
    c.stop = j["stop"].get<std::vector<std::string>>();
  }
}

void to_json(Json& j, const EndpointRef& e) {
  j = Json{{"base_url", e.base_url},
           {"model_name", e.model_name},
           {"auth_env", e.auth_env ? Json(*e.auth_env) : Json()},
           {"timeout_ms", e.timeout.count()},
           {"max_in_flight", e.max_in_flight},
           {"retry_budget", e.retry_budget},
           {"logprob_echo", e.logprob_echo}};
}

void from_json(const Json& j, EndpointRef& e) {
  e = EndpointRef{};
  e.base_url = j.at("base_url").get<std::string>();
  e.model_name = j.at("model_name").get<std::string>();
  if (j.contains("auth_env") && j["auth_env"].is_string()) {
    e.auth_env = j["auth_env"].get<std::string>();
  }
  e.timeout = std::chrono::milliseconds(j.value("timeout_ms", e.timeout.count()));
  e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
  e.retry_budget = j.value("retry_budget", e.retry_budget);
  e.logprob_echo = j.value("logprob_echo", e.logprob_echo);
}

void to_json(Json& j, const PRPair& p) {
  j = Json{{"prompt_id", p.prompt_id},
           {"prompt_text", p.prompt_text},
           {"response_text", p.response_text ? Json(*p.response_text) : Json()},
           {"model_name", p.model_name},
           {"gen_config_digest", p.gen_config_digest},
           {"created_at", p.created_at},
           {"attempt_index", p.attempt_index ? Json(*p.attempt_index) : Json()}};
}

void from_json(const Json& j, PRPair& p) {
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.prompt_text = j.at("prompt_text").get<std::string>();
  p.response_text.reset();
  if (j.contains("response_text") && j["response_text"].is_string()) {
    p.response_text = j["response_text"].get<std::string>();
  }
  p.model_name = j.value("model_name", "");
  p.gen_config_digest = j.value("gen_config_digest", "");
  p.created_at = j.value("created_at", "");
  p.attempt_index.reset();
  if (j.contains("attempt_index") && j["attempt_index"].is_number()) {
    p.attempt_index = j["attempt_index"].get<std::size_t>();
  }
}

}  // namespace trusteval
