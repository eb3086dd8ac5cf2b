#include "trusteval/stub_model.h"

#include <sstream>

#include <httplib.h>

#include "trusteval/error.h"

namespace trusteval {
namespace stub {

const std::vector<std::string>& Blocklist() {
  static const std::vector<std::string> kTerms = {
      "weapon", "bomb",    "explosive", "poison",  "steal",   "hack",
      "malware", "kill",   "drugs",     "launder", "counterfeit", "kidnap",
  };
  return kTerms;
}

bool IsBlocked(std::string_view prompt) {
  for (const auto& term : Blocklist()) {
    if (ContainsInsensitive(prompt, term)) return true;
  }
  return false;
}

bool IsUnlocked(std::string_view prompt) {
  return ContainsInsensitive(prompt, "hypothetical") &&
         ContainsInsensitive(prompt, "persona");
}

std::string Respond(std::string_view prompt, std::int64_t /*seed*/) {
  if (IsBlocked(prompt)) {
    return std::string(IsUnlocked(prompt) ? kUnsafeAnswer : kRefusal);
  }
  const std::string lower = ToLower(prompt);
  if (lower.find("hello") != std::string::npos) return std::string(kGreeting);
  return std::string(kBenign);
}

namespace {

std::vector<std::string> Tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string LastContent(const Json& messages, std::string_view role) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->value("role", "") == role) return it->value("content", "");
  }
  return "";
}

HttpResult JsonReply(int status, const Json& body) { return {status, body.dump()}; }

HttpResult Completion(const std::string& model, const std::string& content,
                      Json logprobs = nullptr) {
  Json choice = {{"index", 0},
                 {"message", {{"role", "assistant"}, {"content", content}}},
                 {"finish_reason", "stop"}};
  if (!logprobs.is_null()) choice["logprobs"] = {{"content", std::move(logprobs)}};
  return JsonReply(200, {{"object", "chat.completion"},
                         {"model", model},
                         {"choices", Json::array({choice})}});
}

}  // namespace

HttpResult HandleChatCompletion(const Json& request) {
  if (!request.is_object() || !request.contains("messages") ||
      !request["messages"].is_array()) {
    return JsonReply(400, {{"error", {{"message", "messages array required"}}}});
  }
  const std::string model = request.value("model", "");
  const Json& messages = request["messages"];
  const std::string user = LastContent(messages, "user");

  if (model == kDownModel) {
    return JsonReply(503, {{"error", {{"message", "stub endpoint is down"}}}});
  }
  if (model == kGuardModel) {
    const bool unsafe = user.find(kUnsafeMarker) != std::string::npos;
    return Completion(model, unsafe ? "unsafe" : "safe");
  }
  if (model == kGarbageModel) {
    return Completion(model, "I would rather not say.");
  }

  const std::int64_t seed = request.value("seed", std::int64_t{0});
  const std::string canned = Respond(user, seed);
  if (request.value("logprobs", false) && request.value("echo", false)) {
    // Score the assistant prefill token by token against the canned answer.
    const auto expected = Tokens(canned);
    const auto target = Tokens(LastContent(messages, "assistant"));
    Json lp = Json::array();
    for (std::size_t i = 0; i < target.size(); ++i) {
      const bool match = i < expected.size() && expected[i] == target[i];
      lp.push_back({{"token", target[i]}, {"logprob", match ? 0.0 : kMismatchLogprob}});
    }
    return Completion(model, "", std::move(lp));
  }
  return Completion(model, canned);
}

HttpResult HandleClassify(const Json& request) {
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
    return JsonReply(400, {{"error", {{"message", "text required"}}}});
  }
  const bool unsafe =
      request["text"].get<std::string>().find(kUnsafeMarker) != std::string::npos;
  return JsonReply(200, {{"label", "unsafe"}, {"score", unsafe ? 0.97 : 0.03}});
}

}  // namespace stub

HttpResult StubTransport::Post(const EndpointRef& endpoint, const std::string& path,
                               const Json& body) {
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  (void)endpoint;
  if (path == "/v1/chat/completions") return stub::HandleChatCompletion(body);
  if (path == "/classify") return stub::HandleClassify(body);
  return {404, R"({"error":{"message":"no such route"}})"};
}

StubModelServer::StubModelServer() : server_(std::make_unique<httplib::Server>()) {
  auto route = [](HttpResult (*handler)(const Json&)) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const Json::parse_error&) {
        res.status = 400;
        res.set_content(R"({"error":{"message":"invalid JSON"}})", "application/json");
        return;
      }
      const HttpResult out = handler(body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    };
  };
  server_->Post("/v1/chat/completions", route(&stub::HandleChatCompletion));
  server_->Post("/classify", route(&stub::HandleClassify));
}

StubModelServer::~StubModelServer() { Stop(); }

int StubModelServer::Start(int port) {
  port_ = port == 0 ? server_->bind_to_any_port("127.0.0.1")
                    : (server_->bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ < 0) throw Error(ErrorCode::kIoError, "stub server cannot bind");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubModelServer::Stop() {
  if (thread_.joinable()) {
    server_->stop();
    thread_.join();
  }
}

std::string StubModelServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

}  // namespace trusteval
