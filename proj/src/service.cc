#include "trusteval/service.h"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>
#include <httplib.h>

namespace trusteval {

Json ApiErrorBody(int status, std::string_view code, std::string_view message,
                  const std::map<std::string, std::string>& details) {
  Json body = {{"status", status}, {"code", code}, {"message", message}};
  if (!details.empty()) body["details"] = details;
  return body;
}

Json ApiErrorBody(const Error& e) {
  return ApiErrorBody(ErrorHttpStatus(e.code()), ErrorCodeName(e.code()), e.what(), e.details());
}

namespace {

constexpr const char* kJson = "application/json";

void SendJson(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void SendError(httplib::Response& res, const Error& e) {
  SendJson(res, ErrorHttpStatus(e.code()), ApiErrorBody(e));
}

std::string_view DefaultCode(int status) {
  switch (status) {
    case 400: return "invalid_argument";
    case 401: return "unauthorized";
    case 404: return "not_found";
    case 405: return "method_not_allowed";
    case 413: return "upload_too_large";
    default: return status >= 500 ? "internal" : "error";
  }
}

std::size_t ParseCount(const httplib::Request& req, const char* key, std::size_t fallback,
                       std::size_t max) {
  if (!req.has_param(key)) return fallback;
  const std::string text = req.get_param_value(key);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{} must be a non-negative integer", key),
                {{key, text}});
  }
  return std::min(value, max);
}

// Wraps a handler so library errors become ApiError responses.
httplib::Server::Handler Guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      SendError(res, e);
    } catch (const Json::exception& e) {
      SendJson(res, 400, ApiErrorBody(400, "invalid_argument", e.what()));
    }
  };
}

}  // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)),
      store_(options_.store_root, options_.clock),
      gateway_(options_.gateway),
      server_(std::make_unique<httplib::Server>()) {
  Routes();
}

Service::~Service() {
  Stop();
  WaitForRuns();
}

void Service::Routes() {
  auto& s = *server_;
  // Multipart framing adds a little on top of the file itself; the file size
  // is checked exactly in the handler.
  s.set_payload_max_length(options_.max_upload_bytes + (1u << 20));

  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.api_token || !req.path.starts_with("/api/")) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    if (req.get_header_value("Authorization") != "Bearer " + *options_.api_token) {
      SendJson(res, 401, ApiErrorBody(401, "unauthorized", "missing or invalid bearer token"));
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string message =
        res.status == 404 ? fmt::format("no route for {} {}", req.method, req.path)
                          : std::string(httplib::status_message(res.status));
    res.set_content(ApiErrorBody(res.status, DefaultCode(res.status), message).dump(), kJson);
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                             std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    SendJson(res, 500, ApiErrorBody(500, "internal", message));
  });

  s.Get("/api/taxonomy", Guarded([](const httplib::Request&, httplib::Response& res) {
    Json out = Json::array();
    for (const auto& t : TaxonomyList()) {
      out.push_back({{"code", TaxonomyCodeString(t.code)}, {"name", t.name}});
    }
    SendJson(res, 200, out);
  }));

  s.Post("/api/datasets", Guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string content;
    IngestOptions opts;
    opts.max_bytes = options_.max_upload_bytes;
    if (req.is_multipart_form_data()) {
      if (req.files.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "multipart upload has no parts",
                    {{"file", "required"}});
      }
      auto file = req.files.find("file");
      if (file == req.files.end()) {
        file = std::find_if(req.files.begin(), req.files.end(),
                            [](const auto& kv) { return !kv.second.filename.empty(); });
      }
      if (file == req.files.end()) {
        throw Error(ErrorCode::kInvalidArgument, "no file part", {{"file", "required"}});
      }
      content = file->second.content;
      if (auto id = req.files.find("dataset_id"); id != req.files.end()) {
        opts.dataset_id = Trim(id->second.content);
      }
    } else {
      content = req.body;
    }
    if (req.has_param("dataset_id")) opts.dataset_id = req.get_param_value("dataset_id");
    if (content.size() > options_.max_upload_bytes) {
      throw Error(ErrorCode::kUploadTooLarge,
                  fmt::format("upload of {} bytes exceeds the {} byte limit", content.size(),
                              options_.max_upload_bytes));
    }
    const IngestResult result = IngestDataset(content, BundledMapping(), opts);
    const std::string ref = store_.PutDataset(result);
    SendJson(res, 201, {{"dataset_ref", ref}, {"manifest", result.manifest}});
  }));

  s.Get("/api/runs", Guarded([this](const httplib::Request&, httplib::Response& res) {
    Json out = Json::array();
    for (const auto& id : store_.ListRuns()) out.push_back(store_.LoadState(id));
    SendJson(res, 200, out);
  }));

  s.Post("/api/runs", Guarded([this](const httplib::Request& req, httplib::Response& res) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kInvalidConfig, "body is not valid JSON", {{"body", e.what()}});
    }
    RunConfig cfg = body.get<RunConfig>();
    FillJudgeTemplates(cfg.judges, DataDir() / "judge_templates");
    std::optional<std::string> key;
    if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
    const std::string run_id = store_.CreateRun(cfg, key);
    SendJson(res, 201, {{"run_id", run_id}});
  }));

  s.Post(R"(/api/runs/([^/]+)/start)",
         Guarded([this](const httplib::Request& req, httplib::Response& res) {
           const std::string run_id = req.matches[1];
           StartRun(run_id);
           SendJson(res, 202, {{"run_id", run_id}, {"stage", StageName(store_.LoadState(run_id).stage)}});
         }));

  s.Get(R"(/api/runs/([^/]+))", Guarded([this](const httplib::Request& req, httplib::Response& res) {
    SendJson(res, 200, store_.LoadState(req.matches[1].str()));
  }));

  s.Get(R"(/api/runs/([^/]+)/report)",
        Guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string run_id = req.matches[1];
          if (auto text = store_.LoadReportText(run_id)) {
            res.status = 200;
            res.set_content(*text, kJson);
            return;
          }
          // Not aggregated yet: a live partial report with a stage watermark.
          ReportInputs in = CollectReportInputs(store_, run_id);
          in.partial = true;
          res.status = 200;
          res.set_content(SerializeReport(BuildReport(in)), kJson);
        }));

  s.Get(R"(/api/runs/([^/]+)/examples)",
        Guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string run_id = req.matches[1];
          std::optional<Verdict> verdict = Verdict::kUnsafe;
          if (req.has_param("verdict")) {
            const std::string v = req.get_param_value("verdict");
            if (v == "any" || v == "all") {
              verdict.reset();
            } else if (auto parsed = ParseVerdict(v)) {
              verdict = parsed;
            } else {
              throw Error(ErrorCode::kInvalidArgument, "verdict must be safe, unsafe or any",
                          {{"verdict", v}});
            }
          }
          std::optional<std::string> taxonomy;
          if (req.has_param("taxonomy")) {
            const std::string t = req.get_param_value("taxonomy");
            if (auto code = ParseTaxonomyCode(t)) {
              taxonomy = TaxonomyCodeString(*code);
            } else if (t == AttributionString(std::nullopt)) {
              taxonomy = t;
            } else {
              throw Error(ErrorCode::kInvalidArgument, "unknown taxonomy", {{"taxonomy", t}});
            }
          }
          const std::size_t limit = ParseCount(req, "limit", 20, 100);
          const std::size_t offset = ParseCount(req, "offset", 0, SIZE_MAX);

          std::vector<Json> matches;
          for (auto& e : CollectExamples(CollectReportInputs(store_, run_id), verdict)) {
            if (!taxonomy || e["taxonomy"] == *taxonomy) matches.push_back(std::move(e));
          }
          Json items = Json::array();
          for (std::size_t i = offset; i < matches.size() && i < offset + limit; ++i) {
            items.push_back(matches[i]);
          }
          SendJson(res, 200,
                   {{"run_id", run_id},
                    {"taxonomy", taxonomy ? Json(*taxonomy) : Json()},
                    {"verdict", verdict ? Json(VerdictName(*verdict)) : Json("any")},
                    {"total", matches.size()},
                    {"limit", limit},
                    {"offset", offset},
                    {"items", items}});
        }));

  s.Get(R"(/api/runs/([^/]+)/events)",
        Guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string run_id = req.matches[1];
          store_.LoadState(run_id);  // 404 before the stream opens
          res.set_header("Cache-Control", "no-cache");
          auto last = std::make_shared<std::optional<std::uint64_t>>();
          res.set_chunked_content_provider(
              "text/event-stream",
              [this, run_id, last](std::size_t, httplib::DataSink& sink) {
                const RunState state = store_.LoadState(run_id);
                if (!*last || **last != state.sequence) {
                  *last = state.sequence;
                  const std::string event =
                      fmt::format("event: run_state\ndata: {}\n\n", Json(state).dump());
                  if (!sink.write(event.data(), event.size())) return false;
                }
                bool stopping;
                {
                  std::lock_guard<std::mutex> guard(runs_mu_);
                  stopping = stopping_;
                }
                if (IsTerminal(state.stage) || stopping) {
                  sink.done();
                  return true;
                }
                std::this_thread::sleep_for(options_.event_poll);
                return true;
              });
        }));

  if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

void Service::StartRun(const std::string& run_id) {
  const RunState state = store_.LoadState(run_id);
  if (IsTerminal(state.stage)) {
    throw Error(ErrorCode::kAlreadyFinished,
                fmt::format("run {} is already {}", run_id, StageName(state.stage)));
  }
  std::lock_guard<std::mutex> guard(runs_mu_);
  if (active_.count(run_id) || store_.IsLocked(run_id)) {
    throw Error(ErrorCode::kAlreadyRunning, fmt::format("run {} is already executing", run_id));
  }
  active_.insert(run_id);
  workers_.emplace_back([this, run_id] {
    {
      std::unique_lock<std::mutex> lock(runs_mu_);
      runs_cv_.wait(lock, [&] { return executing_ < options_.worker_budget || stopping_; });
      if (stopping_) {
        active_.erase(run_id);
        return;
      }
      ++executing_;
    }
    try {
      Orchestrator(store_, gateway_, options_.orchestrator).Execute(run_id);
    } catch (const std::exception&) {
      // Execute records pipeline failures in the run state; anything else
      // (lock contention) leaves the run resumable.
    }
    std::lock_guard<std::mutex> lock(runs_mu_);
    --executing_;
    active_.erase(run_id);
    runs_cv_.notify_all();
  });
}

int Service::Start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host)
                    : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error(ErrorCode::kIoError, fmt::format("cannot bind {}:{}", host, port));
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Service::Listen(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoError, fmt::format("cannot bind {}:{}", host, port));
  }
  port_ = port;
  server_->listen_after_bind();
}

void Service::Stop() {
  {
    std::lock_guard<std::mutex> guard(runs_mu_);
    stopping_ = true;
    runs_cv_.notify_all();
  }
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
}

void Service::WaitForRuns() {
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> guard(runs_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
}

}  // namespace trusteval
