// Command-line front end: ingest datasets, run evaluations, serve the API and
// print reports.

#include <pthread.h>
#include <signal.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "trusteval/dataset.h"
#include "trusteval/error.h"
#include "trusteval/metrics.h"
#include "trusteval/service.h"
#include "trusteval/store.h"
#include "trusteval/stub_model.h"

namespace fs = std::filesystem;
using namespace trusteval;

namespace {

constexpr int kExitRunFailed = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string DefaultStore() {
  if (const char* env = std::getenv("TRUSTEVAL_STORE"); env && *env) return env;
  return "trusteval-store";
}

std::string DefaultDatasetDir() {
  if (const char* env = std::getenv("TRUSTEVAL_DATASETS"); env && *env) return env;
  return (DataDir() / "datasets").string();
}

// KIND[:ID][@URL[#MODEL]][+attr]
JudgeSpec ParseJudgeSpec(std::string text, std::size_t index) {
  JudgeSpec spec;
  if (text.ends_with("+attr")) {
    spec.is_attributor = true;
    text.resize(text.size() - 5);
  }
  std::string head = text;
  if (auto at = text.find('@'); at != std::string::npos) {
    head = text.substr(0, at);
    std::string url = text.substr(at + 1);
    EndpointRef endpoint;
    if (auto hash = url.find('#'); hash != std::string::npos) {
      endpoint.model_name = url.substr(hash + 1);
      url.resize(hash);
    }
    endpoint.base_url = url;
    spec.endpoint = endpoint;
  }
  std::string kind = head;
  if (auto colon = head.find(':'); colon != std::string::npos) {
    kind = head.substr(0, colon);
    spec.judge_id = head.substr(colon + 1);
  }
  if (kind == "stub") {
    spec.kind = JudgeKind::kStub;
  } else if (kind == "chat") {
    spec.kind = JudgeKind::kChatTemplate;
  } else if (kind == "classifier") {
    spec.kind = JudgeKind::kClassifierEndpoint;
  } else if (auto parsed = ParseJudgeKind(kind)) {
    spec.kind = *parsed;
  } else {
    throw UsageError(fmt::format("unknown judge kind '{}' in '{}'", kind, text));
  }
  if (spec.judge_id.empty()) spec.judge_id = fmt::format("{}-{}", kind, index + 1);
  return spec;
}

std::vector<JudgeSpec> ParseJudgeList(const std::string& list) {
  std::vector<JudgeSpec> out;
  for (const auto& item : Split(list, ',')) {
    if (auto t = Trim(item); !t.empty()) out.push_back(ParseJudgeSpec(t, out.size()));
  }
  if (out.empty()) throw UsageError("--judges needs at least one judge spec");
  return out;
}

CategoryMapping LoadMapping(const std::string& path) {
  return path.empty() ? BundledMapping() : CategoryMapping::Load(path);
}

// Stored ref, built-in benchmark name, or a file to ingest.
std::string ResolveDataset(RunStore& store, const std::string& id, const std::string& dataset_dir,
                           const CategoryMapping& mapping) {
  if (store.HasDataset(id)) return id;
  for (const auto& b : BuiltinDatasets()) {
    if (b.name == id) return store.PutDataset(LoadBuiltin(id, dataset_dir, mapping));
  }
  if (fs::exists(id)) return store.PutDataset(IngestDataset(ReadFile(id), mapping));
  throw Error(ErrorCode::kDatasetNotFound,
              fmt::format("'{}' is not a stored dataset, a built-in benchmark or a file", id));
}

void PrintError(const Error& e) {
  std::cerr << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << "\n";
  for (const auto& [k, v] : e.details()) std::cerr << "  " << k << ": " << v << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety and robustness evaluation for chat models", "trusteval"};
  app.require_subcommand(1);

  std::string store_dir = DefaultStore();
  app.add_option("--store", store_dir, "Run store directory (env TRUSTEVAL_STORE)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Normalize a dataset file into the store");
  std::string ingest_file, ingest_mapping, ingest_scope = "custom";
  ingest->add_option("file", ingest_file, "Dataset file")->required();
  ingest->add_option("--mapping", ingest_mapping, "Category mapping file");
  ingest->add_option("--dataset-id", ingest_scope, "Mapping scope for source categories");

  // run
  auto* run = app.add_subcommand("run", "Evaluate a target model end to end");
  std::string target_url, target_model, judges, dataset, mode = "safety", attack_file, out_file,
      run_mapping, dataset_dir = DefaultDatasetDir();
  std::optional<std::int64_t> seed;
  std::size_t batch_size = 16;
  bool print_table = false;
  run->add_option("--target-url", target_url, "Target base URL (stub:// for the stub model)")
      ->required();
  run->add_option("--target-model", target_model, "Target model name")->required();
  run->add_option("--judges", judges, "Comma-separated KIND[:ID][@URL[#MODEL]][+attr]")
      ->required();
  run->add_option("--dataset", dataset, "Stored dataset ref, built-in name or file")->required();
  run->add_option("--mode", mode, "safety, robustness or both")
      ->check(CLI::IsMember({"safety", "robustness", "both"}));
  run->add_option("--attack-config", attack_file, "Attack configuration (JSON)");
  run->add_option("--seed", seed, "Seed for generation and attacks");
  run->add_option("--out", out_file, "Report output path")->required();
  run->add_option("--mapping", run_mapping, "Category mapping file");
  run->add_option("--dataset-dir", dataset_dir, "Where built-in benchmark files are installed");
  run->add_option("--batch-size", batch_size, "Prompts per checkpoint")
      ->check(CLI::PositiveNumber);
  run->add_flag("--table", print_table, "Print the summary tables");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1", static_dir;
  std::size_t workers = 2;
  serve->add_option("--port", port, "Port")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--static", static_dir, "Directory served at /");
  serve->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);

  // report
  auto* report = app.add_subcommand("report", "Print a run report");
  std::string report_run, format = "json";
  report->add_option("run-id", report_run, "Run id")->required();
  report->add_option("--format", format, "json or table")
      ->check(CLI::IsMember({"json", "table"}));

  // stub-server
  auto* stub_server = app.add_subcommand("stub-server", "Serve the offline stub model over HTTP");
  int stub_port = 8081;
  stub_server->add_option("--port", stub_port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*ingest) {
      RunStore store(store_dir);
      IngestOptions opts;
      opts.dataset_id = ingest_scope;
      const auto result = IngestDataset(ReadFile(ingest_file), LoadMapping(ingest_mapping), opts);
      const std::string ref = store.PutDataset(result);
      std::cout << Json{{"dataset_ref", ref}, {"manifest", result.manifest}}.dump(2) << "\n";
      return 0;
    }

    if (*run) {
      RunStore store(store_dir);
      RunConfig cfg;
      cfg.target.base_url = target_url;
      cfg.target.model_name = target_model;
      cfg.judges = ParseJudgeList(judges);
      FillJudgeTemplates(cfg.judges, DataDir() / "judge_templates");
      cfg.mode = *ParseRunMode(mode);
      if (seed) cfg.seed = *seed;
      if (!attack_file.empty()) {
        Json j = Json::parse(ReadFile(attack_file));
        if (seed && !j.contains("seed")) j["seed"] = *seed;
        cfg.attack_config = j.get<AttackConfig>();
      }
      cfg.dataset_ref = ResolveDataset(store, dataset, dataset_dir, LoadMapping(run_mapping));
      const std::string run_id = store.CreateRun(cfg);
      std::cerr << "run " << run_id << "\n";

      ModelGateway gateway;
      OrchestratorOptions opts;
      opts.batch_size = batch_size;
      const RunState state = Orchestrator(store, gateway, opts).Execute(run_id);
      if (state.stage != Stage::kComplete) {
        std::cerr << "error: run " << run_id << " failed: "
                  << (state.error ? state.error->code + ": " + state.error->message : "") << "\n";
        return kExitRunFailed;
      }
      const std::string text = *store.LoadReportText(run_id);
      WriteFileAtomic(out_file, text);
      if (print_table) std::cout << RenderReportTables(Json::parse(text));
      return 0;
    }

    if (*serve) {
      ServiceOptions opts;
      opts.store_root = store_dir;
      opts.worker_budget = workers;
      if (const char* token = std::getenv("TRUSTEVAL_API_TOKEN"); token && *token) {
        opts.api_token = token;
      }
      if (!static_dir.empty()) opts.static_dir = static_dir;
      Service service(opts);
      std::cerr << fmt::format("serving {} on http://{}:{}\n", store_dir, host, port);
      service.Listen(host, port);
      return 0;
    }

    if (*report) {
      RunStore store(store_dir);
      std::string text;
      if (auto stored = store.LoadReportText(report_run)) {
        text = *stored;
      } else {
        ReportInputs in = CollectReportInputs(store, report_run);
        in.partial = true;
        text = SerializeReport(BuildReport(in));
      }
      std::cout << (format == "table" ? RenderReportTables(Json::parse(text)) : text);
      return 0;
    }

    if (*stub_server) {
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      StubModelServer server;
      server.Start(stub_port);
      std::cerr << "stub model on " << server.base_url() << "\n";
      int sig = 0;
      sigwait(&set, &sig);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    PrintError(e);
    return e.code() == ErrorCode::kInvalidConfig ? kExitUsage : kExitRunFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailed;
  }
  return 0;
}
