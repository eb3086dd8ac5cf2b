#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trusteval/dataset.h"
#include "trusteval/gateway.h"
#include "trusteval/judge.h"
#include "trusteval/metrics.h"
#include "trusteval/optimizer.h"

namespace trusteval {

enum class RunMode { kSafety, kRobustness, kBoth };

std::string_view RunModeName(RunMode m);
std::optional<RunMode> ParseRunMode(std::string_view text);

struct RunConfig {
  EndpointRef target;
  std::vector<JudgeSpec> judges;
  std::string dataset_ref;
  GenerationConfig gen_config;
  std::optional<AttackConfig> attack_config;
  RunMode mode = RunMode::kSafety;
  std::int64_t seed = 0;

  // Throws kInvalidConfig with field-level details.
  void Validate() const;
  std::string Digest() const;
};

enum class Stage { kPending, kGenerating, kJudging, kPerturbing, kAggregating, kComplete, kFailed };

std::string_view StageName(Stage s);
std::optional<Stage> ParseStage(std::string_view text);
bool IsTerminal(Stage s);
// pending -> generating -> judging -> (perturbing -> judging)* -> aggregating
// -> complete; any non-terminal stage may move to failed.
bool IsLegalTransition(Stage from, Stage to);
// Position of a stage in the pipeline, ignoring perturbation loops.
int StageRank(Stage s);

struct StageProgress {
  std::size_t done = 0;
  std::size_t total = 0;
  bool operator==(const StageProgress&) const = default;
};

struct RunError {
  std::string code;
  std::string message;
};

struct RunState {
  std::string run_id;
  Stage stage = Stage::kPending;
  std::map<std::string, StageProgress> progress;  // keyed by stage name
  std::optional<RunError> error;
  // Stage name -> number of checkpointed batches.
  std::map<std::string, std::size_t> checkpoints;
  // Incremented on every persisted change.
  std::uint64_t sequence = 0;
  std::string created_at;
  std::string updated_at;
};

// Pipeline position of a snapshot: like StageRank, except that judging after
// perturbation ranks with perturbing. Successive snapshots of one run never
// decrease.
int SnapshotRank(const RunState& state);

// Filesystem layout under the root:
//   datasets/<ref>/{records.jsonl, manifest.json}
//   runs/<run_id>/{config.json, state.json, pairs.jsonl, verdicts.jsonl,
//                  trials.jsonl, report.json, lock}
//   idempotency/<key digest>
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root, Clock clock = SystemClock());

  const std::filesystem::path& root() const { return root_; }
  const Clock& clock() const { return clock_; }

  // Stores an ingested dataset under "<dataset_id>-<checksum prefix>".
  std::string PutDataset(const IngestResult& dataset);
  bool HasDataset(std::string_view ref) const;
  std::vector<PromptRecord> LoadRecords(std::string_view ref) const;
  DatasetManifest LoadManifest(std::string_view ref) const;

  // Persists a validated config in pending state. A repeated idempotency key
  // returns the original run_id.
  std::string CreateRun(const RunConfig& cfg,
                        std::optional<std::string> idempotency_key = std::nullopt);
  bool HasRun(std::string_view run_id) const;
  std::vector<std::string> ListRuns() const;
  // Throws kRunNotFound.
  RunConfig LoadConfig(std::string_view run_id) const;
  RunState LoadState(std::string_view run_id) const;
  void SaveState(const RunState& state);

  std::vector<PRPair> LoadPairs(std::string_view run_id) const;
  std::vector<EnsembleVerdict> LoadVerdicts(std::string_view run_id) const;
  std::vector<RobustnessTrial> LoadTrials(std::string_view run_id) const;
  void AppendPairs(std::string_view run_id, const std::vector<PRPair>& pairs);
  void AppendVerdicts(std::string_view run_id, const std::vector<EnsembleVerdict>& verdicts);
  void AppendTrials(std::string_view run_id, const std::vector<RobustnessTrial>& trials);

  std::optional<std::string> LoadReportText(std::string_view run_id) const;
  void SaveReportText(std::string_view run_id, std::string_view text);

  std::filesystem::path RunDir(std::string_view run_id) const;

  // Single-executor lock. Stale locks (dead pid) are taken over.
  class Lock {
   public:
    Lock(Lock&& other) noexcept;
    Lock& operator=(Lock&&) = delete;
    ~Lock();

   private:
    friend class RunStore;
    Lock(RunStore* store, std::string run_id) : store_(store), run_id_(std::move(run_id)) {}
    RunStore* store_;
    std::string run_id_;
  };
  // Throws kAlreadyRunning.
  Lock AcquireLock(std::string_view run_id);
  bool IsLocked(std::string_view run_id) const;

 private:
  void ReleaseLock(const std::string& run_id);
  void RequireRun(std::string_view run_id) const;

  std::filesystem::path root_;
  Clock clock_;
  mutable std::mutex mu_;
  std::set<std::string> held_;
};

// Fills empty chat-template judge templates from `dir` (<judge_id>.txt or
// default.txt).
void FillJudgeTemplates(std::vector<JudgeSpec>& judges, const std::filesystem::path& dir);

// Report inputs reconstructed from the store; `partial` marks a run that has
// not reached aggregation.
ReportInputs CollectReportInputs(const RunStore& store, std::string_view run_id);

struct OrchestratorOptions {
  std::size_t batch_size = 16;
  EnsembleOptions ensemble;
  // Called at every checkpoint with "<stage>:<batch>" and at each stage entry
  // with "<stage>:enter". Tests throw from it to simulate a crash.
  std::function<void(const std::string&)> checkpoint_hook;
  std::optional<WordPool> word_pool;  // default: bundled pool
};

// Runs the generate -> judge -> perturb -> aggregate pipeline for one run,
// resuming from whatever the store already holds.
class Orchestrator {
 public:
  Orchestrator(RunStore& store, ModelGateway& gateway, OrchestratorOptions options = {});

  // Returns the terminal state. Pipeline errors move the run to failed and
  // are reported in the state; errors thrown by the checkpoint hook
  // propagate untouched.
  RunState Execute(const std::string& run_id);

 private:
  void Advance(RunState& state, Stage to);
  void Checkpoint(RunState& state, std::string_view stage_name, StageProgress progress);
  void Generate(RunState& state, const RunConfig& cfg, const std::vector<PromptRecord>& records);
  void Judge(RunState& state, const RunConfig& cfg, const std::vector<PromptRecord>& records);
  void Perturb(RunState& state, const RunConfig& cfg, const std::vector<PromptRecord>& records);
  void Aggregate(RunState& state);
  void Hook(const std::string& point);

  RunStore& store_;
  ModelGateway& gateway_;
  OrchestratorOptions options_;
};

void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);
void to_json(Json& j, const RunState& s);
void from_json(const Json& j, RunState& s);

}  // namespace trusteval
