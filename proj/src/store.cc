#include "trusteval/store.h"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <fstream>

#include <fmt/format.h>

#include "trusteval/error.h"

namespace trusteval {

namespace fs = std::filesystem;

std::string_view RunModeName(RunMode m) {
  switch (m) {
    case RunMode::kSafety: return "safety";
    case RunMode::kRobustness: return "robustness";
    case RunMode::kBoth: return "both";
  }
  return "";
}

std::optional<RunMode> ParseRunMode(std::string_view text) {
  for (auto m : {RunMode::kSafety, RunMode::kRobustness, RunMode::kBoth}) {
    if (RunModeName(m) == text) return m;
  }
  return std::nullopt;
}

namespace {

// Runs fn and folds any kInvalidConfig details into `bad` under `prefix`.
template <typename Fn>
void Collect(std::map<std::string, std::string>& bad, const std::string& prefix, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.details().empty()) {
      bad[prefix] = e.what();
      return;
    }
    for (const auto& [k, v] : e.details()) {
      bad[prefix.empty() ? k : (k.starts_with(prefix) ? k : prefix + "." + k)] = v;
    }
  }
}

}  // namespace

void RunConfig::Validate() const {
  std::map<std::string, std::string> bad;
  Collect(bad, "target", [&] { target.Validate(); });
  if (judges.empty()) {
    bad["judges"] = "at least one judge is required";
  } else {
    Collect(bad, "", [&] { ValidateJudgeSpecs(judges); });
    for (std::size_t i = 0; i < judges.size(); ++i) {
      if (judges[i].endpoint) {
        Collect(bad, fmt::format("judges[{}].endpoint", i), [&] { judges[i].endpoint->Validate(); });
      }
    }
  }
  if (dataset_ref.empty()) bad["dataset_ref"] = "required";
  Collect(bad, "gen_config", [&] { gen_config.Validate(); });
  if (mode != RunMode::kSafety && !attack_config) {
    bad["attack_config"] = fmt::format("required for {} mode", RunModeName(mode));
  }
  if (attack_config) Collect(bad, "attack_config", [&] { attack_config->Validate(); });
  if (!bad.empty()) throw Error(ErrorCode::kInvalidConfig, "invalid run config", bad);
}

std::string RunConfig::Digest() const { return JsonDigest(Json(*this)); }

// ---------------------------------------------------------------------------
// Stages

std::string_view StageName(Stage s) {
  switch (s) {
    case Stage::kPending: return "pending";
    case Stage::kGenerating: return "generating";
    case Stage::kJudging: return "judging";
    case Stage::kPerturbing: return "perturbing";
    case Stage::kAggregating: return "aggregating";
    case Stage::kComplete: return "complete";
    case Stage::kFailed: return "failed";
  }
  return "";
}

std::optional<Stage> ParseStage(std::string_view text) {
  for (auto s : {Stage::kPending, Stage::kGenerating, Stage::kJudging, Stage::kPerturbing,
                 Stage::kAggregating, Stage::kComplete, Stage::kFailed}) {
    if (StageName(s) == text) return s;
  }
  return std::nullopt;
}

bool IsTerminal(Stage s) { return s == Stage::kComplete || s == Stage::kFailed; }

bool IsLegalTransition(Stage from, Stage to) {
  if (IsTerminal(from)) return false;
  if (to == Stage::kFailed) return true;
  switch (from) {
    case Stage::kPending: return to == Stage::kGenerating;
    case Stage::kGenerating: return to == Stage::kJudging;
    case Stage::kJudging: return to == Stage::kPerturbing || to == Stage::kAggregating;
    case Stage::kPerturbing: return to == Stage::kJudging;
    case Stage::kAggregating: return to == Stage::kComplete;
    default: return false;
  }
}

int StageRank(Stage s) {
  switch (s) {
    case Stage::kPending: return 0;
    case Stage::kGenerating: return 1;
    case Stage::kJudging: return 2;
    case Stage::kPerturbing: return 3;
    case Stage::kAggregating: return 4;
    case Stage::kComplete:
    case Stage::kFailed: return 5;
  }
  return 0;
}

int SnapshotRank(const RunState& state) {
  if (state.stage == Stage::kJudging && state.progress.count("perturbing")) {
    return StageRank(Stage::kPerturbing);
  }
  return StageRank(state.stage);
}

// ---------------------------------------------------------------------------
// RunStore

RunStore::RunStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(root_ / "runs", ec);
  fs::create_directories(root_ / "datasets", ec);
  fs::create_directories(root_ / "idempotency", ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create store at " + root_.string());
}

namespace {

bool SafeName(std::string_view name) {
  if (name.empty() || name.size() > 128) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && name != "." && name != "..";
}

template <typename T>
std::vector<T> LoadLog(const fs::path& path) {
  std::vector<T> out;
  if (!fs::exists(path)) return out;
  for (const auto& j : ReadJsonLines(path)) out.push_back(j.get<T>());
  return out;
}

template <typename T>
void AppendLog(const fs::path& path, const std::vector<T>& items) {
  std::vector<Json> lines;
  lines.reserve(items.size());
  for (const auto& x : items) lines.emplace_back(x);
  AppendJsonLines(path, lines);
}

}  // namespace

std::string RunStore::PutDataset(const IngestResult& dataset) {
  const std::string ref =
      fmt::format("{}-{}", dataset.manifest.dataset_id, dataset.manifest.checksum.substr(0, 12));
  if (!SafeName(ref)) throw Error(ErrorCode::kInvalidArgument, "bad dataset id: " + ref);
  const fs::path dir = root_ / "datasets" / ref;
  fs::create_directories(dir);
  std::string records;
  for (const auto& r : dataset.records) records += Json(r).dump() + "\n";
  WriteFileAtomic(dir / "records.jsonl", records);
  WriteFileAtomic(dir / "manifest.json", Json(dataset.manifest).dump(2) + "\n");
  return ref;
}

bool RunStore::HasDataset(std::string_view ref) const {
  return SafeName(ref) && fs::exists(root_ / "datasets" / std::string(ref) / "manifest.json");
}

std::vector<PromptRecord> RunStore::LoadRecords(std::string_view ref) const {
  if (!HasDataset(ref)) {
    throw Error(ErrorCode::kDatasetNotFound, fmt::format("dataset {} not found", ref));
  }
  return LoadLog<PromptRecord>(root_ / "datasets" / std::string(ref) / "records.jsonl");
}

DatasetManifest RunStore::LoadManifest(std::string_view ref) const {
  if (!HasDataset(ref)) {
    throw Error(ErrorCode::kDatasetNotFound, fmt::format("dataset {} not found", ref));
  }
  return Json::parse(ReadFile(root_ / "datasets" / std::string(ref) / "manifest.json"))
      .get<DatasetManifest>();
}

fs::path RunStore::RunDir(std::string_view run_id) const {
  return root_ / "runs" / std::string(run_id);
}

bool RunStore::HasRun(std::string_view run_id) const {
  return SafeName(run_id) && fs::exists(RunDir(run_id) / "state.json");
}

void RunStore::RequireRun(std::string_view run_id) const {
  if (!HasRun(run_id)) {
    throw Error(ErrorCode::kRunNotFound, fmt::format("run {} not found", run_id),
                {{"run_id", std::string(run_id)}});
  }
}

std::string RunStore::CreateRun(const RunConfig& cfg, std::optional<std::string> idempotency_key) {
  cfg.Validate();
  if (!HasDataset(cfg.dataset_ref)) {
    throw Error(ErrorCode::kInvalidConfig, "dataset not ingested",
                {{"dataset_ref", fmt::format("no dataset {} in the store", cfg.dataset_ref)}});
  }
  std::lock_guard<std::mutex> guard(mu_);
  fs::path key_file;
  if (idempotency_key) {
    key_file = root_ / "idempotency" / Sha256Hex(*idempotency_key).substr(0, 32);
    if (fs::exists(key_file)) return Trim(ReadFile(key_file));
  }

  const std::string created_at = FormatTimestamp(clock_());
  std::string stamp;
  for (char c : created_at) {
    if (std::isalnum(static_cast<unsigned char>(c))) stamp += c;
  }
  std::string run_id;
  for (std::uint64_t nonce = 0;; ++nonce) {
    run_id = fmt::format("run-{}-{}", stamp,
                         Sha256Hex(fmt::format("{}|{}|{}", cfg.Digest(), created_at, nonce))
                             .substr(0, 8));
    std::error_code ec;
    if (fs::create_directories(RunDir(run_id), ec)) break;
  }
  WriteFileAtomic(RunDir(run_id) / "config.json", Json(cfg).dump(2) + "\n");
  RunState state;
  state.run_id = run_id;
  state.created_at = created_at;
  state.updated_at = created_at;
  WriteFileAtomic(RunDir(run_id) / "state.json", Json(state).dump(2) + "\n");
  if (idempotency_key) WriteFileAtomic(key_file, run_id + "\n");
  return run_id;
}

std::vector<std::string> RunStore::ListRuns() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "runs")) {
    if (fs::exists(entry.path() / "state.json")) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig RunStore::LoadConfig(std::string_view run_id) const {
  RequireRun(run_id);
  return Json::parse(ReadFile(RunDir(run_id) / "config.json")).get<RunConfig>();
}

RunState RunStore::LoadState(std::string_view run_id) const {
  RequireRun(run_id);
  return Json::parse(ReadFile(RunDir(run_id) / "state.json")).get<RunState>();
}

void RunStore::SaveState(const RunState& state) {
  WriteFileAtomic(RunDir(state.run_id) / "state.json", Json(state).dump(2) + "\n");
}

std::vector<PRPair> RunStore::LoadPairs(std::string_view run_id) const {
  RequireRun(run_id);
  return LoadLog<PRPair>(RunDir(run_id) / "pairs.jsonl");
}

std::vector<EnsembleVerdict> RunStore::LoadVerdicts(std::string_view run_id) const {
  RequireRun(run_id);
  return LoadLog<EnsembleVerdict>(RunDir(run_id) / "verdicts.jsonl");
}

std::vector<RobustnessTrial> RunStore::LoadTrials(std::string_view run_id) const {
  RequireRun(run_id);
  return LoadLog<RobustnessTrial>(RunDir(run_id) / "trials.jsonl");
}

void RunStore::AppendPairs(std::string_view run_id, const std::vector<PRPair>& pairs) {
  AppendLog(RunDir(run_id) / "pairs.jsonl", pairs);
}

void RunStore::AppendVerdicts(std::string_view run_id,
                              const std::vector<EnsembleVerdict>& verdicts) {
  AppendLog(RunDir(run_id) / "verdicts.jsonl", verdicts);
}

void RunStore::AppendTrials(std::string_view run_id, const std::vector<RobustnessTrial>& trials) {
  AppendLog(RunDir(run_id) / "trials.jsonl", trials);
}

std::optional<std::string> RunStore::LoadReportText(std::string_view run_id) const {
  RequireRun(run_id);
  const fs::path path = RunDir(run_id) / "report.json";
  if (!fs::exists(path)) return std::nullopt;
  return ReadFile(path);
}

void RunStore::SaveReportText(std::string_view run_id, std::string_view text) {
  WriteFileAtomic(RunDir(run_id) / "report.json", text);
}

// ---------------------------------------------------------------------------
// Lock

namespace {

std::optional<pid_t> LockOwner(const fs::path& path) {
  std::ifstream in(path);
  long pid = 0;
  if (!(in >> pid) || pid <= 0) return std::nullopt;
  return static_cast<pid_t>(pid);
}

bool ProcessAlive(pid_t pid) { return kill(pid, 0) == 0 || errno != ESRCH; }

}  // namespace

RunStore::Lock::Lock(Lock&& other) noexcept
    : store_(std::exchange(other.store_, nullptr)), run_id_(std::move(other.run_id_)) {}

RunStore::Lock::~Lock() {
  if (store_) store_->ReleaseLock(run_id_);
}

RunStore::Lock RunStore::AcquireLock(std::string_view run_id) {
  RequireRun(run_id);
  const std::string id(run_id);
  const fs::path path = RunDir(id) / "lock";
  std::lock_guard<std::mutex> guard(mu_);
  if (held_.count(id)) {
    throw Error(ErrorCode::kAlreadyRunning, fmt::format("run {} is already executing", id));
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) throw Error(ErrorCode::kIoError, "cannot write lock file");
      held_.insert(id);
      return Lock(this, id);
    }
    const auto owner = LockOwner(path);
    const bool stale = !owner || (*owner == ::getpid() ? true : !ProcessAlive(*owner));
    if (!stale) break;
    std::error_code ec;
    fs::remove(path, ec);
  }
  throw Error(ErrorCode::kAlreadyRunning, fmt::format("run {} is locked by another executor", id));
}

bool RunStore::IsLocked(std::string_view run_id) const {
  const std::string id(run_id);
  {
    std::lock_guard<std::mutex> guard(mu_);
    if (held_.count(id)) return true;
  }
  const auto owner = LockOwner(RunDir(id) / "lock");
  return owner && *owner != ::getpid() && ProcessAlive(*owner);
}

void RunStore::ReleaseLock(const std::string& run_id) {
  std::lock_guard<std::mutex> guard(mu_);
  std::error_code ec;
  fs::remove(RunDir(run_id) / "lock", ec);
  held_.erase(run_id);
}

// ---------------------------------------------------------------------------

void FillJudgeTemplates(std::vector<JudgeSpec>& judges, const fs::path& dir) {
  for (auto& j : judges) {
    if (j.kind == JudgeKind::kChatTemplate && j.prompt_template.empty()) {
      j.prompt_template = LoadJudgeTemplate(dir, j.judge_id);
    }
  }
}

ReportInputs CollectReportInputs(const RunStore& store, std::string_view run_id) {
  const RunConfig cfg = store.LoadConfig(run_id);
  const RunState state = store.LoadState(run_id);
  ReportInputs in;
  in.run_id = std::string(run_id);
  in.model_name = cfg.target.model_name;
  in.created_at = state.created_at;
  in.stage = std::string(StageName(state.stage));
  in.partial = state.stage != Stage::kAggregating && state.stage != Stage::kComplete;
  if (store.HasDataset(cfg.dataset_ref)) {
    in.dataset_manifest_digest = JsonDigest(Json(store.LoadManifest(cfg.dataset_ref)));
    in.records = store.LoadRecords(cfg.dataset_ref);
  }
  in.config_digests["run"] = cfg.Digest();
  in.config_digests["generation"] = cfg.gen_config.Digest();
  in.config_digests["judges"] = JsonDigest(Json(cfg.judges));
  if (cfg.attack_config) in.config_digests["attack"] = cfg.attack_config->Digest();
  in.pairs = store.LoadPairs(run_id);
  in.verdicts = store.LoadVerdicts(run_id);
  in.trials = store.LoadTrials(run_id);
  return in;
}

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator(RunStore& store, ModelGateway& gateway, OrchestratorOptions options)
    : store_(store), gateway_(gateway), options_(std::move(options)) {
  if (options_.batch_size == 0) options_.batch_size = 1;
}

void Orchestrator::Hook(const std::string& point) {
  if (options_.checkpoint_hook) options_.checkpoint_hook(point);
}

void Orchestrator::Advance(RunState& state, Stage to) {
  if (!IsLegalTransition(state.stage, to)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("illegal transition {} -> {}", StageName(state.stage), StageName(to)));
  }
  state.stage = to;
  ++state.sequence;
  state.updated_at = FormatTimestamp(store_.clock()());
  store_.SaveState(state);
  if (!IsTerminal(to)) Hook(fmt::format("{}:enter", StageName(to)));
}

void Orchestrator::Checkpoint(RunState& state, std::string_view stage_name,
                              StageProgress progress) {
  const std::string key(stage_name);
  state.progress[key] = progress;
  const std::size_t batch = ++state.checkpoints[key];
  ++state.sequence;
  state.updated_at = FormatTimestamp(store_.clock()());
  store_.SaveState(state);
  Hook(fmt::format("{}:{}", key, batch));
}

namespace {

GenerationConfig SeededGeneration(const RunConfig& cfg) {
  GenerationConfig g = cfg.gen_config;
  if (!g.seed) g.seed = cfg.seed;
  return g;
}

}  // namespace

void Orchestrator::Generate(RunState& state, const RunConfig& cfg,
                            const std::vector<PromptRecord>& records) {
  std::set<std::string> done;
  for (const auto& p : store_.LoadPairs(state.run_id)) done.insert(p.prompt_id);
  std::vector<const PromptRecord*> todo;
  for (const auto& r : records) {
    if (!done.count(r.id)) todo.push_back(&r);
  }
  const GenerationConfig gen = SeededGeneration(cfg);
  std::size_t finished = records.size() - todo.size();
  state.progress["generating"] = {finished, records.size()};
  for (std::size_t start = 0; start < todo.size(); start += options_.batch_size) {
    const std::size_t n = std::min(options_.batch_size, todo.size() - start);
    std::vector<PRPair> batch(n);
    ParallelFor(n, cfg.target.max_in_flight, [&](std::size_t i) {
      const auto& r = *todo[start + i];
      batch[i] = gateway_.Generate(cfg.target, r.id, r.text, gen);
    });
    store_.AppendPairs(state.run_id, batch);
    finished += n;
    Checkpoint(state, "generating", {finished, records.size()});
  }
  if (todo.empty()) Checkpoint(state, "generating", {finished, records.size()});
}

void Orchestrator::Judge(RunState& state, const RunConfig& cfg,
                         const std::vector<PromptRecord>& records) {
  std::map<std::string, const PRPair*> pair_of;
  const auto pairs = store_.LoadPairs(state.run_id);
  for (const auto& p : pairs) pair_of[p.prompt_id] = &p;
  std::set<std::string> done;
  for (const auto& v : store_.LoadVerdicts(state.run_id)) done.insert(v.pair_ref);

  std::vector<PRPair> todo;
  std::vector<Attribution> taxonomies;
  for (const auto& r : records) {
    auto it = pair_of.find(r.id);
    if (it == pair_of.end() || done.count(r.id)) continue;
    todo.push_back(*it->second);
    taxonomies.push_back(r.taxonomy);
  }
  std::size_t finished = pairs.size() - todo.size();
  state.progress["judging"] = {finished, pairs.size()};
  for (std::size_t start = 0; start < todo.size(); start += options_.batch_size) {
    const std::size_t n = std::min(options_.batch_size, todo.size() - start);
    auto verdicts = EvaluatePairs(std::span(todo).subspan(start, n), cfg.judges, gateway_,
                                  std::span(taxonomies).subspan(start, n), options_.ensemble);
    store_.AppendVerdicts(state.run_id, verdicts);
    finished += n;
    Checkpoint(state, "judging", {finished, pairs.size()});
  }
  if (todo.empty()) Checkpoint(state, "judging", {finished, pairs.size()});
}

void Orchestrator::Perturb(RunState& state, const RunConfig& cfg,
                           const std::vector<PromptRecord>& records) {
  std::map<std::string, Verdict> baseline;
  for (const auto& v : store_.LoadVerdicts(state.run_id)) baseline[v.pair_ref] = v.verdict;
  std::set<std::string> done;
  for (const auto& t : store_.LoadTrials(state.run_id)) done.insert(t.prompt_id);

  // Prompts already unsafe at baseline need no attack.
  std::vector<const PromptRecord*> targets;
  for (const auto& r : records) {
    auto it = baseline.find(r.id);
    if (it != baseline.end() && it->second == Verdict::kSafe) targets.push_back(&r);
  }
  std::vector<const PromptRecord*> todo;
  for (const auto* r : targets) {
    if (!done.count(r->id)) todo.push_back(r);
  }

  const WordPool pool = options_.word_pool ? *options_.word_pool : BundledWordPool();
  AttackContext ctx{gateway_, cfg.target, cfg.judges, SeededGeneration(cfg), pool,
                    options_.ensemble};
  std::size_t finished = targets.size() - todo.size();
  state.progress["perturbing"] = {finished, targets.size()};
  for (std::size_t start = 0; start < todo.size(); start += options_.batch_size) {
    const std::size_t n = std::min(options_.batch_size, todo.size() - start);
    std::vector<RobustnessTrial> batch;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(RunAttack(*todo[start + i], *cfg.attack_config, ctx));
    }
    store_.AppendTrials(state.run_id, batch);
    finished += n;
    Checkpoint(state, "perturbing", {finished, targets.size()});
  }
  if (todo.empty()) Checkpoint(state, "perturbing", {finished, targets.size()});
}

void Orchestrator::Aggregate(RunState& state) {
  ReportInputs in = CollectReportInputs(store_, state.run_id);
  in.stage = std::string(StageName(Stage::kComplete));
  in.partial = false;
  store_.SaveReportText(state.run_id, SerializeReport(BuildReport(in)));
  Checkpoint(state, "aggregating", {1, 1});
}

RunState Orchestrator::Execute(const std::string& run_id) {
  auto lock = store_.AcquireLock(run_id);
  RunState state = store_.LoadState(run_id);
  if (IsTerminal(state.stage)) {
    throw Error(ErrorCode::kAlreadyFinished,
                fmt::format("run {} is already {}", run_id, StageName(state.stage)));
  }
  const RunConfig cfg = store_.LoadConfig(run_id);
  const bool robustness = cfg.mode != RunMode::kSafety;
  try {
    const auto records = store_.LoadRecords(cfg.dataset_ref);
    if (state.stage == Stage::kPending) Advance(state, Stage::kGenerating);
    if (state.stage == Stage::kGenerating) {
      Generate(state, cfg, records);
      Advance(state, Stage::kJudging);
    }
    if (state.stage == Stage::kJudging && !state.progress.count("perturbing")) {
      Judge(state, cfg, records);
      Advance(state, robustness ? Stage::kPerturbing : Stage::kAggregating);
    }
    if (state.stage == Stage::kPerturbing) {
      Perturb(state, cfg, records);
      Advance(state, Stage::kJudging);
    }
    if (state.stage == Stage::kJudging) {
      // Adversarial pairs were judged attempt by attempt during perturbation;
      // this pass folds their final verdicts into the judging tally.
      const std::size_t baseline = store_.LoadVerdicts(run_id).size();
      const std::size_t trials = store_.LoadTrials(run_id).size();
      Checkpoint(state, "judging", {baseline + trials, baseline + trials});
      Advance(state, Stage::kAggregating);
    }
    if (state.stage == Stage::kAggregating) {
      Aggregate(state);
      Advance(state, Stage::kComplete);
    }
  } catch (const Error& e) {
    state.error = RunError{std::string(ErrorCodeName(e.code())), e.what()};
    Advance(state, Stage::kFailed);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(Json& j, const RunConfig& c) {
  j = Json{{"target", c.target},
           {"judges", c.judges},
           {"dataset_ref", c.dataset_ref},
           {"gen_config", c.gen_config},
           {"attack_config", c.attack_config ? Json(*c.attack_config) : Json()},
           {"mode", RunModeName(c.mode)},
           {"seed", c.seed}};
}

void from_json(const Json& j, RunConfig& c) {
  c = RunConfig{};
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "run config must be an object");
  std::map<std::string, std::string> bad;
  auto field = [&](const char* name, auto&& fn) {
    if (!j.contains(name) || j[name].is_null()) return;
    try {
      fn(j[name]);
    } catch (const Json::exception& e) {
      bad[name] = e.what();
    } catch (const Error& e) {
      if (e.details().empty()) bad[name] = e.what();
      for (const auto& [k, v] : e.details()) bad[std::string(name) + "." + k] = v;
    }
  };
  if (!j.contains("target")) bad["target"] = "required";
  if (!j.contains("judges")) bad["judges"] = "required";
  if (!j.contains("dataset_ref")) bad["dataset_ref"] = "required";
  field("target", [&](const Json& x) { c.target = x.get<EndpointRef>(); });
  field("judges", [&](const Json& x) { c.judges = x.get<std::vector<JudgeSpec>>(); });
  field("dataset_ref", [&](const Json& x) { c.dataset_ref = x.get<std::string>(); });
  field("gen_config", [&](const Json& x) { c.gen_config = x.get<GenerationConfig>(); });
  field("attack_config", [&](const Json& x) { c.attack_config = x.get<AttackConfig>(); });
  field("mode", [&](const Json& x) {
    auto m = ParseRunMode(x.get<std::string>());
    if (!m) throw Error(ErrorCode::kInvalidConfig, "must be safety, robustness or both");
    c.mode = *m;
  });
  field("seed", [&](const Json& x) { c.seed = x.get<std::int64_t>(); });
  if (!bad.empty()) throw Error(ErrorCode::kInvalidConfig, "invalid run config", bad);
}

void to_json(Json& j, const RunState& s) {
  Json progress = Json::object();
  for (const auto& [k, p] : s.progress) progress[k] = {{"done", p.done}, {"total", p.total}};
  j = Json{{"run_id", s.run_id},
           {"stage", StageName(s.stage)},
           {"progress", progress},
           {"error", s.error ? Json{{"code", s.error->code}, {"message", s.error->message}}
                             : Json()},
           {"checkpoints", s.checkpoints},
           {"sequence", s.sequence},
           {"created_at", s.created_at},
           {"updated_at", s.updated_at}};
}

void from_json(const Json& j, RunState& s) {
  s = RunState{};
  s.run_id = j.at("run_id").get<std::string>();
  s.stage = ParseStage(j.at("stage").get<std::string>()).value_or(Stage::kFailed);
  const Json progress = j.value("progress", Json::object());
  for (const auto& [k, p] : progress.items()) {
    s.progress[k] = {p.at("done").get<std::size_t>(), p.at("total").get<std::size_t>()};
  }
  if (j.contains("error") && j["error"].is_object()) {
    s.error = RunError{j["error"].value("code", ""), j["error"].value("message", "")};
  }
  s.checkpoints = j.value("checkpoints", std::map<std::string, std::size_t>{});
  s.sequence = j.value("sequence", std::uint64_t{0});
  s.created_at = j.value("created_at", "");
  s.updated_at = j.value("updated_at", "");
}

}  // namespace trusteval
