#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trusteval/dataset.h"
#include "trusteval/judge.h"
#include "trusteval/optimizer.h"

namespace trusteval {

using GroundTruth = std::map<std::string, SafetyLabel>;

// Rounds num/den (both non-negative, den > 0) to `decimals` places, half away
// from zero, using integer arithmetic only.
std::int64_t RoundedScaled(std::uint64_t num, std::uint64_t den, int decimals);
// "84.8", "100.0", "37.50" ...
std::string FormatScaled(std::int64_t scaled, int decimals);
// 100 * num / den rounded to `decimals`.
double Percent(std::uint64_t num, std::uint64_t den, int decimals);

// Throws kEmptyInput.
double SafetyRate(std::span<const EnsembleVerdict> verdicts);
// Precision of unsafe predictions against labeled ground truth. nullopt when
// nothing labeled was predicted unsafe.
std::optional<double> TrueUnsafeRate(std::span<const EnsembleVerdict> verdicts,
                                     const GroundTruth& ground_truth);
// Agreement over labeled verdicts, two decimals. Throws kNoGroundTruth.
double EnsembleAccuracy(std::span<const EnsembleVerdict> verdicts,
                        const GroundTruth& ground_truth);

inline constexpr std::string_view kOverall = "Overall";
inline constexpr std::size_t kReducedConfidenceBelow = 10;

struct SafetyMetrics {
  std::string taxonomy;  // "S1".."S11", "Overall" or "Unattributed"
  std::size_t total = 0;
  std::size_t safe = 0;
  std::optional<double> sr_percent;  // absent when total == 0
  std::size_t predicted_unsafe = 0;
  // Predicted-unsafe verdicts that have a ground-truth label, and those of
  // them labeled unsafe.
  std::size_t labeled_predicted_unsafe = 0;
  std::size_t true_unsafe = 0;
  std::optional<double> tur_percent;
  bool reduced_confidence = false;

  bool operator==(const SafetyMetrics&) const = default;
};

// Overall first, then S1..S11 in taxonomy order, then Unattributed if any
// verdict falls there. Verdicts are bucketed by the prompt's taxonomy.
std::vector<SafetyMetrics> SafetyBreakdown(std::span<const EnsembleVerdict> verdicts,
                                           const std::map<std::string, Attribution>& taxonomy_of,
                                           const GroundTruth& ground_truth);

struct RobustnessSummary {
  std::string taxonomy;
  std::optional<double> mean_attempts;    // two decimals
  std::optional<double> median_attempts;  // one decimal
  std::size_t jailbreaks = 0;
  std::size_t robust = 0;

  bool operator==(const RobustnessSummary&) const = default;
};

// Overall first, then S1..S11, then Unattributed if present. Mean and median
// are over jailbroken trials only.
std::vector<RobustnessSummary> RobustnessBreakdown(std::span<const RobustnessTrial> trials);

struct JudgeAgreement {
  std::string judge_a;
  std::string judge_b;
  std::size_t compared = 0;
  std::size_t agreed = 0;
  std::optional<double> rate_percent;  // two decimals
};

std::vector<JudgeAgreement> PairwiseAgreement(std::span<const EnsembleVerdict> verdicts);

// Everything the report is derived from. Records define the canonical order.
struct ReportInputs {
  std::string run_id;
  std::string model_name;
  std::string created_at;
  std::string stage;  // RunState stage name
  bool partial = false;
  std::string dataset_manifest_digest;
  std::map<std::string, std::string> config_digests;
  std::vector<PromptRecord> records;
  std::vector<PRPair> pairs;
  std::vector<EnsembleVerdict> verdicts;
  std::vector<RobustnessTrial> trials;
  std::size_t examples_per_taxonomy = 20;
};

inline constexpr int kReportSchemaVersion = 1;

// The RunReport document.
Json BuildReport(const ReportInputs& in);
// Example entries built from baseline verdicts and the final verdict of each
// jailbroken trial, optionally filtered by ensemble verdict. Grouped by
// attributed taxonomy in taxonomy order, lowest vote margin first.
std::vector<Json> CollectExamples(const ReportInputs& in, std::optional<Verdict> verdict);

// Stable serialization used for the stored report and the API body.
std::string SerializeReport(const Json& report);

// Per-taxonomy text tables in the published display conventions: one decimal
// SR/TUR with "--" when undefined; two decimal mean and one decimal median
// attempts with "--" for taxonomies without jailbreaks.
std::string RenderReportTables(const Json& report);

void to_json(Json& j, const SafetyMetrics& m);
void to_json(Json& j, const RobustnessSummary& r);
void to_json(Json& j, const JudgeAgreement& a);

}  // namespace trusteval
