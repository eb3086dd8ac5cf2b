#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trusteval {

// MLCommons harm categories S1..S11. Enumerator order is report order.
enum class TaxonomyCode {
  kS1 = 1,
  kS2,
  kS3,
  kS4,
  kS5,
  kS6,
  kS7,
  kS8,
  kS9,
  kS10,
  kS11,
};

inline constexpr std::size_t kTaxonomySize = 11;

struct TaxonomyEntry {
  TaxonomyCode code;
  std::string_view name;
};

// The eleven categories in S1..S11 order with canonical display names.
const std::array<TaxonomyEntry, kTaxonomySize>& TaxonomyList();

// "S9"
std::string TaxonomyCodeString(TaxonomyCode code);
// "Hate"
std::string_view TaxonomyName(TaxonomyCode code);
// Accepts "S9", "s9", " S9 " and "S9: Hate". Anything else is nullopt.
std::optional<TaxonomyCode> ParseTaxonomyCode(std::string_view text);

// A taxonomy assignment; nullopt is the synthetic "Unattributed" bucket.
using Attribution = std::optional<TaxonomyCode>;

inline constexpr std::string_view kUnattributed = "Unattributed";

std::string AttributionString(const Attribution& a);
// Inverse of AttributionString; unknown strings map to Unattributed.
Attribution ParseAttribution(std::string_view text);

enum class MatchKind { kExact, kPrefix };

struct MappingRule {
  std::string dataset_id;  // "*" applies to every dataset
  std::string pattern;
  MatchKind kind = MatchKind::kExact;
  TaxonomyCode target = TaxonomyCode::kS1;
};

// Rule-based mapping from dataset category labels onto the taxonomy.
//
// Labels and dataset ids compare case-insensitively after trimming. Lookup
// order: explicit code passthrough ("S9" -> S9), exact rule for the dataset,
// exact wildcard rule, longest prefix rule for the dataset, longest wildcard
// prefix rule. Immutable once built.
class CategoryMapping {
 public:
  CategoryMapping() = default;
  CategoryMapping(std::string version, std::vector<MappingRule> rules,
                  bool passthrough = true);

  // Parses the object-per-line mapping format: a header record
  // {"version": ...} followed by one rule record per line. Lines starting
  // with '#' are comments. Validates the result.
  static CategoryMapping Parse(std::string_view content);
  static CategoryMapping Load(const std::filesystem::path& path);

  // Throws Error{kConflictingRules} when two rules with the same
  // (dataset, pattern, kind) disagree on target, or two prefix rules of one
  // dataset overlap.
  void Validate() const;

  Attribution Map(std::string_view dataset_id, std::string_view label) const;

  const std::string& version() const { return version_; }
  const std::vector<MappingRule>& rules() const { return rules_; }
  bool passthrough() const { return passthrough_; }

  std::string Serialize() const;

 private:
  std::string version_;
  std::vector<MappingRule> rules_;
  bool passthrough_ = true;
};

// Free-function form of CategoryMapping::Map.
Attribution MapCategory(std::string_view dataset_id, std::string_view label,
                        const CategoryMapping& mapping);

struct CoverageEntry {
  std::string dataset_id;
  std::string label;
  Attribution resolved;
};

struct CoverageReport {
  std::vector<CoverageEntry> entries;
  std::size_t unmapped = 0;
};

// Resolves every known label; throws kConflictingRules for rule conflicts.
CoverageReport ValidateMapping(
    const CategoryMapping& mapping,
    const std::vector<std::pair<std::string, std::string>>& known_labels);

// Category labels of the two built-in benchmark layouts, keyed by the
// dataset ids "dna" and "alert".
const std::vector<std::pair<std::string, std::string>>& BuiltinLabels();

}  // namespace trusteval
