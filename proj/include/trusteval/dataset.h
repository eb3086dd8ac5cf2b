#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trusteval/taxonomy.h"
#include "trusteval/util.h"

namespace trusteval {

enum class DatasetFormat { kDelimitedTable, kObjectPerLine, kSingleObjectArray };

std::string_view DatasetFormatName(DatasetFormat format);
std::optional<DatasetFormat> ParseDatasetFormat(std::string_view name);

enum class SafetyLabel { kSafe, kUnsafe };

std::string_view SafetyLabelName(SafetyLabel label);
// Accepts safe/harmless/0 and unsafe/harmful/1, case-insensitive.
std::optional<SafetyLabel> ParseSafetyLabel(std::string_view text);

struct PromptRecord {
  std::string id;
  std::string text;
  std::string dataset_id;
  std::optional<std::string> source_category;
  Attribution taxonomy;
  std::optional<SafetyLabel> ground_truth;

  bool operator==(const PromptRecord&) const = default;
};

struct Rejection {
  std::size_t row = 0;  // 1-based input record index
  std::string reason;
};

struct DatasetManifest {
  std::string dataset_id;
  std::string format;
  std::size_t input_count = 0;
  std::size_t record_count = 0;
  // Keys are "S1".."S11" and "Unattributed"; absent keys are zero.
  std::map<std::string, std::size_t> taxonomy_histogram;
  bool has_ground_truth = false;
  // Source column or key the labels were read from.
  std::optional<std::string> ground_truth_source;
  std::string checksum;
  std::string mapping_version;
  std::vector<Rejection> rejected;
};

struct IngestResult {
  std::vector<PromptRecord> records;
  DatasetManifest manifest;
};

inline constexpr std::size_t kDefaultMaxUploadBytes = 64u << 20;

struct IngestOptions {
  std::string dataset_id = "custom";
  std::size_t max_bytes = kDefaultMaxUploadBytes;
};

// Sniffs the first 4 KiB. Throws kUnknownFormat.
DatasetFormat DetectFormat(std::string_view content);

// Converts any supported layout into PromptRecords. Empty prompts are
// rejected and itemized in the manifest; a record without any prompt field
// throws kMissingPromptField, an id collision throws kDuplicateId and
// oversized input throws kUploadTooLarge.
IngestResult NormalizeDataset(std::string_view content, DatasetFormat format,
                              const CategoryMapping& mapping,
                              const IngestOptions& options = {});

// DetectFormat + NormalizeDataset.
IngestResult IngestDataset(std::string_view content,
                           const CategoryMapping& mapping,
                           const IngestOptions& options = {});

// Object-per-line rendering with fields {id, prompt, category?, taxonomy,
// ground_truth?}. Normalizing this output reproduces the same records.
std::string CanonicalSerialization(const std::vector<PromptRecord>& records);

struct BuiltinDataset {
  std::string name;        // "dna-style" or "alert-style"
  std::string dataset_id;  // mapping scope, "dna" or "alert"
  std::string file_name;
};

const std::vector<BuiltinDataset>& BuiltinDatasets();

// Reads a user-installed benchmark file from `dataset_dir`. Throws
// kDatasetNotInstalled when the file is absent.
IngestResult LoadBuiltin(std::string_view name,
                         const std::filesystem::path& dataset_dir,
                         const CategoryMapping& mapping);

// Bundled data files: env TRUSTEVAL_DATA_DIR, else the install location.
std::filesystem::path DataDir();
CategoryMapping BundledMapping();

void to_json(Json& j, const PromptRecord& r);
void from_json(const Json& j, PromptRecord& r);
void to_json(Json& j, const DatasetManifest& m);
void from_json(const Json& j, DatasetManifest& m);

}  // namespace trusteval
