#include "trusteval/dataset.h"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "trusteval/error.h"

#ifndef TRUSTEVAL_DEFAULT_DATA_DIR
#define TRUSTEVAL_DEFAULT_DATA_DIR "data"
#endif

namespace trusteval {

namespace {

constexpr std::size_t kSniffBytes = 4096;

// Recognized column/key names, in priority order.
const std::vector<std::string_view> kIdFields = {"id", "prompt_id", "idx", "index"};
const std::vector<std::string_view> kPromptFields = {
    "prompt", "question", "text", "goal", "instruction", "query"};
const std::vector<std::string_view> kCategoryFields = {
    "category", "types_of_harm", "harm_category", "risk_category", "risk_area"};
const std::vector<std::string_view> kTaxonomyFields = {"taxonomy", "taxonomy_code"};
const std::vector<std::string_view> kGroundTruthFields = {
    "ground_truth", "label", "human_label", "harmful", "is_harmful"};

// Field view over one input record regardless of source layout.
using FieldMap = std::map<std::string, std::string>;

std::optional<std::string> Lookup(const FieldMap& fields,
                                  const std::vector<std::string_view>& names,
                                  std::string* matched = nullptr) {
  for (auto name : names) {
    auto it = fields.find(std::string(name));
    if (it != fields.end()) {
      if (matched) *matched = it->first;
      return it->second;
    }
  }
  return std::nullopt;
}

std::string StripBom(std::string_view s) {
  if (s.starts_with("\xEF\xBB\xBF")) s.remove_prefix(3);
  return std::string(s);
}

bool LooksBinary(std::string_view s) {
  for (unsigned char c : s) {
    if (c == 0 || (c < 0x20 && c != '\n' && c != '\r' && c != '\t')) return true;
  }
  return false;
}

// RFC 4180 rows: quoted fields, doubled quotes, embedded newlines, CRLF.
std::vector<std::vector<std::string>> ParseCsv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ScalarToString(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  return v.dump();
}

FieldMap ObjectFields(const Json& obj) {
  FieldMap out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    out[ToLower(Trim(it.key()))] = ScalarToString(it.value());
  }
  return out;
}

std::vector<FieldMap> ReadRecords(std::string_view content, DatasetFormat format) {
  std::vector<FieldMap> out;
  switch (format) {
    case DatasetFormat::kDelimitedTable: {
      auto rows = ParseCsv(content);
      if (rows.empty()) return out;
      std::vector<std::string> header;
      for (const auto& h : rows[0]) header.push_back(ToLower(Trim(h)));
      for (std::size_t r = 1; r < rows.size(); ++r) {
        FieldMap m;
        for (std::size_t c = 0; c < header.size() && c < rows[r].size(); ++c) {
          m[header[c]] = rows[r][c];
        }
        out.push_back(std::move(m));
      }
      break;
    }
    case DatasetFormat::kObjectPerLine: {
      std::size_t line_no = 0;
      for (const auto& line : Split(content, '\n')) {
        ++line_no;
        if (Trim(line).empty()) continue;
        Json obj;
        try {
          obj = Json::parse(line);
        } catch (const Json::parse_error&) {
          throw Error(ErrorCode::kUnknownFormat,
                      fmt::format("line {} is not a JSON object", line_no));
        }
        if (!obj.is_object()) {
          throw Error(ErrorCode::kUnknownFormat,
                      fmt::format("line {} is not a JSON object", line_no));
        }
        out.push_back(ObjectFields(obj));
      }
      break;
    }
    case DatasetFormat::kSingleObjectArray: {
      Json arr;
      try {
        arr = Json::parse(content);
      } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::kUnknownFormat, std::string("invalid JSON array: ") + e.what());
      }
      if (!arr.is_array()) throw Error(ErrorCode::kUnknownFormat, "expected a JSON array");
      for (const auto& obj : arr) {
        if (!obj.is_object()) {
          throw Error(ErrorCode::kUnknownFormat, "array element is not an object");
        }
        out.push_back(ObjectFields(obj));
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::string_view DatasetFormatName(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::kDelimitedTable: return "delimited-table";
    case DatasetFormat::kObjectPerLine: return "object-per-line";
    case DatasetFormat::kSingleObjectArray: return "single-object-array";
  }
  return "";
}

std::optional<DatasetFormat> ParseDatasetFormat(std::string_view name) {
  for (auto f : {DatasetFormat::kDelimitedTable, DatasetFormat::kObjectPerLine,
                 DatasetFormat::kSingleObjectArray}) {
    if (DatasetFormatName(f) == name) return f;
  }
  return std::nullopt;
}

std::string_view SafetyLabelName(SafetyLabel label) {
  return label == SafetyLabel::kSafe ? "safe" : "unsafe";
}

std::optional<SafetyLabel> ParseSafetyLabel(std::string_view text) {
  const std::string s = ToLower(Trim(text));
  if (s == "safe" || s == "harmless" || s == "0") return SafetyLabel::kSafe;
  if (s == "unsafe" || s == "harmful" || s == "1") return SafetyLabel::kUnsafe;
  return std::nullopt;
}

DatasetFormat DetectFormat(std::string_view content) {
  const std::string head = StripBom(content.substr(0, kSniffBytes));
  const std::string trimmed = Trim(head);
  if (trimmed.empty()) throw Error(ErrorCode::kUnknownFormat, "empty content");
  if (LooksBinary(trimmed)) throw Error(ErrorCode::kUnknownFormat, "binary content");

  if (trimmed[0] == '[') return DatasetFormat::kSingleObjectArray;
  const std::string first_line = Trim(trimmed.substr(0, trimmed.find('\n')));
  if (trimmed[0] == '{') {
    try {
      if (Json::parse(first_line).is_object()) return DatasetFormat::kObjectPerLine;
    } catch (const Json::parse_error&) {
    }
    throw Error(ErrorCode::kUnknownFormat, "first line is not a complete object");
  }
  if (first_line.find(',') != std::string::npos) {
    auto cells = ParseCsv(first_line);
    if (!cells.empty() && cells[0].size() >= 2 &&
        std::all_of(cells[0].begin(), cells[0].end(),
                    [](const std::string& c) { return !Trim(c).empty(); })) {
      return DatasetFormat::kDelimitedTable;
    }
  }
  throw Error(ErrorCode::kUnknownFormat,
              "content is neither a delimited table nor JSON objects");
}

IngestResult NormalizeDataset(std::string_view content, DatasetFormat format,
                              const CategoryMapping& mapping,
                              const IngestOptions& options) {
  if (content.size() > options.max_bytes) {
    throw Error(ErrorCode::kUploadTooLarge,
                fmt::format("dataset is {} bytes, limit is {}", content.size(),
                            options.max_bytes));
  }
  const std::string body = StripBom(content);
  const auto raw = ReadRecords(body, format);

  IngestResult result;
  auto& manifest = result.manifest;
  manifest.dataset_id = options.dataset_id;
  manifest.format = std::string(DatasetFormatName(format));
  manifest.input_count = raw.size();
  manifest.checksum = Sha256Hex(content);
  manifest.mapping_version = mapping.version();

  std::set<std::string> ids;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const FieldMap& fields = raw[i];
    const std::size_t row = i + 1;
    auto prompt = Lookup(fields, kPromptFields);
    if (!prompt) {
      throw Error(ErrorCode::kMissingPromptField,
                  fmt::format("record {} has no prompt field", row),
                  {{"row", std::to_string(row)}});
    }
    if (Trim(*prompt).empty()) {
      manifest.rejected.push_back({row, "empty prompt"});
      continue;
    }

    PromptRecord rec;
    rec.dataset_id = options.dataset_id;
    rec.text = *prompt;
    auto id = Lookup(fields, kIdFields);
    rec.id = id && !Trim(*id).empty() ? Trim(*id) : fmt::format("{:06}", row);
    if (!ids.insert(rec.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate record id " + rec.id,
                  {{"id", rec.id}, {"row", std::to_string(row)}});
    }

    if (auto cat = Lookup(fields, kCategoryFields); cat && !Trim(*cat).empty()) {
      rec.source_category = *cat;
    }
    auto explicit_code = Lookup(fields, kTaxonomyFields);
    if (explicit_code && ParseTaxonomyCode(*explicit_code)) {
      rec.taxonomy = ParseTaxonomyCode(*explicit_code);
    } else if (rec.source_category) {
      rec.taxonomy = mapping.Map(options.dataset_id, *rec.source_category);
    }

    std::string gt_field;
    if (auto gt = Lookup(fields, kGroundTruthFields, &gt_field)) {
      rec.ground_truth = ParseSafetyLabel(*gt);
      if (rec.ground_truth) {
        manifest.has_ground_truth = true;
        if (!manifest.ground_truth_source) manifest.ground_truth_source = gt_field;
      }
    }
    ++manifest.taxonomy_histogram[AttributionString(rec.taxonomy)];
    result.records.push_back(std::move(rec));
  }
  manifest.record_count = result.records.size();
  return result;
}

IngestResult IngestDataset(std::string_view content,
                           const CategoryMapping& mapping,
                           const IngestOptions& options) {
  if (content.size() > options.max_bytes) {
    throw Error(ErrorCode::kUploadTooLarge,
                fmt::format("dataset is {} bytes, limit is {}", content.size(),
                            options.max_bytes));
  }
  return NormalizeDataset(content, DetectFormat(content), mapping, options);
}

std::string CanonicalSerialization(const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    Json j = Json::object();
    j["id"] = r.id;
    j["prompt"] = r.text;
    if (r.source_category) j["category"] = *r.source_category;
    j["taxonomy"] = AttributionString(r.taxonomy);
    if (r.ground_truth) j["ground_truth"] = SafetyLabelName(*r.ground_truth);
    out += j.dump();
    out += '\n';
  }
  return out;
}

const std::vector<BuiltinDataset>& BuiltinDatasets() {
  static const std::vector<BuiltinDataset> kBuiltins = {
      {"dna-style", "dna", "do_not_answer.csv"},
      {"alert-style", "alert", "alert.jsonl"},
  };
  return kBuiltins;
}

IngestResult LoadBuiltin(std::string_view name,
                         const std::filesystem::path& dataset_dir,
                         const CategoryMapping& mapping) {
  const auto& builtins = BuiltinDatasets();
  auto it = std::find_if(builtins.begin(), builtins.end(),
                         [&](const BuiltinDataset& b) { return b.name == name; });
  if (it == builtins.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown built-in dataset '" + std::string(name) +
                    "'; expected dna-style or alert-style");
  }
  const auto path = dataset_dir / it->file_name;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kDatasetNotInstalled,
                fmt::format("{} is not installed: place the benchmark file at {} "
                            "(see 'Installing the benchmark datasets' in README.md)",
                            it->name, path.string()),
                {{"path", path.string()}});
  }
  IngestOptions opts;
  opts.dataset_id = it->dataset_id;
  opts.max_bytes = SIZE_MAX;
  return IngestDataset(ReadFile(path), mapping, opts);
}

std::filesystem::path DataDir() {
  if (const char* env = std::getenv("TRUSTEVAL_DATA_DIR"); env && *env) return env;
  return TRUSTEVAL_DEFAULT_DATA_DIR;
}

CategoryMapping BundledMapping() {
  return CategoryMapping::Load(DataDir() / "mappings" / "mlcommons_v1.jsonl");
}

void to_json(Json& j, const PromptRecord& r) {
  j = Json{{"id", r.id},
           {"prompt", r.text},
           {"dataset_id", r.dataset_id},
           {"taxonomy", AttributionString(r.taxonomy)}};
  if (r.source_category) j["category"] = *r.source_category;
  if (r.ground_truth) j["ground_truth"] = SafetyLabelName(*r.ground_truth);
}

void from_json(const Json& j, PromptRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.text = j.at("prompt").get<std::string>();
  r.dataset_id = j.value("dataset_id", "");
  r.taxonomy = ParseAttribution(j.value("taxonomy", ""));
  r.source_category.reset();
  if (j.contains("category")) r.source_category = j["category"].get<std::string>();
  r.ground_truth.reset();
  if (j.contains("ground_truth")) {
    r.ground_truth = ParseSafetyLabel(j["ground_truth"].get<std::string>());
  }
}

void to_json(Json& j, const DatasetManifest& m) {
  Json rejected = Json::array();
  for (const auto& r : m.rejected) rejected.push_back({{"row", r.row}, {"reason", r.reason}});
  j = Json{{"dataset_id", m.dataset_id},
           {"format", m.format},
           {"input_count", m.input_count},
           {"record_count", m.record_count},
           {"taxonomy_histogram", m.taxonomy_histogram},
           {"has_ground_truth", m.has_ground_truth},
           {"ground_truth_source", m.ground_truth_source ? Json(*m.ground_truth_source) : Json()},
           {"checksum", m.checksum},
           {"mapping_version", m.mapping_version},
           {"rejected", rejected}};
}

void from_json(const Json& j, DatasetManifest& m) {
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.format = j.at("format").get<std::string>();
  m.input_count = j.at("input_count").get<std::size_t>();
  m.record_count = j.at("record_count").get<std::size_t>();
  m.taxonomy_histogram =
      j.at("taxonomy_histogram").get<std::map<std::string, std::size_t>>();
  m.has_ground_truth = j.at("has_ground_truth").get<bool>();
  m.ground_truth_source.reset();
  if (j.contains("ground_truth_source") && j["ground_truth_source"].is_string()) {
    m.ground_truth_source = j["ground_truth_source"].get<std::string>();
  }
  m.checksum = j.at("checksum").get<std::string>();
  m.mapping_version = j.value("mapping_version", "");
  m.rejected.clear();
  for (const auto& r : j.value("rejected", Json::array())) {
    m.rejected.push_back({r.at("row").get<std::size_t>(), r.at("reason").get<std::string>()});
  }
}

}  // namespace trusteval
