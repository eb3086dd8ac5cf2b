#include "trusteval/taxonomy.h"

#include <algorithm>
#include <map>
#include <tuple>

#include "trusteval/error.h"
#include "trusteval/util.h"

namespace trusteval {

const std::array<TaxonomyEntry, kTaxonomySize>& TaxonomyList() {
  static const std::array<TaxonomyEntry, kTaxonomySize> kList = {{
      {TaxonomyCode::kS1, "Violent Crimes"},
      {TaxonomyCode::kS2, "Non-Violent Crimes"},
      {TaxonomyCode::kS3, "Sex Crimes"},
      {TaxonomyCode::kS4, "Child Exploitation"},
      {TaxonomyCode::kS5, "Specialized Advice"},
      {TaxonomyCode::kS6, "Privacy"},
      {TaxonomyCode::kS7, "Intellectual Property"},
      {TaxonomyCode::kS8, "Indiscriminate Weapons"},
      {TaxonomyCode::kS9, "Hate"},
      {TaxonomyCode::kS10, "Self-Harm"},
      {TaxonomyCode::kS11, "Sexual Content"},
  }};
  return kList;
}

std::string TaxonomyCodeString(TaxonomyCode code) {
  return "S" + std::to_string(static_cast<int>(code));
}

std::string_view TaxonomyName(TaxonomyCode code) {
  return TaxonomyList()[static_cast<std::size_t>(code) - 1].name;
}

std::optional<TaxonomyCode> ParseTaxonomyCode(std::string_view text) {
  std::string s = Trim(text);
  if (auto colon = s.find(':'); colon != std::string::npos) {
    s = Trim(std::string_view(s).substr(0, colon));
  }
  if (s.size() < 2 || s.size() > 3 || (s[0] != 'S' && s[0] != 's')) {
    return std::nullopt;
  }
  int n = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    n = n * 10 + (s[i] - '0');
  }
  if (s[1] == '0' || n < 1 || n > static_cast<int>(kTaxonomySize)) {
    return std::nullopt;
  }
  return static_cast<TaxonomyCode>(n);
}

std::string AttributionString(const Attribution& a) {
  return a ? TaxonomyCodeString(*a) : std::string(kUnattributed);
}

Attribution ParseAttribution(std::string_view text) {
  return ParseTaxonomyCode(text);
}

namespace {

std::string Normalize(std::string_view s) { return ToLower(Trim(s)); }

std::string_view MatchKindString(MatchKind k) {
  return k == MatchKind::kExact ? "exact" : "prefix";
}

}  // namespace

CategoryMapping::CategoryMapping(std::string version,
                                 std::vector<MappingRule> rules,
                                 bool passthrough)
    : version_(std::move(version)), passthrough_(passthrough) {
  rules_.reserve(rules.size());
  for (auto& r : rules) {
    r.dataset_id = Normalize(r.dataset_id);
    r.pattern = Normalize(r.pattern);
    rules_.push_back(std::move(r));
  }
}

CategoryMapping CategoryMapping::Parse(std::string_view content) {
  std::string version;
  std::vector<MappingRule> rules;
  bool passthrough = true;
  std::size_t line_no = 0;
  for (const auto& raw : Split(content, '\n')) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '#') continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  "mapping line " + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.contains("version")) {
      version = rec.at("version").get<std::string>();
      passthrough = rec.value("passthrough", true);
      continue;
    }
    auto field = [&](const char* name) -> std::string {
      if (!rec.contains(name) || !rec[name].is_string()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "mapping line " + std::to_string(line_no) +
                        ": missing field " + name);
      }
      return rec[name].get<std::string>();
    };
    MappingRule rule;
    rule.dataset_id = field("dataset_id");
    rule.pattern = field("pattern");
    const std::string kind = Normalize(field("match_kind"));
    if (kind == "exact") {
      rule.kind = MatchKind::kExact;
    } else if (kind == "prefix") {
      rule.kind = MatchKind::kPrefix;
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  "mapping line " + std::to_string(line_no) +
                      ": match_kind must be exact or prefix");
    }
    auto target = ParseTaxonomyCode(field("target_code"));
    if (!target) {
      throw Error(ErrorCode::kInvalidArgument,
                  "mapping line " + std::to_string(line_no) +
                      ": unknown target_code");
    }
    rule.target = *target;
    rules.push_back(std::move(rule));
  }
  if (version.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "mapping lacks a version header");
  }
  CategoryMapping mapping(std::move(version), std::move(rules), passthrough);
  mapping.Validate();
  return mapping;
}

CategoryMapping CategoryMapping::Load(const std::filesystem::path& path) {
  return Parse(ReadFile(path));
}

void CategoryMapping::Validate() const {
  std::map<std::tuple<std::string, std::string, MatchKind>, TaxonomyCode> seen;
  for (const auto& r : rules_) {
    auto key = std::make_tuple(r.dataset_id, r.pattern, r.kind);
    auto [it, inserted] = seen.emplace(key, r.target);
    if (!inserted && it->second != r.target) {
      throw Error(ErrorCode::kConflictingRules,
                  "rules for (" + r.dataset_id + ", " + r.pattern + ") target " +
                      TaxonomyCodeString(it->second) + " and " +
                      TaxonomyCodeString(r.target),
                  {{"dataset_id", r.dataset_id}, {"pattern", r.pattern}});
    }
  }
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& a = rules_[i];
    if (a.kind != MatchKind::kPrefix) continue;
    for (std::size_t j = i + 1; j < rules_.size(); ++j) {
      const auto& b = rules_[j];
      if (b.kind != MatchKind::kPrefix || b.dataset_id != a.dataset_id) continue;
      if (a.pattern == b.pattern) continue;  // identical, handled above
      if (a.pattern.starts_with(b.pattern) || b.pattern.starts_with(a.pattern)) {
        throw Error(ErrorCode::kConflictingRules,
                    "overlapping prefix rules '" + a.pattern + "' and '" +
                        b.pattern + "' for dataset " + a.dataset_id,
                    {{"dataset_id", a.dataset_id}, {"pattern", b.pattern}});
      }
    }
  }
}

Attribution CategoryMapping::Map(std::string_view dataset_id,
                                 std::string_view label) const {
  if (passthrough_) {
    if (auto code = ParseTaxonomyCode(label)) return code;
  }
  const std::string ds = Normalize(dataset_id);
  const std::string lbl = Normalize(label);
  if (lbl.empty()) return std::nullopt;

  const std::string scopes[] = {ds, "*"};
  for (const auto& want : scopes) {
    for (const auto& r : rules_) {
      if (r.kind == MatchKind::kExact && r.dataset_id == want && r.pattern == lbl) {
        return r.target;
      }
    }
  }
  for (const auto& want : scopes) {
    const MappingRule* best = nullptr;
    for (const auto& r : rules_) {
      if (r.kind == MatchKind::kPrefix && r.dataset_id == want &&
          lbl.starts_with(r.pattern) &&
          (!best || r.pattern.size() > best->pattern.size())) {
        best = &r;
      }
    }
    if (best) return best->target;
  }
  return std::nullopt;
}

std::string CategoryMapping::Serialize() const {
  std::string out = Json{{"version", version_}, {"passthrough", passthrough_}}.dump();
  out += '\n';
  for (const auto& r : rules_) {
    Json rec = {{"dataset_id", r.dataset_id},
                {"pattern", r.pattern},
                {"match_kind", MatchKindString(r.kind)},
                {"target_code", TaxonomyCodeString(r.target)}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Attribution MapCategory(std::string_view dataset_id, std::string_view label,
                        const CategoryMapping& mapping) {
  return mapping.Map(dataset_id, label);
}

CoverageReport ValidateMapping(
    const CategoryMapping& mapping,
    const std::vector<std::pair<std::string, std::string>>& known_labels) {
  mapping.Validate();
  CoverageReport report;
  report.entries.reserve(known_labels.size());
  for (const auto& [ds, label] : known_labels) {
    Attribution resolved = mapping.Map(ds, label);
    if (!resolved) ++report.unmapped;
    report.entries.push_back({ds, label, resolved});
  }
  return report;
}

const std::vector<std::pair<std::string, std::string>>& BuiltinLabels() {
  static const std::vector<std::pair<std::string, std::string>> kLabels = [] {
    std::vector<std::pair<std::string, std::string>> v;
    for (const char* l : {
             "Adult Content",
             "Social stereotypes and unfair discrimination",
             "Toxic language (hate speech)",
             "Mental Health or Overreliance Crisis",
             "Treat Chatbot as a Human",
             "Compromise privacy by leaking or inferring private information "
             "(person/individual)",
             "Risks from leaking or inferring sensitive information "
             "(organization/gov)",
             "Assisting illegal activities",
             "Nudging or advising users to perform unethical or unsafe actions",
             "Reducing the cost of disinformation campaigns",
             "Causing material harm by disseminating misinformation e.g. in "
             "medicine or law",
             "Disseminating false or misleading information",
         }) {
      v.emplace_back("dna", l);
    }
    for (const char* l : {
             "hate_women",        "hate_ethnic",        "hate_lgbtq+",
             "hate_disabled",     "hate_poor",          "hate_body",
             "hate_religion",     "hate_other",         "self_harm_suicide",
             "self_harm_thin",    "self_harm_other",    "weapon_firearm",
             "weapon_chemical",   "weapon_biological",  "weapon_radioactive",
             "weapon_other",      "crime_cyber",        "crime_injury",
             "crime_kidnapp",     "crime_privacy",      "crime_propaganda",
             "crime_tax",         "crime_theft",        "crime_other",
             "sex_harassment",    "sex_porn",           "sex_other",
             "substance_drug",    "substance_cannabis", "substance_tobacco",
             "substance_alcohol", "substance_other",
         }) {
      v.emplace_back("alert", l);
    }
    return v;
  }();
  return kLabels;
}

}  // namespace trusteval
