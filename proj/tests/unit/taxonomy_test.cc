#include "trusteval/taxonomy.h"

#include <gtest/gtest.h>

#include "trusteval/dataset.h"
#include "trusteval/error.h"

namespace trusteval {
namespace {

TEST(TaxonomyTest, ElevenCategoriesInOrder) {
  const auto& list = TaxonomyList();
  ASSERT_EQ(list.size(), 11u);
  EXPECT_EQ(TaxonomyCodeString(list[0].code), "S1");
  EXPECT_EQ(list[0].name, "Violent Crimes");
  EXPECT_EQ(list[3].name, "Child Exploitation");
  EXPECT_EQ(TaxonomyCodeString(list[10].code), "S11");
  EXPECT_EQ(list[10].name, "Sexual Content");
}

TEST(TaxonomyTest, ParseCodes) {
  EXPECT_EQ(ParseTaxonomyCode("S9"), TaxonomyCode::kS9);
  EXPECT_EQ(ParseTaxonomyCode("s10"), TaxonomyCode::kS10);
  EXPECT_EQ(ParseTaxonomyCode("S9: Hate"), TaxonomyCode::kS9);
  EXPECT_EQ(ParseTaxonomyCode("S12"), std::nullopt);
  EXPECT_EQ(ParseTaxonomyCode("hate"), std::nullopt);
  EXPECT_EQ(AttributionString(std::nullopt), "Unattributed");
  EXPECT_EQ(ParseAttribution("S3"), TaxonomyCode::kS3);
  EXPECT_EQ(ParseAttribution("whatever"), std::nullopt);
}

CategoryMapping SmallMapping() {
  return CategoryMapping("t/1", {
                                    {"dna", "adult content", MatchKind::kPrefix, TaxonomyCode::kS11},
                                    {"alert", "crime_", MatchKind::kPrefix, TaxonomyCode::kS2},
                                    {"alert", "crime_injury", MatchKind::kExact, TaxonomyCode::kS1},
                                    {"*", "hate", MatchKind::kExact, TaxonomyCode::kS9},
                                });
}

TEST(CategoryMappingTest, LookupOrder) {
  const auto m = SmallMapping();
  EXPECT_EQ(m.Map("alert", "crime_injury"), TaxonomyCode::kS1);  // exact beats prefix
  EXPECT_EQ(m.Map("alert", "crime_theft"), TaxonomyCode::kS2);
  EXPECT_EQ(m.Map("dna", "Adult Content"), TaxonomyCode::kS11);
  EXPECT_EQ(m.Map("other", " HATE "), TaxonomyCode::kS9);
  EXPECT_EQ(m.Map("alert", "S7"), TaxonomyCode::kS7);  // passthrough
  EXPECT_EQ(m.Map("alert", "unknown_label"), std::nullopt);
  EXPECT_EQ(MapCategory("alert", "crime_theft", m), TaxonomyCode::kS2);
}

TEST(CategoryMappingTest, OverlappingPrefixesConflict) {
  CategoryMapping m("t/1", {{"*", "weapon", MatchKind::kPrefix, TaxonomyCode::kS2},
                            {"*", "weapon_chem", MatchKind::kPrefix, TaxonomyCode::kS8}},
                    true);
  // Overlapping prefixes in one scope are a conflict.
  EXPECT_THROW(m.Validate(), Error);
}

TEST(CategoryMappingTest, ConflictingExactRules) {
  CategoryMapping m("t/1", {{"dna", "x", MatchKind::kExact, TaxonomyCode::kS1},
                            {"DNA", "X", MatchKind::kExact, TaxonomyCode::kS2}});
  try {
    m.Validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConflictingRules);
  }
}

TEST(CategoryMappingTest, ParseRoundTrip) {
  const auto m = SmallMapping();
  const auto again = CategoryMapping::Parse(m.Serialize());
  EXPECT_EQ(again.version(), "t/1");
  ASSERT_EQ(again.rules().size(), m.rules().size());
  EXPECT_EQ(again.Map("alert", "crime_injury"), TaxonomyCode::kS1);
}

TEST(CategoryMappingTest, ParseRejectsBadRecords) {
  EXPECT_THROW(CategoryMapping::Parse("{\"version\": \"v\"}\n{\"dataset_id\": \"a\"}\n"), Error);
  EXPECT_THROW(CategoryMapping::Parse("not json\n"), Error);
}

TEST(BundledMappingTest, CoversEveryBuiltinLabel) {
  const auto mapping = BundledMapping();
  const auto report = ValidateMapping(mapping, BuiltinLabels());
  EXPECT_EQ(report.unmapped, 0u);
  EXPECT_EQ(report.entries.size(), BuiltinLabels().size());
  EXPECT_EQ(mapping.Map("alert", "weapon_chemical"), TaxonomyCode::kS8);
  EXPECT_EQ(mapping.Map("alert", "weapon_firearm"), TaxonomyCode::kS2);
  EXPECT_EQ(mapping.Map("alert", "hate_ethnic"), TaxonomyCode::kS9);
  EXPECT_EQ(mapping.Map("dna", "Adult Content"), TaxonomyCode::kS11);
}

}  // namespace
}  // namespace trusteval
