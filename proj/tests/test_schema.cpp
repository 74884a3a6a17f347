#include <gtest/gtest.h>

#include "support.hpp"

using namespace flowformer;

namespace {

const char* kGood = R"(version: 1
name: demo
class_column: Label
benign_label: Benign
categorical_features:
  - PROTOCOL
  - L4_DST_PORT
numerical_features: [IN_BYTES, OUT_BYTES]
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST(Spec, ParsesAllFields) {
  const auto s = parse_spec(kGood);
  EXPECT_EQ(s.name, "demo");
  EXPECT_EQ(s.class_column, "Label");
  EXPECT_EQ(s.benign_label, "Benign");
  EXPECT_EQ(s.categorical_features, (std::vector<std::string>{"PROTOCOL", "L4_DST_PORT"}));
  EXPECT_EQ(s.numerical_features, (std::vector<std::string>{"IN_BYTES", "OUT_BYTES"}));
  EXPECT_EQ(s.feature_count(), 4u);
  EXPECT_EQ(s.declared_columns().back(), "Label");
}

TEST(Spec, FormatRoundTrips) {
  const auto s = parse_spec(kGood);
  EXPECT_EQ(parse_spec(format_spec(s)), s);
  const auto dir = testing_support::scratch_dir("spec");
  save_spec(s, dir + "/s.yaml");
  EXPECT_EQ(load_spec(dir + "/s.yaml"), s);
}

TEST(Spec, RejectsOverlapNamingTheColumn) {
  const auto text = replace(kGood, "[IN_BYTES, OUT_BYTES]", "[IN_BYTES, PROTOCOL]");
  try {
    parse_spec(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("PROTOCOL"), std::string::npos);
  }
}

TEST(Spec, RejectsClassColumnAsFeature) {
  EXPECT_THROW(parse_spec(replace(kGood, "[IN_BYTES, OUT_BYTES]", "[IN_BYTES, Label]")), ValidationError);
}

TEST(Spec, RejectsEmptyFeatureLists) {
  DatasetSpec s;
  s.class_column = "Label";
  EXPECT_THROW(validate(s), ValidationError);
}

TEST(Spec, UnknownKeyReportsItsLine) {
  const auto text = std::string(kGood) + "colour: blue\n";
  try {
    parse_spec(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9);
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
}

TEST(Spec, RejectsDuplicateKeysAndBadVersions) {
  EXPECT_THROW(parse_spec(std::string(kGood) + "name: again\n"), ParseError);
  EXPECT_THROW(parse_spec(replace(kGood, "version: 1", "version: 2")), ParseError);
  EXPECT_THROW(parse_spec(replace(kGood, "version: 1\n", "")), ParseError);
  EXPECT_THROW(parse_spec(replace(kGood, "benign_label: Benign\n", "")), ParseError);
  EXPECT_THROW(parse_spec("- just\n- a list\n"), ParseError);
  EXPECT_THROW(parse_spec("version: [1\n"), ParseError);
}

TEST(Spec, HeaderCheckListsEveryMissingColumn) {
  const auto s = parse_spec(kGood);
  EXPECT_NO_THROW(validate_against_header(s, {"Extra", "Label", "OUT_BYTES", "IN_BYTES", "L4_DST_PORT", "PROTOCOL"}));
  try {
    validate_against_header(s, {"PROTOCOL", "IN_BYTES"});
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const char* col : {"L4_DST_PORT", "OUT_BYTES", "Label"}) EXPECT_NE(msg.find(col), std::string::npos) << col;
  }
}

TEST(Spec, MissingFileIsAnIoError) { EXPECT_THROW(load_spec("/nonexistent/spec.yaml"), IoError); }
