#include <gtest/gtest.h>

#include <iostream>

#include "dlava/answer_parser.hpp"
#include "dlava/json_io.hpp"
#include "test_util.hpp"

namespace dlava::model {
namespace {

using testing::error_kind;

TEST(Parse, StrictObject) {
  const auto a = parse_grounded_answer(R"({"answer": "11,000", "region_ids": [3, 4], "box": [1, 2, 30, 40]})");
  EXPECT_EQ(a.answer, "11,000");
  EXPECT_EQ(a.region_ids, (std::vector<std::int32_t>{3, 4}));
  EXPECT_EQ(a.box, (BBox{1, 2, 30, 40}));
  EXPECT_FALSE(a.not_found);
}

TEST(Parse, FencesAndProse) {
  const auto a = parse_grounded_answer("Sure! Here you go:\n```json\n{\"answer\": \"ACME\"}\n```\nHope that helps.");
  EXPECT_EQ(a.answer, "ACME");
}

TEST(Parse, LenientSyntax) {
  EXPECT_EQ(parse_grounded_answer("{'answer': 'x', 'region_ids': [1,],}").answer, "x");
  EXPECT_EQ(parse_grounded_answer("{answer: \"y\", region_ids: [2]").region_ids, (std::vector<std::int32_t>{2}));
  EXPECT_EQ(parse_grounded_answer("{\"answer\": \"z\" // done\n}").answer, "z");
  EXPECT_EQ(parse_grounded_answer("{\"answer\": \"z\", \"confidence_note\": None}").answer, "z");
}

TEST(Parse, SynonymsAndNesting) {
  const auto a = parse_grounded_answer(R"({"result": {"text": "hi", "bbox": {"x": 1, "y": 2, "w": 3, "h": 4}}})");
  EXPECT_EQ(a.answer, "hi");
  EXPECT_EQ(a.box, (BBox{1, 2, 4, 6}));
}

TEST(Parse, BoxShapes) {
  EXPECT_EQ(parse_grounded_answer(R"({"answer":"a","box":[[1,2],[5,6]]})").box, (BBox{1, 2, 5, 6}));
  EXPECT_EQ(parse_grounded_answer(R"({"answer":"a","box":{"x1":1,"y1":2,"x2":5,"y2":6}})").box, (BBox{1, 2, 5, 6}));
  EXPECT_EQ(parse_grounded_answer(R"({"answer":"a","box":"[1, 2, 5, 6]"})").box, (BBox{1, 2, 5, 6}));
  EXPECT_FALSE(parse_grounded_answer(R"({"answer":"a","box":[3,3,3,9]})").box);
}

TEST(Parse, IdStrings) {
  EXPECT_EQ(parse_grounded_answer(R"j({"answer":"a","region_ids":["B3","(B4)"]})j").region_ids,
            (std::vector<std::int32_t>{3, 4}));
  EXPECT_EQ(parse_grounded_answer(R"({"answer":"a","region_id":7})").region_ids, (std::vector<std::int32_t>{7}));
}

TEST(Parse, ValidIdsFilter) {
  ParseContext ctx;
  ctx.valid_ids = std::set<std::int32_t>{0, 1, 2};
  EXPECT_EQ(parse_grounded_answer(R"({"answer":"a","region_ids":[1, 9]})", ctx).region_ids,
            (std::vector<std::int32_t>{1}));
  EXPECT_FALSE(parse_grounded_answer(R"({"answer":"a","region_ids":[9]})", ctx).region_ids);
}

TEST(Parse, NotFoundLiterals) {
  for (const char* raw : {R"({"answer": "not found"})", R"({"answer": "N/A"})", R"({"answer": ""})",
                          R"({"answer": null})", R"({"answer": "Not found."})"}) {
    const auto a = parse_grounded_answer(raw);
    EXPECT_TRUE(a.not_found) << raw;
    EXPECT_EQ(a.answer, "") << raw;
  }
}

TEST(Parse, GarbageIsParseErrorWithRawText) {
  try {
    parse_grounded_answer("I cannot help with that");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("I cannot help with that"), std::string::npos);
  }
  EXPECT_EQ(error_kind([] { parse_grounded_answer(""); }), ErrorKind::kParse);
}

TEST(Parse, CanonicalFormIsIdempotent) {
  const std::vector<std::string> inputs{
      R"({"answer": "x", "region_ids": [1, 2], "box": [1, 2, 3, 4], "confidence_note": "sure"})",
      R"({"answer": "not found"})", R"({"answer": "only"})", R"({'text': 'q', 'ids': ['B5']})"};
  for (const auto& raw : inputs) {
    const auto first = parse_grounded_answer(raw);
    const auto again = parse_grounded_answer(to_json(first));
    EXPECT_EQ(first, again) << raw;
    EXPECT_EQ(to_json(again), to_json(first));
  }
}

TEST(Repair, ProducesStrictJson) {
  for (const char* raw : {"{'a': 'b',}", "{a: True, b: [1, 2,]", "{\"a\": 1 /* c */}", "{a = 'x'}"}) {
    const auto fixed = repair_json_text(raw);
    EXPECT_NO_THROW(json_io::parse_or_throw(fixed, "repair")) << raw << " -> " << fixed;
  }
}

struct FixtureCase {
  std::string raw;
  json_io::Json expected;
};

std::vector<FixtureCase> fixture() {
  const auto j = json_io::parse_or_throw(json_io::read_text(std::filesystem::path(DLAVA_TEST_DATA) / "malformed_outputs.json"),
                                         "fixture");
  std::vector<FixtureCase> out;
  for (const auto& c : j) out.push_back({c.at("raw").get<std::string>(), c.at("expected")});
  return out;
}

bool matches(const GroundedAnswer& got, const json_io::Json& expected) {
  if (expected.contains("answer") && got.answer != expected["answer"].get<std::string>()) return false;
  if (expected.value("not_found", false) != got.not_found) return false;
  if (expected.contains("region_ids")) {
    if (!got.region_ids || *got.region_ids != expected["region_ids"].get<std::vector<std::int32_t>>()) return false;
  }
  if (expected.contains("box")) {
    const auto b = expected["box"].get<std::vector<std::int32_t>>();
    if (got.box != BBox{b[0], b[1], b[2], b[3]}) return false;
  }
  return true;
}

TEST(Fixture, HandLabelledOutputs) {
  const auto cases = fixture();
  ASSERT_EQ(cases.size(), 20u);
  ParseContext ctx;
  ctx.valid_ids = std::set<std::int32_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t ok = 0;
  for (const auto& c : cases) {
    try {
      const auto got = parse_grounded_answer(c.raw, ctx);
      if (got.region_ids) {
        for (auto id : *got.region_ids) ASSERT_TRUE(ctx.valid_ids->count(id)) << c.raw;
      }
      if (matches(got, c.expected)) {
        ++ok;
      } else {
        std::cout << "mismatch: " << c.raw << " -> " << to_json(got) << "\n";
      }
    } catch (const Error& e) {
      std::cout << "threw: " << c.raw << ": " << e.what() << "\n";
    }
  }
  EXPECT_GE(ok, 18u);
}

}  // namespace
}  // namespace dlava::model
