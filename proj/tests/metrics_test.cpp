#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "dlava/metrics.hpp"
#include "test_util.hpp"

namespace dlava::metrics {
namespace {

using testing::error_kind;

// Breadth-first search over single-character edits from `from`; distances to
// every string over the alphabet of length <= max_len.
std::map<std::string, int> edit_bfs(const std::string& from, const std::string& alphabet, std::size_t max_len) {
  std::map<std::string, int> dist{{from, 0}};
  std::deque<std::string> queue{from};
  while (!queue.empty()) {
    const auto s = queue.front();
    queue.pop_front();
    const int d = dist[s];
    std::vector<std::string> next;
    for (std::size_t i = 0; i < s.size(); ++i) next.push_back(s.substr(0, i) + s.substr(i + 1));
    for (std::size_t i = 0; i <= s.size() && s.size() < max_len; ++i) {
      for (char c : alphabet) next.push_back(s.substr(0, i) + c + s.substr(i));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (char c : alphabet) {
        auto t = s;
        t[i] = c;
        next.push_back(t);
      }
    }
    for (auto& t : next) {
      if (dist.emplace(t, d + 1).second) queue.push_back(t);
    }
  }
  return dist;
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].size() == max_len) continue;
    for (char c : alphabet) out.push_back(out[i] + c);
  }
  return out;
}

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein_distance("", ""), 0u);
  EXPECT_EQ(levenshtein_distance("cat", "bat"), 1u);
  EXPECT_EQ(levenshtein_distance("kitten", "sitting"), 3u);
}

TEST(Levenshtein, MatchesExhaustiveEditSearch) {
  const std::string alphabet = "abc";
  const auto strings = all_strings(alphabet, 4);
  for (const auto& a : strings) {
    const auto dist = edit_bfs(a, alphabet, 4);
    for (const auto& b : strings) ASSERT_EQ(levenshtein_distance(a, b), static_cast<std::size_t>(dist.at(b))) << a << " " << b;
  }
}

TEST(Levenshtein, CountsCodePoints) {
  EXPECT_EQ(levenshtein_distance("caf\xC3\xA9", "cafe"), 1u);
}

TEST(Levenshtein, SymmetricAndTriangle) {
  std::mt19937 rng(9);
  std::uniform_int_distribution<int> len(0, 8), ch(0, 3);
  auto rand_str = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += static_cast<char>('a' + ch(rng));
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    const auto a = rand_str(), b = rand_str(), c = rand_str();
    EXPECT_EQ(levenshtein_distance(a, b), levenshtein_distance(b, a));
    EXPECT_LE(levenshtein_distance(a, c), levenshtein_distance(a, b) + levenshtein_distance(b, c));
  }
}

TEST(Similarity, Examples) {
  EXPECT_DOUBLE_EQ(normalized_similarity("cat", "cat"), 1.0);
  EXPECT_DOUBLE_EQ(normalized_similarity("cat", "bat"), 1.0 - 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(normalized_similarity("abc", ""), 0.0);
  EXPECT_DOUBLE_EQ(normalized_similarity("", ""), 1.0);
}

TEST(Anls, Examples) {
  const std::vector<std::string> gold{"SCIENCE & TECHNOLOGY"};
  EXPECT_DOUBLE_EQ(anls_score("science & technology", gold), 1.0);
  const std::vector<std::string> bat{"bat"};
  EXPECT_DOUBLE_EQ(anls_score("cat", bat), 2.0 / 3.0);
  const std::vector<std::string> cat{"cat"};
  EXPECT_DOUBLE_EQ(anls_score("xyzq", cat), 0.0);
}

TEST(Anls, EmptyGoldsIsUsageError) {
  EXPECT_EQ(error_kind([] { anls_score("a", std::span<const std::string>{}); }), ErrorKind::kUsage);
}

TEST(Anls, NormalizesWhitespaceAndCase) {
  const std::vector<std::string> gold{"  Total   Price "};
  EXPECT_DOUBLE_EQ(anls_score("TOTAL PRICE", gold), 1.0);
  AnlsConfig strict;
  strict.case_fold = false;
  EXPECT_LT(anls_score("TOTAL PRICE", gold, strict), 1.0);
}

TEST(Anls, MaxOverGoldsAndThreshold) {
  const std::vector<std::string> golds{"xxxx", "abcd"};
  EXPECT_DOUBLE_EQ(anls_score("abce", golds), 0.75);
  AnlsConfig cfg;
  cfg.threshold = 0.8;
  EXPECT_DOUBLE_EQ(anls_score("abce", golds, cfg), 0.0);
  cfg.threshold = 0.0;
  const std::vector<std::string> far{"abcd"};
  EXPECT_DOUBLE_EQ(anls_score("axyz", far, cfg), 0.25);
}

TEST(Anls, InvalidThresholdIsUsageError) {
  AnlsConfig cfg;
  cfg.threshold = 1.5;
  EXPECT_EQ(error_kind([&] { validate(cfg); }), ErrorKind::kUsage);
}

double raster_iou(const BBox& a, const BBox& b) {
  std::int64_t inter = 0, uni = 0;
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) {
      const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), raster_iou({0, 0, 10, 10}, {5, 0, 15, 10}));
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou({3, 3, 3, 3}, {3, 3, 3, 3}), 0.0);
}

TEST(Iou, MatchesRasterOracleAndIsSymmetric) {
  std::mt19937 rng(21);
  std::uniform_int_distribution<int> d(0, 100);
  for (int i = 0; i < 300; ++i) {
    auto box = [&] {
      int a = d(rng), b = d(rng), c = d(rng), e = d(rng);
      return BBox{std::min(a, b), std::min(c, e), std::max(a, b), std::max(c, e)};
    };
    const auto a = box(), b = box();
    EXPECT_NEAR(iou(a, b), raster_iou(a, b), 1e-9);
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LE(iou(a, b), 1.0);
  }
}

TEST(Threshold, ExactBoundaries) {
  EXPECT_TRUE(passes_threshold(0.6, 60));
  EXPECT_TRUE(passes_threshold(0.6000000001, 60));
  EXPECT_TRUE(passes_threshold(0.5999999999, 60));
  EXPECT_FALSE(passes_threshold(0.5999, 60));
}

// IoU exactly 0.6.
const BBox kGold{0, 0, 10, 10};
const BBox kAt60{0, 0, 6, 10};

TEST(Map, SinglePairAt60IsPointThree) {
  ASSERT_DOUBLE_EQ(iou(kAt60, kGold), 0.6);
  const std::vector<std::pair<std::optional<BBox>, BBox>> pairs{{kAt60, kGold}};
  const auto r = map_at_iou(pairs);
  EXPECT_DOUBLE_EQ(r.map_iou, 0.3);
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    EXPECT_DOUBLE_EQ(r.per_threshold_accuracy[i], kIouThresholds[i] <= 60 ? 1.0 : 0.0);
  }
}

TEST(Map, AllPerfectAndAllMissing) {
  const std::vector<std::pair<std::optional<BBox>, BBox>> perfect{{kGold, kGold}, {kGold, kGold}};
  EXPECT_DOUBLE_EQ(map_at_iou(perfect).map_iou, 1.0);
  const std::vector<std::pair<std::optional<BBox>, BBox>> missing{{std::nullopt, kGold}};
  EXPECT_DOUBLE_EQ(map_at_iou(missing).map_iou, 0.0);
}

TEST(Map, MixedFixture) {
  std::vector<std::pair<std::optional<BBox>, BBox>> pairs;
  for (int i = 0; i < 7; ++i) pairs.emplace_back(kGold, kGold);
  for (int i = 0; i < 3; ++i) pairs.emplace_back(kAt60, kGold);
  EXPECT_NEAR(map_at_iou(pairs).map_iou, 0.79, 1e-12);
}

TEST(Map, EmptyIsUsageError) {
  EXPECT_EQ(error_kind([] { map_at_iou({}); }), ErrorKind::kUsage);
}

TEST(Map, MonotoneAndBracketed) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> d(0, 100);
  for (int run = 0; run < 50; ++run) {
    std::vector<std::pair<std::optional<BBox>, BBox>> pairs;
    for (int i = 0; i < 20; ++i) {
      int a = d(rng) / 2, b = d(rng) / 2;
      const BBox g{a, b, a + 30, b + 30};
      const BBox p{a + d(rng) % 12, b + d(rng) % 12, a + 30 + d(rng) % 12, b + 30};
      pairs.emplace_back(p, g);
    }
    const auto r = map_at_iou(pairs);
    for (std::size_t i = 1; i < r.per_threshold_accuracy.size(); ++i) {
      EXPECT_LE(r.per_threshold_accuracy[i], r.per_threshold_accuracy[i - 1]);
    }
    EXPECT_GE(r.map_iou, r.per_threshold_accuracy.back());
    EXPECT_LE(r.map_iou, r.per_threshold_accuracy.front());
  }
}

QARecord rec(std::string id, std::vector<std::string> golds, std::optional<BBox> box) {
  return {"doc", std::move(id), "q?", std::move(golds), box, std::nullopt};
}

Prediction pred(std::string id, std::string answer, std::optional<BBox> box) {
  Prediction p;
  p.question_id = std::move(id);
  p.answer = std::move(answer);
  p.answer_box = box;
  return p;
}

// Six rows recomputed by hand with the per-question oracles.
TEST(ScoreRun, SixRowFixture) {
  const std::vector<QARecord> gold{
      rec("q1", {"cat"}, kGold),            // exact answer, exact box
      rec("q2", {"bat"}, kGold),            // 2/3, IoU 0.6
      rec("q3", {"cat"}, kGold),            // 0, box missing
      rec("q4", {"abcd", "xyz"}, BBox{0, 0, 20, 10}),  // matches variant, IoU 0.5
      rec("q5", {"hello"}, std::nullopt),   // no gold box, 0.8
      rec("q6", {"world"}, kGold),          // no prediction
  };
  const std::vector<Prediction> preds{
      pred("q1", "CAT", kGold), pred("q2", "cat", kAt60), pred("q3", "zzzz", std::nullopt),
      pred("q4", "xyz", BBox{0, 0, 10, 10}), pred("q5", "hallo", BBox{0, 0, 1, 1}),
  };
  const auto r = score_run(preds, gold);
  ASSERT_EQ(r.per_question.size(), 6u);
  const double anls[] = {1.0, 2.0 / 3.0, 0.0, 1.0, 0.8, 0.0};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(r.per_question[i].anls, anls[i], 1e-12) << i;
  EXPECT_NEAR(r.aggregate_anls, (1.0 + 2.0 / 3.0 + 0.0 + 1.0 + 0.8 + 0.0) / 6.0, 1e-12);
  EXPECT_FALSE(r.per_question[4].iou.has_value());
  EXPECT_EQ(r.total, 6u);
  EXPECT_EQ(r.with_gold_box, 5u);
  EXPECT_EQ(r.with_predicted_box, 3u);
  // Gold-box rows: IoU 1, 0.6, miss, 0.5, miss.
  const double expected_acc[] = {3, 2, 2, 1, 1, 1, 1, 1, 1, 1};
  double sum = 0;
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    EXPECT_NEAR(r.per_threshold_accuracy[i], expected_acc[i] / 5.0, 1e-12) << kIouThresholds[i];
    sum += expected_acc[i] / 5.0;
  }
  EXPECT_NEAR(r.map_iou, sum / 10.0, 1e-12);
}

TEST(ScoreRun, UnknownAndDuplicateIdsAreValidationErrors) {
  const std::vector<QARecord> gold{rec("q1", {"a"}, kGold)};
  const std::vector<Prediction> unknown{pred("zz", "a", kGold)};
  EXPECT_EQ(error_kind([&] { score_run(unknown, gold); }), ErrorKind::kValidation);
  const std::vector<Prediction> dup{pred("q1", "a", kGold), pred("q1", "a", kGold)};
  EXPECT_EQ(error_kind([&] { score_run(dup, gold); }), ErrorKind::kValidation);
}

TEST(ScoreRun, AllEmptyAnswersScoreZero) {
  const std::vector<QARecord> gold{rec("q1", {"a"}, kGold), rec("q2", {"b"}, std::nullopt)};
  const std::vector<Prediction> preds{pred("q1", "", std::nullopt), pred("q2", "", std::nullopt)};
  EXPECT_DOUBLE_EQ(score_run(preds, gold).aggregate_anls, 0.0);
}

TEST(ScoreRun, GatedModeDropsWrongAnswerBoxes) {
  const std::vector<QARecord> gold{rec("q1", {"cat"}, kGold)};
  const std::vector<Prediction> preds{pred("q1", "zzzz", kGold)};
  EXPECT_DOUBLE_EQ(score_run(preds, gold).map_iou, 1.0);
  ScoreOptions gated;
  gated.gate_iou_on_answer = true;
  const auto r = score_run(preds, gold, gated);
  EXPECT_DOUBLE_EQ(r.map_iou, 0.0);
  EXPECT_TRUE(r.gated);
}

TEST(ScoreRun, AggregatesRecomputeFromRows) {
  std::mt19937 rng(8);
  std::vector<QARecord> gold;
  std::vector<Prediction> preds;
  for (int i = 0; i < 40; ++i) {
    const auto id = "q" + std::to_string(i);
    gold.push_back(rec(id, {"answer" + std::to_string(i % 3)}, BBox{0, 0, 20, 20}));
    preds.push_back(pred(id, "answer" + std::to_string(rng() % 4), BBox{0, 0, 20 - int(rng() % 10), 20}));
  }
  const auto r = score_run(preds, gold);
  double anls = 0;
  for (const auto& q : r.per_question) anls += q.anls;
  EXPECT_EQ(r.aggregate_anls, anls / 40.0);
  double m = 0;
  for (double a : r.per_threshold_accuracy) m += a;
  EXPECT_EQ(r.map_iou, m / 10.0);
}

}  // namespace
}  // namespace dlava::metrics
