#include "dlava/recognition.hpp"

#include <algorithm>
#include <cstdio>

#include "dlava/error.hpp"
#include "dlava/metrics.hpp"
#include "dlava/rng.hpp"
#include "dlava/text.hpp"

namespace dlava::recognition {

std::vector<RecognizedRegion> recognize_all(const RecognizerBackend& backend, std::string_view doc_id,
                                            std::span<const DetectedRegion> regions) {
  std::vector<RecognizedRegion> out;
  out.reserve(regions.size());
  for (const auto& region : regions) {
    try {
      out.push_back({region, backend.recognize(doc_id, region)});
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kRecognition,
                  "recognizer '" + backend.backend_id() + "' failed on region " + std::to_string(region.region_id) +
                      ": " + e.what(),
                  "recognition");
    }
  }
  return out;
}

void validate(const NoiseModel& noise) {
  const bool ok = noise.substitution_rate >= 0 && noise.substitution_rate <= 1 && noise.deletion_rate >= 0 &&
                  noise.deletion_rate <= 1 && noise.substitution_rate + noise.deletion_rate <= 1 + 1e-12;
  if (!ok) fail(ErrorKind::kUsage, "noise rates must lie in [0,1] and sum to at most 1");
}

namespace {

constexpr std::u32string_view kAlphabet = U"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

char32_t substitute(char32_t original, Rng& rng) {
  const auto pos = kAlphabet.find(original);
  if (pos == std::u32string_view::npos) {
    return kAlphabet[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kAlphabet.size()) - 1))];
  }
  auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kAlphabet.size()) - 2));
  if (idx >= pos) ++idx;
  return kAlphabet[idx];
}

}  // namespace

std::string apply_noise(std::string_view input, const NoiseModel& noise, std::string_view doc_id,
                        std::int32_t region_id) {
  validate(noise);
  if (noise.substitution_rate == 0 && noise.deletion_rate == 0) return std::string(input);
  const auto stream = Rng::mix(noise.seed) ^ Rng::hash(doc_id) ^ Rng::mix(static_cast<std::uint64_t>(region_id) + 1);
  // One decision draw and one replacement draw per character.
  Rng rng(stream);
  Rng replacement_rng(Rng::mix(stream));
  std::u32string out;
  for (char32_t c : text::decode_utf8(input)) {
    const double u = rng.uniform01();
    const char32_t replacement = substitute(c, replacement_rng);
    if (u < noise.substitution_rate) {
      out.push_back(replacement);
    } else if (u < noise.substitution_rate + noise.deletion_rate) {
      continue;
    } else {
      out.push_back(c);
    }
  }
  return text::encode_utf8(out);
}

FixtureRecognizer::FixtureRecognizer(std::map<std::string, std::vector<dataset::WordTruth>> words, NoiseModel noise)
    : words_(words.begin(), words.end()), noise_(noise) {
  validate(noise_);
}

std::string FixtureRecognizer::backend_id() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "fixture(ps=%.4g,pd=%.4g,seed=%llu)", noise_.substitution_rate,
                noise_.deletion_rate, static_cast<unsigned long long>(noise_.seed));
  return buf;
}

std::string FixtureRecognizer::recognize(std::string_view doc_id, const DetectedRegion& region) const {
  if (region.crop.empty()) fail(ErrorKind::kUsage, "recognize needs a non-empty crop");
  if (is_blank(region.crop)) return "";
  const auto it = words_.find(doc_id);
  if (it == words_.end()) {
    fail(ErrorKind::kRecognition, "no ground truth for document '" + std::string(doc_id) + "'");
  }
  const auto& words = it->second;

  const dataset::WordTruth* best = nullptr;
  double best_iou = 0.5;
  for (const auto& w : words) {
    const double v = metrics::iou(w.box, region.box);
    if (v >= best_iou && (!best || v > best_iou)) {
      best = &w;
      best_iou = v;
    }
  }
  std::string truth;
  if (best) {
    truth = best->text;
  } else {
    std::vector<BBox> boxes;
    for (const auto& w : words) {
      const BBox inter{std::max(w.box.x1, region.box.x1), std::max(w.box.y1, region.box.y1),
                       std::min(w.box.x2, region.box.x2), std::min(w.box.y2, region.box.y2)};
      if (!inter.valid() || w.box.area() == 0 || inter.area() * 2 < w.box.area()) continue;
      boxes.push_back(w.box);
      truth += (truth.empty() ? "" : " ") + w.text;
    }
    if (boxes.empty() || metrics::iou(envelope(boxes), region.box) < 0.5) {
      fail(ErrorKind::kRecognition, "region " + to_string(region.box) + " of '" + std::string(doc_id) +
                                        "' matches no ground-truth word");
    }
  }
  return apply_noise(truth, noise_, doc_id, region.region_id);
}

std::shared_ptr<FixtureRecognizer> fixture_recognizer(const dataset::Corpus& corpus, NoiseModel noise) {
  if (corpus.words.empty()) {
    fail(ErrorKind::kUsage, "fixture recognizer needs word-level ground truth; corpus '" + corpus.name + "' has none");
  }
  return std::make_shared<FixtureRecognizer>(corpus.words, noise);
}

}  // namespace dlava::recognition
