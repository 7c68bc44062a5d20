#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlava/dataset.hpp"
#include "dlava/types.hpp"

namespace dlava::recognition {

// Text recognizer. Must be deterministic for identical inputs and safe to
// call concurrently. The document id is passed alongside the region so
// ground-truth backends can identify the crop.
class RecognizerBackend {
 public:
  virtual ~RecognizerBackend() = default;
  virtual std::string backend_id() const = 0;
  // May return an empty string. Failures throw.
  virtual std::string recognize(std::string_view doc_id, const DetectedRegion& region) const = 0;
};

// Output i pairs input i with its text. A failing region is reported as a
// recognition error naming its region_id.
std::vector<RecognizedRegion> recognize_all(const RecognizerBackend& backend, std::string_view doc_id,
                                            std::span<const DetectedRegion> regions);

// Per-character corruption: with probability substitution_rate a character is
// replaced by a different one, else with probability deletion_rate dropped.
struct NoiseModel {
  double substitution_rate = 0;
  double deletion_rate = 0;
  std::uint64_t seed = 0;
};

void validate(const NoiseModel& noise);

// The random stream is derived from (seed, doc_id, region_id), so the result
// does not depend on call order or threading.
std::string apply_noise(std::string_view text, const NoiseModel& noise, std::string_view doc_id,
                        std::int32_t region_id);

// Looks regions up in word-level ground truth and returns the recorded text
// with noise applied. A region matches the word with the highest IoU >= 0.5;
// failing that, words lying mostly inside the region are joined when their
// envelope reaches IoU >= 0.5 (line-level boxes). Blank crops give "".
class FixtureRecognizer : public RecognizerBackend {
 public:
  FixtureRecognizer(std::map<std::string, std::vector<dataset::WordTruth>> words, NoiseModel noise);

  std::string backend_id() const override;
  std::string recognize(std::string_view doc_id, const DetectedRegion& region) const override;

  const NoiseModel& noise() const { return noise_; }

 private:
  std::map<std::string, std::vector<dataset::WordTruth>, std::less<>> words_;
  NoiseModel noise_;
};

// Requires word ground truth (synthetic corpora carry it).
std::shared_ptr<FixtureRecognizer> fixture_recognizer(const dataset::Corpus& corpus, NoiseModel noise = {});

}  // namespace dlava::recognition
