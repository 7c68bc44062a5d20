#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlava/image.hpp"
#include "dlava/types.hpp"

namespace dlava::dataset {

enum class Provenance { kFunsd, kCord, kSroie, kDocvqa, kSynthetic };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

// Word-level ground truth: what was written where.
struct WordTruth {
  std::string text;
  BBox box;
  friend bool operator==(const WordTruth&, const WordTruth&) = default;
};

// doc_id -> image, loaded from disk on first access. Registration happens
// while a corpus is being built; lookups are safe from any thread afterwards.
class ImageStore {
 public:
  void add(const std::string& doc_id, Raster raster);
  void add(const std::string& doc_id, std::filesystem::path png_path, std::int32_t width, std::int32_t height);

  bool contains(const std::string& doc_id) const { return entries_.count(doc_id) != 0; }
  std::vector<std::string> doc_ids() const;
  std::pair<std::int32_t, std::int32_t> dimensions(const std::string& doc_id) const;
  DocumentImage get(const std::string& doc_id) const;

 private:
  struct Entry {
    std::filesystem::path path;
    std::int32_t width = 0;
    std::int32_t height = 0;
    mutable std::once_flag once;
    mutable Raster raster;
  };
  const Entry& entry(const std::string& doc_id) const;

  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

struct Corpus {
  std::string name;
  Provenance provenance = Provenance::kSynthetic;
  std::vector<QARecord> records;
  std::shared_ptr<ImageStore> images = std::make_shared<ImageStore>();
  // Exact word ground truth, present for synthetic corpora.
  std::map<std::string, std::vector<WordTruth>> words;
  // Non-fatal ingestion notes (skipped entities and the like).
  std::vector<std::string> warnings;

  DocumentImage image(const std::string& doc_id) const { return images->get(doc_id); }
  const QARecord* find(std::string_view question_id) const;
};

// Checks that every record resolves to an image, question ids are unique and
// gold boxes fit their images. Throws a validation error otherwise.
void validate(const Corpus& corpus);

// "What is the content in the <KEY> field?" with the key upper-cased.
std::string kv_to_question(std::string_view field_key);

// Best contiguous token run matching the answer, by normalized similarity of
// the space-joined run. Below a similarity of min_similarity there is no box.
// Ties go to the earliest starting run.
std::optional<BBox> derive_gold_box(std::string_view answer, std::span<const RecognizedRegion> tokens,
                                    double min_similarity = 0.8);

Corpus load_funsd(const std::filesystem::path& root);
Corpus load_cord(const std::filesystem::path& root);
struct SroieOptions {
  // Derive gold boxes from the transcript lines. Off by default.
  bool localize = false;
};
Corpus load_sroie(const std::filesystem::path& root, const SroieOptions& options = {});
// The question file is <split>_v1.0.json when a split is given, else
// questions.json. OCR tokens are read from ocr_results/<image stem>.json.
Corpus load_docvqa(const std::filesystem::path& root, std::string_view split = {});

// Unified on-disk format: manifest.jsonl, corpus.json, images/<doc_id>.png and
// (when word truth exists) words.jsonl.
void save_unified(const Corpus& corpus, const std::filesystem::path& root);
Corpus load_unified(const std::filesystem::path& root);

// One manifest line (no trailing newline) and its inverse. parse_record
// throws a validation error on schema violations.
std::string record_to_line(const QARecord& record);
QARecord parse_record(std::string_view line);

// Stable digest over records and word truth; images are identified by name.
std::string content_hash(const Corpus& corpus);

struct IntRange {
  std::int32_t min = 0;
  std::int32_t max = 0;
};

enum class SynthNoise { kNone, kJitter };

struct SynthConfig {
  std::int32_t n_documents = 5;
  IntRange words_per_doc{12, 24};
  // Glyph cell height in pixels; rounded down to a multiple of 7.
  IntRange font_size{14, 21};
  std::uint64_t seed = 7;
  SynthNoise noise = SynthNoise::kNone;
  IntRange kv_pairs_per_doc{2, 4};
};

void validate(const SynthConfig& cfg);

// Deterministic documents of rendered words with exact word and answer boxes.
Corpus generate_synthetic(const SynthConfig& cfg);

// Loads any supported format by name: funsd, cord, sroie, docvqa, unified.
Corpus load_by_format(std::string_view format, const std::filesystem::path& root, std::string_view split = {});

}  // namespace dlava::dataset
