#include "dlava/dataset.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "dlava/error.hpp"
#include "dlava/glyph_atlas.hpp"
#include "dlava/hashing.hpp"
#include "dlava/json_io.hpp"
#include "dlava/metrics.hpp"
#include "dlava/png_io.hpp"
#include "dlava/rng.hpp"
#include "dlava/text.hpp"

namespace dlava::dataset {

namespace fs = std::filesystem;
using json_io::Json;
using json_io::OrderedJson;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kFunsd: return "funsd";
    case Provenance::kCord: return "cord";
    case Provenance::kSroie: return "sroie";
    case Provenance::kDocvqa: return "docvqa";
    case Provenance::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::kFunsd, Provenance::kCord, Provenance::kSroie, Provenance::kDocvqa, Provenance::kSynthetic}) {
    if (to_string(p) == s) return p;
  }
  fail(ErrorKind::kValidation, "unknown corpus provenance '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- ImageStore

void ImageStore::add(const std::string& doc_id, Raster raster) {
  auto entry = std::make_unique<Entry>();
  entry->width = raster.width();
  entry->height = raster.height();
  std::call_once(entry->once, [&] { entry->raster = std::move(raster); });
  entries_[doc_id] = std::move(entry);
}

void ImageStore::add(const std::string& doc_id, fs::path png_path, std::int32_t width, std::int32_t height) {
  auto entry = std::make_unique<Entry>();
  entry->path = std::move(png_path);
  entry->width = width;
  entry->height = height;
  entries_[doc_id] = std::move(entry);
}

std::vector<std::string> ImageStore::doc_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

const ImageStore::Entry& ImageStore::entry(const std::string& doc_id) const {
  const auto it = entries_.find(doc_id);
  if (it == entries_.end()) fail(ErrorKind::kValidation, "no image for document '" + doc_id + "'");
  return *it->second;
}

std::pair<std::int32_t, std::int32_t> ImageStore::dimensions(const std::string& doc_id) const {
  const auto& e = entry(doc_id);
  return {e.width, e.height};
}

DocumentImage ImageStore::get(const std::string& doc_id) const {
  const auto& e = entry(doc_id);
  std::call_once(e.once, [&] {
    auto raster = png::read_file(e.path);
    if (raster.width() != e.width || raster.height() != e.height) {
      fail(ErrorKind::kValidation, e.path.string() + ": image dimensions changed since ingestion");
    }
    e.raster = std::move(raster);
  });
  return {doc_id, e.raster};
}

// -------------------------------------------------------------------- Corpus

const QARecord* Corpus::find(std::string_view question_id) const {
  for (const auto& r : records) {
    if (r.question_id == question_id) return &r;
  }
  return nullptr;
}

void validate(const Corpus& corpus) {
  std::set<std::string> seen;
  for (const auto& r : corpus.records) {
    if (!seen.insert(r.question_id).second) fail(ErrorKind::kValidation, "duplicate question_id '" + r.question_id + "'");
    if (!corpus.images->contains(r.doc_id)) {
      fail(ErrorKind::kValidation, "record '" + r.question_id + "' references missing image '" + r.doc_id + "'");
    }
    if (r.gold_answers.empty()) fail(ErrorKind::kValidation, "record '" + r.question_id + "' has no gold answers");
    if (r.gold_box) {
      const auto [w, h] = corpus.images->dimensions(r.doc_id);
      validate_box(*r.gold_box, w, h);
    }
  }
}

std::string kv_to_question(std::string_view field_key) {
  const auto key = text::trim(text::collapse_whitespace(field_key));
  if (key.empty()) fail(ErrorKind::kUsage, "kv_to_question needs a non-empty field key");
  return "What is the content in the " + text::to_upper_ascii(key) + " field?";
}

std::optional<BBox> derive_gold_box(std::string_view answer, std::span<const RecognizedRegion> tokens,
                                    double min_similarity) {
  const metrics::AnlsConfig norm{};
  const auto target = text::decode_utf8(metrics::normalize_answer(answer, norm));
  if (target.empty() || tokens.empty()) return std::nullopt;
  std::vector<std::u32string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(text::decode_utf8(metrics::normalize_answer(t.text, norm)));

  // Similarity >= s needs |len(run) - len(target)| <= (1 - s) * max(len), so
  // runs longer than len(target) / s can never qualify.
  const double longest_useful = static_cast<double>(target.size()) / std::max(min_similarity, 1e-9);
  double best = -1;
  std::optional<std::pair<std::size_t, std::size_t>> best_run;
  for (std::size_t start = 0; start < words.size(); ++start) {
    std::u32string run;
    for (std::size_t end = start; end < words.size(); ++end) {
      if (end > start) run.push_back(U' ');
      run += words[end];
      if (static_cast<double>(run.size()) > longest_useful + 1e-9) break;
      const double sim = metrics::normalized_similarity(text::encode_utf8(run), text::encode_utf8(target));
      if (sim >= min_similarity && sim > best) {
        best = sim;
        best_run = {start, end};
      }
    }
  }
  if (!best_run) return std::nullopt;
  std::vector<BBox> boxes;
  for (std::size_t i = best_run->first; i <= best_run->second; ++i) boxes.push_back(tokens[i].region.box);
  return envelope(boxes);
}

// ------------------------------------------------------------------ helpers

namespace {

Json load_json_file(const fs::path& path) { return json_io::parse_or_throw(json_io::read_text(path), path.string()); }

std::vector<fs::path> files_with_extension(const fs::path& dir, std::string_view ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) fail(ErrorKind::kValidation, "missing directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path first_existing_dir(const fs::path& root, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (fs::is_directory(root / n)) return root / n;
  }
  fail(ErrorKind::kValidation, "none of the expected directories exist under " + root.string());
}

void register_png(Corpus& corpus, const std::string& doc_id, const fs::path& png_path, const fs::path& annotation) {
  if (!fs::exists(png_path)) {
    fail(ErrorKind::kValidation, annotation.string() + ": missing image " + png_path.string());
  }
  const auto [w, h] = png::dimensions(png_path);
  corpus.images->add(doc_id, png_path, w, h);
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (w.empty()) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

template <typename Fn>
auto with_file_context(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::kValidation, path.string() + ": malformed annotation (" + e.what() + ")");
  }
}

std::string field_key_from_label(std::string_view label) {
  std::string key = text::trim(label);
  while (!key.empty() && (key.back() == ':' || key.back() == ' ')) key.pop_back();
  return key;
}

}  // namespace

// -------------------------------------------------------------------- FUNSD

Corpus load_funsd(const fs::path& root) {
  Corpus corpus;
  corpus.name = "funsd";
  corpus.provenance = Provenance::kFunsd;
  const auto ann_dir = first_existing_dir(root, {"annotations"});
  const auto img_dir = first_existing_dir(root, {"images"});
  for (const auto& path : files_with_extension(ann_dir, ".json")) {
    const auto doc_id = path.stem().string();
    const auto doc = load_json_file(path);
    register_png(corpus, doc_id, img_dir / (doc_id + ".png"), path);
    with_file_context(path, [&] {
      if (!doc.contains("form") || !doc["form"].is_array()) throw std::runtime_error("no 'form' array");
      std::map<long, const Json*> by_id;
      for (const auto& entity : doc["form"]) by_id[entity.at("id").get<long>()] = &entity;
      for (const auto& entity : doc["form"]) {
        if (entity.at("label").get<std::string>() != "question") continue;
        const long qid = entity.at("id").get<long>();
        std::vector<const Json*> answers;
        for (const auto& link : entity.value("linking", Json::array())) {
          if (!link.is_array() || link.size() != 2) throw std::runtime_error("linking entries must be pairs");
          const long other = link[0].get<long>() == qid ? link[1].get<long>() : link[0].get<long>();
          const auto it = by_id.find(other);
          if (it == by_id.end()) throw std::runtime_error("link to unknown entity " + std::to_string(other));
          if (it->second->at("label").get<std::string>() == "answer") answers.push_back(it->second);
        }
        const auto key = field_key_from_label(entity.at("text").get<std::string>());
        if (answers.empty() || key.empty()) {
          corpus.warnings.push_back(path.filename().string() + ": question entity " + std::to_string(qid) +
                                    " has no linked answer; skipped");
          continue;
        }
        QARecord record;
        record.doc_id = doc_id;
        record.question_id = doc_id + "-" + std::to_string(qid);
        record.question = kv_to_question(key);
        record.source_field_key = key;
        std::vector<BBox> boxes;
        for (const auto* answer : answers) {
          std::vector<std::string> texts;
          for (const auto& word : answer->value("words", Json::array())) {
            texts.push_back(word.at("text").get<std::string>());
            boxes.push_back(json_io::box_from_json(word.at("box"), path.string()));
          }
          if (texts.empty()) {
            texts.push_back(answer->at("text").get<std::string>());
            boxes.push_back(json_io::box_from_json(answer->at("box"), path.string()));
          }
          const auto joined = join_words(texts);
          if (!joined.empty() &&
              std::find(record.gold_answers.begin(), record.gold_answers.end(), joined) == record.gold_answers.end()) {
            record.gold_answers.push_back(joined);
          }
        }
        if (record.gold_answers.empty()) {
          corpus.warnings.push_back(path.filename().string() + ": question entity " + std::to_string(qid) +
                                    " links only to empty answers; skipped");
          continue;
        }
        record.gold_box = envelope(boxes);
        corpus.records.push_back(std::move(record));
      }
      return 0;
    });
  }
  validate(corpus);
  return corpus;
}

// --------------------------------------------------------------------- CORD

namespace {

std::string cord_field_key(std::string_view category) {
  static const std::map<std::string, std::string> kAbbrev{
      {"nm", "name"}, {"cnt", "count"}, {"num", "number"}, {"unitprice", "unit price"}, {"etc", "other"}};
  std::vector<std::string> parts;
  std::string cur;
  for (char c : category) {
    if (c == '.' || c == '_') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  std::vector<std::string> out;
  for (auto& p : parts) {
    const auto it = kAbbrev.find(p);
    const std::string word = it == kAbbrev.end() ? p : it->second;
    if (out.empty() || out.back() != word) out.push_back(word);
  }
  return join_words(out);
}

BBox cord_quad_box(const Json& quad) {
  Quad q;
  for (int i = 0; i < 4; ++i) {
    q.corners[i] = {quad.at("x" + std::to_string(i + 1)).get<double>(), quad.at("y" + std::to_string(i + 1)).get<double>()};
  }
  return quad_to_bbox(q);
}

}  // namespace

Corpus load_cord(const fs::path& root) {
  Corpus corpus;
  corpus.name = "cord";
  corpus.provenance = Provenance::kCord;
  const auto ann_dir = first_existing_dir(root, {"json"});
  const auto img_dir = first_existing_dir(root, {"image", "images"});
  for (const auto& path : files_with_extension(ann_dir, ".json")) {
    const auto doc_id = path.stem().string();
    const auto doc = load_json_file(path);
    register_png(corpus, doc_id, img_dir / (doc_id + ".png"), path);
    with_file_context(path, [&] {
      struct Field {
        std::vector<std::string> answers;
        std::vector<BBox> boxes;
      };
      std::vector<std::pair<std::string, Field>> fields;
      for (const auto& line : doc.at("valid_line")) {
        const auto category = line.at("category").get<std::string>();
        std::vector<std::string> texts;
        std::vector<BBox> boxes;
        for (const auto& word : line.at("words")) {
          if (word.value("is_key", 0) == 1) continue;
          texts.push_back(word.at("text").get<std::string>());
          boxes.push_back(cord_quad_box(word.at("quad")));
        }
        const auto answer = join_words(texts);
        if (answer.empty()) continue;
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == category; });
        if (it == fields.end()) {
          fields.emplace_back(category, Field{});
          it = std::prev(fields.end());
        }
        auto& answers = it->second.answers;
        if (std::find(answers.begin(), answers.end(), answer) == answers.end()) answers.push_back(answer);
        it->second.boxes.insert(it->second.boxes.end(), boxes.begin(), boxes.end());
      }
      for (std::size_t k = 0; k < fields.size(); ++k) {
        const auto& [category, field] = fields[k];
        QARecord record;
        record.doc_id = doc_id;
        record.question_id = doc_id + "-" + category;
        const auto key = cord_field_key(category);
        record.question = kv_to_question(key);
        record.source_field_key = key;
        record.gold_answers = field.answers;
        record.gold_box = envelope(field.boxes);
        corpus.records.push_back(std::move(record));
      }
      return 0;
    });
  }
  validate(corpus);
  return corpus;
}

// -------------------------------------------------------------------- SROIE

Corpus load_sroie(const fs::path& root, const SroieOptions& options) {
  Corpus corpus;
  corpus.name = "sroie";
  corpus.provenance = Provenance::kSroie;
  const auto key_dir = first_existing_dir(root, {"key", "entities"});
  const auto box_dir = first_existing_dir(root, {"box"});
  const auto img_dir = first_existing_dir(root, {"img", "images"});
  static const std::array<const char*, 4> kKeys{"company", "date", "address", "total"};
  for (const auto& path : files_with_extension(key_dir, ".txt")) {
    const auto doc_id = path.stem().string();
    register_png(corpus, doc_id, img_dir / (doc_id + ".png"), path);
    const auto raw = text::trim(json_io::read_text(path));
    if (raw.empty()) continue;
    const auto doc = json_io::parse_or_throw(raw, path.string());
    with_file_context(path, [&] {
      if (!doc.is_object()) throw std::runtime_error("key file must hold an object");
      std::vector<RecognizedRegion> tokens;
      if (options.localize) {
        const auto box_path = box_dir / path.filename();
        if (fs::exists(box_path)) {
          for (const auto& line : json_io::read_lines(box_path)) {
            if (text::trim(line).empty()) continue;
            std::vector<double> coords;
            std::size_t pos = 0;
            for (int i = 0; i < 8; ++i) {
              const auto comma = line.find(',', pos);
              if (comma == std::string::npos) throw std::runtime_error("box line needs 8 coordinates and text");
              coords.push_back(std::stod(line.substr(pos, comma - pos)));
              pos = comma + 1;
            }
            Quad q;
            for (int i = 0; i < 4; ++i) q.corners[i] = {coords[2 * i], coords[2 * i + 1]};
            RecognizedRegion token;
            token.region.box = quad_to_bbox(q);
            token.text = line.substr(pos);
            tokens.push_back(std::move(token));
          }
        }
      }
      for (const char* key : kKeys) {
        if (!doc.contains(key)) continue;
        const auto value = text::trim(doc[key].get<std::string>());
        if (value.empty()) continue;
        QARecord record;
        record.doc_id = doc_id;
        record.question_id = doc_id + "-" + key;
        record.question = kv_to_question(key);
        record.source_field_key = key;
        record.gold_answers = {value};
        if (options.localize) record.gold_box = derive_gold_box(value, tokens);
        corpus.records.push_back(std::move(record));
      }
      return 0;
    });
  }
  validate(corpus);
  return corpus;
}

// ------------------------------------------------------------------- DocVQA

Corpus load_docvqa(const fs::path& root, std::string_view split) {
  Corpus corpus;
  corpus.name = split.empty() ? "docvqa" : "docvqa-" + std::string(split);
  corpus.provenance = Provenance::kDocvqa;
  const auto questions_path = split.empty() ? root / "questions.json" : root / (std::string(split) + "_v1.0.json");
  if (!fs::exists(questions_path)) fail(ErrorKind::kValidation, "missing question file " + questions_path.string());
  const auto doc = load_json_file(questions_path);
  std::map<std::string, std::vector<RecognizedRegion>> ocr_cache;
  std::set<std::string> seen;
  with_file_context(questions_path, [&] {
    for (const auto& q : doc.at("data")) {
      const auto& qid_json = q.at("questionId");
      const std::string qid = qid_json.is_string() ? qid_json.get<std::string>() : std::to_string(qid_json.get<long>());
      if (!seen.insert(qid).second) fail(ErrorKind::kValidation, questions_path.string() + ": duplicate question_id " + qid);
      const fs::path image_rel = q.at("image").get<std::string>();
      const auto doc_id = image_rel.stem().string();
      if (!corpus.images->contains(doc_id)) register_png(corpus, doc_id, root / image_rel, questions_path);
      QARecord record;
      record.doc_id = doc_id;
      record.question_id = qid;
      record.question = q.at("question").get<std::string>();
      for (const auto& a : q.value("answers", Json::array())) record.gold_answers.push_back(a.get<std::string>());
      if (record.gold_answers.empty()) {
        corpus.warnings.push_back("question " + qid + " has no answers; skipped");
        continue;
      }
      if (!ocr_cache.count(doc_id)) {
        auto& tokens = ocr_cache[doc_id];
        const auto ocr_path = root / "ocr_results" / (doc_id + ".json");
        if (fs::exists(ocr_path)) {
          const auto ocr = load_json_file(ocr_path);
          with_file_context(ocr_path, [&] {
            for (const auto& page : ocr.at("recognitionResults")) {
              for (const auto& line : page.at("lines")) {
                for (const auto& word : line.at("words")) {
                  const auto& bb = word.at("boundingBox");
                  if (!bb.is_array() || bb.size() != 8) throw std::runtime_error("boundingBox needs 8 numbers");
                  Quad quad;
                  for (int i = 0; i < 4; ++i) quad.corners[i] = {bb[2 * i].get<double>(), bb[2 * i + 1].get<double>()};
                  RecognizedRegion token;
                  token.region.region_id = static_cast<std::int32_t>(tokens.size());
                  token.region.box = quad_to_bbox(quad);
                  token.text = word.at("text").get<std::string>();
                  tokens.push_back(std::move(token));
                }
              }
            }
            return 0;
          });
        }
      }
      std::optional<BBox> best;
      for (const auto& answer : record.gold_answers) {
        if ((best = derive_gold_box(answer, ocr_cache[doc_id]))) break;
      }
      record.gold_box = best;
      corpus.records.push_back(std::move(record));
    }
    return 0;
  });
  validate(corpus);
  return corpus;
}

// ------------------------------------------------------------------ unified

std::string record_to_line(const QARecord& record) {
  OrderedJson j;
  j["doc_id"] = record.doc_id;
  j["question_id"] = record.question_id;
  j["question"] = record.question;
  j["gold_answers"] = record.gold_answers;
  j["gold_box"] = json_io::box_to_json(record.gold_box);
  j["source_field_key"] = record.source_field_key ? OrderedJson(*record.source_field_key) : OrderedJson(nullptr);
  return j.dump();
}

QARecord parse_record(std::string_view line) {
  const auto j = json_io::parse_or_throw(line, "manifest record");
  auto require_string = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      fail(ErrorKind::kValidation, std::string("manifest record: field '") + key + "' must be a string");
    }
    return j[key].get<std::string>();
  };
  QARecord r;
  r.doc_id = require_string("doc_id");
  r.question_id = require_string("question_id");
  r.question = require_string("question");
  if (!j.contains("gold_answers") || !j["gold_answers"].is_array() || j["gold_answers"].empty()) {
    fail(ErrorKind::kValidation, "manifest record: gold_answers must be a non-empty list");
  }
  for (const auto& a : j["gold_answers"]) {
    if (!a.is_string()) fail(ErrorKind::kValidation, "manifest record: gold answers must be strings");
    r.gold_answers.push_back(a.get<std::string>());
  }
  r.gold_box = json_io::optional_box_from_json(j.value("gold_box", Json()), "manifest record gold_box");
  const auto key = j.value("source_field_key", Json());
  if (!key.is_null()) {
    if (!key.is_string()) fail(ErrorKind::kValidation, "manifest record: source_field_key must be a string or null");
    r.source_field_key = key.get<std::string>();
  }
  return r;
}

namespace {

std::string words_line(const std::string& doc_id, const std::vector<WordTruth>& words) {
  OrderedJson j;
  j["doc_id"] = doc_id;
  j["words"] = OrderedJson::array();
  for (const auto& w : words) j["words"].push_back(OrderedJson{{"text", w.text}, {"box", json_io::box_to_json(w.box)}});
  return j.dump();
}

std::string manifest_text(const Corpus& corpus) {
  std::string out;
  for (const auto& r : corpus.records) out += record_to_line(r) + "\n";
  return out;
}

std::string words_text(const Corpus& corpus) {
  std::string out;
  for (const auto& [doc_id, words] : corpus.words) out += words_line(doc_id, words) + "\n";
  return out;
}

}  // namespace

void save_unified(const Corpus& corpus, const fs::path& root) {
  fs::create_directories(root / "images");
  OrderedJson meta;
  meta["name"] = corpus.name;
  meta["provenance"] = std::string(to_string(corpus.provenance));
  json_io::write_atomic(root / "corpus.json", meta.dump(2) + "\n");
  json_io::write_atomic(root / "manifest.jsonl", manifest_text(corpus));
  if (!corpus.words.empty()) json_io::write_atomic(root / "words.jsonl", words_text(corpus));
  for (const auto& doc_id : corpus.images->doc_ids()) {
    png::write_file(root / "images" / (doc_id + ".png"), corpus.image(doc_id).raster);
  }
}

Corpus load_unified(const fs::path& root) {
  Corpus corpus;
  const auto meta_path = root / "corpus.json";
  if (fs::exists(meta_path)) {
    const auto meta = load_json_file(meta_path);
    corpus.name = meta.value("name", root.filename().string());
    corpus.provenance = provenance_from_string(meta.value("provenance", std::string("synthetic")));
  } else {
    corpus.name = root.filename().string();
  }
  const auto manifest = root / "manifest.jsonl";
  if (!fs::exists(manifest)) fail(ErrorKind::kValidation, "missing manifest " + manifest.string());
  const auto lines = json_io::read_lines(manifest);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      corpus.records.push_back(parse_record(lines[i]));
    } catch (const Error& e) {
      fail(ErrorKind::kValidation, manifest.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  const auto words_path = root / "words.jsonl";
  if (fs::exists(words_path)) {
    for (const auto& line : json_io::read_lines(words_path)) {
      if (text::trim(line).empty()) continue;
      const auto j = json_io::parse_or_throw(line, words_path.string());
      auto& words = corpus.words[j.at("doc_id").get<std::string>()];
      for (const auto& w : j.at("words")) {
        words.push_back({w.at("text").get<std::string>(), json_io::box_from_json(w.at("box"), words_path.string())});
      }
    }
  }
  std::set<std::string> docs;
  for (const auto& r : corpus.records) docs.insert(r.doc_id);
  for (const auto& [doc_id, _] : corpus.words) docs.insert(doc_id);
  for (const auto& doc_id : docs) register_png(corpus, doc_id, root / "images" / (doc_id + ".png"), manifest);
  validate(corpus);
  return corpus;
}

std::string content_hash(const Corpus& corpus) {
  std::string material = corpus.name + "\n" + std::string(to_string(corpus.provenance)) + "\n" + manifest_text(corpus) +
                         words_text(corpus);
  for (const auto& doc_id : corpus.images->doc_ids()) {
    const auto [w, h] = corpus.images->dimensions(doc_id);
    material += doc_id + ":" + std::to_string(w) + "x" + std::to_string(h) + "\n";
  }
  return sha256_hex(material);
}

Corpus load_by_format(std::string_view format, const fs::path& root, std::string_view split) {
  auto base = root;
  if (!split.empty() && format != "docvqa" && fs::is_directory(root / split)) base = root / split;
  if (format == "funsd") return load_funsd(base);
  if (format == "cord") return load_cord(base);
  if (format == "sroie") return load_sroie(base);
  if (format == "docvqa") return load_docvqa(root, split);
  if (format == "unified") return load_unified(base);
  fail(ErrorKind::kUsage, "unsupported dataset format '" + std::string(format) + "'");
}

// ---------------------------------------------------------------- synthetic

namespace {

constexpr std::array<const char*, 14> kFieldKeys{
    "date",    "total",   "company", "department name", "invoice number", "address", "phone",
    "tax",     "subtotal", "cashier", "account",        "reference",      "city",    "cash"};

constexpr std::array<const char*, 12> kOrganisations{
    "SCIENCE & TECHNOLOGY", "ACME TRADING", "NORTH STAR FOODS", "GLOBAL HEALTH", "RIVERSIDE PRINTING",
    "BLUE OCEAN LOGISTICS", "HUMAN RESOURCES", "PUBLIC RELATIONS", "RESEARCH", "FINANCE", "LEGAL AFFAIRS",
    "MARKETING"};

constexpr std::array<const char*, 10> kNames{"JOHN SMITH", "MARY JONES", "ALEX KIM",   "PRIYA RAO", "LEE CHEN",
                                             "OMAR FARAH", "ANA SILVA",  "TOM BAKER", "SARA NOOR", "LUIS DIAZ"};

constexpr std::array<const char*, 10> kCities{"AUSTIN", "DALLAS",  "HOUSTON", "EL PASO", "BOSTON",
                                              "DENVER", "PHOENIX", "SEATTLE", "TAMPA",   "RENO"};

constexpr std::array<const char*, 48> kFiller{
    "THE",     "STATE",   "OF",      "TEXAS",  "REPORT",  "FORM",    "PAGE",    "NOTE",    "ITEM",   "ORDER",
    "RECEIPT", "THANK",   "YOU",     "PLEASE", "RETAIN",  "COPY",    "FOR",     "YOUR",    "RECORDS", "SIGNED",
    "BY",      "AND",     "WITH",    "FROM",   "ANNUAL",  "SUMMARY", "REVIEW",  "OFFICE",  "CENTER", "MAIN",
    "STREET",  "SUITE",   "NUMBER",  "QTY",    "PRICE",   "UNIT",    "DETAILS", "MEMO",    "STORE",  "BRANCH",
    "VISIT",   "AGAIN",   "APPROVED", "DRAFT", "FINAL",   "SECTION", "LETTER",  "CONFIRM"};

std::string pick(Rng& rng, std::span<const char* const> options) {
  return options[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
}

std::string digits(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out.push_back(static_cast<char>('0' + rng.uniform_int(0, 9)));
  return out;
}

std::string amount(Rng& rng) {
  if (rng.uniform_int(0, 5) == 0) return "11,000";
  if (rng.uniform_int(0, 1) == 0) return std::to_string(rng.uniform_int(1, 99)) + "," + digits(rng, 3);
  return std::to_string(rng.uniform_int(1, 999)) + "." + digits(rng, 2);
}

std::string field_value(Rng& rng, std::string_view key) {
  if (key == "date") {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d/%02d/%04d", static_cast<int>(rng.uniform_int(1, 28)),
                  static_cast<int>(rng.uniform_int(1, 12)), static_cast<int>(rng.uniform_int(1990, 2024)));
    return buf;
  }
  if (key == "total" || key == "tax" || key == "subtotal" || key == "cash") return amount(rng);
  if (key == "company" || key == "department name") return pick(rng, kOrganisations);
  if (key == "invoice number") return "INV-" + digits(rng, 5);
  if (key == "reference") return "REF " + digits(rng, 4);
  if (key == "account") return digits(rng, 8);
  if (key == "phone") return "555-" + digits(rng, 4);
  if (key == "cashier") return pick(rng, kNames);
  if (key == "city") return pick(rng, kCities);
  return std::to_string(rng.uniform_int(100, 999)) + " MAIN STREET";
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct LineSpec {
  std::vector<std::string> words;
  // Index of the first value word and the key, for key-value lines.
  std::optional<std::size_t> value_start;
  std::string key;
  std::string value;
};

constexpr std::int32_t kPageWidth = 800;
constexpr std::int32_t kMargin = 24;

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_documents < 1) fail(ErrorKind::kUsage, "synthetic corpus needs n_documents >= 1");
  auto check = [](const IntRange& r, const char* what, std::int32_t floor) {
    if (r.min > r.max || r.min < floor) fail(ErrorKind::kUsage, std::string("invalid synthetic range for ") + what);
  };
  check(cfg.words_per_doc, "words_per_doc", 0);
  check(cfg.font_size, "font_size", glyphs::kCellHeight);
  check(cfg.kv_pairs_per_doc, "kv_pairs_per_doc", 0);
  if (cfg.kv_pairs_per_doc.max > static_cast<std::int32_t>(kFieldKeys.size())) {
    fail(ErrorKind::kUsage, "kv_pairs_per_doc exceeds the " + std::to_string(kFieldKeys.size()) + " available keys");
  }
  if (cfg.font_size.max > 70) fail(ErrorKind::kUsage, "font_size above 70 px does not fit the synthetic page");
}

Corpus generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  Corpus corpus;
  corpus.name = "synthetic-" + std::to_string(cfg.seed);
  corpus.provenance = Provenance::kSynthetic;
  Rng rng(cfg.seed);

  for (std::int32_t d = 0; d < cfg.n_documents; ++d) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "synth-%04d", d);
    const std::string doc_id = id_buf;
    const std::int32_t scale =
        std::max<std::int32_t>(1, static_cast<std::int32_t>(rng.uniform_int(cfg.font_size.min, cfg.font_size.max)) / 7);

    std::vector<const char*> keys(kFieldKeys.begin(), kFieldKeys.end());
    for (std::size_t i = keys.size() - 1; i > 0; --i) {
      std::swap(keys[i], keys[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    const auto n_kv = static_cast<std::size_t>(rng.uniform_int(cfg.kv_pairs_per_doc.min, cfg.kv_pairs_per_doc.max));
    const auto n_filler = rng.uniform_int(cfg.words_per_doc.min, cfg.words_per_doc.max);

    std::vector<LineSpec> lines;
    for (std::int64_t w = 0; w < n_filler;) {
      LineSpec line;
      const auto len = std::min<std::int64_t>(n_filler - w, rng.uniform_int(2, 5));
      for (std::int64_t k = 0; k < len; ++k) line.words.push_back(pick(rng, kFiller));
      w += len;
      lines.push_back(std::move(line));
    }
    for (std::size_t k = 0; k < n_kv; ++k) {
      LineSpec line;
      line.key = keys[k];
      line.value = field_value(rng, line.key);
      line.words = split_words(text::to_upper_ascii(line.key) + ":");
      line.value_start = line.words.size();
      for (auto& w : split_words(line.value)) line.words.push_back(w);
      const auto at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(lines.size())));
      lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at), std::move(line));
    }

    // Place words, wrapping at the right margin.
    const std::int32_t glyph_h = glyphs::text_height(scale);
    const std::int32_t pitch = glyph_h * 2;
    const std::int32_t word_gap = 12 * scale;
    struct Placed {
      std::string text;
      std::int32_t x, y;
    };
    std::vector<Placed> placed;
    std::vector<std::pair<std::size_t, const LineSpec*>> kv_first_word;
    std::int32_t row = 0;
    for (const auto& line : lines) {
      std::int32_t x = kMargin;
      for (std::size_t k = 0; k < line.words.size(); ++k) {
        const auto w = glyphs::text_width(line.words[k], scale);
        if (x > kMargin && x + w > kPageWidth - kMargin) {
          ++row;
          x = kMargin;
        }
        std::int32_t dx = 0, dy = 0;
        if (cfg.noise == SynthNoise::kJitter) {
          dx = static_cast<std::int32_t>(rng.uniform_int(0, scale));
          dy = static_cast<std::int32_t>(rng.uniform_int(-1, 1));
        }
        if (line.value_start && k == *line.value_start) kv_first_word.emplace_back(placed.size(), &line);
        placed.push_back({line.words[k], x + dx, kMargin + row * pitch + dy + 1});
        x += dx + w + word_gap;
      }
      ++row;
    }
    const std::int32_t height = kMargin * 2 + row * pitch;

    Canvas canvas(kPageWidth, height, kWhite);
    std::vector<WordTruth> truth;
    for (const auto& p : placed) truth.push_back({p.text, glyphs::draw_text(canvas, p.text, p.x, p.y, scale)});
    corpus.images->add(doc_id, std::move(canvas).freeze());

    std::size_t q = 0;
    for (const auto& [first, line] : kv_first_word) {
      const auto n_value = line->words.size() - *line->value_start;
      std::vector<BBox> boxes;
      for (std::size_t i = first; i < first + n_value; ++i) boxes.push_back(truth[i].box);
      QARecord record;
      record.doc_id = doc_id;
      record.question_id = doc_id + "-q" + std::to_string(q++);
      record.question = kv_to_question(line->key);
      record.gold_answers = {line->value};
      record.gold_box = envelope(boxes);
      record.source_field_key = line->key;
      corpus.records.push_back(std::move(record));
    }
    corpus.words[doc_id] = std::move(truth);
  }
  validate(corpus);
  return corpus;
}

}  // namespace dlava::dataset
