#include "dlava/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>

#include "dlava/answer_parser.hpp"
#include "dlava/error.hpp"
#include "dlava/metrics.hpp"

namespace dlava::pipeline {

using json_io::OrderedJson;

std::string_view to_string(Mode m) { return m == Mode::kOcrDependent ? "ocr_dependent" : "ocr_free"; }

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone:
      return "none";
    case Ablation::kOriginalImage:
      return "ablation1";
    case Ablation::kNoExtraction:
      return "ablation2";
  }
  return "none";
}

Mode mode_from_string(std::string_view s) {
  if (s == "ocr_dependent" || s == "ocr-dep" || s == "ocr-dependent") return Mode::kOcrDependent;
  if (s == "ocr_free" || s == "ocr-free") return Mode::kOcrFree;
  fail(ErrorKind::kUsage, "unknown mode '" + std::string(s) + "' (expected ocr-dep or ocr-free)");
}

Ablation ablation_from_string(std::string_view s) {
  if (s == "none") return Ablation::kNone;
  if (s == "1" || s == "ablation1") return Ablation::kOriginalImage;
  if (s == "2" || s == "ablation2") return Ablation::kNoExtraction;
  fail(ErrorKind::kUsage, "unknown ablation '" + std::string(s) + "' (expected none, 1 or 2)");
}

void validate(const PipelineConfig& cfg) {
  if (!cfg.detector) fail(ErrorKind::kUsage, "pipeline needs a detector backend");
  if (!cfg.model) fail(ErrorKind::kUsage, "pipeline needs a model backend");
  if (cfg.mode == Mode::kOcrDependent && !cfg.recognizer) {
    fail(ErrorKind::kUsage, "ocr_dependent mode needs a recognizer backend");
  }
  if (cfg.mode == Mode::kOcrDependent && cfg.ablation != Ablation::kNone) {
    fail(ErrorKind::kUsage, "ablations apply to ocr_free mode only");
  }
  if (!(cfg.snap_iou > 0 && cfg.snap_iou <= 1)) fail(ErrorKind::kUsage, "snap_iou must lie in (0,1]");
  constructed::validate(cfg.layout);
}

OrderedJson config_snapshot(const PipelineConfig& cfg) {
  OrderedJson j;
  j["mode"] = to_string(cfg.mode);
  j["ablation"] = to_string(cfg.ablation);
  j["detector"] = cfg.detector ? cfg.detector->backend_id() : "";
  j["recognizer"] = cfg.recognizer ? OrderedJson(cfg.recognizer->backend_id()) : OrderedJson(nullptr);
  j["model_backend"] = cfg.model ? cfg.model->backend_id() : "";
  j["model_id"] = cfg.prompt_options.model_id;
  j["temperature"] = cfg.prompt_options.temperature;
  j["max_output_tokens"] = cfg.prompt_options.max_output_tokens;
  j["max_image_dimension"] = cfg.prompt_options.max_image_dimension;
  j["prompt_set"] = cfg.prompts.version;
  j["snap_iou"] = cfg.snap_iou;
  const auto& l = cfg.layout;
  j["layout"] = {{"row_padding", l.row_padding},
                 {"label_gap", l.label_gap},
                 {"max_crop_height", l.max_crop_height},
                 {"label_template", l.label_template},
                 {"canvas_width", l.canvas_width},
                 {"background", {l.background.r, l.background.g, l.background.b}},
                 {"max_canvas_height", l.max_canvas_height},
                 {"label_scale", l.label_scale}};
  return j;
}

std::shared_ptr<const std::vector<DetectedRegion>> DetectionMemo::get(const DocumentImage& image,
                                                                     const detection::DetectorBackend& detector) {
  std::promise<std::shared_ptr<const std::vector<DetectedRegion>>> promise;
  Entry entry;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(image.doc_id);
    if (it == entries_.end()) {
      entry = promise.get_future().share();
      entries_.emplace(image.doc_id, entry);
      owner = true;
    } else {
      entry = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(std::make_shared<const std::vector<DetectedRegion>>(detector.detect(image)));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return entry.get();
}

std::string request_tag(std::string_view stage, std::string_view doc_id, std::string_view question_id) {
  return std::string(stage) + ":" + std::string(doc_id) + ":" + std::string(question_id);
}

namespace {

template <typename F>
auto staged(std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(e.kind(), std::string(stage) + ": " + e.what(), std::string(stage));
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kPipeline, std::string(stage) + ": " + e.what(), std::string(stage));
  }
}

void warn(const PipelineConfig& cfg, const std::string& message) {
  if (cfg.warn) {
    cfg.warn(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

std::shared_ptr<const std::vector<DetectedRegion>> detect(const DocumentImage& image, const PipelineConfig& cfg,
                                                         const RunContext& ctx) {
  return staged("detection", [&] {
    if (ctx.memo) return ctx.memo->get(image, *cfg.detector);
    return std::make_shared<const std::vector<DetectedRegion>>(cfg.detector->detect(image));
  });
}

std::string excerpt(std::string_view s, std::size_t n = 200) {
  return s.size() <= n ? std::string(s) : std::string(s.substr(0, n)) + "...";
}

std::int64_t inter_area(const BBox& a, const BBox& b) {
  const auto w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const auto h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return w > 0 && h > 0 ? static_cast<std::int64_t>(w) * h : 0;
}

// Regions with more than half their area inside the box, in id order.
std::vector<std::int32_t> regions_inside(const BBox& box, const std::vector<DetectedRegion>& regions) {
  std::vector<std::int32_t> ids;
  for (const auto& r : regions) {
    if (2 * inter_area(r.box, box) > r.box.area()) ids.push_back(r.region_id);
  }
  return ids;
}

BBox envelope_of(std::span<const std::int32_t> ids, const std::vector<DetectedRegion>& regions) {
  std::vector<BBox> boxes;
  for (auto id : ids) boxes.push_back(regions.at(static_cast<std::size_t>(id)).box);
  return envelope(boxes);
}

std::optional<BBox> clamp_to(const BBox& b, const DocumentImage& image) {
  const BBox c{std::clamp(b.x1, 0, image.width()), std::clamp(b.y1, 0, image.height()),
               std::clamp(b.x2, 0, image.width()), std::clamp(b.y2, 0, image.height())};
  if (c.width() <= 0 || c.height() <= 0) return std::nullopt;
  return c;
}

// Free coordinates snap to the regions they cover, or the single nearest
// region, when the overlap reaches snap_iou; otherwise they are kept.
std::optional<BBox> place_box(const BBox& raw, const DocumentImage& image, const std::vector<DetectedRegion>& regions,
                              double snap_iou, std::vector<std::int32_t>& ids) {
  const auto clamped = clamp_to(raw, image);
  if (!clamped) return std::nullopt;
  if (regions.empty()) return clamped;
  const auto inside = regions_inside(*clamped, regions);
  if (!inside.empty()) {
    const auto env = envelope_of(inside, regions);
    if (metrics::iou(env, *clamped) >= snap_iou) {
      ids = inside;
      return env;
    }
  }
  const DetectedRegion* best = nullptr;
  double best_iou = 0;
  for (const auto& r : regions) {
    const double v = metrics::iou(r.box, *clamped);
    if (v > best_iou) {
      best_iou = v;
      best = &r;
    }
  }
  if (best && best_iou >= snap_iou) {
    ids = {best->region_id};
    return best->box;
  }
  ids.clear();
  return clamped;
}

std::set<std::int32_t> id_set(const std::vector<DetectedRegion>& regions) {
  std::set<std::int32_t> ids;
  for (const auto& r : regions) ids.insert(r.region_id);
  return ids;
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - since).count();
}

Prediction no_regions(const RunContext& ctx, std::chrono::steady_clock::time_point started) {
  Prediction p;
  p.question_id = ctx.question_id;
  p.error = "detection: no text regions found";
  p.wall_time_ms = elapsed_ms(started);
  return p;
}

}  // namespace

Prediction run_ocr_dependent(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
                             const RunContext& ctx) {
  const auto started = std::chrono::steady_clock::now();
  validate(cfg);
  if (cfg.mode != Mode::kOcrDependent) fail(ErrorKind::kUsage, "run_ocr_dependent needs mode ocr_dependent");
  validate_image(image);

  const auto regions = detect(image, cfg, ctx);
  if (regions->empty()) return no_regions(ctx, started);
  const auto pairs = staged("recognition", [&] { return recognition::recognize_all(*cfg.recognizer, image.doc_id, *regions); });
  const auto req = model::prompt_ocr_dependent(pairs, question, cfg.prompts, cfg.prompt_options,
                                               request_tag(kStageOcrDependent, image.doc_id, ctx.question_id));
  const auto response = staged("model", [&] { return model::complete(req, *cfg.model); });

  Prediction p;
  p.question_id = ctx.question_id;
  p.raw_model_output = response.raw_text;
  model::GroundedAnswer ga;
  try {
    ga = model::parse_grounded_answer(response.raw_text, {true, id_set(*regions)});
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kParse) throw;
    p.error = "parse: " + excerpt(e.what());
    p.wall_time_ms = elapsed_ms(started);
    return p;
  }
  if (!ga.not_found) {
    p.answer = ga.answer;
    if (ga.box) {
      p.answer_box = place_box(*ga.box, image, *regions, cfg.snap_iou, p.matched_region_ids);
    } else if (ga.region_ids) {
      p.matched_region_ids = *ga.region_ids;
      p.answer_box = envelope_of(*ga.region_ids, *regions);
    }
  }
  p.wall_time_ms = elapsed_ms(started);
  return p;
}

Prediction run_ocr_free(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
                        const RunContext& ctx) {
  const auto started = std::chrono::steady_clock::now();
  validate(cfg);
  if (cfg.mode != Mode::kOcrFree) fail(ErrorKind::kUsage, "run_ocr_free needs mode ocr_free");
  validate_image(image);

  const auto regions = detect(image, cfg, ctx);
  if (regions->empty()) return no_regions(ctx, started);
  auto pages_future = std::async(std::launch::async, [&] {
    return staged("layout", [&] { return constructed::build_constructed_image(*regions, cfg.layout, image.doc_id); });
  });

  Prediction p;
  p.question_id = ctx.question_id;
  std::optional<std::string> answer;
  if (cfg.ablation != Ablation::kNoExtraction) {
    const auto req = model::prompt_answer_extraction(image, question, cfg.prompts, cfg.prompt_options,
                                                     request_tag(kStageExtract, image.doc_id, ctx.question_id));
    const auto raw = staged("extraction", [&] { return model::complete(req, *cfg.model).raw_text; });
    p.raw_model_output = raw;
    try {
      const auto ga = model::parse_grounded_answer(raw);
      if (ga.not_found) {
        p.wall_time_ms = elapsed_ms(started);
        return p;
      }
      answer = ga.answer;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kParse) throw;
      p.error = "parse: " + excerpt(e.what());
      p.wall_time_ms = elapsed_ms(started);
      return p;
    }
    p.answer = *answer;
  }

  const auto pages = pages_future.get();
  std::vector<std::pair<std::int32_t, BBox>> boxes;
  for (const auto& r : *regions) boxes.emplace_back(r.region_id, r.box);
  model::GroundingOptions grounding;
  grounding.include_original = cfg.ablation == Ablation::kOriginalImage;
  grounding.original = &image;
  const bool combined = cfg.ablation == Ablation::kNoExtraction;
  const auto req = model::prompt_grounding(pages, boxes, question, answer, grounding, cfg.prompts, cfg.prompt_options,
                                           request_tag(combined ? kStageCombined : kStageGround, image.doc_id,
                                                       ctx.question_id));

  model::GroundedAnswer ga;
  try {
    const auto raw = staged("grounding", [&] { return model::complete(req, *cfg.model).raw_text; });
    p.raw_model_output += (p.raw_model_output.empty() ? "" : "\n") + raw;
    ga = model::parse_grounded_answer(raw);
  } catch (const Error& e) {
    if (combined && e.kind() != ErrorKind::kParse) throw;
    if (combined) {
      p.error = "parse: " + excerpt(e.what());
    } else {
      warn(cfg, ctx.question_id + ": grounding failed, keeping the answer without a box: " + excerpt(e.what()));
    }
    p.wall_time_ms = elapsed_ms(started);
    return p;
  }

  if (combined) {
    if (ga.not_found) {
      p.wall_time_ms = elapsed_ms(started);
      return p;
    }
    p.answer = ga.answer;
  }
  const auto valid = id_set(*regions);
  if (ga.region_ids) {
    std::vector<std::int32_t> known;
    std::string unknown;
    for (auto id : *ga.region_ids) {
      if (valid.count(id)) {
        known.push_back(id);
      } else {
        unknown += (unknown.empty() ? "" : ", ") + std::to_string(id);
      }
    }
    if (!unknown.empty()) warn(cfg, ctx.question_id + ": grounding returned unknown region ids " + unknown);
    if (!known.empty()) {
      p.matched_region_ids = known;
      p.answer_box = constructed::resolve_region_ids(known, pages);
    }
  } else if (ga.box) {
    p.answer_box = place_box(*ga.box, image, *regions, cfg.snap_iou, p.matched_region_ids);
  } else if (!ga.not_found) {
    warn(cfg, ctx.question_id + ": grounding returned no region ids");
  }
  p.wall_time_ms = elapsed_ms(started);
  return p;
}

Prediction run(const DocumentImage& image, const std::string& question, const PipelineConfig& cfg,
               const RunContext& ctx) {
  return cfg.mode == Mode::kOcrDependent ? run_ocr_dependent(image, question, cfg, ctx)
                                         : run_ocr_free(image, question, cfg, ctx);
}

DocumentImage annotate(const DocumentImage& image, const BBox& box, const AnnotationStyle& style) {
  if (style.thickness <= 0) fail(ErrorKind::kUsage, "annotation thickness must be positive");
  validate_image(image);
  validate_box(box, image.width(), image.height());
  Canvas canvas(image.raster);
  const auto t = style.thickness;
  canvas.fill_rect({box.x1, box.y1, box.x2, std::min(box.y2, box.y1 + t)}, style.color);
  canvas.fill_rect({box.x1, std::max(box.y1, box.y2 - t), box.x2, box.y2}, style.color);
  canvas.fill_rect({box.x1, box.y1, std::min(box.x2, box.x1 + t), box.y2}, style.color);
  canvas.fill_rect({std::max(box.x1, box.x2 - t), box.y1, box.x2, box.y2}, style.color);
  return {image.doc_id, std::move(canvas).freeze()};
}

namespace {

OrderedJson ids_json(const std::vector<std::int32_t>& ids) { return OrderedJson(ids); }

}  // namespace

std::vector<model::MockRule> oracle_rules(const dataset::Corpus& corpus, const detection::DetectorBackend& detector) {
  std::map<std::string, std::vector<DetectedRegion>> detected;
  std::vector<model::MockRule> rules;
  for (const auto& rec : corpus.records) {
    auto it = detected.find(rec.doc_id);
    if (it == detected.end()) it = detected.emplace(rec.doc_id, detector.detect(corpus.image(rec.doc_id))).first;
    const auto ids = rec.gold_box ? regions_inside(*rec.gold_box, it->second) : std::vector<std::int32_t>{};
    const std::string answer = rec.gold_answers.empty() ? "" : rec.gold_answers.front();

    OrderedJson full{{"answer", answer}, {"region_ids", ids_json(ids)}};
    if (rec.gold_box) full["box"] = json_io::box_to_json(*rec.gold_box);
    rules.push_back({request_tag(kStageOcrDependent, rec.doc_id, rec.question_id), full.dump(), {}});
    rules.push_back({request_tag(kStageExtract, rec.doc_id, rec.question_id), OrderedJson{{"answer", answer}}.dump(), {}});
    rules.push_back({request_tag(kStageGround, rec.doc_id, rec.question_id),
                     OrderedJson{{"region_ids", ids_json(ids)}}.dump(), {}});
    rules.push_back({request_tag(kStageCombined, rec.doc_id, rec.question_id),
                     OrderedJson{{"answer", answer}, {"region_ids", ids_json(ids)}}.dump(), {}});
  }
  return rules;
}

std::vector<model::MockRule> echo_rules(const dataset::Corpus& corpus) {
  std::vector<model::MockRule> rules;
  for (const auto& rec : corpus.records) {
    const auto gold = rec.gold_box;
    auto responder = [gold](const model::ModelRequest& req) {
      static const std::regex line(R"(^B(\d+) \[(\d+),(\d+),(\d+),(\d+)\]: (.*)$)");
      std::vector<std::int32_t> ids;
      std::string answer;
      std::istringstream in(model::request_text(req));
      std::string text;
      while (gold && std::getline(in, text)) {
        std::smatch m;
        if (!std::regex_match(text, m, line)) continue;
        const BBox box{std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4]), std::stoi(m[5])};
        if (2 * inter_area(box, *gold) <= box.area()) continue;
        ids.push_back(std::stoi(m[1]));
        if (!m[6].str().empty()) answer += (answer.empty() ? "" : " ") + m[6].str();
      }
      return OrderedJson{{"answer", answer}, {"region_ids", ids}}.dump();
    };
    rules.push_back({request_tag(kStageOcrDependent, rec.doc_id, rec.question_id), "", responder});
  }
  return rules;
}

}  // namespace dlava::pipeline
