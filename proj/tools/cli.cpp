#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <memory>

#include "dlava/dataset.hpp"
#include "dlava/detection.hpp"
#include "dlava/error.hpp"
#include "dlava/eval_harness.hpp"
#include "dlava/http_backend.hpp"
#include "dlava/json_io.hpp"
#include "dlava/pipeline.hpp"
#include "dlava/png_io.hpp"
#include "dlava/recognition.hpp"

namespace dlava::cli {

namespace fs = std::filesystem;
using json_io::OrderedJson;

const Settings& default_settings() {
  static const Settings kDefaults{
      {"mode", "ocr-free"},
      {"ablation", "none"},
      {"workers", "4"},
      {"cache_dir", ""},
      {"out_dir", "out"},
      {"model_backend", "mock"},
      {"mock_script", ""},
      {"model_id", "pixtral-12b"},
      {"endpoint", ""},
      {"api_key", ""},
      {"prompts", ""},
      {"detector", "reference"},
      {"detections", ""},
      {"words", ""},
      {"noise_ps", "0"},
      {"noise_pd", "0"},
      {"noise_seed", "0"},
      {"dataset_root", ""},
      {"format", "unified"},
      {"split", ""},
      {"gate_iou", "false"},
      {"record_wall_time", "false"},
      {"n", "5"},
      {"seed", "7"},
  };
  return kDefaults;
}

namespace {

std::string env_name(const std::string& key) {
  std::string out = "DLAVA_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void apply_config_file(Settings& s, const std::string& path) {
  const auto j = json_io::parse_or_throw(json_io::read_text(path), path);
  if (!j.is_object()) fail(ErrorKind::kUsage, path + ": config file must hold an object");
  for (const auto& [key, value] : j.items()) {
    if (!s.count(key)) fail(ErrorKind::kUsage, path + ": unknown config key '" + key + "'");
    s[key] = value.is_string() ? value.get<std::string>() : value.dump();
  }
}

void apply_env(Settings& s) {
  for (auto& [key, value] : s) {
    if (const char* v = std::getenv(env_name(key).c_str())) value = v;
  }
  for (const auto& [env, key] : std::map<std::string, std::string>{
           {"MODEL_ENDPOINT", "endpoint"}, {"MODEL_API_KEY", "api_key"}, {"MODEL_ID", "model_id"}}) {
    if (const char* v = std::getenv(env.c_str()); v && !std::getenv(env_name(key).c_str())) s[key] = v;
  }
}

std::int64_t as_int(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  try {
    std::size_t used = 0;
    const auto n = std::stoll(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, key + " must be an integer, got '" + v + "'");
}

double as_double(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  try {
    std::size_t used = 0;
    const auto d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, key + " must be a number, got '" + v + "'");
}

bool as_bool(const Settings& s, const std::string& key) {
  const auto& v = s.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0" || v.empty()) return false;
  fail(ErrorKind::kUsage, key + " must be true or false, got '" + v + "'");
}

OrderedJson settings_json(const Settings& s) {
  OrderedJson j = OrderedJson::object();
  for (const auto& [key, value] : s) j[key] = key == "api_key" && !value.empty() ? "<redacted>" : value;
  return j;
}

// Flags bound to setting keys; only flags given on the command line override.
struct Bindings {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::vector<std::pair<CLI::Option*, std::string>> flags;

  void option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(app->add_option(flag, values[key], help), key);
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    flags.emplace_back(app->add_flag(flag, help), key);
  }
  void apply(Settings& s) const {
    for (const auto& [opt, key] : options) {
      if (opt->count() > 0) s[key] = values.at(key);
    }
    for (const auto& [opt, key] : flags) {
      if (opt->count() > 0) s[key] = "true";
    }
  }
};

void backend_flags(CLI::App* app, Bindings& b) {
  b.option(app, "--mode", "mode", "ocr-dep or ocr-free");
  b.option(app, "--ablation", "ablation", "none, 1 or 2");
  b.option(app, "--model-backend", "model_backend", "mock, oracle or http");
  b.option(app, "--mock-script", "mock_script", "JSON list of {match, reply}");
  b.option(app, "--model-id", "model_id", "model name sent to the service");
  b.option(app, "--endpoint", "endpoint", "chat-completions URL");
  b.option(app, "--prompts", "prompts", "prompt set JSON file");
  b.option(app, "--detector", "detector", "reference, precomputed or truth");
  b.option(app, "--detections", "detections", "precomputed detections (jsonl)");
  b.option(app, "--noise-ps", "noise_ps", "recognizer substitution rate");
  b.option(app, "--noise-pd", "noise_pd", "recognizer deletion rate");
  b.option(app, "--noise-seed", "noise_seed", "recognizer noise seed");
}

void dataset_flags(CLI::App* app, Bindings& b) {
  b.option(app, "--dataset-root", "dataset_root", "dataset directory");
  b.option(app, "--format", "format", "funsd, cord, sroie, docvqa, unified or synthetic");
  b.option(app, "--split", "split", "dataset split (recorded in the manifest)");
  b.option(app, "--n", "n", "synthetic documents (format synthetic)");
  b.option(app, "--seed", "seed", "synthetic seed (format synthetic)");
}

dataset::Corpus load_corpus(const Settings& s) {
  if (s.at("format") == "synthetic") {
    dataset::SynthConfig sc;
    sc.n_documents = static_cast<std::int32_t>(as_int(s, "n"));
    sc.seed = static_cast<std::uint64_t>(as_int(s, "seed"));
    return dataset::generate_synthetic(sc);
  }
  if (s.at("dataset_root").empty()) fail(ErrorKind::kUsage, "--dataset-root is required");
  return dataset::load_by_format(s.at("format"), s.at("dataset_root"), s.at("split"));
}

std::map<std::string, std::vector<dataset::WordTruth>> load_words(const fs::path& path) {
  std::map<std::string, std::vector<dataset::WordTruth>> words;
  const auto lines = json_io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto where = path.string() + ":" + std::to_string(i + 1);
    const auto j = json_io::parse_or_throw(lines[i], where);
    auto& list = words[j.at("doc_id").get<std::string>()];
    for (const auto& w : j.at("words")) list.push_back({w.at("text").get<std::string>(), json_io::box_from_json(w.at("box"), where)});
  }
  return words;
}

pipeline::PipelineConfig build_config(const Settings& s, const dataset::Corpus* corpus) {
  pipeline::PipelineConfig cfg;
  cfg.mode = pipeline::mode_from_string(s.at("mode"));
  cfg.ablation = pipeline::ablation_from_string(s.at("ablation"));
  if (!s.at("prompts").empty()) cfg.prompts = model::load_prompt_set(s.at("prompts"));
  cfg.prompt_options.model_id = s.at("model_id");

  const auto& det = s.at("detector");
  if (det == "reference") {
    cfg.detector = std::make_shared<detection::ReferenceDetector>();
  } else if (det == "precomputed") {
    if (s.at("detections").empty()) fail(ErrorKind::kUsage, "--detector precomputed needs --detections");
    cfg.detector = detection::load_precomputed(s.at("detections"));
  } else if (det == "truth") {
    if (!corpus || corpus->words.empty()) fail(ErrorKind::kUsage, "--detector truth needs word ground truth");
    std::map<std::string, std::vector<BBox>> boxes;
    for (const auto& [doc, words] : corpus->words) {
      for (const auto& w : words) boxes[doc].push_back(w.box);
    }
    cfg.detector = std::make_shared<detection::PrecomputedDetector>(std::move(boxes), "truth");
  } else {
    fail(ErrorKind::kUsage, "unknown detector '" + det + "'");
  }

  if (cfg.mode == pipeline::Mode::kOcrDependent) {
    recognition::NoiseModel noise{as_double(s, "noise_ps"), as_double(s, "noise_pd"),
                                  static_cast<std::uint64_t>(as_int(s, "noise_seed"))};
    if (!s.at("words").empty()) {
      cfg.recognizer = std::make_shared<recognition::FixtureRecognizer>(load_words(s.at("words")), noise);
    } else if (corpus && !corpus->words.empty()) {
      cfg.recognizer = recognition::fixture_recognizer(*corpus, noise);
    } else {
      fail(ErrorKind::kUsage, "ocr-dep mode needs word ground truth for the fixture recognizer (--words)");
    }
  }

  const auto& backend = s.at("model_backend");
  if (backend == "mock") {
    if (s.at("mock_script").empty()) fail(ErrorKind::kUsage, "--model-backend mock needs --mock-script");
    cfg.model = std::make_shared<model::MockBackend>(model::load_mock_script(s.at("mock_script")));
  } else if (backend == "oracle") {
    if (!corpus) fail(ErrorKind::kUsage, "--model-backend oracle needs a corpus");
    cfg.model = std::make_shared<model::MockBackend>(pipeline::oracle_rules(*corpus, *cfg.detector), "oracle");
  } else if (backend == "http") {
    model::HttpConfig hc;
    hc.endpoint = s.at("endpoint");
    hc.api_key = s.at("api_key");
    hc.model_id = s.at("model_id");
    if (hc.endpoint.empty()) fail(ErrorKind::kUsage, "--model-backend http needs an endpoint (MODEL_ENDPOINT)");
    cfg.model = std::make_shared<model::HttpBackend>(hc);
  } else {
    fail(ErrorKind::kUsage, "unknown model backend '" + backend + "'");
  }
  pipeline::validate(cfg);
  return cfg;
}

eval::EvalOptions eval_options(const Settings& s, bool resume, std::ostream& err) {
  eval::EvalOptions o;
  o.workers = static_cast<std::int32_t>(as_int(s, "workers"));
  if (!s.at("cache_dir").empty()) o.cache_dir = s.at("cache_dir");
  o.out_dir = s.at("out_dir");
  o.resume = resume;
  o.split = s.at("split");
  o.score.gate_iou_on_answer = as_bool(s, "gate_iou");
  o.record_wall_time = as_bool(s, "record_wall_time");
  o.log = [&err](const std::string& m) { err << m << '\n'; };
  return o;
}

void write_annotations(const dataset::Corpus& corpus, const fs::path& predictions, const fs::path& dir) {
  for (const auto& p : eval::read_predictions(predictions)) {
    const auto* rec = corpus.find(p.question_id);
    if (!rec || !p.answer_box) continue;
    png::write_file(dir / (p.question_id + ".png"), pipeline::annotate(corpus.image(rec->doc_id), *p.answer_box).raster);
  }
}

void dump_constructed(const DocumentImage& image, const detection::DetectorBackend& detector,
                      const constructed::LayoutConfig& layout, const fs::path& dir) {
  const auto regions = detector.detect(image);
  if (regions.empty()) return;
  constructed::dump_constructed(constructed::build_constructed_image(regions, layout, image.doc_id), dir, image.doc_id);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Document VQA with answer localization"};
  app.require_subcommand(1);
  std::string config_path;
  bool print_config = false;
  Bindings b;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus in the unified format");
  std::string synth_out;
  bool jitter = false;
  b.option(synth, "--n", "n", "documents");
  b.option(synth, "--seed", "seed", "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--jitter", jitter, "jitter word positions");

  auto* ask = app.add_subcommand("ask", "answer one question about one image");
  std::string image_path, question, question_id = "q", doc_id, annotate_out;
  ask->add_option("--image", image_path, "PNG image")->required();
  ask->add_option("--question", question, "question text")->required();
  ask->add_option("--question-id", question_id, "id used in request tags");
  ask->add_option("--doc-id", doc_id, "document id (default: image file stem)");
  ask->add_option("--annotate-out", annotate_out, "write the image with the answer box drawn");
  std::string dump_dir;
  ask->add_option("--dump-constructed", dump_dir, "write constructed-image pages and their map here");
  b.option(ask, "--words", "words", "word ground truth (jsonl) for the fixture recognizer");
  backend_flags(ask, b);

  auto* evalc = app.add_subcommand("eval", "evaluate a corpus");
  bool resume = false, annotate = false;
  dataset_flags(evalc, b);
  backend_flags(evalc, b);
  b.option(evalc, "--workers", "workers", "concurrent questions");
  b.option(evalc, "--cache-dir", "cache_dir", "model response cache");
  b.option(evalc, "--out-dir", "out_dir", "output directory");
  b.flag(evalc, "--gate-iou", "gate_iou", "count boxes only for answers with ANLS > 0");
  b.flag(evalc, "--record-wall-time", "record_wall_time", "keep per-question timings in predictions");
  evalc->add_flag("--resume", resume, "skip questions already in the predictions file");
  evalc->add_flag("--annotate", annotate, "write <out-dir>/<question_id>.png with the answer box");
  evalc->add_option("--dump-constructed", dump_dir, "write constructed-image pages and their map here");

  auto* score = app.add_subcommand("score", "re-score a predictions file");
  std::string pred_path, report_path;
  dataset_flags(score, b);
  score->add_option("--pred", pred_path, "predictions file")->required();
  score->add_option("--report", report_path, "write the structured report here");
  b.flag(score, "--gate-iou", "gate_iou", "count boxes only for answers with ANLS > 0");

  auto* ablate = app.add_subcommand("ablate", "run default, ablation1 and ablation2 side by side");
  dataset_flags(ablate, b);
  backend_flags(ablate, b);
  b.option(ablate, "--workers", "workers", "concurrent questions");
  b.option(ablate, "--cache-dir", "cache_dir", "model response cache");
  b.option(ablate, "--out-dir", "out_dir", "output directory");

  for (auto* sub : {synth, ask, evalc, score, ablate}) {
    sub->add_option("--config", config_path, "JSON settings file");
    sub->add_flag("--print-config", print_config, "print the resolved settings and exit");
  }

  std::vector<const char*> argv{"dlava"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Settings s = default_settings();
    if (!config_path.empty()) apply_config_file(s, config_path);
    apply_env(s);
    b.apply(s);
    if (print_config) {
      out << settings_json(s).dump(2) << '\n';
      return 0;
    }

    if (synth->parsed()) {
      dataset::SynthConfig sc;
      sc.n_documents = static_cast<std::int32_t>(as_int(s, "n"));
      sc.seed = static_cast<std::uint64_t>(as_int(s, "seed"));
      sc.noise = jitter ? dataset::SynthNoise::kJitter : dataset::SynthNoise::kNone;
      const auto corpus = dataset::generate_synthetic(sc);
      dataset::save_unified(corpus, synth_out);
      out << "wrote " << corpus.records.size() << " questions over " << sc.n_documents << " documents to " << synth_out
          << '\n';
      return 0;
    }

    if (ask->parsed()) {
      const auto cfg = build_config(s, nullptr);
      DocumentImage image{doc_id.empty() ? fs::path(image_path).stem().string() : doc_id, png::read_file(image_path)};
      const auto p = pipeline::run(image, question, cfg, {question_id, nullptr});
      if (!dump_dir.empty()) dump_constructed(image, *cfg.detector, cfg.layout, dump_dir);
      if (!annotate_out.empty() && p.answer_box) {
        png::write_file(annotate_out, pipeline::annotate(image, *p.answer_box).raster);
      }
      OrderedJson line;
      line["answer"] = p.answer;
      line["box"] = json_io::box_to_json(p.answer_box);
      line["mode"] = pipeline::to_string(cfg.mode);
      line["ablation"] = pipeline::to_string(cfg.ablation);
      if (p.error) line["error"] = *p.error;
      out << line.dump() << '\n';
      return p.error ? 1 : 0;
    }

    if (evalc->parsed()) {
      const auto corpus = load_corpus(s);
      const auto cfg = build_config(s, &corpus);
      const auto opts = eval_options(s, resume, err);
      const auto outcome = eval::evaluate(corpus, cfg, opts);
      if (annotate) write_annotations(corpus, opts.out_dir / "predictions.jsonl", opts.out_dir);
      if (!dump_dir.empty()) {
        for (const auto& id : corpus.images->doc_ids()) dump_constructed(corpus.image(id), *cfg.detector, cfg.layout, dump_dir);
      }
      out << eval::report_table(outcome.report, corpus);
      if (outcome.degraded) {
        err << "run degraded: " << outcome.failures << " of " << corpus.records.size() << " questions failed\n";
        return 1;
      }
      return 0;
    }

    if (score->parsed()) {
      const auto corpus = load_corpus(s);
      metrics::ScoreOptions so;
      so.gate_iou_on_answer = as_bool(s, "gate_iou");
      const auto report = eval::score_offline(pred_path, corpus, so);
      if (!report_path.empty()) json_io::write_atomic(report_path, eval::report_json(report, corpus));
      out << eval::report_table(report, corpus);
      return 0;
    }

    if (ablate->parsed()) {
      const auto corpus = load_corpus(s);
      const auto cfg = build_config(s, &corpus);
      const auto opts = eval_options(s, false, err);
      const auto results = eval::ablation_suite(corpus, cfg, opts);
      out << json_io::read_text(opts.out_dir / "ablation_table.txt");
      for (const auto& [_, r] : results) {
        if (r.degraded) return 1;
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kUsage || e.kind() == ErrorKind::kValidation ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dlava::cli
