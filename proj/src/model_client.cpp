#include "dlava/model_client.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "dlava/error.hpp"
#include "dlava/json_io.hpp"
#include "dlava/png_io.hpp"

namespace dlava::model {

using json_io::Json;
using json_io::OrderedJson;

void validate(const ModelRequest& req) {
  if (req.user_parts.empty()) fail(ErrorKind::kUsage, "model request needs at least one user part");
  if (!(req.temperature >= 0 && req.temperature <= 2)) fail(ErrorKind::kUsage, "temperature must lie in [0,2]");
  if (req.max_output_tokens <= 0) fail(ErrorKind::kUsage, "max_output_tokens must be positive");
}

namespace {

std::string base64(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace

std::string request_body(const ModelRequest& req) {
  OrderedJson content = OrderedJson::array();
  for (const auto& part : req.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      content.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      const auto& img = std::get<ImagePart>(part);
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64(img.png)}}}});
    }
  }
  OrderedJson body;
  body["model"] = req.model_id;
  body["messages"] = OrderedJson::array();
  if (!req.system_prompt.empty()) body["messages"].push_back({{"role", "system"}, {"content", req.system_prompt}});
  body["messages"].push_back({{"role", "user"}, {"content", std::move(content)}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_output_tokens;
  return body.dump();
}

std::size_t image_part_count(const ModelRequest& req) {
  return static_cast<std::size_t>(std::count_if(req.user_parts.begin(), req.user_parts.end(),
                                                [](const Part& p) { return std::holds_alternative<ImagePart>(p); }));
}

std::string request_text(const ModelRequest& req) {
  std::string out;
  for (const auto& part : req.user_parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      if (!out.empty()) out += '\n';
      out += t->text;
    }
  }
  return out;
}

ModelResponse complete(const ModelRequest& req, ModelBackend& backend) {
  validate(req);
  return backend.complete(req);
}

// ------------------------------------------------------------------ prompts

const PromptSet& default_prompt_set() {
  static const PromptSet kDefault = [] {
    PromptSet p;
    p.version = "v1";
    p.system =
        "You answer questions about document images. Use only information present in the document. "
        "If the document does not contain the answer, answer \"not found\". Reply with a single JSON object and "
        "nothing else.";
    p.ocr_dependent =
        "Text regions recognized in the document, one per line as <id> [x1,y1,x2,y2]: <text>\n"
        "{regions}\n\n"
        "Question: {question}\n"
        "Return {\"answer\": \"<answer text>\", \"region_ids\": [<ids of the regions holding the answer>], "
        "\"box\": [x1, y1, x2, y2]} where box encloses the answer in document pixel coordinates.";
    p.answer_extraction =
        "Question: {question}\n"
        "Read the document image and return {\"answer\": \"<answer text>\"}.";
    p.grounding =
        "The first image lists cropped text regions of the document, one per row, each followed by its id label. "
        "Region ids and their boxes in the original document:\n"
        "{regions}\n\n"
        "Question: {question}\n"
        "Answer: {answer}\n"
        "Return {\"region_ids\": [<ids of the regions that contain the answer>]}.";
    p.combined =
        "The first image lists cropped text regions of the document, one per row, each followed by its id label. "
        "Region ids and their boxes in the original document:\n"
        "{regions}\n\n"
        "Question: {question}\n"
        "Return {\"answer\": \"<answer text>\", \"region_ids\": [<ids of the regions that contain the answer>]}.";
    p.original_image_note = "The last image is the original document.";
    return p;
  }();
  return kDefault;
}

PromptSet load_prompt_set(const std::filesystem::path& path) {
  const auto j = json_io::parse_or_throw(json_io::read_text(path), path.string());
  auto field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      fail(ErrorKind::kValidation, path.string() + ": prompt field '" + key + "' must be a string");
    }
    return j[key].get<std::string>();
  };
  PromptSet p;
  p.version = field("version");
  p.system = field("system");
  p.ocr_dependent = field("ocr_dependent");
  p.answer_extraction = field("answer_extraction");
  p.grounding = field("grounding");
  p.combined = field("combined");
  p.original_image_note = field("original_image_note");
  return p;
}

std::string prompt_set_to_json(const PromptSet& p) {
  OrderedJson j;
  j["version"] = p.version;
  j["system"] = p.system;
  j["ocr_dependent"] = p.ocr_dependent;
  j["answer_extraction"] = p.answer_extraction;
  j["grounding"] = p.grounding;
  j["combined"] = p.combined;
  j["original_image_note"] = p.original_image_note;
  return j.dump(2) + "\n";
}

namespace {

std::string fill(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    std::size_t at = 0;
    while ((at = tmpl.find(token, at)) != std::string::npos) {
      tmpl.replace(at, token.size(), value);
      at += value.size();
    }
  }
  return tmpl;
}

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

ModelRequest base_request(const PromptSet& prompts, const PromptOptions& options, std::string tag) {
  ModelRequest req;
  req.model_id = options.model_id;
  req.system_prompt = prompts.system;
  req.temperature = options.temperature;
  req.max_output_tokens = options.max_output_tokens;
  req.request_tag = std::move(tag);
  return req;
}

void require_question(const std::string& question) {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos) fail(ErrorKind::kUsage, "question must not be empty");
}

}  // namespace

ImagePart make_image_part(const Raster& raster) { return {png::encode(raster), raster.width(), raster.height()}; }

ModelRequest prompt_ocr_dependent(std::span<const RecognizedRegion> pairs, const std::string& question,
                                  const PromptSet& prompts, const PromptOptions& options, std::string request_tag) {
  require_question(question);
  if (pairs.empty()) fail(ErrorKind::kUsage, "OCR-dependent prompt needs at least one recognized region");
  std::string lines;
  for (const auto& p : pairs) {
    if (!lines.empty()) lines += '\n';
    lines += "B" + std::to_string(p.region.region_id) + " " + to_string(p.region.box) + ": " + single_line(p.text);
  }
  auto req = base_request(prompts, options, std::move(request_tag));
  req.user_parts.push_back(TextPart{fill(prompts.ocr_dependent, {{"regions", lines}, {"question", question}})});
  return req;
}

ModelRequest prompt_answer_extraction(const DocumentImage& image, const std::string& question,
                                      const PromptSet& prompts, const PromptOptions& options, std::string request_tag) {
  validate_image(image);
  require_question(question);
  Raster raster = image.raster;
  const std::int32_t longest = std::max(raster.width(), raster.height());
  if (options.max_image_dimension > 0 && longest > options.max_image_dimension) {
    const double factor = static_cast<double>(options.max_image_dimension) / longest;
    const auto w = std::max<std::int32_t>(1, static_cast<std::int32_t>(std::lround(raster.width() * factor)));
    const auto h = std::max<std::int32_t>(1, static_cast<std::int32_t>(std::lround(raster.height() * factor)));
    raster = resize_nearest(raster, std::min(w, options.max_image_dimension), std::min(h, options.max_image_dimension));
  }
  auto req = base_request(prompts, options, std::move(request_tag));
  req.user_parts.push_back(make_image_part(raster));
  req.user_parts.push_back(TextPart{fill(prompts.answer_extraction, {{"question", question}})});
  return req;
}

ModelRequest prompt_grounding(std::span<const constructed::ConstructedImageMap> pages,
                              std::span<const std::pair<std::int32_t, BBox>> boxes, const std::string& question,
                              const std::optional<std::string>& answer, const GroundingOptions& grounding,
                              const PromptSet& prompts, const PromptOptions& options, std::string request_tag) {
  require_question(question);
  if (pages.empty()) fail(ErrorKind::kUsage, "grounding prompt needs at least one constructed page");
  std::map<std::int32_t, std::int32_t> page_of;
  for (const auto& page : pages) {
    for (const auto& row : page.rows) page_of[row.region_id] = page.page;
  }
  std::set<std::int32_t> box_ids;
  for (const auto& [id, _] : boxes) box_ids.insert(id);
  std::set<std::int32_t> page_ids;
  for (const auto& [id, _] : page_of) page_ids.insert(id);
  if (box_ids != page_ids || box_ids.size() != boxes.size()) {
    fail(ErrorKind::kUsage, "region ids of the constructed pages and the box list differ");
  }
  if (grounding.include_original && !grounding.original) {
    fail(ErrorKind::kUsage, "include_original needs the original image");
  }

  std::string lines;
  for (const auto& [id, box] : boxes) {
    if (!lines.empty()) lines += '\n';
    lines += "B" + std::to_string(id) + " " + to_string(box);
    if (pages.size() > 1) lines += " (page " + std::to_string(page_of[id]) + ")";
  }
  auto req = base_request(prompts, options, std::move(request_tag));
  for (const auto& page : pages) req.user_parts.push_back(make_image_part(page.image.raster));
  if (grounding.include_original) req.user_parts.push_back(make_image_part(grounding.original->raster));
  std::string body = answer ? fill(prompts.grounding, {{"regions", lines}, {"question", question}, {"answer", *answer}})
                            : fill(prompts.combined, {{"regions", lines}, {"question", question}});
  if (grounding.include_original) body += "\n" + prompts.original_image_note;
  req.user_parts.push_back(TextPart{std::move(body)});
  return req;
}

// ------------------------------------------------------------- mock backend

MockBackend::MockBackend(std::vector<MockRule> rules, std::string id) : rules_(std::move(rules)), id_(std::move(id)) {}

ModelResponse MockBackend::complete(const ModelRequest& req) {
  const auto started = std::chrono::steady_clock::now();
  const auto text = request_text(req);
  for (const auto& rule : rules_) {
    if (rule.match.empty()) continue;
    if (rule.match != req.request_tag && text.find(rule.match) == std::string::npos) continue;
    std::string reply = rule.responder ? rule.responder(req) : rule.reply;
    {
      std::lock_guard lock(mutex_);
      calls_.push_back({req.request_tag, request_body(req), image_part_count(req), reply});
    }
    ModelResponse out;
    out.raw_text = std::move(reply);
    out.backend_id = id_;
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    return out;
  }
  fail(ErrorKind::kProtocol, "mock backend has no scripted reply for request '" + req.request_tag + "'");
}

std::vector<MockCall> MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_.size();
}

void MockBackend::clear_calls() {
  std::lock_guard lock(mutex_);
  calls_.clear();
}

std::vector<MockRule> load_mock_script(const std::filesystem::path& path) {
  const auto j = json_io::parse_or_throw(json_io::read_text(path), path.string());
  if (!j.is_array()) fail(ErrorKind::kValidation, path.string() + ": mock script must be a list");
  std::vector<MockRule> rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("match") || !e["match"].is_string() || !e.contains("reply") ||
        !e["reply"].is_string()) {
      fail(ErrorKind::kValidation, path.string() + ": entry " + std::to_string(i) + " needs string match and reply");
    }
    rules.push_back({e["match"].get<std::string>(), e["reply"].get<std::string>(), nullptr});
  }
  return rules;
}

void save_mock_script(const std::filesystem::path& path, std::span<const MockRule> rules) {
  OrderedJson j = OrderedJson::array();
  for (const auto& r : rules) {
    if (r.responder) fail(ErrorKind::kUsage, "computed mock rules cannot be saved to a script file");
    j.push_back({{"match", r.match}, {"reply", r.reply}});
  }
  json_io::write_atomic(path, j.dump(2) + "\n");
}

}  // namespace dlava::model
