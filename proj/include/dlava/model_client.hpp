#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dlava/constructed_image.hpp"
#include "dlava/image.hpp"
#include "dlava/types.hpp"

namespace dlava::model {

struct TextPart {
  std::string text;
  friend bool operator==(const TextPart&, const TextPart&) = default;
};

struct ImagePart {
  std::vector<std::uint8_t> png;
  std::int32_t width = 0;
  std::int32_t height = 0;
  friend bool operator==(const ImagePart&, const ImagePart&) = default;
};

using Part = std::variant<TextPart, ImagePart>;

struct ModelRequest {
  std::string model_id;
  std::string system_prompt;
  std::vector<Part> user_parts;
  double temperature = 0;
  std::int32_t max_output_tokens = 512;
  // Identifies the call (stage, document, question) for scripting and logs.
  // It is not part of the wire body.
  std::string request_tag;
};

void validate(const ModelRequest& req);

// Chat-completions body: {model, messages: [system, user with text and
// base64 image_url parts], temperature, max_tokens}. Byte-stable for equal
// requests.
std::string request_body(const ModelRequest& req);

std::size_t image_part_count(const ModelRequest& req);
// All text parts joined by newlines.
std::string request_text(const ModelRequest& req);

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct ModelResponse {
  std::string raw_text;
  std::int64_t latency_ms = 0;
  std::optional<TokenUsage> token_usage;
  std::string backend_id;
};

// A chat-with-images model service. complete() must be safe to call from
// several threads at once.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string backend_id() const = 0;
  virtual ModelResponse complete(const ModelRequest& req) = 0;
};

// Validates the request, then forwards it.
ModelResponse complete(const ModelRequest& req, ModelBackend& backend);

// ------------------------------------------------------------------ prompts

// Prompt wording is data. Templates use {regions}, {question} and {answer}.
struct PromptSet {
  std::string version = "v1";
  std::string system;
  std::string ocr_dependent;
  std::string answer_extraction;
  std::string grounding;
  std::string combined;
  std::string original_image_note;
};

const PromptSet& default_prompt_set();
PromptSet load_prompt_set(const std::filesystem::path& path);
std::string prompt_set_to_json(const PromptSet& prompts);

struct PromptOptions {
  std::string model_id = "pixtral-12b";
  double temperature = 0;
  std::int32_t max_output_tokens = 512;
  // Images whose longer side exceeds this are downscaled before sending.
  std::int32_t max_image_dimension = 2048;
};

// "B<i> [x1,y1,x2,y2]: <text>" per pair, then the question and the output
// schema. An empty question or pair list is a usage error.
ModelRequest prompt_ocr_dependent(std::span<const RecognizedRegion> pairs, const std::string& question,
                                  const PromptSet& prompts, const PromptOptions& options, std::string request_tag);

// One image part (the whole document) plus the question.
ModelRequest prompt_answer_extraction(const DocumentImage& image, const std::string& question,
                                      const PromptSet& prompts, const PromptOptions& options, std::string request_tag);

struct GroundingOptions {
  // Appends the original document image after the constructed pages.
  bool include_original = false;
  const DocumentImage* original = nullptr;
};

// Constructed pages as image parts, then "B<i> [x1,y1,x2,y2]" per region
// (with the page index when there is more than one page), the question and
// either the extracted answer or, when answer is absent, a request to answer
// and ground in one go. Boxes must cover exactly the pages' region ids.
ModelRequest prompt_grounding(std::span<const constructed::ConstructedImageMap> pages,
                              std::span<const std::pair<std::int32_t, BBox>> boxes, const std::string& question,
                              const std::optional<std::string>& answer, const GroundingOptions& grounding,
                              const PromptSet& prompts, const PromptOptions& options, std::string request_tag);

ImagePart make_image_part(const Raster& raster);

// ------------------------------------------------------------- mock backend

// First matching rule wins: a rule matches when its pattern equals the
// request tag or occurs in the request text. A responder, when set, computes
// the reply from the request; otherwise the fixed reply is returned.
struct MockRule {
  std::string match;
  std::string reply;
  std::function<std::string(const ModelRequest&)> responder;
};

struct MockCall {
  std::string request_tag;
  std::string body;
  std::size_t image_parts = 0;
  std::string reply;
};

class MockBackend : public ModelBackend {
 public:
  explicit MockBackend(std::vector<MockRule> rules, std::string id = "mock");

  std::string backend_id() const override { return id_; }
  // Unmatched requests are a protocol error; nothing is invented.
  ModelResponse complete(const ModelRequest& req) override;

  std::vector<MockCall> calls() const;
  std::size_t call_count() const;
  void clear_calls();

 private:
  std::vector<MockRule> rules_;
  std::string id_;
  mutable std::mutex mutex_;
  std::vector<MockCall> calls_;
};

// Script file: JSON list of {"match": string, "reply": string}.
std::vector<MockRule> load_mock_script(const std::filesystem::path& path);
void save_mock_script(const std::filesystem::path& path, std::span<const MockRule> rules);

}  // namespace dlava::model
