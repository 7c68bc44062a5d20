#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dlava {

enum class ErrorKind {
  kUsage,
  kValidation,
  kDetection,
  kRecognition,
  kLayout,
  kGrounding,
  kTransport,
  kProtocol,
  kParse,
  kPipeline,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind; pipeline failures also
// carry the stage that produced them.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string stage = {})
      : std::runtime_error(message), kind_(kind), stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace dlava
