#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spindaq {

enum class ErrorCategory { usage, network, device, analysis, io, internal };

constexpr std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::network: return "network";
    case ErrorCategory::device: return "device";
    case ErrorCategory::analysis: return "analysis";
    case ErrorCategory::io: return "io";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

/// Process exit status for each category.
constexpr int exit_code(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::network: return 3;
    case ErrorCategory::device: return 4;
    case ErrorCategory::analysis: return 5;
    case ErrorCategory::io: return 6;
    case ErrorCategory::internal: return 1;
  }
  return 1;
}

/// Typed failure with a short machine-readable code such as TIMEOUT or ERR_PARAM.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string code, const std::string& message)
      : std::runtime_error(message), category_(category), code_(std::move(code)) {}
  ErrorCategory category() const noexcept { return category_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorCategory category_;
  std::string code_;
};

}  // namespace spindaq
