#pragma once

#include <string>

namespace xvd {

// Text-in/text-out model endpoint (prompt augmentation, content tagging, trace distillation).
// Implementations throw Error{Retryable} on transient failures.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& request) = 0;
};

}  // namespace xvd
