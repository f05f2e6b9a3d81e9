#pragma once

#include <stdexcept>
#include <string>

namespace resq {

// All recoverable failures carry a short machine-readable code (e.g.
// "MissingKey", "StepTooLarge") plus a human-readable message. The CLI maps
// the code to an exit category.
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

}  // namespace resq
