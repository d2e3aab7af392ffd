#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pirl_lab {

// Process exit codes, shared by the CLI and the suite runners.
enum ExitCode : int {
  kExitOk = 0,
  kExitAssertionFailure = 1,
  kExitConfigError = 2,
  kExitIoError = 3,
};

// Invalid configuration. Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message)
      : std::runtime_error(message), violations_{message} {}
  explicit ConfigError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
      if (!out.empty()) out += "; ";
      out += p;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pirl_lab
