#pragma once

#include <stdexcept>
#include <string>

namespace clima {

// Configuration or usage problem. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (corpus files, vocab files, tensors).
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Weight-archive read/write failures.
class ArchiveError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Local filesystem failures (cache writes and the like).
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NetworkFailure {
  not_found,  // the server answered and said no (HTTP 404)
  transient,  // connection/timeout class failures, retryable
};

class NetworkError : public std::runtime_error {
 public:
  NetworkError(NetworkFailure kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  NetworkFailure kind() const noexcept { return kind_; }

 private:
  NetworkFailure kind_;
};

}  // namespace clima
