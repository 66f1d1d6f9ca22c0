// Copyright 2026 The redopt Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REDOPT_ERROR_HPP
#define REDOPT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace redopt {

enum class ErrorCode {
  kValidation,   // a value violates a type invariant
  kDimension,    // vector/matrix sizes disagree
  kNotFound,     // unknown app, reduction, session
  kConflict,     // wrong state or stale request
  kGone,         // session aborted or expired
  kIntegrity,    // dataset references are broken
  kParse,        // malformed file
  kIo,           // filesystem failure
  kNumerical,    // factorization failure
  kInternal,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kGone: return "gone";
    case ErrorCode::kIntegrity: return "integrity";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

/// Every failure raised by the library carries one of the codes above so that
/// the CLI and the HTTP layer can map it to an exit code or a status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// True for errors caused by the caller's input rather than a bug.
  bool is_user_error() const noexcept {
    return code_ != ErrorCode::kInternal && code_ != ErrorCode::kNumerical;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string detail = {}) {
  throw Error(code, message, std::move(detail));
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace redopt

#endif  // REDOPT_ERROR_HPP
