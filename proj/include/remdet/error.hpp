/* Copyright 2026 The remdet-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef REMDET_ERROR_HPP_
#define REMDET_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace remdet {

enum class ErrorCode {
  kShapeMismatch,
  kNonIntegralOutputExtent,
  kNonFinite,
  kTapeCorrupt,
  kDegenerateBatch,
  kSizeSumMismatch,
  kOddSpatialExtent,
  kChannelNotDivisibleBy4,
  kLabelOutOfRange,
  kModeMismatch,
  kInvalidInputExtent,
  kAlreadyFused,
  kInvalidConfig,
  kInsufficientSamples,
  kDivergedLoss,
  kSyntaxError,
  kUnknownBlockKind,
  kWidthMismatch,
  kBadMagic,
  kVersionUnsupported,
  kTruncatedFile,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library. `path()` is the config/document
// path of the fault when one applies (e.g. "/stages/1/block").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ErrorCode code_;
  std::string path_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace remdet

#endif  // REMDET_ERROR_HPP_
