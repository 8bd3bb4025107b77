// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COSPLIT_ERROR_HPP_
#define COSPLIT_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace cosplit {

enum class Errc {
  kInvalidArgument,
  kDimensionMismatch,
  kStaleTape,
  kOverflow,
  kInvalidClassCount,
  kIndexOutOfRange,
  kInvalidScale,
  kDegenerateXi,
  kInsufficientSamples,
  kProtocolViolation,
  kTransportClosed,
  kNonFinite,
  kKeySpaceTooLarge,
  kParseError,
  kTooLarge,
  kBadMagic,
  kCountMismatch,
  kTruncated,
  kUncoveredLabel,
  kIo,
};

std::string_view ErrcName(Errc code);

// All library failures surface as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(ErrcName(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cosplit

#endif  // COSPLIT_ERROR_HPP_
