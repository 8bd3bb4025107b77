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

#include "cosplit/error.hpp"

namespace cosplit {

std::string_view ErrcName(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kStaleTape: return "StaleTape";
    case Errc::kOverflow: return "Overflow";
    case Errc::kInvalidClassCount: return "InvalidClassCount";
    case Errc::kIndexOutOfRange: return "IndexOutOfRange";
    case Errc::kInvalidScale: return "InvalidScale";
    case Errc::kDegenerateXi: return "DegenerateXi";
    case Errc::kInsufficientSamples: return "InsufficientSamples";
    case Errc::kProtocolViolation: return "ProtocolViolation";
    case Errc::kTransportClosed: return "TransportClosed";
    case Errc::kNonFinite: return "NonFinite";
    case Errc::kKeySpaceTooLarge: return "KeySpaceTooLarge";
    case Errc::kParseError: return "ParseError";
    case Errc::kTooLarge: return "TooLarge";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kCountMismatch: return "CountMismatch";
    case Errc::kTruncated: return "Truncated";
    case Errc::kUncoveredLabel: return "UncoveredLabel";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace cosplit
