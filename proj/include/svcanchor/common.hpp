// Copyright 2026 The svcanchor Authors.
//
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

#ifndef SVCANCHOR_COMMON_HPP_
#define SVCANCHOR_COMMON_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace svcanchor {

// UTC milliseconds since the epoch.
using TimestampMs = std::int64_t;

inline double ms_to_seconds(TimestampMs ms) { return static_cast<double>(ms) / 1000.0; }

enum class ErrorKind {
  kIo,
  kValidation,
  kFormatMismatch,
  kInsufficientData,
  kShape,
  kParameter,
  kNotFound,
  kAlignment,
  kEmptyInput,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kFormatMismatch: return "format_mismatch";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kEmptyInput: return "empty_input";
  }
  return "unknown";
}

// All library failures are reported through this one exception type; the
// kind decides the CLI exit code and the HTTP status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class Turn { kAgent, kClient };

inline const char* to_string(Turn turn) { return turn == Turn::kAgent ? "agent" : "client"; }

inline std::optional<Turn> parse_turn(std::string_view s) {
  if (s == "agent") return Turn::kAgent;
  if (s == "client") return Turn::kClient;
  return std::nullopt;
}

enum class Emotion { kAnger, kDisgust, kFear, kSadness, kNeutral, kSurprise, kHappiness };

inline constexpr std::array<Emotion, 7> kAllEmotions = {
    Emotion::kAnger,   Emotion::kDisgust,  Emotion::kFear,     Emotion::kSadness,
    Emotion::kNeutral, Emotion::kSurprise, Emotion::kHappiness};

inline const char* to_string(Emotion e) {
  switch (e) {
    case Emotion::kAnger: return "anger";
    case Emotion::kDisgust: return "disgust";
    case Emotion::kFear: return "fear";
    case Emotion::kSadness: return "sadness";
    case Emotion::kNeutral: return "neutral";
    case Emotion::kSurprise: return "surprise";
    case Emotion::kHappiness: return "happiness";
  }
  return "neutral";
}

inline std::optional<Emotion> parse_emotion(std::string_view s) {
  for (Emotion e : kAllEmotions) {
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

enum class Polarity { kNegative, kNeutral, kPositive, kAbsent };

inline const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::kNegative: return "negative";
    case Polarity::kNeutral: return "neutral";
    case Polarity::kPositive: return "positive";
    case Polarity::kAbsent: return "absent";
  }
  return "absent";
}

inline std::optional<Polarity> parse_polarity(std::string_view s) {
  for (Polarity p : {Polarity::kNegative, Polarity::kNeutral, Polarity::kPositive,
                     Polarity::kAbsent}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

// Fixed 6-decimal, locale-independent rendering used by every table output.
inline std::string format_fixed6(double value) {
  if (value == 0.0) value = 0.0;  // folds -0.0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  std::string out(buf);
  if (out == "-0.000000") out = "0.000000";
  return out;
}

}  // namespace svcanchor

#endif  // SVCANCHOR_COMMON_HPP_
