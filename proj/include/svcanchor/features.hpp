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

// Pre-extracted multimodal feature streams: per-frame face emotion and head
// pose, per-utterance speaker and audio emotion. Covers ingestion, polarity
// aggregation, smoothing, speaker registration, alignment to operation runs
// and the fused per-frame activation value.

#ifndef SVCANCHOR_FEATURES_HPP_
#define SVCANCHOR_FEATURES_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcanchor/common.hpp"
#include "svcanchor/event_log.hpp"

namespace svcanchor {

inline constexpr int kFeatureSchemaVersion = 1;

enum class Subject { kClient, kAgent };
enum class Speaker { kAgent, kClient, kUnknown };

inline const char* to_string(Subject s) { return s == Subject::kClient ? "client" : "agent"; }

inline const char* to_string(Speaker s) {
  switch (s) {
    case Speaker::kAgent: return "agent";
    case Speaker::kClient: return "client";
    case Speaker::kUnknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "agent") return Speaker::kAgent;
  if (s == "client") return Speaker::kClient;
  if (s == "unknown") return Speaker::kUnknown;
  return std::nullopt;
}

// Seven discrete classes onto three polarities. Surprise is neutral.
inline Polarity aggregate_polarity(Emotion e) {
  switch (e) {
    case Emotion::kHappiness: return Polarity::kPositive;
    case Emotion::kNeutral:
    case Emotion::kSurprise: return Polarity::kNeutral;
    case Emotion::kAnger:
    case Emotion::kDisgust:
    case Emotion::kFear:
    case Emotion::kSadness: return Polarity::kNegative;
  }
  return Polarity::kNeutral;
}

struct FrameFeature {
  std::int64_t frame_index = 0;
  TimestampMs ts = 0;
  Subject subject = Subject::kClient;
  bool face_present = false;
  std::optional<Emotion> discrete_emotion;
  Polarity polarity = Polarity::kAbsent;
  double yaw = 0.0;
  double pitch = 0.0;  // positive = looking up
  double roll = 0.0;

  bool operator==(const FrameFeature&) const = default;
};

struct UtteranceFeature {
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
  Speaker speaker = Speaker::kUnknown;
  std::string cluster;  // diarization label, stable across videos of one speaker
  Emotion discrete_emotion = Emotion::kNeutral;
  Polarity polarity = Polarity::kNeutral;

  double duration_s() const { return ms_to_seconds(end_ts - start_ts); }
  bool operator==(const UtteranceFeature&) const = default;
};

inline FrameFeature make_frame(std::int64_t index, TimestampMs ts, std::optional<Emotion> emotion,
                               double yaw = 0.0, double pitch = 0.0, double roll = 0.0,
                               Subject subject = Subject::kClient) {
  FrameFeature f;
  f.frame_index = index;
  f.ts = ts;
  f.subject = subject;
  f.face_present = emotion.has_value();
  f.discrete_emotion = emotion;
  f.polarity = emotion ? aggregate_polarity(*emotion) : Polarity::kAbsent;
  f.yaw = yaw;
  f.pitch = pitch;
  f.roll = roll;
  return f;
}

inline UtteranceFeature make_utterance(TimestampMs start, TimestampMs end, Speaker speaker,
                                       Emotion emotion, std::string cluster = {}) {
  return {start, end, speaker, std::move(cluster), emotion, aggregate_polarity(emotion)};
}

// ---------------------------------------------------------------------------
// Validation and file I/O

inline void validate(const FrameFeature& f) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kValidation, "frame " + std::to_string(f.frame_index) + ": " + what);
  };
  if (f.frame_index < 0) fail("negative frame index");
  if (!f.face_present && (f.polarity != Polarity::kAbsent || f.discrete_emotion)) {
    fail("absent face must have polarity absent and no emotion");
  }
  if (f.face_present) {
    if (!f.discrete_emotion) fail("present face requires an emotion");
    if (aggregate_polarity(*f.discrete_emotion) != f.polarity) fail("polarity disagrees with emotion");
  }
  for (double a : {f.yaw, f.pitch, f.roll}) {
    if (!(a >= -90.0 && a <= 90.0)) fail("head-pose angle outside [-90, 90]");
  }
}

inline void validate(const UtteranceFeature& u) {
  if (!(u.start_ts < u.end_ts)) {
    throw Error(ErrorKind::kValidation,
                "utterance at " + std::to_string(u.start_ts) + " has non-positive duration");
  }
  if (aggregate_polarity(u.discrete_emotion) != u.polarity) {
    throw Error(ErrorKind::kValidation,
                "utterance at " + std::to_string(u.start_ts) + ": polarity disagrees with emotion");
  }
}

// Same-speaker utterances may not overlap. Unknown speakers are checked per
// diarization cluster instead.
inline void validate_utterances(std::span<const UtteranceFeature> utterances) {
  std::map<std::string, std::vector<std::pair<TimestampMs, TimestampMs>>> by_voice;
  for (const auto& u : utterances) {
    validate(u);
    std::string key = u.speaker == Speaker::kUnknown ? "cluster:" + u.cluster
                                                      : std::string("speaker:") + to_string(u.speaker);
    by_voice[key].emplace_back(u.start_ts, u.end_ts);
  }
  for (auto& [key, spans] : by_voice) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first < spans[i - 1].second) {
        throw Error(ErrorKind::kValidation,
                    "overlapping utterances for " + key + " at " + std::to_string(spans[i].first));
      }
    }
  }
}

inline nlohmann::json to_json(const FrameFeature& f) {
  nlohmann::json j;
  j["frame"] = f.frame_index;
  j["ts"] = f.ts;
  j["subject"] = to_string(f.subject);
  j["face"] = f.face_present;
  j["emotion"] = f.discrete_emotion ? nlohmann::json(to_string(*f.discrete_emotion)) : nlohmann::json();
  j["polarity"] = to_string(f.polarity);
  j["yaw"] = f.yaw;
  j["pitch"] = f.pitch;
  j["roll"] = f.roll;
  return j;
}

inline nlohmann::json to_json(const UtteranceFeature& u) {
  return {{"start", u.start_ts},
          {"end", u.end_ts},
          {"speaker", to_string(u.speaker)},
          {"cluster", u.cluster},
          {"emotion", to_string(u.discrete_emotion)},
          {"polarity", to_string(u.polarity)}};
}

inline FrameFeature frame_from_json(const nlohmann::json& j) {
  FrameFeature f;
  f.frame_index = j.at("frame").get<std::int64_t>();
  f.ts = j.at("ts").get<TimestampMs>();
  auto subject = j.value("subject", std::string("client"));
  if (subject == "client") f.subject = Subject::kClient;
  else if (subject == "agent") f.subject = Subject::kAgent;
  else throw Error(ErrorKind::kValidation, "frame subject must be client or agent");
  f.face_present = j.at("face").get<bool>();
  const auto& emo = j.at("emotion");
  if (!emo.is_null()) {
    auto e = parse_emotion(emo.get<std::string>());
    if (!e) throw Error(ErrorKind::kValidation, "unknown emotion \"" + emo.get<std::string>() + "\"");
    f.discrete_emotion = *e;
  }
  auto p = parse_polarity(j.at("polarity").get<std::string>());
  if (!p) throw Error(ErrorKind::kValidation, "unknown polarity");
  f.polarity = *p;
  f.yaw = j.at("yaw").get<double>();
  f.pitch = j.at("pitch").get<double>();
  f.roll = j.at("roll").get<double>();
  validate(f);
  return f;
}

inline UtteranceFeature utterance_from_json(const nlohmann::json& j) {
  UtteranceFeature u;
  u.start_ts = j.at("start").get<TimestampMs>();
  u.end_ts = j.at("end").get<TimestampMs>();
  auto s = parse_speaker(j.at("speaker").get<std::string>());
  if (!s) throw Error(ErrorKind::kValidation, "unknown speaker");
  u.speaker = *s;
  u.cluster = j.value("cluster", std::string());
  auto e = parse_emotion(j.at("emotion").get<std::string>());
  if (!e) throw Error(ErrorKind::kValidation, "unknown emotion");
  u.discrete_emotion = *e;
  auto p = parse_polarity(j.at("polarity").get<std::string>());
  if (!p) throw Error(ErrorKind::kValidation, "unknown polarity");
  u.polarity = *p;
  validate(u);
  return u;
}

namespace detail {

inline std::string schema_header(const char* kind) {
  return nlohmann::json{{"schema", std::string("svcanchor.") + kind},
                        {"version", kFeatureSchemaVersion}}
      .dump();
}

template <typename T, typename Parse>
std::vector<T> read_ndjson(std::istream& in, const char* kind, const std::string& origin,
                           Parse parse) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<T> out;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!header) {
        if (j.value("schema", std::string()) != std::string("svcanchor.") + kind) {
          throw Error(ErrorKind::kValidation, std::string("missing ") + kind + " schema header");
        }
        if (j.value("version", 0) != kFeatureSchemaVersion) {
          throw Error(ErrorKind::kValidation, "unsupported schema version");
        }
        header = true;
        continue;
      }
      out.push_back(parse(j));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, origin + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kValidation) throw;
      throw Error(ErrorKind::kValidation, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "read error on " + origin);
  if (!header) throw Error(ErrorKind::kValidation, origin + ": empty feature file");
  return out;
}

}  // namespace detail

inline std::string frames_to_ndjson(std::span<const FrameFeature> frames) {
  std::string out = detail::schema_header("frames") + "\n";
  for (const auto& f : frames) out += to_json(f).dump() + "\n";
  return out;
}

inline std::string utterances_to_ndjson(std::span<const UtteranceFeature> utterances) {
  std::string out = detail::schema_header("utterances") + "\n";
  for (const auto& u : utterances) out += to_json(u).dump() + "\n";
  return out;
}

inline std::vector<FrameFeature> read_frames(std::istream& in, const std::string& origin = "frames") {
  return detail::read_ndjson<FrameFeature>(in, "frames", origin, frame_from_json);
}

inline std::vector<UtteranceFeature> read_utterances(std::istream& in,
                                                     const std::string& origin = "utterances") {
  auto out = detail::read_ndjson<UtteranceFeature>(in, "utterances", origin, utterance_from_json);
  validate_utterances(out);
  return out;
}

inline std::vector<FrameFeature> read_frames_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return read_frames(in, path);
}

inline std::vector<UtteranceFeature> read_utterances_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return read_utterances(in, path);
}

struct CoverageSummary {
  std::size_t frames = 0;
  std::size_t frames_with_face = 0;
  std::size_t utterances = 0;
  double speech_s = 0.0;

  nlohmann::json to_json() const {
    return {{"frames", frames},
            {"frames_with_face", frames_with_face},
            {"utterances", utterances},
            {"speech_s", speech_s}};
  }
};

inline CoverageSummary summarize_coverage(std::span<const FrameFeature> frames,
                                          std::span<const UtteranceFeature> utterances) {
  CoverageSummary s;
  for (const auto& f : frames) {
    if (f.subject != Subject::kClient) continue;
    ++s.frames;
    if (f.face_present) ++s.frames_with_face;
  }
  s.utterances = utterances.size();
  for (const auto& u : utterances) s.speech_s += u.duration_s();
  return s;
}

// ---------------------------------------------------------------------------
// Smoothing

// Weighted mean with weights (half_window + 1 - |offset|) over the window
// clipped to the series bounds.
inline std::vector<double> triangular_smooth(std::span<const double> series, int half_window) {
  if (half_window < 0) throw Error(ErrorKind::kParameter, "half_window must be >= 0");
  std::vector<double> out(series.size());
  const auto n = static_cast<long>(series.size());
  for (long i = 0; i < n; ++i) {
    double num = 0.0;
    double den = 0.0;
    long lo = std::max(0L, i - half_window);
    long hi = std::min(n - 1, i + half_window);
    for (long j = lo; j <= hi; ++j) {
      double w = static_cast<double>(half_window + 1 - std::labs(j - i));
      num += w * series[static_cast<std::size_t>(j)];
      den += w;
    }
    out[static_cast<std::size_t>(i)] = num / den;
  }
  return out;
}

struct FrameProcessingConfig {
  int half_window = 7;
  // Unverified default; frames looking further down than this are treated
  // as occluded.
  double pitch_down_occlusion_deg = 30.0;
};

// Smooths face occupancy and head pose of one subject's frames (sorted by
// time), fills or drops flickering detections, then masks frames whose head
// is pitched down past the occlusion limit.
inline std::vector<FrameFeature> preprocess_frames(std::span<const FrameFeature> frames,
                                                   const FrameProcessingConfig& config = {}) {
  std::vector<FrameFeature> out(frames.begin(), frames.end());
  if (out.empty()) return out;
  const std::size_t n = out.size();
  std::vector<double> occupancy(n), yaw(n), pitch(n), roll(n);
  for (std::size_t i = 0; i < n; ++i) {
    occupancy[i] = out[i].face_present ? 1.0 : 0.0;
    yaw[i] = out[i].yaw;
    pitch[i] = out[i].pitch;
    roll[i] = out[i].roll;
  }
  auto occ = triangular_smooth(occupancy, config.half_window);
  auto sy = triangular_smooth(yaw, config.half_window);
  auto sp = triangular_smooth(pitch, config.half_window);
  auto sr = triangular_smooth(roll, config.half_window);

  auto nearest_emotion = [&](std::size_t i) -> std::optional<Emotion> {
    for (std::size_t d = 1; d <= n; ++d) {
      if (i >= d && frames[i - d].face_present) return frames[i - d].discrete_emotion;
      if (i + d < n && frames[i + d].face_present) return frames[i + d].discrete_emotion;
      if (i < d && i + d >= n) break;
    }
    return std::nullopt;
  };

  for (std::size_t i = 0; i < n; ++i) {
    FrameFeature& f = out[i];
    f.yaw = sy[i];
    f.pitch = sp[i];
    f.roll = sr[i];
    bool present = occ[i] >= 0.5;
    if (present && !f.face_present) {
      f.discrete_emotion = nearest_emotion(i);
      present = f.discrete_emotion.has_value();
    }
    if (present && f.subject == Subject::kClient && f.pitch < -config.pitch_down_occlusion_deg) {
      present = false;
    }
    f.face_present = present;
    if (!present) f.discrete_emotion.reset();
    f.polarity = present ? aggregate_polarity(*f.discrete_emotion) : Polarity::kAbsent;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Speaker registration

struct SpeakerEvidence {
  std::string session_id;
  std::string agent_id;
  std::set<std::string> clusters;
};

struct SpeakerAssignment {
  std::map<std::string, Speaker> roles;  // cluster -> role
  bool low_confidence = false;
};

// The agent is the diarization cluster shared by a strict majority (and at
// least two) of the sessions handled by the same agent id.
inline std::map<std::string, SpeakerAssignment> register_agent(
    std::span<const SpeakerEvidence> sessions) {
  std::map<std::string, std::vector<const SpeakerEvidence*>> by_agent;
  for (const auto& s : sessions) by_agent[s.agent_id].push_back(&s);

  std::map<std::string, SpeakerAssignment> out;
  for (const auto& [agent_id, group] : by_agent) {
    std::optional<std::string> agent_cluster;
    if (group.size() >= 2 && !agent_id.empty()) {
      std::map<std::string, std::size_t> counts;
      for (const auto* s : group) {
        for (const auto& c : s->clusters) ++counts[c];
      }
      std::size_t best = 0;
      bool tie = false;
      for (const auto& [c, k] : counts) {
        if (k > best) {
          best = k;
          agent_cluster = c;
          tie = false;
        } else if (k == best) {
          tie = true;
        }
      }
      if (tie || best < 2 || best * 2 <= group.size()) agent_cluster.reset();
    }
    for (const auto* s : group) {
      SpeakerAssignment a;
      bool resolved = agent_cluster && s->clusters.count(*agent_cluster) && s->clusters.size() <= 2;
      for (const auto& c : s->clusters) {
        a.roles[c] = !resolved ? Speaker::kUnknown
                               : (c == *agent_cluster ? Speaker::kAgent : Speaker::kClient);
      }
      a.low_confidence = !resolved;
      out[s->session_id] = std::move(a);
    }
  }
  return out;
}

inline std::vector<UtteranceFeature> apply_speaker_roles(std::span<const UtteranceFeature> utterances,
                                                         const SpeakerAssignment& assignment) {
  std::vector<UtteranceFeature> out(utterances.begin(), utterances.end());
  for (auto& u : out) {
    if (u.speaker != Speaker::kUnknown) continue;
    auto it = assignment.roles.find(u.cluster);
    if (it != assignment.roles.end()) u.speaker = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment

struct AlignedOperationFeatures {
  std::size_t item_index = 0;
  std::span<const FrameFeature> frames;
  std::vector<UtteranceFeature> utterances;  // clipped to the item span
  double face_coverage = 0.0;
  double speech_coverage = 0.0;
};

// Total length of the union of [start, end) intervals.
inline TimestampMs union_length(std::vector<std::pair<TimestampMs, TimestampMs>> spans) {
  std::sort(spans.begin(), spans.end());
  TimestampMs total = 0;
  TimestampMs cur_start = 0, cur_end = 0;
  bool any = false;
  for (const auto& [s, e] : spans) {
    if (!any || s > cur_end) {
      if (any) total += cur_end - cur_start;
      cur_start = s;
      cur_end = e;
      any = true;
    } else {
      cur_end = std::max(cur_end, e);
    }
  }
  if (any) total += cur_end - cur_start;
  return total;
}

// Partitions time-sorted frames and utterances by the record's half-open
// operation spans. Frames outside the session are dropped.
inline std::vector<AlignedOperationFeatures> align_features(std::span<const FrameFeature> frames,
                                                            std::span<const UtteranceFeature> utterances,
                                                            const ServiceRecordVector& record) {
  if (!std::is_sorted(frames.begin(), frames.end(),
                      [](const FrameFeature& a, const FrameFeature& b) { return a.ts < b.ts; })) {
    throw Error(ErrorKind::kParameter, "frames must be sorted by timestamp");
  }
  const TimestampMs lo = record.items.empty() ? record.begin_ts : record.items.front().start_ts;
  const TimestampMs hi = record.end_ts;
  if (!frames.empty() || !utterances.empty()) {
    bool any_inside = false;
    for (const auto& f : frames) {
      if (f.ts >= lo && f.ts < hi) { any_inside = true; break; }
    }
    for (const auto& u : utterances) {
      if (any_inside) break;
      if (u.start_ts < hi && u.end_ts > lo) any_inside = true;
    }
    if (!any_inside) {
      throw Error(ErrorKind::kAlignment, "feature streams lie entirely outside the session span [" +
                                             std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
  }

  std::vector<AlignedOperationFeatures> out;
  out.reserve(record.items.size());
  for (std::size_t i = 0; i < record.items.size(); ++i) {
    const RecordItem& item = record.items[i];
    AlignedOperationFeatures a;
    a.item_index = i;
    auto first = std::lower_bound(frames.begin(), frames.end(), item.start_ts,
                                  [](const FrameFeature& f, TimestampMs t) { return f.ts < t; });
    auto last = std::lower_bound(first, frames.end(), item.end_ts,
                                 [](const FrameFeature& f, TimestampMs t) { return f.ts < t; });
    a.frames = frames.subspan(static_cast<std::size_t>(first - frames.begin()),
                              static_cast<std::size_t>(last - first));
    if (!a.frames.empty()) {
      auto present = std::count_if(a.frames.begin(), a.frames.end(),
                                   [](const FrameFeature& f) { return f.face_present; });
      a.face_coverage = static_cast<double>(present) / static_cast<double>(a.frames.size());
    }
    std::vector<std::pair<TimestampMs, TimestampMs>> spans;
    for (const auto& u : utterances) {
      TimestampMs s = std::max(u.start_ts, item.start_ts);
      TimestampMs e = std::min(u.end_ts, item.end_ts);
      if (s >= e) continue;
      UtteranceFeature clipped = u;
      clipped.start_ts = s;
      clipped.end_ts = e;
      a.utterances.push_back(std::move(clipped));
      spans.emplace_back(s, e);
    }
    TimestampMs span = item.end_ts - item.start_ts;
    if (span > 0) {
      a.speech_coverage =
          std::clamp(static_cast<double>(union_length(std::move(spans))) / static_cast<double>(span),
                     0.0, 1.0);
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activation

// Negative dominates, then positive; absent or silent channels count as
// neutral.
inline int fuse_activation(Polarity visual, std::optional<Polarity> audio) {
  Polarity a = audio.value_or(Polarity::kAbsent);
  if (visual == Polarity::kNegative || a == Polarity::kNegative) return -1;
  if (visual == Polarity::kPositive || a == Polarity::kPositive) return 1;
  return 0;
}

// The utterance covering `ts` whose midpoint is nearest; ties go to the
// client. Utterances must be sorted by start time.
inline const UtteranceFeature* utterance_at(std::span<const UtteranceFeature> utterances,
                                            TimestampMs ts) {
  const UtteranceFeature* best = nullptr;
  double best_dist = 0.0;
  for (const auto& u : utterances) {
    if (u.start_ts > ts) break;
    if (ts >= u.end_ts) continue;
    double mid = 0.5 * static_cast<double>(u.start_ts + u.end_ts);
    double dist = std::fabs(mid - static_cast<double>(ts));
    if (!best || dist < best_dist ||
        (dist == best_dist && u.speaker == Speaker::kClient && best->speaker != Speaker::kClient)) {
      best = &u;
      best_dist = dist;
    }
  }
  return best;
}

inline std::vector<int> activation_series(std::span<const FrameFeature> frames,
                                          std::span<const UtteranceFeature> utterances) {
  std::vector<int> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const UtteranceFeature* u = utterance_at(utterances, f.ts);
    out.push_back(fuse_activation(f.polarity, u ? std::optional<Polarity>(u->polarity) : std::nullopt));
  }
  return out;
}

}  // namespace svcanchor

#endif  // SVCANCHOR_FEATURES_HPP_
