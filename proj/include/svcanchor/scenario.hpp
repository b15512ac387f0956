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

// Synthetic service sessions with known labels. Four scenario types:
//   ST  satisfied: faster than expected, thankful client
//   NM  normal: on time, neutral client
//   DA  dissatisfied with the agent: inattentive agent prolongs a few
//       operations, client gets annoyed late in them
//   DP  dissatisfied with the procedure: a terminal fault forces the client
//       to repeat a run of operations
// Every magnitude below is a generator parameter, not a measured value.

#ifndef SVCANCHOR_SCENARIO_HPP_
#define SVCANCHOR_SCENARIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcanchor/common.hpp"
#include "svcanchor/event_log.hpp"
#include "svcanchor/features.hpp"

namespace svcanchor {

enum class ScenarioType { kST, kNM, kDA, kDP };

inline constexpr std::array<ScenarioType, 4> kScenarioTypes = {ScenarioType::kST, ScenarioType::kNM,
                                                               ScenarioType::kDA, ScenarioType::kDP};

inline const char* to_string(ScenarioType t) {
  switch (t) {
    case ScenarioType::kST: return "ST";
    case ScenarioType::kNM: return "NM";
    case ScenarioType::kDA: return "DA";
    case ScenarioType::kDP: return "DP";
  }
  return "NM";
}

inline std::optional<ScenarioType> parse_scenario_type(std::string_view s) {
  for (auto t : kScenarioTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

inline bool is_normal_label(ScenarioType t) { return t == ScenarioType::kST || t == ScenarioType::kNM; }

// Probabilities for one 1-4 s emotion episode of the client.
struct PolarityProfile {
  double positive = 0.05;
  double negative = 0.05;
  bool annoyed = false;  // negative episodes are anger/disgust rather than sadness/fear
};

struct ScenarioModifiers {
  double duration_min = 0.9;  // multipliers of mean_service_s
  double duration_max = 1.1;
  double op_jitter = 0.03;    // relative SD of per-operation duration around the pace
  double repeat_probability = 0.0;
  PolarityProfile client;           // baseline
  double thankful_positive = 0.0;   // positive rate in the last two operations
  double provoked_negative = 0.6;   // negative rate once an operation overruns
  double lingering_negative = 0.2;  // negative rate after the first overrun
  double agent_head_down = 0.0;     // share of overrun time with the agent looking down
  int prolonged_operations = 0;

  static ScenarioModifiers defaults_for(ScenarioType type) {
    ScenarioModifiers m;
    switch (type) {
      case ScenarioType::kST:
        m.duration_min = 0.6;
        m.duration_max = 0.8;
        m.client = {0.25, 0.02, false};
        m.thankful_positive = 0.6;
        break;
      case ScenarioType::kNM:
        m.client = {0.05, 0.05, false};
        break;
      case ScenarioType::kDA:
        m.duration_min = 1.3;
        m.duration_max = 1.8;
        m.client = {0.03, 0.05, true};
        m.agent_head_down = 0.7;
        m.prolonged_operations = 2;
        break;
      case ScenarioType::kDP:
        // Upper part of the overrun band: the repeated steps are extra work.
        m.duration_min = 1.5;
        m.duration_max = 1.8;
        m.client = {0.03, 0.05, true};
        m.repeat_probability = 1.0;
        // Redoing steps keeps the client irritated for the rest of the visit.
        m.lingering_negative = 0.35;
        break;
    }
    return m;
  }
};

struct ScenarioSpec {
  ScenarioType type = ScenarioType::kNM;
  std::uint64_t seed = 1;
  double mean_service_s = 480.0;
  double fps = 25.0;
  double agent_pose_fps = 1.0;
  OperationCatalog catalog = OperationCatalog::default_catalog();
  std::vector<double> base_share;  // per operation, sums to 1; empty = built-in/equal
  ScenarioModifiers modifiers = ScenarioModifiers::defaults_for(ScenarioType::kNM);
  std::string session_id = "session";
  std::string agent_id = "agent-1";
  std::string client_id = "client-1";
  TimestampMs begin_ts = 1620000000000;

  static ScenarioSpec make(ScenarioType type, std::uint64_t seed) {
    ScenarioSpec s;
    s.type = type;
    s.seed = seed;
    s.modifiers = ScenarioModifiers::defaults_for(type);
    return s;
  }

  void validate() const {
    if (catalog.operations.size() < 2) throw Error(ErrorKind::kValidation, "catalog needs >= 2 operations");
    catalog.validate();
    if (!(mean_service_s > 0.0) || !(fps > 0.0) || !(agent_pose_fps > 0.0)) {
      throw Error(ErrorKind::kValidation, "scenario rates and durations must be positive");
    }
    if (!base_share.empty() && base_share.size() != catalog.operations.size()) {
      throw Error(ErrorKind::kValidation, "base_share must have one entry per operation");
    }
    const auto& m = modifiers;
    if (!(m.duration_min > 0.0 && m.duration_min <= m.duration_max)) {
      throw Error(ErrorKind::kValidation, "duration multipliers must satisfy 0 < min <= max");
    }
    if (m.repeat_probability < 0.0 || m.repeat_probability > 1.0) {
      throw Error(ErrorKind::kValidation, "repeat_probability must lie in [0, 1]");
    }
  }

  nlohmann::json to_json() const {
    const auto& m = modifiers;
    return {{"type", to_string(type)},
            {"seed", seed},
            {"mean_service_s", mean_service_s},
            {"fps", fps},
            {"agent_pose_fps", agent_pose_fps},
            {"session_id", session_id},
            {"agent_id", agent_id},
            {"client_id", client_id},
            {"begin_ts", begin_ts},
            {"modifiers",
             {{"duration_min", m.duration_min},
              {"duration_max", m.duration_max},
              {"op_jitter", m.op_jitter},
              {"repeat_probability", m.repeat_probability},
              {"client_positive", m.client.positive},
              {"client_negative", m.client.negative},
              {"client_annoyed", m.client.annoyed},
              {"thankful_positive", m.thankful_positive},
              {"provoked_negative", m.provoked_negative},
              {"lingering_negative", m.lingering_negative},
              {"agent_head_down", m.agent_head_down},
              {"prolonged_operations", m.prolonged_operations}}}};
  }
};

struct GroundTruth {
  ScenarioType type = ScenarioType::kNM;
  ServiceRecordVector expected_record;
  std::vector<std::size_t> repeated_positions;  // run indices that repeat an earlier run
  std::vector<std::size_t> prolonged_positions;
  std::optional<std::pair<std::string, std::string>> return_transition;  // (from, to)
  Polarity dominant_client_polarity = Polarity::kNeutral;
  bool expected_temporal_flag = false;
  bool expected_sequential_flag = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["type"] = to_string(type);
    j["expected_record"] = svcanchor::to_json(expected_record);
    j["repeated_positions"] = repeated_positions;
    j["prolonged_positions"] = prolonged_positions;
    j["return_transition"] = return_transition
                                 ? nlohmann::json{return_transition->first, return_transition->second}
                                 : nlohmann::json();
    j["dominant_client_polarity"] = to_string(dominant_client_polarity);
    j["expected_temporal_flag"] = expected_temporal_flag;
    j["expected_sequential_flag"] = expected_sequential_flag;
    return j;
  }

  static GroundTruth from_json(const nlohmann::json& j) {
    GroundTruth g;
    auto t = parse_scenario_type(j.at("type").get<std::string>());
    if (!t) throw Error(ErrorKind::kValidation, "truth: unknown scenario type");
    g.type = *t;
    g.expected_record = record_from_json(j.at("expected_record"));
    g.repeated_positions = j.at("repeated_positions").get<std::vector<std::size_t>>();
    g.prolonged_positions = j.at("prolonged_positions").get<std::vector<std::size_t>>();
    if (!j.at("return_transition").is_null()) {
      auto rt = j.at("return_transition").get<std::vector<std::string>>();
      g.return_transition = std::make_pair(rt.at(0), rt.at(1));
    }
    g.dominant_client_polarity = parse_polarity(j.at("dominant_client_polarity").get<std::string>())
                                     .value_or(Polarity::kNeutral);
    g.expected_temporal_flag = j.at("expected_temporal_flag").get<bool>();
    g.expected_sequential_flag = j.at("expected_sequential_flag").get<bool>();
    return g;
  }
};

struct GeneratedSession {
  ScenarioSpec spec;
  std::vector<RawLogEntry> log;
  std::vector<FrameFeature> frames;  // client and agent, sorted by (ts, subject)
  std::vector<UtteranceFeature> utterances;
  GroundTruth truth;

  std::string log_text() const { return serialize_log(log); }
  std::string frames_text() const { return frames_to_ndjson(frames); }
  std::string utterances_text() const { return utterances_to_ndjson(utterances); }
  std::string truth_text() const { return truth.to_json().dump(2) + "\n"; }
};

namespace detail {

struct PlannedRun {
  std::size_t op = 0;
  double duration_s = 0.0;
  double base_s = 0.0;  // nominal duration before any overrun
  bool prolonged = false;
  bool repeat = false;
};

inline std::vector<double> base_shares(const ScenarioSpec& spec) {
  if (!spec.base_share.empty()) return spec.base_share;
  const auto& ops = spec.catalog.operations;
  if (ops == OperationCatalog::default_catalog().operations) {
    std::vector<double> seconds = {35, 50, 55, 65, 60, 75, 55, 45, 40};
    for (auto& s : seconds) s /= 480.0;
    return seconds;
  }
  return std::vector<double>(ops.size(), 1.0 / static_cast<double>(ops.size()));
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  template <typename T>
  const T& pick(const std::vector<T>& xs) { return xs[index(0, xs.size() - 1)]; }

 private:
  std::mt19937_64 rng_;
};

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

}  // namespace detail

// Deterministic in the ScenarioSpec (type, seed and all parameters).
inline GeneratedSession generate_session(const ScenarioSpec& spec) {
  spec.validate();
  using detail::PlannedRun;
  const auto& m = spec.modifiers;
  const auto& catalog = spec.catalog;
  const std::size_t S = catalog.operations.size();
  detail::Sampler rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(spec.type) + 1);

  auto shares = detail::base_shares(spec);
  std::vector<double> base(S);
  for (std::size_t i = 0; i < S; ++i) base[i] = shares[i] * spec.mean_service_s;
  const double multiplier = rng.uniform(m.duration_min, m.duration_max);
  const double target = multiplier * spec.mean_service_s;

  // ---- operation plan
  std::vector<PlannedRun> plan;
  GroundTruth truth;
  truth.type = spec.type;
  bool repeats = rng.chance(m.repeat_probability);
  if (repeats) {
    std::size_t lo = S >= 4 ? 1 : 0;
    std::size_t hi_end = S >= 4 ? S - 2 : S - 1;  // last op index the segment may include
    std::size_t length = std::min<std::size_t>(rng.chance(0.5) ? 2 : 3, hi_end - lo + 1);
    std::size_t start = rng.index(lo, hi_end + 1 - length);
    std::size_t end = start + length - 1;
    for (std::size_t i = 0; i <= end; ++i) {
      plan.push_back({i, base[i] * rng.uniform(0.95, 1.05), base[i], i == end, false});
    }
    for (std::size_t i = start; i <= end; ++i) {
      truth.repeated_positions.push_back(plan.size());
      plan.push_back({i, base[i] * rng.uniform(0.8, 1.0), base[i], false, true});
    }
    for (std::size_t i = end + 1; i < S; ++i) {
      plan.push_back({i, base[i] * rng.uniform(0.95, 1.05), base[i], false, false});
    }
    truth.return_transition = std::make_pair(catalog.operations[end], catalog.operations[start]);
  } else if (m.prolonged_operations > 0) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = (S >= 4 ? 1 : 0); i < (S >= 4 ? S - 1 : S); ++i) candidates.push_back(i);
    std::vector<std::size_t> chosen;
    while (chosen.size() < static_cast<std::size_t>(m.prolonged_operations) && !candidates.empty()) {
      std::size_t k = rng.index(0, candidates.size() - 1);
      chosen.push_back(candidates[k]);
      candidates.erase(candidates.begin() + static_cast<long>(k));
    }
    for (std::size_t i = 0; i < S; ++i) {
      bool prolonged = std::find(chosen.begin(), chosen.end(), i) != chosen.end();
      plan.push_back({i, base[i] * (prolonged ? 1.0 : rng.uniform(0.95, 1.05)), base[i], prolonged, false});
    }
  } else {
    for (std::size_t i = 0; i < S; ++i) {
      double d = base[i] * multiplier * (1.0 + rng.normal(0.0, m.op_jitter));
      d = std::max(d, 0.5 * base[i] * multiplier);
      plan.push_back({i, d, d, false, false});
    }
  }
  double planned = 0.0;
  std::size_t prolonged_count = 0;
  for (const auto& r : plan) {
    planned += r.duration_s;
    prolonged_count += r.prolonged ? 1 : 0;
  }
  if (prolonged_count > 0 && target > planned) {
    double extra = target - planned;
    std::vector<double> weights;
    for (const auto& r : plan) weights.push_back(r.prolonged ? rng.uniform(0.35, 0.65) : 0.0);
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    for (std::size_t i = 0; i < plan.size(); ++i) plan[i].duration_s += extra * weights[i] / wsum;
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].prolonged) truth.prolonged_positions.push_back(i);
  }

  // ---- timeline
  std::vector<TimestampMs> starts;
  TimestampMs t = spec.begin_ts;
  for (const auto& r : plan) {
    starts.push_back(t);
    t += std::max<TimestampMs>(2000, static_cast<TimestampMs>(std::llround(r.duration_s * 1000.0)));
  }
  const TimestampMs end_ts = t;
  auto run_end = [&](std::size_t i) { return i + 1 < plan.size() ? starts[i + 1] : end_ts; };
  auto run_at = [&](TimestampMs ts) {
    auto it = std::upper_bound(starts.begin(), starts.end(), ts);
    return static_cast<std::size_t>(std::max<long>(0, (it - starts.begin()) - 1));
  };
  std::optional<TimestampMs> first_overrun_end;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (plan[i].prolonged || plan[i].repeat) {
      first_overrun_end = run_end(i);
      break;
    }
  }

  // ---- machine log
  GeneratedSession out;
  out.spec = spec;
  const SegmentationConfig seg;
  auto begin_op = catalog.mapping.find(seg.begin_type);
  auto end_op = catalog.mapping.find(seg.end_type);
  if (begin_op == catalog.mapping.end() || begin_op->second != catalog.operations.front() ||
      end_op == catalog.mapping.end() || end_op->second != catalog.operations.back()) {
    throw Error(ErrorKind::kValidation, "catalog must map " + seg.begin_type + " to its first and " +
                                            seg.end_type + " to its last operation");
  }
  std::ostringstream req;
  req << "REQ" << std::hex << (spec.seed * 2654435761ULL % 0xFFFFFFULL) << std::dec << "-"
      << spec.session_id;
  const std::string request_id = req.str();
  std::vector<std::vector<std::string>> inner_types(S);
  for (std::size_t i = 0; i < S; ++i) {
    for (const auto& raw : catalog.raw_types_for(catalog.operations[i])) {
      if (raw != seg.begin_type && raw != seg.end_type) inner_types[i].push_back(raw);
    }
    if (inner_types[i].empty() && i != 0) {
      throw Error(ErrorKind::kValidation,
                  "operation \"" + catalog.operations[i] + "\" needs a raw event type other than BEGIN/END");
    }
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::size_t op = plan[i].op;
    const TimestampMs s = starts[i], e = run_end(i);
    std::vector<TimestampMs> stamps{s};
    std::size_t extra = rng.index(0, 3);
    for (std::size_t k = 0; k < extra; ++k) {
      stamps.push_back(s + 1 + static_cast<TimestampMs>(rng.uniform(0.0, 1.0) * static_cast<double>(e - s - 2)));
    }
    std::sort(stamps.begin(), stamps.end());
    for (std::size_t k = 0; k < stamps.size(); ++k) {
      RawLogEntry entry;
      entry.timestamp = stamps[k];
      entry.request_id = request_id;
      if (i == 0 && k == 0) {
        entry.raw_event_type = seg.begin_type;
        entry.params = {{"service", spec.session_id}, {"agent", spec.agent_id}, {"client", spec.client_id}};
      } else {
        const auto& types = inner_types[op];
        entry.raw_event_type = types[k % types.size()];
        entry.params = {{"step", std::to_string(k + 1)}};
        if (plan[i].prolonged && spec.type == ScenarioType::kDP) entry.params.emplace_back("status", "error");
        if (plan[i].repeat) entry.params.emplace_back("status", "retry");
      }
      out.log.push_back(std::move(entry));
    }
  }
  {
    RawLogEntry end;
    end.timestamp = end_ts;
    end.request_id = request_id;
    end.raw_event_type = seg.end_type;
    end.params = {{"service", spec.session_id}};
    out.log.push_back(std::move(end));
  }

  // ---- client emotion profile at an instant
  auto negative_emotion = [&](bool annoyed) {
    if (annoyed) return rng.chance(0.5) ? Emotion::kAnger : Emotion::kDisgust;
    return rng.chance(0.5) ? Emotion::kSadness : Emotion::kFear;
  };
  auto client_emotion = [&](TimestampMs ts) {
    std::size_t i = run_at(ts);
    const PlannedRun& r = plan[i];
    double positive = m.client.positive;
    double negative = m.client.negative;
    if (r.op + 2 >= S && m.thankful_positive > 0.0) positive = m.thankful_positive;
    bool overrun = (r.prolonged && ms_to_seconds(ts - starts[i]) > r.base_s) || r.repeat;
    if (overrun) {
      negative = m.provoked_negative;
      positive = 0.0;
    } else if (first_overrun_end && ts >= *first_overrun_end && m.client.annoyed) {
      negative = std::max(negative, m.lingering_negative);
      positive = std::min(positive, 0.02);
    }
    double u = rng.uniform(0.0, 1.0);
    if (u < negative) return negative_emotion(m.client.annoyed || overrun);
    if (u < negative + positive) return Emotion::kHappiness;
    return rng.chance(0.05) ? Emotion::kSurprise : Emotion::kNeutral;
  };

  // ---- client frames, in 1-4 s episodes
  const double frame_ms = 1000.0 / spec.fps;
  std::vector<FrameFeature> client;
  {
    std::int64_t idx = 0;
    TimestampMs episode_end = spec.begin_ts;
    std::optional<Emotion> emotion;
    double pitch_bias = 0.0;
    for (;; ++idx) {
      TimestampMs ts = spec.begin_ts + static_cast<TimestampMs>(std::floor(static_cast<double>(idx) * frame_ms));
      if (ts >= end_ts) break;
      if (ts >= episode_end) {
        episode_end = ts + static_cast<TimestampMs>(rng.uniform(1000.0, 4000.0));
        const std::string& op = catalog.operations[plan[run_at(ts)].op];
        pitch_bias = 0.0;
        if (rng.chance(0.04)) {
          emotion.reset();  // turned away
        } else if ((op == "identify" || op == "upload") && rng.chance(0.15)) {
          pitch_bias = -42.0;  // reading documents; FER tends to read this as sad
          emotion = Emotion::kSadness;
        } else {
          emotion = client_emotion(ts);
        }
      }
      std::optional<Emotion> e = emotion;
      if (e && rng.chance(0.01)) e.reset();  // detector glitch
      double yaw = std::clamp(detail::round1(rng.normal(0.0, 8.0)), -89.0, 89.0);
      double pitch = std::clamp(detail::round1(pitch_bias + rng.normal(0.0, 5.0)), -89.0, 89.0);
      double roll = std::clamp(detail::round1(rng.normal(0.0, 3.0)), -89.0, 89.0);
      client.push_back(make_frame(idx, ts, e, yaw, pitch, roll, Subject::kClient));
    }
  }

  // ---- agent head-pose track
  std::vector<FrameFeature> agent;
  {
    const double step_ms = 1000.0 / spec.agent_pose_fps;
    bool head_down = false;
    TimestampMs episode_end = spec.begin_ts;
    for (std::int64_t idx = 0;; ++idx) {
      TimestampMs ts = spec.begin_ts + static_cast<TimestampMs>(std::floor(static_cast<double>(idx) * step_ms));
      if (ts >= end_ts) break;
      std::size_t i = run_at(ts);
      bool overrun = plan[i].prolonged && ms_to_seconds(ts - starts[i]) > 0.5 * plan[i].base_s;
      if (ts >= episode_end) {
        episode_end = ts + static_cast<TimestampMs>(rng.uniform(5000.0, 15000.0));
        head_down = overrun && rng.chance(m.agent_head_down);
      }
      double pitch = (head_down && overrun ? -45.0 : 0.0) + rng.normal(0.0, 4.0);
      agent.push_back(make_frame(idx, ts, Emotion::kNeutral, detail::round1(rng.normal(0.0, 6.0)),
                                 std::clamp(detail::round1(pitch), -89.0, 89.0),
                                 detail::round1(rng.normal(0.0, 2.0)), Subject::kAgent));
    }
  }
  std::merge(client.begin(), client.end(), agent.begin(), agent.end(), std::back_inserter(out.frames),
             [](const FrameFeature& a, const FrameFeature& b) {
               return a.ts != b.ts ? a.ts < b.ts : a.subject < b.subject;
             });

  // ---- utterances: one alternating conversation, no overlap
  const std::string agent_cluster = "spk-" + spec.agent_id;
  const std::string client_cluster = "spk-" + spec.client_id;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const TimestampMs s = starts[i], e = run_end(i);
    const Turn owner = catalog.turn_owner.at(catalog.operations[plan[i].op]);
    TimestampMs cursor = s + static_cast<TimestampMs>(rng.uniform(300.0, 1500.0));
    while (true) {
      bool agent_idle = plan[i].prolonged && m.agent_head_down > 0.0 &&
                        ms_to_seconds(cursor - s) > plan[i].base_s;
      bool agent_speaks = agent_idle ? false : (rng.chance(0.65) == (owner == Turn::kAgent));
      TimestampMs len = static_cast<TimestampMs>(rng.uniform(1500.0, 5000.0));
      TimestampMs u_end = std::min(cursor + len, e - 200);
      if (u_end - cursor < 500) break;
      Emotion emo = agent_speaks ? Emotion::kNeutral : client_emotion((cursor + u_end) / 2);
      out.utterances.push_back(make_utterance(cursor, u_end, Speaker::kUnknown, emo,
                                              agent_speaks ? agent_cluster : client_cluster));
      double gap = agent_idle ? rng.uniform(4000.0, 10000.0) : rng.uniform(300.0, 2500.0);
      cursor = u_end + static_cast<TimestampMs>(gap);
    }
  }

  // ---- ground truth
  truth.expected_record.begin_ts = spec.begin_ts;
  truth.expected_record.end_ts = end_ts;
  {
    std::size_t entry = 0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      RecordItem item;
      item.operation = catalog.operations[plan[i].op];
      item.start_ts = starts[i];
      item.end_ts = run_end(i);
      item.turn = catalog.turn_owner.at(item.operation);
      item.count = 0;
      while (entry < out.log.size() && out.log[entry].timestamp < item.end_ts) {
        ++item.count;
        ++entry;
      }
      if (i + 1 == plan.size()) item.count += static_cast<int>(out.log.size() - entry);
      truth.expected_record.items.push_back(std::move(item));
    }
  }
  switch (spec.type) {
    case ScenarioType::kST: truth.dominant_client_polarity = Polarity::kPositive; break;
    case ScenarioType::kNM: truth.dominant_client_polarity = Polarity::kNeutral; break;
    default: truth.dominant_client_polarity = Polarity::kNegative; break;
  }
  truth.expected_temporal_flag = spec.type == ScenarioType::kDA || spec.type == ScenarioType::kDP;
  truth.expected_sequential_flag = !truth.repeated_positions.empty();
  out.truth = std::move(truth);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

struct ManifestRow {
  std::string session_id;
  ScenarioType label = ScenarioType::kNM;
  std::string agent_id;
  std::string client_id;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestFile = "manifest.tsv";

inline std::string manifest_text(const std::vector<ManifestRow>& rows) {
  std::string out = "session_id\tlabel\tagent_id\tclient_id\tseed\n";
  for (const auto& r : rows) {
    out += r.session_id + "\t" + to_string(r.label) + "\t" + r.agent_id + "\t" + r.client_id + "\t" +
           std::to_string(r.seed) + "\n";
  }
  return out;
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& dataset_dir) {
  auto path = dataset_dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() != 5) {
      throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestRow r;
    r.session_id = std::string(fields[0]);
    auto label = parse_scenario_type(fields[1]);
    if (!label) throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(line_no) + ": bad label");
    r.label = *label;
    r.agent_id = std::string(fields[2]);
    r.client_id = std::string(fields[3]);
    r.seed = std::stoull(std::string(fields[4]));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct CorpusOptions {
  std::map<ScenarioType, int> counts;
  std::uint64_t base_seed = 42;
  int agents = 4;
  double mean_service_s = 480.0;
  double fps = 25.0;
};

// Parses "ST=10,NM=10,DA=10,DP=10".
inline std::map<ScenarioType, int> parse_counts(std::string_view text) {
  std::map<ScenarioType, int> out;
  for (auto part : detail::split(text, ',')) {
    auto eq = part.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::kValidation, "counts must look like ST=10,NM=10");
    auto type = parse_scenario_type(part.substr(0, eq));
    if (!type) throw Error(ErrorKind::kValidation, "unknown scenario type \"" + std::string(part.substr(0, eq)) + "\"");
    int n = 0;
    auto digits = part.substr(eq + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || n < 1) {
      throw Error(ErrorKind::kValidation, "count for " + std::string(to_string(*type)) + " must be >= 1");
    }
    out[*type] = n;
  }
  return out;
}

inline std::vector<ScenarioSpec> plan_corpus(const CorpusOptions& options) {
  if (options.counts.empty()) throw Error(ErrorKind::kValidation, "no scenario counts requested");
  if (options.agents < 1) throw Error(ErrorKind::kValidation, "need at least one agent");
  std::vector<ScenarioSpec> specs;
  std::size_t global = 0;
  for (auto type : kScenarioTypes) {
    auto it = options.counts.find(type);
    if (it == options.counts.end()) continue;
    if (it->second < 1) throw Error(ErrorKind::kValidation, "counts must be >= 1");
    for (int k = 1; k <= it->second; ++k, ++global) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%02d", to_string(type), k);
      auto spec = ScenarioSpec::make(type, splitmix64(options.base_seed * 1000003ULL + global));
      spec.session_id = id;
      spec.client_id = std::string("client-") + id;
      spec.agent_id = "agent-" + std::to_string(global % static_cast<std::size_t>(options.agents) + 1);
      spec.mean_service_s = options.mean_service_s;
      spec.fps = options.fps;
      spec.begin_ts = 1620000000000 + static_cast<TimestampMs>(global) * 3600000;
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

// Writes manifest.tsv, scenario.json and <id>.log/.frames/.utterances/.truth.
inline std::vector<ManifestRow> generate_corpus(const CorpusOptions& options,
                                                const std::filesystem::path& out_dir) {
  auto specs = plan_corpus(options);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<ManifestRow> rows;
  nlohmann::json scenario = nlohmann::json::array();
  for (const auto& spec : specs) {
    auto s = generate_session(spec);
    write_text_file(out_dir / (spec.session_id + ".log"), s.log_text());
    write_text_file(out_dir / (spec.session_id + ".frames"), s.frames_text());
    write_text_file(out_dir / (spec.session_id + ".utterances"), s.utterances_text());
    write_text_file(out_dir / (spec.session_id + ".truth"), s.truth_text());
    rows.push_back({spec.session_id, spec.type, spec.agent_id, spec.client_id, spec.seed});
    scenario.push_back(spec.to_json());
  }
  write_text_file(out_dir / kManifestFile, manifest_text(rows));
  write_text_file(out_dir / "scenario.json", scenario.dump(2) + "\n");
  return rows;
}

}  // namespace svcanchor

#endif  // SVCANCHOR_SCENARIO_HPP_
