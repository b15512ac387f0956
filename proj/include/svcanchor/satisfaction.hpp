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

// Behavioral anchors: the linear multimodal satisfaction score of a service
//
//   CS_s = w_v f(sum m_v v_i) + w_a f(sum m_a a_j) - w_e sum_t z_{e,t}
//
// where f standardizes across the services of a corpus and z_{e,t} is the
// duration z-score of run t within its operation group. The same sums
// restricted to one operation run give per-operation scores CS_e.

#ifndef SVCANCHOR_SATISFACTION_HPP_
#define SVCANCHOR_SATISFACTION_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcanchor/common.hpp"
#include "svcanchor/event_log.hpp"
#include "svcanchor/features.hpp"
#include "svcanchor/stats.hpp"

namespace svcanchor {

struct MagnitudeWeights {
  // Indexed by Emotion.
  std::array<double, 7> m = {-1.2, -1.0, -1.0, -1.0, 0.0, 0.0, 1.0};

  double operator()(Emotion e) const { return m[static_cast<std::size_t>(e)]; }
  double& at(Emotion e) { return m[static_cast<std::size_t>(e)]; }

  void validate() const {
    auto w = *this;
    if (!(w(Emotion::kHappiness) > 0.0)) throw Error(ErrorKind::kValidation, "happiness weight must be > 0");
    if (w(Emotion::kNeutral) != 0.0) throw Error(ErrorKind::kValidation, "neutral weight must be 0");
    for (Emotion e : {Emotion::kAnger, Emotion::kDisgust, Emotion::kFear, Emotion::kSadness}) {
      if (!(w(e) < 0.0)) {
        throw Error(ErrorKind::kValidation, std::string(to_string(e)) + " weight must be < 0");
      }
    }
    for (Emotion e : kAllEmotions) {
      if (!std::isfinite(w(e))) throw Error(ErrorKind::kValidation, "weights must be finite");
      if (w(Emotion::kAnger) > w(e)) {
        throw Error(ErrorKind::kValidation, "anger must carry the lowest weight");
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (Emotion e : kAllEmotions) j[to_string(e)] = (*this)(e);
    return j;
  }

  // Keys absent from `j` keep the default weight.
  static MagnitudeWeights from_json(const nlohmann::json& j) {
    MagnitudeWeights w;
    for (const auto& [key, value] : j.items()) {
      auto e = parse_emotion(key);
      if (!e) throw Error(ErrorKind::kValidation, "unknown emotion \"" + key + "\" in magnitude table");
      if (!value.is_number()) throw Error(ErrorKind::kValidation, "magnitude for " + key + " must be a number");
      w.at(*e) = value.get<double>();
    }
    w.validate();
    return w;
  }
};

struct ChannelWeights {
  double visual = 1.0 / 3.0;
  double audio = 1.0 / 3.0;
  double event = 1.0 / 3.0;

  void validate() const {
    if (!(visual >= 0.0 && audio >= 0.0 && event >= 0.0)) {
      throw Error(ErrorKind::kValidation, "channel weights must be non-negative");
    }
    if (visual + audio + event <= 0.0) throw Error(ErrorKind::kValidation, "channel weights are all zero");
  }
};

struct ScoringConfig {
  MagnitudeWeights visual_magnitude;
  MagnitudeWeights audio_magnitude;
  ChannelWeights channel;
  double anchor_threshold_sd = 2.0;

  void validate() const {
    visual_magnitude.validate();
    audio_magnitude.validate();
    channel.validate();
    if (!(anchor_threshold_sd > 0.0)) throw Error(ErrorKind::kValidation, "anchor threshold must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"magnitude", {{"visual", visual_magnitude.to_json()}, {"audio", audio_magnitude.to_json()}}},
            {"channel_weights",
             {{"visual", channel.visual}, {"audio", channel.audio}, {"event", channel.event}}},
            {"anchor_threshold_sd", anchor_threshold_sd}};
  }

  // Accepts either {"magnitude": {...emotion: weight}} for a shared table or
  // {"magnitude": {"visual": {...}, "audio": {...}}}. Unknown keys are errors.
  static ScoringConfig from_json(const nlohmann::json& j) {
    ScoringConfig c;
    if (!j.is_object()) throw Error(ErrorKind::kValidation, "scoring config must be an object");
    for (const auto& [key, value] : j.items()) {
      if (key == "magnitude") {
        if (value.contains("visual") || value.contains("audio")) {
          if (value.contains("visual")) c.visual_magnitude = MagnitudeWeights::from_json(value["visual"]);
          if (value.contains("audio")) c.audio_magnitude = MagnitudeWeights::from_json(value["audio"]);
        } else {
          c.visual_magnitude = MagnitudeWeights::from_json(value);
          c.audio_magnitude = c.visual_magnitude;
        }
      } else if (key == "channel_weights") {
        for (const auto& [ck, cv] : value.items()) {
          if (!cv.is_number()) throw Error(ErrorKind::kValidation, "channel weight must be a number");
          if (ck == "visual") c.channel.visual = cv.get<double>();
          else if (ck == "audio") c.channel.audio = cv.get<double>();
          else if (ck == "event") c.channel.event = cv.get<double>();
          else throw Error(ErrorKind::kValidation, "unknown channel \"" + ck + "\"");
        }
      } else if (key == "anchor_threshold_sd") {
        if (!value.is_number()) throw Error(ErrorKind::kValidation, "anchor_threshold_sd must be a number");
        c.anchor_threshold_sd = value.get<double>();
      } else {
        throw Error(ErrorKind::kValidation, "unknown scoring config key \"" + key + "\"");
      }
    }
    c.validate();
    return c;
  }
};

// Sum of magnitude weights over frames; absent faces contribute nothing.
inline double channel_raw_sum(std::span<const FrameFeature> frames, const MagnitudeWeights& weights) {
  double total = 0.0;
  for (const auto& f : frames) {
    if (f.face_present && f.discrete_emotion) total += weights(*f.discrete_emotion);
  }
  return total;
}

// Utterance contributions are scaled by their duration in seconds.
inline double channel_raw_sum(std::span<const UtteranceFeature> utterances,
                              const MagnitudeWeights& weights) {
  double total = 0.0;
  for (const auto& u : utterances) total += weights(u.discrete_emotion) * u.duration_s();
  return total;
}

struct StandardizedValues {
  std::vector<double> values;
  bool low_confidence = false;
};

inline StandardizedValues standardize_across_services(std::span<const double> values) {
  auto s = stats::Standardizer::fit(values);
  StandardizedValues out;
  out.low_confidence = s.low_confidence();
  for (double v : values) out.values.push_back(s(v));
  return out;
}

struct EventZ {
  double z = 0.0;
  bool low_confidence = false;
};

// Per-operation duration standardizers pooled over every run in a corpus.
inline std::map<std::string, stats::Standardizer> fit_operation_durations(
    std::span<const ServiceRecordVector> corpus) {
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& r : corpus) {
    for (const auto& item : r.items) pooled[item.operation].push_back(item.duration_s());
  }
  std::map<std::string, stats::Standardizer> out;
  for (const auto& [op, xs] : pooled) out[op] = stats::Standardizer::fit(xs);
  return out;
}

// z_{e,t} for every run of every record, grouped by operation name.
inline std::vector<std::vector<EventZ>> event_zscores(std::span<const ServiceRecordVector> corpus) {
  auto groups = fit_operation_durations(corpus);
  std::vector<std::vector<EventZ>> out;
  for (const auto& r : corpus) {
    std::vector<EventZ> zs;
    for (const auto& item : r.items) {
      const auto& g = groups.at(item.operation);
      zs.push_back({g(item.duration_s()), g.low_confidence()});
    }
    out.push_back(std::move(zs));
  }
  return out;
}

inline double service_score(double f_visual, double f_audio, double event_z_sum,
                            const ChannelWeights& w) {
  return w.visual * f_visual + w.audio * f_audio - w.event * event_z_sum;
}

// Per-run channel sums for one service, the unit the scorer consumes.
struct ServiceChannels {
  std::string service_id;
  ServiceRecordVector record;
  std::vector<double> run_visual;  // per item
  std::vector<double> run_audio;   // per item
  std::size_t frame_count = 0;     // N
  std::size_t utterance_count = 0;  // M
};

inline ServiceChannels compute_channels(std::string service_id, const ServiceRecordVector& record,
                                        std::span<const AlignedOperationFeatures> aligned,
                                        const ScoringConfig& config) {
  ServiceChannels c;
  c.service_id = std::move(service_id);
  c.record = record;
  c.run_visual.assign(record.size(), 0.0);
  c.run_audio.assign(record.size(), 0.0);
  for (const auto& a : aligned) {
    c.run_visual[a.item_index] = channel_raw_sum(a.frames, config.visual_magnitude);
    c.run_audio[a.item_index] = channel_raw_sum(std::span<const UtteranceFeature>(a.utterances),
                                                config.audio_magnitude);
    c.frame_count += a.frames.size();
    c.utterance_count += a.utterances.size();
  }
  return c;
}

enum class Modality { kVisual = 0, kAudio = 1, kEvent = 2 };
inline constexpr std::array<Modality, 3> kModalities = {Modality::kVisual, Modality::kAudio,
                                                        Modality::kEvent};

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::kVisual: return "visual";
    case Modality::kAudio: return "audio";
    case Modality::kEvent: return "event";
  }
  return "event";
}

struct OperationScore {
  std::size_t index = 0;
  std::string operation;
  double duration_s = 0.0;
  double visual_sum = 0.0;
  double audio_sum = 0.0;
  double visual_cs = 0.0;  // CS_e, visual
  double audio_cs = 0.0;   // CS_e, audio
  double event_z = 0.0;    // z_{e,t}
  bool event_low_confidence = false;
  std::array<double, 3> unified{};  // within-service z, by Modality
  std::array<bool, 3> anchor{};
  std::array<std::size_t, 3> rank{};  // 1 = largest |unified z| in the service
};

struct SatisfactionReport {
  std::string service_id;
  double service_score = 0.0;  // CS_s
  double visual_raw = 0.0;     // sum m_v v_i
  double audio_raw = 0.0;      // sum m_a a_j
  double f_visual = 0.0;
  double f_audio = 0.0;
  double event_z_sum = 0.0;
  ChannelWeights weights;
  std::size_t frame_count = 0;
  std::size_t utterance_count = 0;
  std::size_t operation_count = 0;  // T, runs
  bool low_confidence = false;
  std::vector<OperationScore> per_operation;

  double visual_term() const { return weights.visual * f_visual; }
  double audio_term() const { return weights.audio * f_audio; }
  double event_term() const { return -weights.event * event_z_sum; }
};

// Corpus statistics every score is relative to. Fitted once, then read-only.
struct CorpusContext {
  ScoringConfig config;
  stats::Standardizer visual;
  stats::Standardizer audio;
  std::map<std::string, stats::Standardizer> durations;
  std::map<std::string, stats::Standardizer> run_visual;
  std::map<std::string, stats::Standardizer> run_audio;

  static CorpusContext fit(std::span<const ServiceChannels> corpus, const ScoringConfig& config) {
    config.validate();
    CorpusContext ctx;
    ctx.config = config;
    std::vector<double> vs, as;
    std::vector<ServiceRecordVector> records;
    std::map<std::string, std::vector<double>> rv, ra;
    for (const auto& s : corpus) {
      vs.push_back(std::accumulate(s.run_visual.begin(), s.run_visual.end(), 0.0));
      as.push_back(std::accumulate(s.run_audio.begin(), s.run_audio.end(), 0.0));
      records.push_back(s.record);
      for (std::size_t i = 0; i < s.record.size(); ++i) {
        rv[s.record.items[i].operation].push_back(s.run_visual[i]);
        ra[s.record.items[i].operation].push_back(s.run_audio[i]);
      }
    }
    ctx.visual = stats::Standardizer::fit(vs);
    ctx.audio = stats::Standardizer::fit(as);
    ctx.durations = fit_operation_durations(records);
    for (const auto& [op, xs] : rv) ctx.run_visual[op] = stats::Standardizer::fit(xs);
    for (const auto& [op, xs] : ra) ctx.run_audio[op] = stats::Standardizer::fit(xs);
    return ctx;
  }

  // Mean duration of `op` across the corpus, 0 if never seen.
  double mean_duration(const std::string& op) const {
    auto it = durations.find(op);
    return it == durations.end() ? 0.0 : it->second.mean;
  }
};

namespace detail {

inline const stats::Standardizer& group_or_empty(const std::map<std::string, stats::Standardizer>& m,
                                                 const std::string& key) {
  static const stats::Standardizer empty{};
  auto it = m.find(key);
  return it == m.end() ? empty : it->second;
}

}  // namespace detail

// Per-run CS_e per modality plus the within-service z-scores that drive the
// lateral chart and anchor flags.
inline std::vector<OperationScore> operation_scores(const ServiceChannels& s, const CorpusContext& ctx) {
  std::vector<OperationScore> ops;
  const std::size_t T = s.record.size();
  for (std::size_t i = 0; i < T; ++i) {
    const RecordItem& item = s.record.items[i];
    OperationScore o;
    o.index = i;
    o.operation = item.operation;
    o.duration_s = item.duration_s();
    o.visual_sum = s.run_visual[i];
    o.audio_sum = s.run_audio[i];
    o.visual_cs = detail::group_or_empty(ctx.run_visual, item.operation)(o.visual_sum);
    o.audio_cs = detail::group_or_empty(ctx.run_audio, item.operation)(o.audio_sum);
    const auto& g = detail::group_or_empty(ctx.durations, item.operation);
    o.event_z = g(o.duration_s);
    o.event_low_confidence = g.low_confidence();
    ops.push_back(std::move(o));
  }

  std::array<std::vector<double>, 3> raw;
  for (const auto& o : ops) {
    raw[0].push_back(o.visual_sum);
    raw[1].push_back(o.audio_sum);
    raw[2].push_back(o.event_z);
  }
  struct Dot {
    double magnitude;
    std::size_t op;
    std::size_t modality;
  };
  std::vector<Dot> dots;
  for (std::size_t m = 0; m < 3; ++m) {
    auto z = stats::zscores(raw[m]);
    for (std::size_t i = 0; i < T; ++i) {
      ops[i].unified[m] = z[i];
      ops[i].anchor[m] = std::fabs(z[i]) > ctx.config.anchor_threshold_sd;
      dots.push_back({std::fabs(z[i]), i, m});
    }
  }
  std::stable_sort(dots.begin(), dots.end(),
                   [](const Dot& a, const Dot& b) { return a.magnitude > b.magnitude; });
  for (std::size_t r = 0; r < dots.size(); ++r) ops[dots[r].op].rank[dots[r].modality] = r + 1;
  return ops;
}

inline SatisfactionReport score_service(const ServiceChannels& s, const CorpusContext& ctx) {
  SatisfactionReport r;
  r.service_id = s.service_id;
  r.weights = ctx.config.channel;
  r.visual_raw = std::accumulate(s.run_visual.begin(), s.run_visual.end(), 0.0);
  r.audio_raw = std::accumulate(s.run_audio.begin(), s.run_audio.end(), 0.0);
  r.f_visual = ctx.visual(r.visual_raw);
  r.f_audio = ctx.audio(r.audio_raw);
  r.frame_count = s.frame_count;
  r.utterance_count = s.utterance_count;
  r.operation_count = s.record.size();
  r.per_operation = operation_scores(s, ctx);
  for (const auto& o : r.per_operation) {
    r.event_z_sum += o.event_z;
    r.low_confidence = r.low_confidence || o.event_low_confidence;
  }
  r.low_confidence = r.low_confidence || ctx.visual.low_confidence() || ctx.audio.low_confidence();
  r.service_score = service_score(r.f_visual, r.f_audio, r.event_z_sum, r.weights);
  return r;
}

inline std::vector<SatisfactionReport> score_corpus(std::span<const ServiceChannels> corpus,
                                                    const ScoringConfig& config) {
  auto ctx = CorpusContext::fit(corpus, config);
  std::vector<SatisfactionReport> out;
  for (const auto& s : corpus) out.push_back(score_service(s, ctx));
  return out;
}

inline nlohmann::json to_json(const OperationScore& o) {
  nlohmann::json unified = nlohmann::json::object();
  nlohmann::json anchor = nlohmann::json::object();
  nlohmann::json rank = nlohmann::json::object();
  for (Modality m : kModalities) {
    auto i = static_cast<std::size_t>(m);
    unified[to_string(m)] = o.unified[i];
    anchor[to_string(m)] = o.anchor[i];
    rank[to_string(m)] = o.rank[i];
  }
  return {{"index", o.index},          {"operation", o.operation},
          {"duration_s", o.duration_s}, {"visual_sum", o.visual_sum},
          {"audio_sum", o.audio_sum},   {"visual_cs", o.visual_cs},
          {"audio_cs", o.audio_cs},     {"event_z", o.event_z},
          {"event_low_confidence", o.event_low_confidence},
          {"unified_z", unified},       {"anchor", anchor},
          {"deviation_rank", rank}};
}

inline nlohmann::json to_json(const SatisfactionReport& r) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : r.per_operation) ops.push_back(to_json(o));
  return {{"service_id", r.service_id},
          {"cs_s", r.service_score},
          {"visual_raw", r.visual_raw},
          {"audio_raw", r.audio_raw},
          {"f_visual", r.f_visual},
          {"f_audio", r.f_audio},
          {"event_z_sum", r.event_z_sum},
          {"weights", {{"visual", r.weights.visual}, {"audio", r.weights.audio}, {"event", r.weights.event}}},
          {"terms", {{"visual", r.visual_term()}, {"audio", r.audio_term()}, {"event", r.event_term()}}},
          {"N", r.frame_count},
          {"M", r.utterance_count},
          {"T", r.operation_count},
          {"low_confidence", r.low_confidence},
          {"per_operation", ops}};
}

}  // namespace svcanchor

#endif  // SVCANCHOR_SATISFACTION_HPP_
