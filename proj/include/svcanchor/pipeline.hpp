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

// Dataset-level pipeline: ingest a dataset directory, fit the normal-space
// and transition models, score every session, and build the JSON payloads
// served by the API and written by the CLI.

#ifndef SVCANCHOR_PIPELINE_HPP_
#define SVCANCHOR_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcanchor/anomaly.hpp"
#include "svcanchor/common.hpp"
#include "svcanchor/event_log.hpp"
#include "svcanchor/features.hpp"
#include "svcanchor/satisfaction.hpp"
#include "svcanchor/scenario.hpp"

namespace svcanchor {

namespace fs = std::filesystem;

struct PipelineConfig {
  ScoringConfig scoring;
  FrameProcessingConfig frames;
  NormalSpaceOptions temporal;
  TransitionModelOptions sequential;
  LogGrammar grammar;
  SegmentationConfig segmentation;
  OperationCatalog catalog = OperationCatalog::default_catalog();
  bool markov_from_guideline = false;

  nlohmann::json to_json() const {
    nlohmann::json temporal_j = {{"variance_fraction", temporal.variance_fraction},
                                 {"alpha", temporal.alpha}};
    temporal_j["k"] = temporal.k ? nlohmann::json(*temporal.k) : nlohmann::json();
    nlohmann::json seq_j = {{"window", sequential.window}, {"alpha", sequential.alpha}};
    seq_j["epsilon"] = sequential.epsilon ? nlohmann::json(*sequential.epsilon) : nlohmann::json();
    seq_j["from_guideline"] = markov_from_guideline;
    return {{"scoring", scoring.to_json()},
            {"features",
             {{"half_window", frames.half_window},
              {"pitch_down_occlusion_deg", frames.pitch_down_occlusion_deg}}},
            {"temporal", temporal_j},
            {"sequential", seq_j},
            {"catalog", catalog.to_json()}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
      if (j.contains("scoring")) c.scoring = ScoringConfig::from_json(j["scoring"]);
      if (j.contains("features")) {
        const auto& f = j["features"];
        c.frames.half_window = f.value("half_window", c.frames.half_window);
        c.frames.pitch_down_occlusion_deg =
            f.value("pitch_down_occlusion_deg", c.frames.pitch_down_occlusion_deg);
      }
      if (j.contains("temporal")) {
        const auto& t = j["temporal"];
        if (t.contains("k") && !t["k"].is_null()) c.temporal.k = t["k"].get<std::size_t>();
        c.temporal.variance_fraction = t.value("variance_fraction", c.temporal.variance_fraction);
        c.temporal.alpha = t.value("alpha", c.temporal.alpha);
      }
      if (j.contains("sequential")) {
        const auto& s = j["sequential"];
        c.sequential.window = s.value("window", c.sequential.window);
        c.sequential.alpha = s.value("alpha", c.sequential.alpha);
        if (s.contains("epsilon") && !s["epsilon"].is_null()) c.sequential.epsilon = s["epsilon"].get<double>();
        c.markov_from_guideline = s.value("from_guideline", false);
      }
      if (j.contains("grammar")) c.grammar = LogGrammar::from_json(j["grammar"]);
      if (j.contains("catalog")) c.catalog = OperationCatalog::from_json(j["catalog"]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, std::string("pipeline config: ") + e.what());
    }
    if (c.frames.half_window < 0) throw Error(ErrorKind::kValidation, "features.half_window must be >= 0");
    if (c.sequential.window < 2) throw Error(ErrorKind::kValidation, "sequential.window must be >= 2");
    return c;
  }

  static PipelineConfig load(const std::string& path) { return from_json(load_json(path)); }
};

// ---------------------------------------------------------------------------
// Ingestion

struct IngestedSession {
  ManifestRow meta;
  ServiceSession session;
  ServiceRecordVector record;
  std::vector<FrameFeature> client_frames;  // preprocessed, time-sorted
  std::vector<FrameFeature> agent_frames;
  std::vector<UtteranceFeature> utterances;  // speaker roles resolved, time-sorted
  std::vector<UtteranceFeature> client_utterances;
  SpeakerAssignment speakers;
  CoverageSummary coverage;
  std::optional<GroundTruth> truth;

  // Views into client_frames; valid while this object is alive and unmoved.
  std::vector<AlignedOperationFeatures> aligned() const {
    auto a = align_features(client_frames, client_utterances, record);
    // Speech coverage counts every speaker.
    auto all = align_features(client_frames, utterances, record);
    for (std::size_t i = 0; i < a.size(); ++i) a[i].speech_coverage = all[i].speech_coverage;
    return a;
  }
};

struct Dataset {
  fs::path dir;
  std::vector<IngestedSession> sessions;
  std::vector<std::pair<std::string, Diagnostic>> diagnostics;  // (session id, diagnostic)

  std::optional<std::size_t> find(const std::string& id) const {
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      if (sessions[i].meta.session_id == id) return i;
    }
    return std::nullopt;
  }
};

inline Dataset ingest_dataset(const fs::path& dir, const PipelineConfig& config) {
  Dataset ds;
  ds.dir = dir;
  auto rows = read_manifest(dir);
  for (const auto& row : rows) {
    const std::string base = (dir / row.session_id).string();
    auto parsed = parse_log_file(base + ".log", config.grammar);
    for (auto& d : parsed.diagnostics) ds.diagnostics.emplace_back(row.session_id, d);
    auto seg = segment_services(parsed.entries, config.segmentation, parsed.line_numbers);
    for (auto& d : seg.diagnostics) ds.diagnostics.emplace_back(row.session_id, d);
    if (seg.sessions.size() != 1) {
      ds.diagnostics.emplace_back(
          row.session_id, Diagnostic{0, DiagnosticKind::kUnterminated,
                                     "expected exactly one complete service, found " +
                                         std::to_string(seg.sessions.size()) + "; session skipped"});
      continue;
    }
    IngestedSession s;
    s.meta = row;
    s.session = std::move(seg.sessions.front());
    s.record = aggregate_operations(s.session, config.catalog);
    auto frames = read_frames_file(base + ".frames");
    std::vector<FrameFeature> client, agent;
    for (auto& f : frames) (f.subject == Subject::kClient ? client : agent).push_back(std::move(f));
    auto by_ts = [](const FrameFeature& a, const FrameFeature& b) { return a.ts < b.ts; };
    std::stable_sort(client.begin(), client.end(), by_ts);
    std::stable_sort(agent.begin(), agent.end(), by_ts);
    s.client_frames = preprocess_frames(client, config.frames);
    s.agent_frames = preprocess_frames(agent, config.frames);
    s.utterances = read_utterances_file(base + ".utterances");
    std::stable_sort(s.utterances.begin(), s.utterances.end(),
                     [](const UtteranceFeature& a, const UtteranceFeature& b) { return a.start_ts < b.start_ts; });
    if (fs::exists(base + ".truth")) s.truth = GroundTruth::from_json(load_json(base + ".truth"));
    ds.sessions.push_back(std::move(s));
  }

  std::vector<SpeakerEvidence> evidence;
  for (const auto& s : ds.sessions) {
    SpeakerEvidence e{s.meta.session_id, s.meta.agent_id.empty() ? s.session.agent_id : s.meta.agent_id, {}};
    for (const auto& u : s.utterances) {
      if (u.speaker == Speaker::kUnknown) e.clusters.insert(u.cluster);
    }
    evidence.push_back(std::move(e));
  }
  auto roles = register_agent(evidence);
  for (auto& s : ds.sessions) {
    s.speakers = roles[s.meta.session_id];
    s.utterances = apply_speaker_roles(s.utterances, s.speakers);
    s.client_utterances.clear();
    for (const auto& u : s.utterances) {
      if (u.speaker == Speaker::kClient) s.client_utterances.push_back(u);
    }
    s.coverage = summarize_coverage(s.client_frames, s.utterances);
  }
  if (ds.sessions.empty() && !rows.empty()) {
    throw Error(ErrorKind::kValidation, "dataset " + dir.string() + " has no usable sessions");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Models

struct Models {
  NormalSpace normal_space;
  TransitionModel transition_model;
};

inline constexpr const char* kNormalSpaceFile = "normal_space.json";
inline constexpr const char* kTransitionModelFile = "transition_model.json";

// Guideline: every catalog operation once, equal durations.
inline ServiceRecordVector guideline_record(const OperationCatalog& catalog) {
  ServiceRecordVector r;
  r.begin_ts = 0;
  TimestampMs t = 0;
  for (const auto& op : catalog.operations) {
    r.items.push_back({op, 1, t, t + 60000, catalog.turn_owner.at(op)});
    t += 60000;
  }
  r.end_ts = t;
  return r;
}

inline Models fit_models(const Dataset& ds, const PipelineConfig& config) {
  std::vector<std::vector<double>> vectors;
  std::vector<std::vector<std::string>> sequences;
  for (const auto& s : ds.sessions) {
    if (!is_normal_label(s.meta.label)) continue;
    vectors.push_back(build_duration_vector(s.record, config.catalog.operations));
    sequences.push_back(resample_sequence(s.record, config.sequential.window));
  }
  if (vectors.empty()) throw Error(ErrorKind::kInsufficientData, "no sessions labeled normal (ST/NM) to fit on");
  Models m;
  m.normal_space = fit_normal_space(vectors, config.catalog.operations, config.temporal);
  if (config.markov_from_guideline) {
    sequences = {resample_sequence(guideline_record(config.catalog), config.sequential.window)};
  }
  m.transition_model = fit_transition_model(sequences, config.catalog.operations, config.sequential);
  return m;
}

inline void save_models(const Models& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());
  save_json(m.normal_space.to_json(), (dir / kNormalSpaceFile).string());
  save_json(m.transition_model.to_json(), (dir / kTransitionModelFile).string());
}

inline Models load_models(const fs::path& dir) {
  Models m;
  m.normal_space = NormalSpace::from_json(load_json((dir / kNormalSpaceFile).string()));
  m.transition_model = TransitionModel::from_json(load_json((dir / kTransitionModelFile).string()));
  return m;
}

// ---------------------------------------------------------------------------
// Scoring

struct ScoredSession {
  AnomalyReport anomaly;
  SatisfactionReport satisfaction;
  std::vector<double> face_coverage;    // per run
  std::vector<double> speech_coverage;  // per run
  std::vector<bool> run_sequential_flag;
};

// One immutable scored snapshot of a dataset.
struct ScoredCorpus {
  std::shared_ptr<const Dataset> dataset;
  PipelineConfig config;
  Models models;
  CorpusContext context;
  std::vector<ScoredSession> sessions;  // parallel to dataset->sessions

  std::optional<std::size_t> find(const std::string& id) const { return dataset->find(id); }
};

inline std::vector<bool> run_flags_from_transitions(const ServiceRecordVector& record,
                                                    const std::vector<TransitionInfo>& transitions,
                                                    int window) {
  std::vector<bool> flags(record.size(), false);
  if (record.empty()) return flags;
  auto instants = resample_instants(record, window);
  for (const auto& t : transitions) {
    if (!t.flagged || t.position + 1 >= instants.size()) continue;
    if (auto idx = record.item_at(instants[t.position + 1])) flags[*idx] = true;
  }
  return flags;
}

inline ScoredCorpus score_dataset(std::shared_ptr<const Dataset> ds, const Models& models,
                                  const PipelineConfig& config) {
  ScoredCorpus out;
  out.dataset = ds;
  out.config = config;
  out.models = models;
  std::vector<ServiceChannels> channels;
  std::vector<std::vector<AlignedOperationFeatures>> aligned;
  for (const auto& s : ds->sessions) {
    aligned.push_back(s.aligned());
    channels.push_back(compute_channels(s.meta.session_id, s.record, aligned.back(), config.scoring));
  }
  out.context = CorpusContext::fit(channels, config.scoring);
  for (std::size_t i = 0; i < ds->sessions.size(); ++i) {
    const auto& s = ds->sessions[i];
    ScoredSession sc;
    sc.anomaly = detect_anomalies(s.record, models.normal_space, models.transition_model);
    sc.satisfaction = score_service(channels[i], out.context);
    for (const auto& a : aligned[i]) {
      sc.face_coverage.push_back(a.face_coverage);
      sc.speech_coverage.push_back(a.speech_coverage);
    }
    sc.run_sequential_flag =
        run_flags_from_transitions(s.record, sc.anomaly.per_transition, models.transition_model.window);
    out.sessions.push_back(std::move(sc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Payloads

inline const std::vector<std::string>& sort_metrics() {
  static const std::vector<std::string> metrics = {"cs_total", "cs_visual", "cs_audio", "temporal_score",
                                                   "sequential_score"};
  return metrics;
}

inline void validate_metric(const std::string& metric) {
  const auto& all = sort_metrics();
  if (std::find(all.begin(), all.end(), metric) != all.end()) return;
  std::string valid;
  for (const auto& m : all) valid += (valid.empty() ? "" : ", ") + m;
  throw Error(ErrorKind::kValidation, "unknown sort metric \"" + metric + "\"; valid metrics: " + valid);
}

inline double metric_value(const ScoredSession& s, const std::string& metric) {
  validate_metric(metric);
  if (metric == "cs_total") return s.satisfaction.service_score;
  if (metric == "cs_visual") return s.satisfaction.f_visual;
  if (metric == "cs_audio") return s.satisfaction.f_audio;
  if (metric == "temporal_score") return s.anomaly.temporal_score;
  return -s.anomaly.sequence_log_prob;
}

inline nlohmann::json service_summary(const ScoredCorpus& c, std::size_t i) {
  const auto& s = c.dataset->sessions[i];
  const auto& sc = c.sessions[i];
  const auto& sat = sc.satisfaction;
  nlohmann::json buoys = nlohmann::json::array();
  for (const auto& o : sat.per_operation) {
    buoys.push_back({{"index", o.index},
                     {"operation", o.operation},
                     {"x", -o.event_z},
                     {"visual", o.visual_cs},
                     {"audio", o.audio_cs}});
  }
  return {{"session_id", s.meta.session_id},
          {"label", to_string(s.meta.label)},
          {"agent_id", s.meta.agent_id},
          {"client_id", s.meta.client_id},
          {"request_id", s.session.request_id},
          {"begin_ts", s.session.begin_ts},
          {"end_ts", s.session.end_ts},
          {"duration_s", s.session.duration_s()},
          {"cs_total", sat.service_score},
          {"cs_visual", sat.f_visual},
          {"cs_audio", sat.f_audio},
          {"cs_event", -sat.event_z_sum},
          {"temporal_score", sc.anomaly.temporal_score},
          {"temporal_flag", sc.anomaly.temporal_flag},
          {"sequential_score", -sc.anomaly.sequence_log_prob},
          {"sequence_log_prob", sc.anomaly.sequence_log_prob},
          {"sequential_flag", sc.anomaly.sequential_flag},
          {"low_confidence", sat.low_confidence || s.speakers.low_confidence},
          {"buoys", buoys}};
}

// Full per-session report: summary plus both detector reports.
inline nlohmann::json service_report(const ScoredCorpus& c, std::size_t i) {
  auto j = service_summary(c, i);
  j["satisfaction"] = to_json(c.sessions[i].satisfaction);
  j["anomaly"] = to_json(c.sessions[i].anomaly);
  j["coverage"] = c.dataset->sessions[i].coverage.to_json();
  return j;
}

// Sorted session indices; ties broken by session id.
inline std::vector<std::size_t> sorted_sessions(const ScoredCorpus& c, const std::string& metric,
                                                bool descending) {
  validate_metric(metric);
  std::vector<std::size_t> idx(c.sessions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<double> values;
  for (const auto& s : c.sessions) values.push_back(metric_value(s, metric));
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return descending ? values[a] > values[b] : values[a] < values[b];
    return c.dataset->sessions[a].meta.session_id < c.dataset->sessions[b].meta.session_id;
  });
  return idx;
}

// Timeline columns: one per operation run.
inline nlohmann::json record_payload(const ScoredCorpus& c, std::size_t i) {
  const auto& s = c.dataset->sessions[i];
  const auto& sc = c.sessions[i];
  nlohmann::json columns = nlohmann::json::array();
  for (std::size_t k = 0; k < s.record.size(); ++k) {
    const auto& item = s.record.items[k];
    const auto& op = sc.satisfaction.per_operation[k];
    double mean = c.context.mean_duration(item.operation);
    nlohmann::json lateral = nlohmann::json::object();
    for (Modality m : kModalities) {
      auto mi = static_cast<std::size_t>(m);
      lateral[to_string(m)] = {{"z", op.unified[mi]}, {"anchor", op.anchor[mi]}, {"rank", op.rank[mi]}};
    }
    columns.push_back({{"index", k},
                       {"operation", item.operation},
                       {"count", item.count},
                       {"turn", to_string(item.turn)},
                       {"start_ts", item.start_ts},
                       {"end_ts", item.end_ts},
                       {"mid_ts", item.start_ts + (item.end_ts - item.start_ts) / 2},
                       {"duration_s", item.duration_s()},
                       {"corpus_mean_s", mean},
                       {"over_average_s", std::max(0.0, item.duration_s() - mean)},
                       {"face_coverage", sc.face_coverage[k]},
                       {"speech_coverage", sc.speech_coverage[k]},
                       {"sequential_flag", static_cast<bool>(sc.run_sequential_flag[k])},
                       {"lateral", lateral}});
  }
  return {{"session_id", s.meta.session_id},
          {"begin_ts", s.record.begin_ts},
          {"end_ts", s.record.end_ts},
          {"anchor_threshold_sd", c.config.scoring.anchor_threshold_sd},
          {"columns", columns}};
}

struct FeatureWindow {
  std::size_t op = 0;
  std::optional<TimestampMs> from;
  std::optional<TimestampMs> to;
};

// Frames, utterances, activation and head-pose series clipped to
// [max(from, op start), min(to, op end)).
inline nlohmann::json features_payload(const ScoredCorpus& c, std::size_t i, const FeatureWindow& w) {
  const auto& s = c.dataset->sessions[i];
  if (w.op >= s.record.size()) {
    throw Error(ErrorKind::kNotFound, "operation index " + std::to_string(w.op) + " out of range");
  }
  const auto& item = s.record.items[w.op];
  TimestampMs lo = std::max(item.start_ts, w.from.value_or(item.start_ts));
  TimestampMs hi = std::min(item.end_ts, w.to.value_or(item.end_ts));
  nlohmann::json frames = nlohmann::json::array();
  nlohmann::json utterances = nlohmann::json::array();
  nlohmann::json activation = nlohmann::json::array();
  nlohmann::json pose = nlohmann::json::array();
  nlohmann::json agent_pose = nlohmann::json::array();
  long neg = 0, neu = 0, pos = 0;
  if (lo < hi) {
    std::vector<FrameFeature> window;
    for (const auto& f : s.client_frames) {
      if (f.ts >= lo && f.ts < hi) window.push_back(f);
    }
    std::vector<UtteranceFeature> clipped;
    for (const auto& u : s.client_utterances) {
      TimestampMs a = std::max(u.start_ts, lo), b = std::min(u.end_ts, hi);
      if (a < b) {
        auto cu = u;
        cu.start_ts = a;
        cu.end_ts = b;
        clipped.push_back(cu);
      }
    }
    for (const auto& u : s.utterances) {
      TimestampMs a = std::max(u.start_ts, lo), b = std::min(u.end_ts, hi);
      if (a >= b) continue;
      auto j = to_json(u);
      j["start"] = a;
      j["end"] = b;
      utterances.push_back(std::move(j));
    }
    auto act = activation_series(window, clipped);
    for (std::size_t k = 0; k < window.size(); ++k) {
      const auto& f = window[k];
      frames.push_back({{"frame", f.frame_index},
                        {"ts", f.ts},
                        {"face", f.face_present},
                        {"polarity", to_string(f.polarity)}});
      activation.push_back({{"ts", f.ts}, {"value", act[k]}});
      pose.push_back({{"ts", f.ts}, {"yaw", f.yaw}, {"pitch", f.pitch}, {"roll", f.roll}});
      (act[k] < 0 ? neg : act[k] > 0 ? pos : neu) += 1;
    }
    for (const auto& f : s.agent_frames) {
      if (f.ts >= lo && f.ts < hi) {
        agent_pose.push_back({{"ts", f.ts}, {"yaw", f.yaw}, {"pitch", f.pitch}, {"roll", f.roll}});
      }
    }
  }
  return {{"session_id", s.meta.session_id},
          {"op", w.op},
          {"operation", item.operation},
          {"from", lo},
          {"to", std::max(lo, hi)},
          {"frames", frames},
          {"utterances", utterances},
          {"activation", activation},
          {"counts", {{"negative", neg}, {"neutral", neu}, {"positive", pos}}},
          {"head_pose", pose},
          {"agent_head_pose", agent_pose},
          {"pose_axes",
           {{"yaw", {"left", "right"}}, {"pitch", {"down", "up"}}, {"roll", {"tilt left", "tilt right"}}}}};
}

struct AnchorRow {
  std::string session_id;
  std::size_t index = 0;
  std::string operation;
  Modality modality = Modality::kVisual;
  double z = 0.0;
  bool anchor = false;
};

// Every (run, modality) dot of the corpus, by |z| descending.
inline std::vector<AnchorRow> ranked_anchors(const ScoredCorpus& c) {
  std::vector<AnchorRow> rows;
  for (std::size_t i = 0; i < c.sessions.size(); ++i) {
    for (const auto& o : c.sessions[i].satisfaction.per_operation) {
      for (Modality m : kModalities) {
        auto mi = static_cast<std::size_t>(m);
        rows.push_back({c.dataset->sessions[i].meta.session_id, o.index, o.operation, m, o.unified[mi],
                        o.anchor[mi]});
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AnchorRow& a, const AnchorRow& b) {
    double za = std::fabs(a.z), zb = std::fabs(b.z);
    if (za != zb) return za > zb;
    if (a.session_id != b.session_id) return a.session_id < b.session_id;
    if (a.index != b.index) return a.index < b.index;
    return a.modality < b.modality;
  });
  return rows;
}

inline std::string anchors_table(const std::vector<AnchorRow>& rows) {
  std::string out = "session_id\tindex\toperation\tmodality\tz\tanchor\n";
  for (const auto& r : rows) {
    out += r.session_id + "\t" + std::to_string(r.index) + "\t" + r.operation + "\t" + to_string(r.modality) +
           "\t" + format_fixed6(r.z) + "\t" + (r.anchor ? "1" : "0") + "\n";
  }
  return out;
}

inline nlohmann::json anchors_json(const std::vector<AnchorRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"session_id", r.session_id},
                   {"index", r.index},
                   {"operation", r.operation},
                   {"modality", to_string(r.modality)},
                   {"z", r.z},
                   {"anchor", r.anchor}});
  }
  return arr;
}

// Corpus summary table, sorted by session id, fixed 6-decimal numbers.
inline std::string summary_table(const ScoredCorpus& c) {
  std::string out =
      "session_id\tlabel\tagent_id\tcs_total\tcs_visual\tcs_audio\tcs_event\ttemporal_score\ttemporal_flag\t"
      "sequence_log_prob\tsequential_flag\n";
  std::vector<std::size_t> idx(c.sessions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return c.dataset->sessions[a].meta.session_id < c.dataset->sessions[b].meta.session_id;
  });
  for (std::size_t i : idx) {
    const auto& s = c.dataset->sessions[i];
    const auto& sc = c.sessions[i];
    out += s.meta.session_id + "\t" + to_string(s.meta.label) + "\t" + s.meta.agent_id + "\t" +
           format_fixed6(sc.satisfaction.service_score) + "\t" + format_fixed6(sc.satisfaction.f_visual) + "\t" +
           format_fixed6(sc.satisfaction.f_audio) + "\t" + format_fixed6(-sc.satisfaction.event_z_sum) + "\t" +
           format_fixed6(sc.anomaly.temporal_score) + "\t" + (sc.anomaly.temporal_flag ? "1" : "0") + "\t" +
           format_fixed6(sc.anomaly.sequence_log_prob) + "\t" + (sc.anomaly.sequential_flag ? "1" : "0") + "\n";
  }
  return out;
}

inline nlohmann::json summary_json(const ScoredCorpus& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i : sorted_sessions(c, "cs_total", true)) arr.push_back(service_summary(c, i));
  return arr;
}

inline void write_reports(const ScoredCorpus& c, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());
  for (std::size_t i = 0; i < c.sessions.size(); ++i) {
    write_text_file(dir / (c.dataset->sessions[i].meta.session_id + ".json"), service_report(c, i).dump(2) + "\n");
  }
  write_text_file(dir / "corpus.json", summary_json(c).dump(2) + "\n");
}

// ingest -> fit -> persist models -> score with the persisted models ->
// reports/ and summary.tsv, all under `dir`.
inline ScoredCorpus run_pipeline(const fs::path& dir, const PipelineConfig& config) {
  auto ds = std::make_shared<const Dataset>(ingest_dataset(dir, config));
  save_models(fit_models(*ds, config), dir / "models");
  auto scored = score_dataset(ds, load_models(dir / "models"), config);
  write_reports(scored, dir / "reports");
  write_text_file(dir / "summary.tsv", summary_table(scored));
  return scored;
}

}  // namespace svcanchor

#endif  // SVCANCHOR_PIPELINE_HPP_
