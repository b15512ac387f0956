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

// Operational anchors. Temporal anomalies: squared residual of a
// standardized per-operation duration vector outside a PCA normal subspace.
// Sequential anomalies: log-probability of a resampled operation sequence
// under a smoothed first-order Markov chain.

#ifndef SVCANCHOR_ANOMALY_HPP_
#define SVCANCHOR_ANOMALY_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcanchor/common.hpp"
#include "svcanchor/event_log.hpp"
#include "svcanchor/stats.hpp"

namespace svcanchor {

inline constexpr int kModelFormatVersion = 1;

// Seconds spent in each operation of `feature_order`; repeated runs add up.
inline std::vector<double> build_duration_vector(const ServiceRecordVector& record,
                                                 std::span<const std::string> feature_order) {
  std::vector<double> v(feature_order.size(), 0.0);
  for (const auto& item : record.items) {
    auto it = std::find(feature_order.begin(), feature_order.end(), item.operation);
    if (it == feature_order.end()) {
      throw Error(ErrorKind::kValidation,
                  "operation \"" + item.operation + "\" is not in the feature order");
    }
    v[static_cast<std::size_t>(it - feature_order.begin())] += item.duration_s();
  }
  return v;
}

// ---------------------------------------------------------------------------
// PCA normal space

struct NormalSpace {
  std::vector<std::string> feature_order;
  std::vector<double> mean;
  std::vector<double> scale;                   // training SD; 0 pins the dimension
  std::vector<std::vector<double>> components;  // k orthonormal vectors
  std::vector<double> eigenvalues;              // all d, descending
  std::size_t k = 0;
  double q_threshold = 0.0;
  double alpha = 0.95;

  std::size_t dimension() const { return mean.size(); }

  std::vector<double> standardize(std::span<const double> x) const {
    if (x.size() != dimension()) {
      throw Error(ErrorKind::kShape, "vector has dimension " + std::to_string(x.size()) +
                                         ", normal space expects " + std::to_string(dimension()));
    }
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      z[i] = scale[i] > 0.0 ? (x[i] - mean[i]) / scale[i] : 0.0;
    }
    return z;
  }

  // Squared norm of the projection onto the normal subspace.
  double projected_norm_sq(std::span<const double> z) const {
    double total = 0.0;
    for (const auto& c : components) {
      double dot = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) dot += c[i] * z[i];
      total += dot * dot;
    }
    return total;
  }

  // ||(I - C C^T) z||^2 for an already standardized vector.
  double residual_norm_sq(std::span<const double> z) const {
    if (z.size() != dimension()) {
      throw Error(ErrorKind::kShape, "vector has dimension " + std::to_string(z.size()) +
                                         ", normal space expects " + std::to_string(dimension()));
    }
    // A full basis spans everything; skip the round-off.
    if (components.size() == dimension()) return 0.0;
    std::vector<double> r(z.begin(), z.end());
    for (const auto& c : components) {
      double dot = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) dot += c[i] * z[i];
      for (std::size_t i = 0; i < z.size(); ++i) r[i] -= dot * c[i];
    }
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
  }

  nlohmann::json to_json() const {
    return {{"kind", "normal_space"},   {"version", kModelFormatVersion},
            {"feature_order", feature_order}, {"mean", mean},
            {"scale", scale},           {"components", components},
            {"eigenvalues", eigenvalues}, {"k", k},
            {"q_threshold", q_threshold}, {"alpha", alpha}};
  }

  static NormalSpace from_json(const nlohmann::json& j) {
    if (j.value("kind", std::string()) != "normal_space" ||
        j.value("version", 0) != kModelFormatVersion) {
      throw Error(ErrorKind::kValidation, "not a version-1 normal space model");
    }
    NormalSpace s;
    try {
      s.feature_order = j.at("feature_order").get<std::vector<std::string>>();
      s.mean = j.at("mean").get<std::vector<double>>();
      s.scale = j.at("scale").get<std::vector<double>>();
      s.components = j.at("components").get<std::vector<std::vector<double>>>();
      s.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
      s.k = j.at("k").get<std::size_t>();
      s.q_threshold = j.at("q_threshold").get<double>();
      s.alpha = j.at("alpha").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, std::string("normal space: ") + e.what());
    }
    const std::size_t d = s.mean.size();
    if (s.scale.size() != d || s.feature_order.size() != d || s.components.size() != s.k ||
        s.k > d) {
      throw Error(ErrorKind::kValidation, "normal space: inconsistent dimensions");
    }
    for (const auto& c : s.components) {
      if (c.size() != d) throw Error(ErrorKind::kValidation, "normal space: component size");
    }
    return s;
  }
};

struct NormalSpaceOptions {
  std::optional<std::size_t> k;    // explicit component count
  double variance_fraction = 0.95;  // used when k is not given
  double alpha = 0.95;
};

struct TemporalResult {
  double score = 0.0;
  bool flag = false;
};

inline TemporalResult temporal_anomaly(std::span<const double> vector, const NormalSpace& space) {
  auto z = space.standardize(vector);
  TemporalResult r;
  r.score = space.residual_norm_sq(z);
  r.flag = r.score > space.q_threshold;
  return r;
}

inline NormalSpace fit_normal_space(const std::vector<std::vector<double>>& normal_vectors,
                                    std::vector<std::string> feature_order,
                                    const NormalSpaceOptions& options = {}) {
  if (normal_vectors.empty()) {
    throw Error(ErrorKind::kInsufficientData, "no normal vectors to fit");
  }
  const std::size_t d = normal_vectors.front().size();
  const std::size_t n = normal_vectors.size();
  for (const auto& v : normal_vectors) {
    if (v.size() != d) throw Error(ErrorKind::kShape, "training vectors differ in dimension");
  }
  if (feature_order.empty()) {
    for (std::size_t i = 0; i < d; ++i) feature_order.push_back("f" + std::to_string(i));
  }
  if (feature_order.size() != d) throw Error(ErrorKind::kShape, "feature order/dimension mismatch");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw Error(ErrorKind::kParameter, "alpha must lie in (0, 1)");
  }
  if (options.k && *options.k > d) {
    throw Error(ErrorKind::kParameter, "k exceeds the feature dimension");
  }
  if (options.k && n < *options.k + 1) {
    throw Error(ErrorKind::kInsufficientData, "need at least k+1 = " + std::to_string(*options.k + 1) +
                                                  " normal vectors, have " + std::to_string(n));
  }

  NormalSpace space;
  space.feature_order = std::move(feature_order);
  space.alpha = options.alpha;
  space.mean.resize(d);
  space.scale.resize(d);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = normal_vectors[i][j];
    auto s = stats::Standardizer::fit(column);
    space.mean[j] = s.mean;
    space.scale[j] = s.low_confidence() ? 0.0 : s.sd;
  }

  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = space.standardize(normal_vectors[i]);
    for (std::size_t j = 0; j < d; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  if (n > 1) cov = (z.transpose() * z) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::kParameter, "eigendecomposition of the training covariance failed");
  }
  const auto& values = solver.eigenvalues();   // ascending
  const auto& vectors = solver.eigenvectors();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double ev = std::max(0.0, values(static_cast<Eigen::Index>(d - 1 - j)));
    space.eigenvalues.push_back(ev);
    total += ev;
  }

  std::size_t k = 0;
  if (options.k) {
    k = *options.k;
  } else {
    double acc = 0.0;
    k = d == 0 ? 0 : 1;
    for (std::size_t j = 0; j < d; ++j) {
      acc += space.eigenvalues[j];
      if (total <= 0.0 || acc >= options.variance_fraction * total - 1e-12) {
        k = j + 1;
        break;
      }
    }
    if (n < k + 1) {
      throw Error(ErrorKind::kInsufficientData,
                  "need at least k+1 = " + std::to_string(k + 1) + " normal vectors, have " +
                      std::to_string(n));
    }
  }
  space.k = k;
  for (std::size_t j = 0; j < k; ++j) {
    auto col = vectors.col(static_cast<Eigen::Index>(d - 1 - j));
    std::vector<double> c(d);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    double sign = col(arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) c[i] = sign * col(static_cast<Eigen::Index>(i));
    space.components.push_back(std::move(c));
  }

  std::vector<double> residuals;
  residuals.reserve(n);
  for (const auto& v : normal_vectors) residuals.push_back(space.residual_norm_sq(space.standardize(v)));
  space.q_threshold = std::max(0.0, stats::order_statistic(residuals, options.alpha));
  return space;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path);
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Markov chain

// Instants at the centres of T equal cells over the session span.
inline std::vector<TimestampMs> resample_instants(const ServiceRecordVector& record, int T) {
  if (T < 2) throw Error(ErrorKind::kParameter, "window T must be >= 2");
  if (record.empty()) throw Error(ErrorKind::kEmptyInput, "cannot resample an empty record");
  const double begin = static_cast<double>(record.begin_ts);
  const double span = static_cast<double>(record.end_ts - record.begin_ts);
  std::vector<TimestampMs> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) {
    out.push_back(static_cast<TimestampMs>(std::floor(begin + (j + 0.5) * span / T)));
  }
  return out;
}

// Operation active at each resampled instant; self-transitions are kept.
inline std::vector<std::string> resample_sequence(const ServiceRecordVector& record, int T) {
  auto instants = resample_instants(record, T);
  std::vector<std::string> out;
  out.reserve(instants.size());
  for (TimestampMs t : instants) {
    auto idx = record.item_at(t);
    if (!idx) idx = t < record.items.front().start_ts ? 0 : record.items.size() - 1;
    out.push_back(record.items[*idx].operation);
  }
  return out;
}

struct TransitionModel {
  std::vector<std::string> states;
  std::vector<double> probs;  // row-major |states| x |states|
  double epsilon = 0.0;
  int window = 32;
  std::size_t train_transitions = 0;  // n
  double log_service_threshold = 0.0;  // log of the service-level threshold
  double alpha = 0.95;

  std::size_t size() const { return states.size(); }

  std::optional<std::size_t> index_of(std::string_view s) const {
    auto it = std::find(states.begin(), states.end(), s);
    if (it == states.end()) return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
  }

  double prob(std::size_t from, std::size_t to) const { return probs[from * states.size() + to]; }

  // Per-transition flag level 1/n.
  double transition_threshold() const { return 1.0 / static_cast<double>(train_transitions); }

  nlohmann::json to_json() const {
    return {{"kind", "transition_model"},
            {"version", kModelFormatVersion},
            {"states", states},
            {"probs", probs},
            {"epsilon", epsilon},
            {"window", window},
            {"train_transitions", train_transitions},
            {"log_service_threshold", log_service_threshold},
            {"alpha", alpha}};
  }

  static TransitionModel from_json(const nlohmann::json& j) {
    if (j.value("kind", std::string()) != "transition_model" ||
        j.value("version", 0) != kModelFormatVersion) {
      throw Error(ErrorKind::kValidation, "not a version-1 transition model");
    }
    TransitionModel m;
    try {
      m.states = j.at("states").get<std::vector<std::string>>();
      m.probs = j.at("probs").get<std::vector<double>>();
      m.epsilon = j.at("epsilon").get<double>();
      m.window = j.at("window").get<int>();
      m.train_transitions = j.at("train_transitions").get<std::size_t>();
      m.log_service_threshold = j.at("log_service_threshold").get<double>();
      m.alpha = j.at("alpha").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, std::string("transition model: ") + e.what());
    }
    if (m.probs.size() != m.states.size() * m.states.size() || m.train_transitions == 0 ||
        !(m.log_service_threshold <= 0.0)) {
      throw Error(ErrorKind::kValidation, "transition model: inconsistent fields");
    }
    return m;
  }
};

struct TransitionInfo {
  std::size_t position = 0;  // index t of the pair (e_t, e_{t+1})
  std::string from;
  std::string to;
  double prob = 0.0;
  bool flagged = false;
};

struct SequenceScore {
  double log_prob = 0.0;
  bool flag = false;
  std::vector<TransitionInfo> transitions;
  std::vector<std::string> unknown_states;
};

// log P(E) = sum over t of log p(e_t, e_{t+1}). Unknown states score as an
// epsilon transition and are reported.
inline SequenceScore score_sequence(std::span<const std::string> sequence,
                                    const TransitionModel& model) {
  SequenceScore out;
  const double per_transition = model.transition_threshold();
  std::set<std::string> unknown;
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) {
    auto from = model.index_of(sequence[t]);
    auto to = model.index_of(sequence[t + 1]);
    if (!from) unknown.insert(sequence[t]);
    if (!to) unknown.insert(sequence[t + 1]);
    double p = (from && to) ? model.prob(*from, *to) : model.epsilon;
    TransitionInfo info{t, sequence[t], sequence[t + 1], p, p < per_transition};
    out.log_prob += std::log(p);
    out.transitions.push_back(std::move(info));
  }
  out.unknown_states.assign(unknown.begin(), unknown.end());
  out.flag = out.log_prob < model.log_service_threshold;
  return out;
}

struct TransitionModelOptions {
  std::optional<double> epsilon;  // default 1 / (10 n)
  int window = 32;
  double alpha = 0.95;
};

// Maximum-likelihood bigram counts mixed with an epsilon floor:
// p = eps + (1 - S eps) p_ml. Rows never left during training are uniform.
// `states` may be empty, in which case states are taken in order of first
// appearance.
inline TransitionModel fit_transition_model(const std::vector<std::vector<std::string>>& sequences,
                                            std::vector<std::string> states = {},
                                            const TransitionModelOptions& options = {}) {
  if (sequences.empty()) throw Error(ErrorKind::kInsufficientData, "no training sequences");
  if (states.empty()) {
    for (const auto& seq : sequences) {
      for (const auto& s : seq) {
        if (std::find(states.begin(), states.end(), s) == states.end()) states.push_back(s);
      }
    }
  }
  TransitionModel m;
  m.states = std::move(states);
  m.window = options.window;
  m.alpha = options.alpha;
  const std::size_t S = m.states.size();
  std::vector<double> counts(S * S, 0.0);
  std::size_t n = 0;
  for (const auto& seq : sequences) {
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      auto from = m.index_of(seq[t]);
      auto to = m.index_of(seq[t + 1]);
      if (!from || !to) {
        throw Error(ErrorKind::kValidation, "training state \"" + (from ? seq[t + 1] : seq[t]) +
                                                "\" is not a model state");
      }
      counts[*from * S + *to] += 1.0;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorKind::kInsufficientData, "training sequences contain no transitions");
  m.train_transitions = n;
  m.epsilon = options.epsilon.value_or(1.0 / (10.0 * static_cast<double>(n)));
  if (!(m.epsilon > 0.0) || m.epsilon * static_cast<double>(S) >= 1.0) {
    throw Error(ErrorKind::kParameter, "epsilon must satisfy 0 < epsilon < 1/|states|");
  }
  m.probs.assign(S * S, 0.0);
  const double mass = 1.0 - static_cast<double>(S) * m.epsilon;
  for (std::size_t i = 0; i < S; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < S; ++j) row += counts[i * S + j];
    for (std::size_t j = 0; j < S; ++j) {
      double ml = row > 0.0 ? counts[i * S + j] / row : 1.0 / static_cast<double>(S);
      m.probs[i * S + j] = m.epsilon + mass * ml;
    }
  }

  std::vector<double> log_probs;
  for (const auto& seq : sequences) log_probs.push_back(score_sequence(seq, m).log_prob);
  m.log_service_threshold = std::min(0.0, stats::order_statistic(log_probs, 1.0 - options.alpha));
  return m;
}

struct AnomalyReport {
  double temporal_score = 0.0;
  bool temporal_flag = false;
  double sequence_log_prob = 0.0;
  bool sequential_flag = false;
  std::vector<TransitionInfo> per_transition;
  std::vector<std::string> unknown_states;
};

inline AnomalyReport detect_anomalies(const ServiceRecordVector& record, const NormalSpace& space,
                                      const TransitionModel& model) {
  AnomalyReport r;
  auto t = temporal_anomaly(build_duration_vector(record, space.feature_order), space);
  r.temporal_score = t.score;
  r.temporal_flag = t.flag;
  auto seq = resample_sequence(record, model.window);
  auto s = score_sequence(seq, model);
  r.sequence_log_prob = s.log_prob;
  r.sequential_flag = s.flag;
  r.per_transition = std::move(s.transitions);
  r.unknown_states = std::move(s.unknown_states);
  return r;
}

inline nlohmann::json to_json(const AnomalyReport& r) {
  nlohmann::json transitions = nlohmann::json::array();
  for (const auto& t : r.per_transition) {
    transitions.push_back({{"position", t.position},
                           {"from", t.from},
                           {"to", t.to},
                           {"prob", t.prob},
                           {"flagged", t.flagged}});
  }
  return {{"temporal_score", r.temporal_score},
          {"temporal_flag", r.temporal_flag},
          {"sequence_log_prob", r.sequence_log_prob},
          {"sequential_flag", r.sequential_flag},
          {"per_transition", transitions},
          {"unknown_states", r.unknown_states}};
}

}  // namespace svcanchor

#endif  // SVCANCHOR_ANOMALY_HPP_
