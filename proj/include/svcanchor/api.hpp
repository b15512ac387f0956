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

// HTTP+JSON service over a scored dataset directory.
//
// Reads go against an immutable ScoredCorpus snapshot; POST /admin/refit
// builds a new one and swaps it in. Annotations are appended to
// <dataset>/annotations.jsonl by a single writer.

#ifndef SVCANCHOR_API_HPP_
#define SVCANCHOR_API_HPP_

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

// Eigen (via pipeline.hpp) must precede httplib.h: <resolv.h> defines a
// `_res` macro that collides with Eigen parameter names.
#include "svcanchor/pipeline.hpp"
#include "httplib.h"
#include "json.hpp"
#include "svcanchor/common.hpp"

namespace svcanchor {

inline TimestampMs now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Annotations

struct Annotation {
  std::string session_id;
  std::string annotator_id;
  int client_satisfaction = 0;
  int agent_proficiency = 0;
  int service_smoothness = 0;
  TimestampMs created_at = 0;

  nlohmann::json to_json() const {
    return {{"session_id", session_id},
            {"annotator_id", annotator_id},
            {"client_satisfaction", client_satisfaction},
            {"agent_proficiency", agent_proficiency},
            {"service_smoothness", service_smoothness},
            {"created_at", created_at}};
  }

  // Validates field presence, types and the 1-5 rating range. A missing
  // created_at is left at 0 for the journal to stamp.
  static Annotation from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorKind::kValidation, "annotation must be a JSON object");
    Annotation a;
    auto text = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
        throw Error(ErrorKind::kValidation, std::string(key) + " must be a non-empty string");
      }
      return j[key].get<std::string>();
    };
    auto rating = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_number_integer()) {
        throw Error(ErrorKind::kValidation, std::string(key) + " must be an integer from 1 to 5");
      }
      auto v = j[key].get<std::int64_t>();
      if (v < 1 || v > 5) {
        throw Error(ErrorKind::kValidation,
                    std::string(key) + " must be from 1 to 5, got " + std::to_string(v));
      }
      return static_cast<int>(v);
    };
    a.session_id = text("session_id");
    a.annotator_id = text("annotator_id");
    a.client_satisfaction = rating("client_satisfaction");
    a.agent_proficiency = rating("agent_proficiency");
    a.service_smoothness = rating("service_smoothness");
    if (j.contains("created_at") && !j["created_at"].is_null()) {
      if (!j["created_at"].is_number_integer() || j["created_at"].get<std::int64_t>() < 0) {
        throw Error(ErrorKind::kValidation, "created_at must be a non-negative integer (UTC ms)");
      }
      a.created_at = j["created_at"].get<TimestampMs>();
    }
    return a;
  }
};

// Append-only JSON-lines journal. Appends are serialized; every accepted
// record is flushed before append() returns.
class AnnotationJournal {
 public:
  explicit AnnotationJournal(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    std::uintmax_t good_bytes = 0;
    bool torn = false;
    while (in && std::getline(in, line)) {
      ++line_no;
      const bool newline = !in.eof();
      const bool last = in.peek() == std::char_traits<char>::eof();
      try {
        if (!line.empty()) records_.push_back(Annotation::from_json(nlohmann::json::parse(line)));
        good_bytes += line.size() + (newline ? 1 : 0);
      } catch (const std::exception& e) {
        // A torn final line from a crash is dropped; anything else is corruption.
        if (!last) {
          throw Error(ErrorKind::kValidation,
                      path_.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        torn = true;
      }
    }
    in.close();
    if (torn) {
      // Cut the fragment so the next append starts on a fresh line.
      std::error_code ec;
      std::filesystem::resize_file(path_, good_bytes, ec);
      if (ec) throw Error(ErrorKind::kIo, "cannot repair annotation journal " + path_.string());
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorKind::kIo, "cannot open annotation journal " + path_.string());
  }

  Annotation append(Annotation a) {
    std::lock_guard<std::mutex> lock(mu_);
    if (a.created_at == 0) a.created_at = now_ms();
    out_ << a.to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::kIo, "write to annotation journal failed");
    records_.push_back(a);
    return a;
  }

  // Records for one session, in creation order.
  std::vector<Annotation> list(const std::string& session_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<Annotation> out;
    for (const auto& a : records_) {
      if (a.session_id == session_id) out.push_back(a);
    }
    return out;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return records_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::vector<Annotation> records_;
};

// ---------------------------------------------------------------------------
// Configuration

struct ApiConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path dataset_dir;
  std::optional<std::filesystem::path> pipeline_config;  // optional PipelineConfig JSON

  static constexpr const char* kDatasetEnv = "SVCANCHOR_DATASET";

  // `{"host": ..., "port": ..., "dataset_dir": ..., "scoring_config": ...}`;
  // relative paths resolve against the config file's directory.
  static ApiConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    ApiConfig c;
    try {
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
      if (j.contains("dataset_dir")) c.dataset_dir = base / j["dataset_dir"].get<std::string>();
      if (j.contains("scoring_config")) c.pipeline_config = base / j["scoring_config"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, std::string("server config: ") + e.what());
    }
    return c;
  }

  static ApiConfig load(const std::filesystem::path& path) {
    return from_json(load_json(path.string()), path.parent_path());
  }

  // The environment variable wins over the file.
  void apply_environment() {
    if (const char* dir = std::getenv(kDatasetEnv); dir && *dir) dataset_dir = dir;
  }

  void validate() const {
    if (port < 0 || port > 65535) throw Error(ErrorKind::kValidation, "port must be 0-65535");
    if (dataset_dir.empty()) throw Error(ErrorKind::kValidation, "no dataset directory configured");
    if (!std::filesystem::is_directory(dataset_dir)) {
      throw Error(ErrorKind::kIo, "dataset directory " + dataset_dir.string() + " does not exist");
    }
  }
};

// Ingests and scores `dir`, reusing persisted models unless `refit` is set
// or none exist. An empty manifest gives an empty snapshot.
inline std::shared_ptr<const ScoredCorpus> build_snapshot(const std::filesystem::path& dir,
                                                          const PipelineConfig& config, bool refit) {
  auto ds = std::make_shared<const Dataset>(ingest_dataset(dir, config));
  if (ds->sessions.empty()) {
    auto empty = std::make_shared<ScoredCorpus>();
    empty->dataset = ds;
    empty->config = config;
    return empty;
  }
  const auto models_dir = dir / "models";
  Models models;
  if (!refit && std::filesystem::exists(models_dir / kNormalSpaceFile) &&
      std::filesystem::exists(models_dir / kTransitionModelFile)) {
    models = load_models(models_dir);
  } else {
    models = fit_models(*ds, config);
    save_models(models, models_dir);
  }
  return std::make_shared<const ScoredCorpus>(score_dataset(ds, models, config));
}

// ---------------------------------------------------------------------------
// Service

namespace detail {

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kParameter:
    case ErrorKind::kShape:
    case ErrorKind::kEmptyInput:
      return 400;
    case ErrorKind::kNotFound:
      return 404;
    default:
      return 500;
  }
}

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline std::optional<std::int64_t> int_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto s = req.get_param_value(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kValidation, std::string(key) + " must be an integer, got \"" + s + "\"");
  }
  return v;
}

inline std::string media_type(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  if (ext == ".mp4" || ext == ".m4v") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".ogv") return "video/ogg";
  return "application/octet-stream";
}

}  // namespace detail

class ApiService {
 public:
  // `log` receives one JSON line per request; nullptr disables logging.
  explicit ApiService(ApiConfig config, std::ostream* log = &std::cerr)
      : config_(std::move(config)), log_(log) {
    config_.validate();
    if (config_.pipeline_config) pipeline_ = PipelineConfig::load(config_.pipeline_config->string());
    snapshot_ = build_snapshot(config_.dataset_dir, pipeline_, false);
    journal_ = std::make_unique<AnnotationJournal>(config_.dataset_dir / "annotations.jsonl");
    routes();
  }

  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  // Binds the configured port (0 picks a free one) and returns it.
  int bind() {
    if (config_.port == 0) {
      bound_port_ = server_.bind_to_any_port(config_.host);
    } else if (server_.bind_to_port(config_.host, config_.port)) {
      bound_port_ = config_.port;
    } else {
      bound_port_ = -1;
    }
    if (bound_port_ < 0) {
      throw Error(ErrorKind::kIo, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    return bound_port_;
  }

  // Blocks until stop().
  void listen() { server_.listen_after_bind(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }
  int port() const { return bound_port_; }

  std::shared_ptr<const ScoredCorpus> snapshot() const {
    std::lock_guard<std::mutex> lock(snapshot_mu_);
    return snapshot_;
  }

  // Re-ingests, refits and rescores; readers keep the old snapshot until
  // the swap.
  std::shared_ptr<const ScoredCorpus> refit() {
    std::lock_guard<std::mutex> exclusive(refit_mu_);
    auto fresh = build_snapshot(config_.dataset_dir, pipeline_, true);
    std::lock_guard<std::mutex> lock(snapshot_mu_);
    snapshot_ = fresh;
    return fresh;
  }

  const AnnotationJournal& journal() const { return *journal_; }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Maps svcanchor::Error to a JSON error body.
  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        detail::send_json(res, detail::http_status(e.kind()), {{"error", e.what()}, {"kind", to_string(e.kind())}});
      } catch (const std::exception& e) {
        detail::send_json(res, 500, {{"error", e.what()}, {"kind", "internal"}});
      }
    };
  }

  static std::size_t session_index(const ScoredCorpus& c, const std::string& id) {
    auto idx = c.find(id);
    if (!idx) throw Error(ErrorKind::kNotFound, "unknown session \"" + id + "\"");
    return *idx;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      if (!log_) return;
      nlohmann::json line = {{"ts", now_ms()},        {"method", req.method}, {"path", req.path},
                             {"status", res.status}, {"bytes", res.body.size()}};
      std::lock_guard<std::mutex> lock(log_mu_);
      *log_ << line.dump() << '\n';
      log_->flush();
    });

    server_.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      auto snap = snapshot();
      detail::send_json(res, 200, {{"status", "ok"}, {"sessions", snap->sessions.size()}});
    }));

    server_.Get("/config", guarded([this](const httplib::Request&, httplib::Response& res) {
      detail::send_json(res, 200, snapshot()->config.to_json());
    }));

    server_.Get("/services", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto snap = snapshot();
      std::string metric = req.has_param("sort") ? req.get_param_value("sort") : "cs_total";
      std::string order = req.has_param("order") ? req.get_param_value("order") : "desc";
      if (order != "asc" && order != "desc") {
        throw Error(ErrorKind::kValidation, "order must be asc or desc, got \"" + order + "\"");
      }
      auto page = detail::int_param(req, "page").value_or(1);
      auto page_size = detail::int_param(req, "page_size").value_or(50);
      if (page < 1) throw Error(ErrorKind::kValidation, "page must be >= 1");
      if (page_size < 1 || page_size > 1000) throw Error(ErrorKind::kValidation, "page_size must be 1-1000");
      auto idx = sorted_sessions(*snap, metric, order == "desc");
      nlohmann::json items = nlohmann::json::array();
      auto first = static_cast<std::size_t>((page - 1) * page_size);
      for (std::size_t k = first; k < idx.size() && k < first + static_cast<std::size_t>(page_size); ++k) {
        items.push_back(service_summary(*snap, idx[k]));
      }
      detail::send_json(res, 200,
                        {{"total", idx.size()},
                         {"page", page},
                         {"page_size", page_size},
                         {"sort", metric},
                         {"order", order},
                         {"items", items}});
    }));

    server_.Get(R"(/services/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto snap = snapshot();
      detail::send_json(res, 200, service_report(*snap, session_index(*snap, req.matches[1])));
    }));

    server_.Get(R"(/services/([^/]+)/record)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto snap = snapshot();
                  detail::send_json(res, 200, record_payload(*snap, session_index(*snap, req.matches[1])));
                }));

    server_.Get(R"(/services/([^/]+)/features)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto snap = snapshot();
                  auto i = session_index(*snap, req.matches[1]);
                  auto op = detail::int_param(req, "op");
                  if (!op) throw Error(ErrorKind::kValidation, "op (operation index) is required");
                  if (*op < 0) throw Error(ErrorKind::kNotFound, "operation index must be >= 0");
                  FeatureWindow w;
                  w.op = static_cast<std::size_t>(*op);
                  w.from = detail::int_param(req, "from");
                  w.to = detail::int_param(req, "to");
                  detail::send_json(res, 200, features_payload(*snap, i, w));
                }));

    server_.Get("/anchors", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto snap = snapshot();
      auto rows = ranked_anchors(*snap);
      if (auto top = detail::int_param(req, "top")) {
        if (*top < 0) throw Error(ErrorKind::kValidation, "top must be >= 0");
        if (static_cast<std::size_t>(*top) < rows.size()) rows.resize(static_cast<std::size_t>(*top));
      }
      detail::send_json(res, 200, {{"items", anchors_json(rows)}});
    }));

    server_.Post("/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kValidation, std::string("request body is not JSON: ") + e.what());
      }
      auto a = Annotation::from_json(body);
      session_index(*snapshot(), a.session_id);
      detail::send_json(res, 201, journal_->append(a).to_json());
    }));

    server_.Get("/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("session_id")) throw Error(ErrorKind::kValidation, "session_id is required");
      auto id = req.get_param_value("session_id");
      nlohmann::json items = nlohmann::json::array();
      for (const auto& a : journal_->list(id)) items.push_back(a.to_json());
      detail::send_json(res, 200, {{"session_id", id}, {"items", items}});
    }));

    server_.Get(R"(/videos/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto snap = snapshot();
      std::string id = req.matches[1];
      auto i = session_index(*snap, id);
      auto media = find_media(snap->dataset->sessions[i]);
      if (!media) {
        detail::send_json(res, 404,
                          {{"error", "no media for session \"" + id + "\""}, {"kind", "not_found"}, {"placeholder", true}});
        return;
      }
      auto size = static_cast<std::size_t>(std::filesystem::file_size(*media));
      auto file = std::make_shared<std::ifstream>(*media, std::ios::binary);
      if (!*file) throw Error(ErrorKind::kIo, "cannot open media for \"" + id + "\"");
      res.set_header("Accept-Ranges", "bytes");
      res.set_content_provider(size, detail::media_type(*media),
                               [file](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                                 std::vector<char> buf(std::min<std::size_t>(length, 1 << 16));
                                 file->clear();
                                 file->seekg(static_cast<std::streamoff>(offset));
                                 file->read(buf.data(), static_cast<std::streamsize>(buf.size()));
                                 auto got = file->gcount();
                                 if (got <= 0) return false;
                                 return sink.write(buf.data(), static_cast<std::size_t>(got));
                               });
    }));

    server_.Post("/admin/refit", guarded([this](const httplib::Request&, httplib::Response& res) {
      auto snap = refit();
      detail::send_json(res, 200, {{"status", "refit"}, {"sessions", snap->sessions.size()}});
    }));
  }

  // Registered video (BEGIN message `video=`), else <id>.mp4/.webm in the
  // dataset or its media/ directory.
  std::optional<std::filesystem::path> find_media(const IngestedSession& s) const {
    namespace fs = std::filesystem;
    std::vector<fs::path> candidates;
    if (s.session.video_uri) candidates.push_back(config_.dataset_dir / *s.session.video_uri);
    for (const char* ext : {".mp4", ".webm"}) {
      candidates.push_back(config_.dataset_dir / (s.meta.session_id + ext));
      candidates.push_back(config_.dataset_dir / "media" / (s.meta.session_id + ext));
    }
    for (const auto& c : candidates) {
      std::error_code ec;
      if (fs::is_regular_file(c, ec)) return c;
    }
    return std::nullopt;
  }

  ApiConfig config_;
  PipelineConfig pipeline_;
  std::ostream* log_;
  std::mutex log_mu_;
  mutable std::mutex snapshot_mu_;
  std::mutex refit_mu_;
  std::shared_ptr<const ScoredCorpus> snapshot_;
  std::unique_ptr<AnnotationJournal> journal_;
  httplib::Server server_;
  int bound_port_ = -1;
};

}  // namespace svcanchor

#endif  // SVCANCHOR_API_HPP_
