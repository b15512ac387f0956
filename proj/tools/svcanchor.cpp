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

// svcanchor: simulate, ingest, fit, score, anchors, export, serve.
//
// Exit status: 0 success, 1 validation or usage error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "svcanchor/api.hpp"
#include "CLI11.hpp"
#include "svcanchor/pipeline.hpp"
#include "svcanchor/scenario.hpp"

namespace sa = svcanchor;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Options {
  std::string format = "table";
  std::string config_path;
  std::string dataset;
  std::string models;
  std::string out;
  std::string counts = "ST=10,NM=10,DA=10,DP=10";
  std::optional<std::uint64_t> seed;
  int agents = 4;
  bool guideline = false;
  std::size_t top = 20;
  std::string host;
  int port = -1;
  std::string server_config;
};

bool structured(const Options& o) { return o.format == "structured"; }

sa::PipelineConfig pipeline_config(const Options& o) {
  if (o.config_path.empty()) return {};
  return sa::PipelineConfig::load(o.config_path);
}

fs::path dataset_dir(const Options& o) {
  if (o.dataset.empty()) throw sa::Error(sa::ErrorKind::kValidation, "--dataset is required");
  fs::path dir = o.dataset;
  if (!fs::is_directory(dir)) throw sa::Error(sa::ErrorKind::kIo, "dataset directory " + dir.string() + " not found");
  return dir;
}

fs::path models_dir(const Options& o) { return o.models.empty() ? dataset_dir(o) / "models" : fs::path(o.models); }

void print_diagnostics(const sa::Dataset& ds) {
  for (const auto& [id, d] : ds.diagnostics) {
    std::fprintf(stderr, "%s: line %zu: %s: %s\n", id.c_str(), d.line, sa::to_string(d.kind), d.message.c_str());
  }
}

int cmd_simulate(const Options& o) {
  if (!o.seed) throw sa::Error(sa::ErrorKind::kValidation, "--seed is required for simulate");
  if (o.out.empty()) throw sa::Error(sa::ErrorKind::kValidation, "--out is required for simulate");
  sa::CorpusOptions opt;
  opt.counts = sa::parse_counts(o.counts);
  opt.base_seed = *o.seed;
  opt.agents = o.agents;
  auto rows = sa::generate_corpus(opt, o.out);
  if (structured(o)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      arr.push_back({{"session_id", r.session_id}, {"label", sa::to_string(r.label)}, {"agent_id", r.agent_id},
                     {"client_id", r.client_id}, {"seed", r.seed}});
    }
    std::cout << nlohmann::json{{"dataset", o.out}, {"sessions", arr}}.dump(2) << "\n";
  } else {
    std::cout << sa::manifest_text(rows);
  }
  return 0;
}

int cmd_ingest(const Options& o) {
  auto dir = dataset_dir(o);
  auto ds = sa::ingest_dataset(dir, pipeline_config(o));
  print_diagnostics(ds);
  nlohmann::json sessions = nlohmann::json::array();
  nlohmann::json diagnostics = nlohmann::json::array();
  for (const auto& [id, d] : ds.diagnostics) {
    diagnostics.push_back({{"session_id", id}, {"line", d.line}, {"kind", sa::to_string(d.kind)}, {"message", d.message}});
  }
  for (const auto& s : ds.sessions) {
    sessions.push_back({{"session_id", s.meta.session_id},
                        {"label", sa::to_string(s.meta.label)},
                        {"record", sa::to_json(s.record)},
                        {"coverage", s.coverage.to_json()},
                        {"speaker_low_confidence", s.speakers.low_confidence}});
  }
  nlohmann::json store = {{"sessions", sessions}, {"diagnostics", diagnostics}};
  sa::write_text_file(dir / "ingest.json", store.dump(2) + "\n");
  if (structured(o)) {
    std::cout << store.dump(2) << "\n";
  } else {
    std::cout << "session_id\tlabel\truns\tframes\tutterances\tduration_s\n";
    for (const auto& s : ds.sessions) {
      std::cout << s.meta.session_id << "\t" << sa::to_string(s.meta.label) << "\t" << s.record.size() << "\t"
                << s.coverage.frames << "\t" << s.coverage.utterances << "\t"
                << sa::format_fixed6(s.record.duration_s()) << "\n";
    }
    std::cout << ds.sessions.size() << " sessions, " << ds.diagnostics.size() << " diagnostics\n";
  }
  return 0;
}

int cmd_fit(const Options& o) {
  auto dir = dataset_dir(o);
  auto config = pipeline_config(o);
  config.markov_from_guideline = config.markov_from_guideline || o.guideline;
  auto ds = sa::ingest_dataset(dir, config);
  print_diagnostics(ds);
  auto models = sa::fit_models(ds, config);
  auto out = models_dir(o);
  sa::save_models(models, out);
  const auto& ns = models.normal_space;
  const auto& tm = models.transition_model;
  if (structured(o)) {
    std::cout << nlohmann::json{{"models", out.string()},
                                {"normal_space", ns.to_json()},
                                {"transition_model", tm.to_json()}}
                     .dump(2)
              << "\n";
  } else {
    std::cout << "normal space: k=" << ns.k << " of " << ns.dimension() << ", q=" << sa::format_fixed6(ns.q_threshold)
              << "\n"
              << "transition model: " << tm.size() << " states, n=" << tm.train_transitions
              << ", epsilon=" << sa::format_fixed6(tm.epsilon)
              << ", log threshold=" << sa::format_fixed6(tm.log_service_threshold) << "\n"
              << "written to " << out.string() << "\n";
  }
  return 0;
}

sa::ScoredCorpus scored_corpus(const Options& o) {
  auto dir = dataset_dir(o);
  auto config = pipeline_config(o);
  auto mdir = models_dir(o);
  if (!fs::exists(mdir / sa::kNormalSpaceFile) || !fs::exists(mdir / sa::kTransitionModelFile)) {
    throw sa::Error(sa::ErrorKind::kIo, "no fitted models in " + mdir.string() + "; run fit first");
  }
  auto ds = std::make_shared<const sa::Dataset>(sa::ingest_dataset(dir, config));
  print_diagnostics(*ds);
  return sa::score_dataset(ds, sa::load_models(mdir), config);
}

int cmd_score(const Options& o) {
  auto scored = scored_corpus(o);
  fs::path reports = o.out.empty() ? dataset_dir(o) / "reports" : fs::path(o.out);
  sa::write_reports(scored, reports);
  if (structured(o)) {
    std::cout << sa::summary_json(scored).dump(2) << "\n";
  } else {
    std::cout << sa::summary_table(scored);
  }
  return 0;
}

int cmd_anchors(const Options& o) {
  auto rows = sa::ranked_anchors(scored_corpus(o));
  if (rows.size() > o.top) rows.resize(o.top);
  std::cout << (structured(o) ? sa::anchors_json(rows).dump(2) + "\n" : sa::anchors_table(rows));
  return 0;
}

int cmd_export(const Options& o) {
  auto scored = scored_corpus(o);
  std::string text = structured(o) ? sa::summary_json(scored).dump(2) + "\n" : sa::summary_table(scored);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    sa::write_text_file(o.out, text);
  }
  return 0;
}

int cmd_serve(const Options& o) {
  sa::ApiConfig config;
  if (!o.server_config.empty()) config = sa::ApiConfig::load(o.server_config);
  if (!o.dataset.empty()) config.dataset_dir = o.dataset;
  if (!o.config_path.empty()) config.pipeline_config = fs::path(o.config_path);
  if (!o.host.empty()) config.host = o.host;
  if (o.port >= 0) config.port = o.port;
  config.apply_environment();
  sa::ApiService service(config);
  int port = service.bind();
  std::cerr << nlohmann::json{{"event", "listening"}, {"host", config.host}, {"port", port},
                              {"dataset", config.dataset_dir.string()}}
                   .dump()
            << std::endl;
  service.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"svcanchor: operational and behavioral anchors for recorded services"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"table", "structured"}));
  app.add_option("--config", o.config_path, "Pipeline config JSON (scoring, features, models)");

  auto* simulate = app.add_subcommand("simulate", "Generate a labeled synthetic dataset");
  simulate->add_option("--counts", o.counts, "Sessions per type, e.g. ST=10,NM=10,DA=10,DP=10");
  simulate->add_option("--seed", o.seed, "Base seed")->required();
  simulate->add_option("--out", o.out, "Output dataset directory")->required();
  simulate->add_option("--agents", o.agents, "Number of agents");

  auto* ingest = app.add_subcommand("ingest", "Parse, segment and align a dataset");
  auto* fit = app.add_subcommand("fit", "Fit the normal space and transition model");
  auto* score = app.add_subcommand("score", "Score every session and write reports");
  auto* anchors = app.add_subcommand("anchors", "List per-operation deviations by |z|");
  auto* exporter = app.add_subcommand("export", "Write the corpus summary table");
  auto* serve = app.add_subcommand("serve", "Start the HTTP API");
  for (auto* sub : {ingest, fit, score, anchors, exporter, serve}) {
    sub->add_option("--dataset", o.dataset, "Dataset directory");
  }
  for (auto* sub : {fit, score, anchors, exporter}) {
    sub->add_option("--models", o.models, "Model directory (default <dataset>/models)");
  }
  fit->add_flag("--guideline", o.guideline, "Fit the transition model on the catalog order");
  score->add_option("--out", o.out, "Report directory (default <dataset>/reports)");
  exporter->add_option("--out", o.out, "Output file (default stdout)");
  anchors->add_option("--top", o.top, "Number of rows");
  serve->add_option("--server-config", o.server_config, "Server config JSON (port, dataset_dir, scoring_config)");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*ingest) return cmd_ingest(o);
    if (*fit) return cmd_fit(o);
    if (*score) return cmd_score(o);
    if (*anchors) return cmd_anchors(o);
    if (*exporter) return cmd_export(o);
    if (*serve) return cmd_serve(o);
  } catch (const sa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == sa::ErrorKind::kIo ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
