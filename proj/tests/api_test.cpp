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

// Runs the HTTP service on an ephemeral port and talks to it over loopback.

#include "svcanchor/api.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "svcanchor/scenario.hpp"

namespace svcanchor {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class RunningServer {
 public:
  explicit RunningServer(const fs::path& dataset) {
    ApiConfig config;
    config.port = 0;
    config.dataset_dir = dataset;
    service_ = std::make_unique<ApiService>(config, &log_);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->listen(); });
    service_->wait_until_ready();
  }

  ~RunningServer() {
    service_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

  ApiService& service() { return *service_; }
  std::string log() const { return log_.str(); }

 private:
  std::ostringstream log_;
  std::unique_ptr<ApiService> service_;
  int port_ = 0;
  std::thread thread_;
};

json get_json(const httplib::Client& c, const std::string& path, int expected_status = 200) {
  auto& client = const_cast<httplib::Client&>(c);
  auto res = client.Get(path);
  EXPECT_TRUE(res) << path;
  if (!res) return {};
  EXPECT_EQ(res->status, expected_status) << path << ": " << res->body;
  return json::parse(res->body);
}

class ApiTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("svcanchor-api-" + std::to_string(::getpid())));
    fs::remove_all(*dir_);
    CorpusOptions opt;
    opt.counts = parse_counts("ST=5,NM=5,DA=3,DP=3");
    opt.base_seed = 17;
    generate_corpus(opt, *dir_);
    // Synthetic media bytes for one session only.
    video_ = new std::string();
    std::mt19937 rng(3);
    for (int i = 0; i < 5000; ++i) video_->push_back(static_cast<char>(rng() & 0xff));
    write_text_file(*dir_ / "ST-01.mp4", *video_);
    server_ = new RunningServer(*dir_);
  }

  static void TearDownTestSuite() {
    delete server_;
    fs::remove_all(*dir_);
    delete dir_;
    delete video_;
  }

  static fs::path* dir_;
  static std::string* video_;
  static RunningServer* server_;
};

fs::path* ApiTest::dir_ = nullptr;
std::string* ApiTest::video_ = nullptr;
RunningServer* ApiTest::server_ = nullptr;

TEST_F(ApiTest, Health) {
  auto c = server_->client();
  auto j = get_json(c, "/health");
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["sessions"], 16);
  auto res = c.Get("/health");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  // One structured log line per request.
  auto log = server_->log();
  EXPECT_NE(log.find("\"path\":\"/health\""), std::string::npos);
}

TEST_F(ApiTest, ServicesSortedByEveryMetric) {
  auto c = server_->client();
  for (const auto& metric : sort_metrics()) {
    for (std::string order : {"asc", "desc"}) {
      auto j = get_json(c, "/services?sort=" + metric + "&order=" + order + "&page_size=1000");
      ASSERT_EQ(j["total"], 16);
      const auto& items = j["items"];
      ASSERT_EQ(items.size(), 16u);
      // Independent re-sort of the returned items.
      std::vector<std::pair<double, std::string>> keys;
      for (const auto& it : items) keys.emplace_back(it[metric].get<double>(), it["session_id"].get<std::string>());
      auto expected = keys;
      std::sort(expected.begin(), expected.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return order == "desc" ? a.first > b.first : a.first < b.first;
        return a.second < b.second;
      });
      EXPECT_EQ(keys, expected) << metric << " " << order;
    }
  }
  // Default sort is cs_total descending: the first item is the maximum.
  auto j = get_json(c, "/services");
  double best = -1e300;
  for (const auto& s : server_->service().snapshot()->sessions) best = std::max(best, s.satisfaction.service_score);
  EXPECT_DOUBLE_EQ(j["items"][0]["cs_total"].get<double>(), best);
}

TEST_F(ApiTest, ServicesPaging) {
  auto c = server_->client();
  auto all = get_json(c, "/services?page_size=1000")["items"];
  std::vector<std::string> paged;
  for (int page = 1; page <= 4; ++page) {
    auto j = get_json(c, "/services?page_size=5&page=" + std::to_string(page));
    EXPECT_EQ(j["total"], 16);
    for (const auto& it : j["items"]) paged.push_back(it["session_id"]);
  }
  ASSERT_EQ(paged.size(), 16u);
  for (std::size_t i = 0; i < paged.size(); ++i) EXPECT_EQ(paged[i], all[i]["session_id"]);
  EXPECT_TRUE(get_json(c, "/services?page_size=5&page=9")["items"].empty());
  get_json(c, "/services?page=0", 400);
  get_json(c, "/services?page_size=abc", 400);
}

TEST_F(ApiTest, UnknownSortNamesValidMetrics) {
  auto c = server_->client();
  auto j = get_json(c, "/services?sort=happiness", 400);
  std::string msg = j["error"];
  for (const auto& m : sort_metrics()) EXPECT_NE(msg.find(m), std::string::npos) << m;
  get_json(c, "/services?order=sideways", 400);
}

TEST_F(ApiTest, PayloadsEqualCoreOutput) {
  auto c = server_->client();
  auto snap = server_->service().snapshot();
  for (std::size_t i = 0; i < snap->sessions.size(); ++i) {
    const auto& id = snap->dataset->sessions[i].meta.session_id;
    EXPECT_EQ(get_json(c, "/services/" + id), json::parse(service_report(*snap, i).dump())) << id;
    EXPECT_EQ(get_json(c, "/services/" + id + "/record"), json::parse(record_payload(*snap, i).dump())) << id;
  }
  auto rows = ranked_anchors(*snap);
  rows.resize(7);
  EXPECT_EQ(get_json(c, "/anchors?top=7")["items"], json::parse(anchors_json(rows).dump()));
  get_json(c, "/services/nope", 404);
  get_json(c, "/services/nope/record", 404);
}

TEST_F(ApiTest, RecordColumnsAreTheRuns) {
  auto c = server_->client();
  auto snap = server_->service().snapshot();
  auto i = *snap->find("DP-01");
  const auto& rec = snap->dataset->sessions[i].record;
  auto j = get_json(c, "/services/DP-01/record");
  ASSERT_EQ(j["columns"].size(), rec.size());
  for (std::size_t k = 0; k < rec.size(); ++k) {
    const auto& col = j["columns"][k];
    EXPECT_EQ(col["operation"], rec.items[k].operation);
    EXPECT_EQ(col["start_ts"], rec.items[k].start_ts);
    EXPECT_NEAR(col["over_average_s"].get<double>(),
                std::max(0.0, rec.items[k].duration_s() - col["corpus_mean_s"].get<double>()), 1e-9);
  }
}

TEST_F(ApiTest, FeatureWindowCounts) {
  auto c = server_->client();
  auto snap = server_->service().snapshot();
  auto i = *snap->find("NM-02");
  const auto& s = snap->dataset->sessions[i];
  for (std::size_t op = 0; op < s.record.size(); ++op) {
    const auto& item = s.record.items[op];
    auto full = get_json(c, "/services/NM-02/features?op=" + std::to_string(op));
    auto counts = full["counts"];
    std::size_t frames = full["frames"].size();
    EXPECT_EQ(counts["negative"].get<std::size_t>() + counts["neutral"].get<std::size_t>() +
                  counts["positive"].get<std::size_t>(),
              frames);
    // Recount from the activation series.
    long neg = 0, neu = 0, pos = 0;
    for (const auto& a : full["activation"]) {
      int v = a["value"];
      (v < 0 ? neg : v > 0 ? pos : neu)++;
    }
    EXPECT_EQ(counts["negative"], neg);
    EXPECT_EQ(counts["neutral"], neu);
    EXPECT_EQ(counts["positive"], pos);
    // Frame count oracle from the ingested stream.
    std::size_t inside = 0;
    for (const auto& f : s.client_frames) inside += (f.ts >= item.start_ts && f.ts < item.end_ts) ? 1 : 0;
    EXPECT_EQ(frames, inside);

    TimestampMs span = item.end_ts - item.start_ts;
    TimestampMs from = item.start_ts + span / 4, to = item.start_ts + span / 2;
    auto sub = get_json(c, "/services/NM-02/features?op=" + std::to_string(op) + "&from=" + std::to_string(from) +
                               "&to=" + std::to_string(to));
    for (const char* k : {"negative", "neutral", "positive"}) {
      EXPECT_LE(sub["counts"][k].get<long>(), counts[k].get<long>());
    }
    for (const auto& f : sub["frames"]) {
      EXPECT_GE(f["ts"].get<TimestampMs>(), from);
      EXPECT_LT(f["ts"].get<TimestampMs>(), to);
    }
  }
  get_json(c, "/services/NM-02/features", 400);
  get_json(c, "/services/NM-02/features?op=99", 404);
}

TEST_F(ApiTest, AnnotationsRoundTripAndValidate) {
  auto c = server_->client();
  json a = {{"session_id", "DA-01"},
            {"annotator_id", "ann-1"},
            {"client_satisfaction", 2},
            {"agent_proficiency", 4},
            {"service_smoothness", 3}};
  auto res = c.Post("/annotations", a.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  auto stored = json::parse(res->body);
  EXPECT_GT(stored["created_at"].get<TimestampMs>(), 0);
  auto list = get_json(c, "/annotations?session_id=DA-01");
  ASSERT_EQ(list["items"].size(), 1u);
  EXPECT_EQ(list["items"][0], stored);

  auto bad = a;
  bad["client_satisfaction"] = 6;
  EXPECT_EQ(c.Post("/annotations", bad.dump(), "application/json")->status, 400);
  bad = a;
  bad.erase("annotator_id");
  EXPECT_EQ(c.Post("/annotations", bad.dump(), "application/json")->status, 400);
  EXPECT_EQ(c.Post("/annotations", "{not json", "application/json")->status, 400);
  bad = a;
  bad["session_id"] = "ZZ-99";
  EXPECT_EQ(c.Post("/annotations", bad.dump(), "application/json")->status, 404);
  get_json(c, "/annotations", 400);
}

TEST_F(ApiTest, ConcurrentAnnotationsAllPersist) {
  const std::size_t before = server_->service().journal().size();
  std::atomic<int> created{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 10; ++t) {
    threads.emplace_back([&, t] {
      auto c = server_->client();
      for (int k = 0; k < 10; ++k) {
        json a = {{"session_id", "NM-01"},
                  {"annotator_id", "t" + std::to_string(t)},
                  {"client_satisfaction", 1 + k % 5},
                  {"agent_proficiency", 1 + t % 5},
                  {"service_smoothness", 3}};
        auto res = c.Post("/annotations", a.dump(), "application/json");
        if (res && res->status == 201) ++created;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(created.load(), 100);
  EXPECT_EQ(get_json(server_->client(), "/annotations?session_id=NM-01")["items"].size(), 100u);
  // A fresh reader of the journal file sees every record.
  AnnotationJournal reopened(*dir_ / "annotations.jsonl");
  EXPECT_EQ(reopened.size(), before + 100);
  EXPECT_EQ(reopened.list("NM-01").size(), 100u);
}

TEST_F(ApiTest, VideoRangeRequests) {
  auto c = server_->client();
  auto res = c.Get("/videos/ST-01", {httplib::make_range_header({{0, 99}})});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 206);
  EXPECT_EQ(res->body, video_->substr(0, 100));
  res = c.Get("/videos/ST-01", {httplib::make_range_header({{2500, 2999}})});
  EXPECT_EQ(res->status, 206);
  EXPECT_EQ(res->body, video_->substr(2500, 500));
  res = c.Get("/videos/ST-01");
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, *video_);
  EXPECT_EQ(res->get_header_value("Accept-Ranges"), "bytes");
  EXPECT_EQ(res->get_header_value("Content-Type"), "video/mp4");

  auto missing = get_json(c, "/videos/ST-02", 404);
  EXPECT_EQ(missing["placeholder"], true);
  get_json(c, "/videos/XX-00", 404);
}

TEST_F(ApiTest, ConfigAndRefit) {
  auto c = server_->client();
  auto cfg = get_json(c, "/config");
  EXPECT_TRUE(cfg.contains("scoring"));
  auto before = server_->service().snapshot();
  auto res = c.Post("/admin/refit", "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  auto after = server_->service().snapshot();
  EXPECT_NE(before.get(), after.get());
  // Same data, same models: identical payloads.
  EXPECT_EQ(service_report(*before, 0), service_report(*after, 0));
}

TEST(ApiEmpty, EmptyDatasetListsNothing) {
  auto dir = fs::temp_directory_path() / ("svcanchor-api-empty-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text_file(dir / kManifestFile, manifest_text({}));
  {
    RunningServer server(dir);
    auto c = server.client();
    auto j = get_json(c, "/services");
    EXPECT_EQ(j["total"], 0);
    EXPECT_TRUE(j["items"].empty());
    EXPECT_TRUE(get_json(c, "/anchors")["items"].empty());
  }
  fs::remove_all(dir);
}

TEST(ApiConfigTest, FileEnvironmentAndValidation) {
  auto dir = fs::temp_directory_path() / ("svcanchor-api-config-" + std::to_string(::getpid()));
  fs::create_directories(dir / "data");
  write_text_file(dir / "server.json", R"({"port": 9123, "dataset_dir": "data", "scoring_config": "p.json"})");
  auto c = ApiConfig::load(dir / "server.json");
  EXPECT_EQ(c.port, 9123);
  EXPECT_EQ(c.dataset_dir, dir / "data");
  EXPECT_EQ(*c.pipeline_config, dir / "p.json");
  EXPECT_NO_THROW(c.validate());

  ::setenv(ApiConfig::kDatasetEnv, "/somewhere/else", 1);
  c.apply_environment();
  ::unsetenv(ApiConfig::kDatasetEnv);
  EXPECT_EQ(c.dataset_dir, fs::path("/somewhere/else"));
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
  c.dataset_dir = dir;
  c.port = 70000;
  EXPECT_THROW(c.validate(), Error);
  fs::remove_all(dir);
}

TEST(AnnotationJournalTest, TornTailIsDropped) {
  auto path = fs::temp_directory_path() / ("svcanchor-journal-" + std::to_string(::getpid()) + ".jsonl");
  fs::remove(path);
  {
    AnnotationJournal j(path);
    Annotation a;
    a.session_id = "s";
    a.annotator_id = "x";
    a.client_satisfaction = a.agent_proficiency = a.service_smoothness = 3;
    j.append(a);
    j.append(a);
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"session_id\": \"s\", \"annot";
  }
  Annotation b;
  b.session_id = "s";
  b.annotator_id = "y";
  b.client_satisfaction = b.agent_proficiency = b.service_smoothness = 5;
  {
    AnnotationJournal j(path);
    EXPECT_EQ(j.size(), 2u);
    j.append(b);
  }
  AnnotationJournal j(path);
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j.list("s").back().annotator_id, "y");
  fs::remove(path);
}

}  // namespace
}  // namespace svcanchor
