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

#include "svcanchor/event_log.hpp"

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "svcanchor/scenario.hpp"

namespace svcanchor {
namespace {

ParsedLog parse_text(const std::string& text, const LogGrammar& g = {}) {
  std::istringstream in(text);
  return parse_log(in, g);
}

RawLogEntry entry(TimestampMs ts, const std::string& req, const std::string& type) {
  return RawLogEntry{ts, req, type, {}};
}

TEST(ParseLog, SingleLine) {
  auto parsed = parse_text("1620000000000 REQ7 BEGIN_SERVICE agent=a1\n");
  ASSERT_EQ(parsed.entries.size(), 1u);
  const auto& e = parsed.entries[0];
  EXPECT_EQ(e.timestamp, 1620000000000);
  EXPECT_EQ(e.request_id, "REQ7");
  EXPECT_EQ(e.raw_event_type, "BEGIN_SERVICE");
  ASSERT_EQ(e.params.size(), 1u);
  EXPECT_EQ(e.params[0].first, "agent");
  EXPECT_EQ(e.params[0].second, "a1");
  EXPECT_TRUE(parsed.diagnostics.empty());
}

TEST(ParseLog, EmptyStream) {
  auto parsed = parse_text("");
  EXPECT_TRUE(parsed.entries.empty());
  EXPECT_TRUE(parsed.diagnostics.empty());
}

TEST(ParseLog, MalformedMinorityIsReported) {
  auto parsed = parse_text("1 R A\nxx R B\n3 R C\n");
  EXPECT_EQ(parsed.entries.size(), 2u);
  ASSERT_EQ(parsed.diagnostics.size(), 1u);
  EXPECT_EQ(parsed.diagnostics[0].line, 2u);
  EXPECT_EQ(parsed.diagnostics[0].kind, DiagnosticKind::kMalformed);
  EXPECT_NE(format_diagnostics(parsed.diagnostics).find("line 2: malformed"), std::string::npos);
}

TEST(ParseLog, MajorityMalformedIsFormatMismatch) {
  try {
    parse_text("1 R A\nnot a log\nstill not\n");
    FAIL() << "expected a format mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormatMismatch);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParseLog, OutOfOrderReportedNotReordered) {
  auto parsed = parse_text("5 R A\n3 R B\n7 R C\n");
  ASSERT_EQ(parsed.entries.size(), 3u);
  EXPECT_EQ(parsed.entries[1].timestamp, 3);
  ASSERT_EQ(parsed.diagnostics.size(), 1u);
  EXPECT_EQ(parsed.diagnostics[0].kind, DiagnosticKind::kOutOfOrder);
  EXPECT_EQ(parsed.diagnostics[0].line, 2u);
}

TEST(ParseLog, MissingFileIsIoError) {
  try {
    parse_log_file("/nonexistent/path/x.log");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(ParseLog, ConfigurableGrammar) {
  LogGrammar g = LogGrammar::from_json({{"field_separator", ","}, {"kv_separator", ":"},
                                        {"timestamp_field", 1}, {"request_field", 0}});
  auto parsed = parse_text("R1,100,BEGIN_SERVICE,agent:a\n", g);
  ASSERT_EQ(parsed.entries.size(), 1u);
  EXPECT_EQ(parsed.entries[0].timestamp, 100);
  EXPECT_EQ(parsed.entries[0].request_id, "R1");
  EXPECT_EQ(*parsed.entries[0].param("agent"), "a");
  EXPECT_EQ(serialize_entry(parsed.entries[0], g), "R1,100,BEGIN_SERVICE,agent:a");
  EXPECT_THROW(LogGrammar::from_json({{"timestamp_field", 1}}), Error);
}

// Round trip over a generated session of at least 1000 lines.
TEST(ParseLog, GeneratedLogRoundTripsByteIdentically) {
  std::string text;
  std::size_t expected = 0;
  for (std::uint64_t seed = 1; expected < 1000; ++seed) {
    auto spec = ScenarioSpec::make(ScenarioType::kDP, seed);
    spec.session_id = "S" + std::to_string(seed);
    auto s = generate_session(spec);
    text += s.log_text();
    expected += s.log.size();
  }
  std::istringstream lines(text);
  std::string ln;
  std::size_t count = 0;
  while (std::getline(lines, ln)) ++count;
  auto parsed = parse_text(text);
  EXPECT_EQ(parsed.entries.size(), count);
  EXPECT_EQ(parsed.entries.size(), expected);
  EXPECT_EQ(serialize_log(parsed.entries), text);
}

TEST(SegmentServices, MinimalPair) {
  auto r = segment_services({entry(1, "REQ1", "BEGIN_SERVICE"), entry(2, "REQ1", "X"),
                             entry(3, "REQ1", "END_SERVICE")});
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].entries.size(), 3u);
  EXPECT_TRUE(r.diagnostics.empty());
}

TEST(SegmentServices, InterleavedMatchesPartitionByRequest) {
  std::vector<RawLogEntry> entries = {entry(1, "R1", "BEGIN_SERVICE"), entry(2, "R2", "BEGIN_SERVICE"),
                                      entry(3, "R1", "A"),             entry(4, "R2", "B"),
                                      entry(5, "R1", "END_SERVICE"),   entry(6, "R2", "END_SERVICE")};
  auto r = segment_services(entries);
  std::map<std::string, std::vector<RawLogEntry>> oracle;
  for (const auto& e : entries) oracle[e.request_id].push_back(e);
  ASSERT_EQ(r.sessions.size(), oracle.size());
  for (const auto& s : r.sessions) EXPECT_EQ(s.entries, oracle[s.request_id]);
  EXPECT_EQ(r.sessions[0].request_id, "R1");
}

TEST(SegmentServices, LoneEndIsOrphan) {
  auto r = segment_services({entry(1, "R9", "END_SERVICE")});
  EXPECT_TRUE(r.sessions.empty());
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].kind, DiagnosticKind::kOrphan);
  EXPECT_EQ(r.orphans.size(), 1u);
}

TEST(SegmentServices, UnterminatedAndDuplicateBegin) {
  auto r = segment_services({entry(1, "R1", "BEGIN_SERVICE"), entry(2, "R1", "BEGIN_SERVICE"),
                             entry(3, "R1", "END_SERVICE"), entry(4, "R2", "BEGIN_SERVICE")});
  EXPECT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.open_sessions.size(), 2u);
  bool dup = false, unterminated = false;
  for (const auto& d : r.diagnostics) {
    dup |= d.kind == DiagnosticKind::kDuplicateBegin;
    unterminated |= d.kind == DiagnosticKind::kUnterminated;
  }
  EXPECT_TRUE(dup);
  EXPECT_TRUE(unterminated);
}

TEST(SegmentServices, MetadataFromParams) {
  RawLogEntry b{10, "R1", "BEGIN_SERVICE", {{"service", "S-1"}, {"agent", "a1"}, {"client", "c1"}}};
  auto r = segment_services({b, entry(20, "R1", "END_SERVICE")});
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].service_id, "S-1");
  EXPECT_EQ(r.sessions[0].agent_id, "a1");
  EXPECT_EQ(r.sessions[0].client_id, "c1");
  EXPECT_DOUBLE_EQ(r.sessions[0].duration_s(), 0.01);
}

ServiceSession session_of(const std::vector<std::string>& types) {
  ServiceSession s;
  s.request_id = "R";
  TimestampMs t = 1000;
  for (const auto& type : types) s.entries.push_back(entry(t += 1000, "R", type));
  s.begin_ts = s.entries.front().timestamp;
  s.end_ts = t + 1000;
  return s;
}

TEST(AggregateOperations, RunLength) {
  auto cat = OperationCatalog::default_catalog();
  auto r = aggregate_operations(session_of({"VERIFY_REQ", "VERIFY_OK", "PAY_REQ"}), cat);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.items[0].operation, "verify");
  EXPECT_EQ(r.items[0].count, 2);
  EXPECT_EQ(r.items[1].operation, "pay");
  EXPECT_EQ(r.items[1].count, 1);
  EXPECT_EQ(r.items[0].end_ts, r.items[1].start_ts);
  EXPECT_EQ(r.items[1].end_ts, r.end_ts);
  EXPECT_EQ(r.items[0].turn, Turn::kAgent);
  EXPECT_EQ(r.items[1].turn, Turn::kClient);
}

TEST(AggregateOperations, NonAdjacentRepeatsStaySeparate) {
  auto cat = OperationCatalog::default_catalog();
  auto r = aggregate_operations(session_of({"DOC_SCAN", "VERIFY_REQ", "DOC_UPLOAD"}), cat);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.items[0].operation, "upload");
  EXPECT_EQ(r.items[2].operation, "upload");
}

TEST(AggregateOperations, UnmappedTypesListed) {
  auto cat = OperationCatalog::default_catalog();
  try {
    aggregate_operations(session_of({"ZED", "PAY_REQ", "ALPHA", "ZED"}), cat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("ALPHA, ZED"), std::string::npos);
  }
}

TEST(AggregateOperations, DpSessionMatchesGroundTruth) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto s = generate_session(ScenarioSpec::make(ScenarioType::kDP, seed));
    auto seg = segment_services(s.log);
    ASSERT_EQ(seg.sessions.size(), 1u);
    auto r = aggregate_operations(seg.sessions[0], s.spec.catalog);
    EXPECT_EQ(r.items, s.truth.expected_record.items);
    EXPECT_FALSE(s.truth.repeated_positions.empty());
    std::map<std::string, int> runs;
    for (const auto& it : r.items) ++runs[it.operation];
    bool repeated = false;
    for (const auto& [op, n] : runs) repeated |= n > 1;
    EXPECT_TRUE(repeated);
  }
}

TEST(OperationCatalog, JsonRoundTripAndValidation) {
  auto cat = OperationCatalog::default_catalog();
  auto back = OperationCatalog::from_json(cat.to_json());
  EXPECT_EQ(back.operations, cat.operations);
  EXPECT_EQ(back.mapping, cat.mapping);
  auto j = cat.to_json();
  j["mapping"]["NEW"] = "nowhere";
  EXPECT_THROW(OperationCatalog::from_json(j), Error);
  EXPECT_EQ(cat.raw_types_for("pay"), (std::vector<std::string>{"PAY_OK", "PAY_REQ"}));
}

TEST(ServiceRecordVector, ItemAtAndJson) {
  auto cat = OperationCatalog::default_catalog();
  auto r = aggregate_operations(session_of({"VERIFY_REQ", "PAY_REQ"}), cat);
  EXPECT_EQ(r.item_at(r.items[0].start_ts), 0u);
  EXPECT_EQ(r.item_at(r.items[1].start_ts), 1u);
  EXPECT_EQ(r.item_at(r.end_ts), 1u);
  EXPECT_FALSE(r.item_at(r.end_ts + 1));
  auto back = record_from_json(to_json(r));
  EXPECT_EQ(back.items, r.items);
}

}  // namespace
}  // namespace svcanchor
