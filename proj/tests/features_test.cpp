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

#include "svcanchor/features.hpp"

#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace svcanchor {
namespace {

ServiceRecordVector two_items(TimestampMs a, TimestampMs b, TimestampMs c) {
  ServiceRecordVector r;
  r.begin_ts = a;
  r.end_ts = c;
  r.items = {{"verify", 1, a, b, Turn::kAgent}, {"pay", 1, b, c, Turn::kClient}};
  return r;
}

TEST(AggregatePolarity, Table) {
  EXPECT_EQ(aggregate_polarity(Emotion::kHappiness), Polarity::kPositive);
  EXPECT_EQ(aggregate_polarity(Emotion::kNeutral), Polarity::kNeutral);
  EXPECT_EQ(aggregate_polarity(Emotion::kSurprise), Polarity::kNeutral);
  for (Emotion e : {Emotion::kAnger, Emotion::kDisgust, Emotion::kFear, Emotion::kSadness}) {
    EXPECT_EQ(aggregate_polarity(e), Polarity::kNegative);
  }
}

TEST(TriangularSmooth, Examples) {
  std::vector<double> x = {0, 0, 3, 0, 0};
  EXPECT_EQ(triangular_smooth(x, 0), x);
  auto y = triangular_smooth(x, 1);
  std::vector<double> expected = {0, 0.75, 1.5, 0.75, 0};
  ASSERT_EQ(y.size(), expected.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
  std::vector<double> flat(9, 2.5);
  for (double v : triangular_smooth(flat, 3)) EXPECT_NEAR(v, 2.5, 1e-12);
  EXPECT_TRUE(triangular_smooth(std::vector<double>{}, 2).empty());
  try {
    triangular_smooth(x, -1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParameter);
  }
}

TEST(PreprocessFrames, FillsFlickerAndMasksLookingDown) {
  std::vector<FrameFeature> frames;
  for (int i = 0; i < 21; ++i) {
    std::optional<Emotion> e = i == 10 ? std::nullopt : std::optional<Emotion>(Emotion::kHappiness);
    frames.push_back(make_frame(i, 1000 + 40 * i, e));
  }
  auto out = preprocess_frames(frames, {3, 30.0});
  EXPECT_TRUE(out[10].face_present);
  EXPECT_EQ(out[10].polarity, Polarity::kPositive);

  for (auto& f : frames) f.pitch = -60.0;
  out = preprocess_frames(frames, {3, 30.0});
  for (const auto& f : out) {
    EXPECT_FALSE(f.face_present);
    EXPECT_EQ(f.polarity, Polarity::kAbsent);
  }
}

TEST(RegisterAgent, CommonClusterAcrossTwoSessions) {
  std::vector<SpeakerEvidence> ev = {{"v1", "a1", {"s1", "s2"}}, {"v2", "a1", {"s1", "s3"}}};
  auto roles = register_agent(ev);
  EXPECT_EQ(roles["v1"].roles["s1"], Speaker::kAgent);
  EXPECT_EQ(roles["v1"].roles["s2"], Speaker::kClient);
  EXPECT_EQ(roles["v2"].roles["s3"], Speaker::kClient);
  EXPECT_FALSE(roles["v1"].low_confidence);
}

TEST(RegisterAgent, IsolatedSessionIsUnknown) {
  std::vector<SpeakerEvidence> ev = {{"v1", "a1", {"s1", "s2"}}};
  auto roles = register_agent(ev);
  EXPECT_EQ(roles["v1"].roles["s1"], Speaker::kUnknown);
  EXPECT_EQ(roles["v1"].roles["s2"], Speaker::kUnknown);
  EXPECT_TRUE(roles["v1"].low_confidence);
}

TEST(RegisterAgent, MajorityOfThree) {
  std::vector<SpeakerEvidence> ev = {
      {"v1", "a1", {"s1", "s2"}}, {"v2", "a1", {"s1", "s3"}}, {"v3", "a1", {"s4", "s5"}}};
  auto roles = register_agent(ev);
  EXPECT_EQ(roles["v1"].roles["s1"], Speaker::kAgent);
  EXPECT_EQ(roles["v2"].roles["s1"], Speaker::kAgent);
  EXPECT_EQ(roles["v3"].roles["s4"], Speaker::kUnknown);
  EXPECT_TRUE(roles["v3"].low_confidence);
}

TEST(AlignFeatures, AllFramesInOneItem) {
  auto r = two_items(0, 10000, 20000);
  std::vector<FrameFeature> frames;
  for (int i = 0; i < 50; ++i) frames.push_back(make_frame(i, 100 + 40 * i, Emotion::kNeutral));
  auto a = align_features(frames, {}, r);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].frames.size(), 50u);
  EXPECT_TRUE(a[1].frames.empty());
  EXPECT_DOUBLE_EQ(a[0].face_coverage, 1.0);
  EXPECT_DOUBLE_EQ(a[0].speech_coverage, 0.0);
  EXPECT_DOUBLE_EQ(a[1].speech_coverage, 0.0);
}

TEST(AlignFeatures, StraddlingUtteranceIsClippedIntoBoth) {
  auto r = two_items(0, 10000, 20000);
  std::vector<UtteranceFeature> us = {make_utterance(8000, 14000, Speaker::kClient, Emotion::kHappiness)};
  auto a = align_features({}, us, r);
  ASSERT_EQ(a[0].utterances.size(), 1u);
  ASSERT_EQ(a[1].utterances.size(), 1u);
  // Interval intersection oracle.
  auto overlap = [](TimestampMs s1, TimestampMs e1, TimestampMs s2, TimestampMs e2) {
    return std::max<TimestampMs>(0, std::min(e1, e2) - std::max(s1, s2));
  };
  EXPECT_EQ(a[0].utterances[0].end_ts - a[0].utterances[0].start_ts, overlap(8000, 14000, 0, 10000));
  EXPECT_EQ(a[1].utterances[0].end_ts - a[1].utterances[0].start_ts, overlap(8000, 14000, 10000, 20000));
  EXPECT_DOUBLE_EQ(a[0].speech_coverage, 0.2);
  EXPECT_DOUBLE_EQ(a[1].speech_coverage, 0.4);
}

TEST(AlignFeatures, OutsideSessionIsAlignmentError) {
  auto r = two_items(0, 10000, 20000);
  std::vector<FrameFeature> frames = {make_frame(0, 50000, Emotion::kNeutral)};
  try {
    align_features(frames, {}, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAlignment);
  }
}

TEST(FuseActivation, Examples) {
  EXPECT_EQ(fuse_activation(Polarity::kNegative, Polarity::kPositive), -1);
  EXPECT_EQ(fuse_activation(Polarity::kAbsent, std::nullopt), 0);
  EXPECT_EQ(fuse_activation(Polarity::kPositive, Polarity::kNeutral), 1);
  EXPECT_EQ(fuse_activation(Polarity::kNeutral, Polarity::kNegative), -1);
}

TEST(ActivationSeries, UsesCoveringUtterance) {
  std::vector<FrameFeature> frames = {make_frame(0, 100, Emotion::kNeutral), make_frame(1, 600, Emotion::kNeutral),
                                      make_frame(2, 1200, std::nullopt)};
  std::vector<UtteranceFeature> us = {make_utterance(500, 1000, Speaker::kClient, Emotion::kAnger)};
  EXPECT_EQ(activation_series(frames, us), (std::vector<int>{0, -1, 0}));
}

TEST(UtteranceAt, TieGoesToClient) {
  std::vector<UtteranceFeature> us = {make_utterance(0, 1000, Speaker::kAgent, Emotion::kNeutral),
                                      make_utterance(0, 1000, Speaker::kClient, Emotion::kHappiness)};
  const auto* u = utterance_at(us, 500);
  ASSERT_NE(u, nullptr);
  EXPECT_EQ(u->speaker, Speaker::kClient);
}

TEST(UnionLength, MergesOverlaps) {
  EXPECT_EQ(union_length({{0, 10}, {5, 15}, {20, 25}}), 20);
  EXPECT_EQ(union_length({}), 0);
}

TEST(FeatureStreams, NdjsonRoundTrip) {
  std::vector<FrameFeature> frames = {make_frame(0, 100, Emotion::kAnger, 1.5, -2.0, 0.5),
                                      make_frame(1, 140, std::nullopt, 0, 0, 0, Subject::kAgent)};
  std::istringstream fin(frames_to_ndjson(frames));
  EXPECT_EQ(read_frames(fin), frames);
  std::vector<UtteranceFeature> us = {make_utterance(0, 1000, Speaker::kUnknown, Emotion::kSadness, "spk-1")};
  std::istringstream uin(utterances_to_ndjson(us));
  EXPECT_EQ(read_utterances(uin), us);
}

TEST(FeatureStreams, Validation) {
  std::istringstream bad_header("{\"schema\":\"other\",\"version\":1}\n");
  EXPECT_THROW(read_frames(bad_header), Error);
  auto u = make_utterance(1000, 500, Speaker::kClient, Emotion::kNeutral);
  EXPECT_THROW(validate(u), Error);
  std::vector<UtteranceFeature> overlapping = {make_utterance(0, 1000, Speaker::kClient, Emotion::kNeutral),
                                               make_utterance(500, 1500, Speaker::kClient, Emotion::kNeutral)};
  EXPECT_THROW(validate_utterances(overlapping), Error);
}

TEST(Coverage, Summary) {
  std::vector<FrameFeature> frames = {make_frame(0, 0, Emotion::kNeutral), make_frame(1, 40, std::nullopt),
                                      make_frame(2, 80, Emotion::kNeutral, 0, 0, 0, Subject::kAgent)};
  std::vector<UtteranceFeature> us = {make_utterance(0, 1500, Speaker::kClient, Emotion::kNeutral)};
  auto c = summarize_coverage(frames, us);
  EXPECT_EQ(c.frames, 2u);
  EXPECT_EQ(c.frames_with_face, 1u);
  EXPECT_EQ(c.utterances, 1u);
  EXPECT_DOUBLE_EQ(c.speech_s, 1.5);
}

}  // namespace
}  // namespace svcanchor
