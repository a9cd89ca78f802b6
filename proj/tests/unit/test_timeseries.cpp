#include <gtest/gtest.h>

#include <cmath>

#include "scourcast/random.hpp"
#include "scourcast/timeseries.hpp"

using namespace scour;

namespace {

TimeSeriesFrame ramp_frame(std::size_t n, std::int64_t start_hour = 440000) {
  std::vector<Timestamp> ts(n);
  std::vector<double> sonar(n), stage(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = Timestamp{(start_hour + static_cast<std::int64_t>(i)) * kSecondsPerHour};
    sonar[i] = static_cast<double>(i);
    stage[i] = 100.0 + 2.0 * static_cast<double>(i);
  }
  TimeSeriesFrame f(ts);
  f.set_channel(ChannelId::Sonar, sonar);
  f.set_channel(ChannelId::Stage, stage);
  return f;
}

// Independent oracle: enumerate every start offset and keep those whose span fits.
std::size_t enumerate_window_count(std::size_t length, std::size_t w_in, std::size_t w_out,
                                   std::size_t stride) {
  std::size_t count = 0;
  for (std::size_t start = 0; start < length; ++start) {
    if (start % stride != 0) continue;
    if (start + w_in + w_out <= length) ++count;
  }
  return count;
}

const std::vector<ChannelId> kSnSt = {ChannelId::Sonar, ChannelId::Stage};

}  // namespace

TEST(Timestamp, IsoRoundTrip) {
  auto t = parse_iso8601("2021-07-01T00:00:00Z");
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->seconds_since_epoch, 1625097600);
  EXPECT_EQ(format_iso8601(*t), "2021-07-01T00:00:00Z");
  EXPECT_EQ(parse_iso8601("2021-07-01T02:00:00+02:00")->seconds_since_epoch, 1625097600);
  EXPECT_EQ(parse_iso8601("2021-07-01 00:00")->seconds_since_epoch, 1625097600);
  EXPECT_FALSE(parse_iso8601("yesterday").has_value());
  EXPECT_FALSE(parse_iso8601("2021-13-01T00:00:00Z").has_value());
}

TEST(Channel, NamesAndCodesParse) {
  for (ChannelId id : kAllChannels) {
    EXPECT_EQ(parse_channel(channel_name(id)), id);
  }
  EXPECT_EQ(parse_channel("sN"), ChannelId::Sonar);
  EXPECT_EQ(parse_channel("SONAR"), ChannelId::Sonar);
  EXPECT_EQ(parse_channel("dV"), ChannelId::EVelocity);
  EXPECT_FALSE(parse_channel("tide").has_value());
}

TEST(Frame, NonFiniteValuesAreMasked) {
  auto f = ramp_frame(4);
  f.set_channel(ChannelId::Discharge, {1.0, NAN, 3.0, INFINITY});
  const auto& d = f.channel(ChannelId::Discharge);
  EXPECT_FALSE(d.missing[0]);
  EXPECT_TRUE(d.missing[1]);
  EXPECT_TRUE(d.missing[3]);
  EXPECT_THROW(f.set_channel(ChannelId::Discharge, {1.0}), Error);
}

TEST(MakeWindows, TenStepFrameGivesSixSamples) {
  ASSERT_EQ(enumerate_window_count(10, 3, 2, 1), 6u);
  auto ds = make_windows(ramp_frame(10), 3, 2, kSnSt, kSnSt, 1);
  EXPECT_EQ(ds.size(), 6u);
}

TEST(MakeWindows, ExactLengthGivesOneSample) {
  auto ds = make_windows(ramp_frame(5), 3, 2, kSnSt, kSnSt, 1);
  EXPECT_EQ(ds.size(), 1u);
}

TEST(MakeWindows, WeekAheadFromTwoWeeksOnFiveHundredFourSteps) {
  auto ds = make_windows(ramp_frame(504), 336, 168, kSnSt, {ChannelId::Sonar}, 1);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.samples[0].input.rows, 336u);
  EXPECT_EQ(ds.samples[0].target.rows, 168u);
  EXPECT_EQ(ds.samples[0].target.cols, 1u);
}

TEST(MakeWindows, CountMatchesOffsetFormulaAcrossStrides) {
  for (std::size_t length : {7u, 10u, 31u, 64u}) {
    for (std::size_t w_in : {2u, 3u, 5u}) {
      for (std::size_t w_out : {1u, 2u, 4u}) {
        if (length < w_in + w_out) continue;
        for (std::size_t stride : {1u, 2u, 3u, 7u}) {
          auto ds = make_windows(ramp_frame(length), w_in, w_out, kSnSt, kSnSt, stride);
          EXPECT_EQ(ds.size(), enumerate_window_count(length, w_in, w_out, stride));
          EXPECT_EQ(ds.size(), (length - w_in - w_out) / stride + 1);
        }
      }
    }
  }
}

TEST(MakeWindows, TooShortFrameThrows) {
  try {
    make_windows(ramp_frame(4), 3, 2, kSnSt, kSnSt, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FrameTooShort);
  }
}

TEST(MakeWindows, ContentsAndReconstructionInvariant) {
  auto frame = ramp_frame(40);
  auto ds = make_windows(frame, 4, 3, kSnSt, {ChannelId::Sonar}, 2);
  for (const auto& s : ds.samples) {
    // last input row is one hour before origin
    const std::size_t last_in = s.origin_index - 1;
    EXPECT_EQ(frame.timestamp(last_in).plus_hours(1), s.origin);
    EXPECT_DOUBLE_EQ(s.input(3, 0), static_cast<double>(last_in));
    EXPECT_DOUBLE_EQ(s.input(3, 1), 100.0 + 2.0 * static_cast<double>(last_in));
    for (std::size_t r = 0; r < 3; ++r) EXPECT_DOUBLE_EQ(s.target(r, 0), static_cast<double>(s.origin_index + r));
  }
  for (std::size_t i = 1; i < ds.size(); ++i) EXPECT_LT(ds.samples[i - 1].origin, ds.samples[i].origin);
}

TEST(MakeWindows, MaskedGapIsSkipped) {
  auto frame = ramp_frame(12);
  auto sonar = frame.channel(ChannelId::Sonar);
  sonar.missing[6] = true;
  frame.set_channel(ChannelId::Sonar, sonar.values, sonar.missing);
  auto ds = make_windows(frame, 3, 2, kSnSt, kSnSt, 1);
  // starts 0..7 are possible; those covering row 6 are starts 2..6
  EXPECT_EQ(ds.size(), 3u);
  for (const auto& s : ds.samples) {
    const std::size_t start = s.origin_index - 3;
    EXPECT_TRUE(start + 5 <= 6 || start > 6);
  }
}

TEST(MakeWindows, NonHourlyStepIsSkipped) {
  std::vector<Timestamp> ts;
  for (int i = 0; i < 8; ++i) ts.push_back(Timestamp{(i < 4 ? i : i + 1) * kSecondsPerHour});
  TimeSeriesFrame f(ts);
  f.set_channel(ChannelId::Sonar, std::vector<double>(8, 1.0));
  auto ds = make_windows(f, 2, 1, {ChannelId::Sonar}, {ChannelId::Sonar}, 1);
  // valid starts: 0, 1 (rows 0-3) and 4, 5 (rows 4-7)
  EXPECT_EQ(ds.size(), 4u);
}

TEST(Split, PaperRatios) {
  auto ds100 = make_windows(ramp_frame(104), 3, 2, kSnSt, kSnSt, 1);
  ASSERT_EQ(ds100.size(), 100u);
  auto p = chronological_split(ds100, {0.7, 0.2, 0.1});
  EXPECT_EQ(p.train.size(), 70u);
  EXPECT_EQ(p.val.size(), 20u);
  EXPECT_EQ(p.test.size(), 10u);

  auto ds10 = make_windows(ramp_frame(14), 3, 2, kSnSt, kSnSt, 1);
  ASSERT_EQ(ds10.size(), 10u);
  auto q = chronological_split(ds10, {0.6, 0.2, 0.2});
  EXPECT_EQ(q.train.size(), 6u);
  EXPECT_EQ(q.val.size(), 2u);
  EXPECT_EQ(q.test.size(), 2u);
}

TEST(Split, SingleSampleIsEmptyPartition) {
  auto ds = make_windows(ramp_frame(5), 3, 2, kSnSt, kSnSt, 1);
  try {
    chronological_split(ds, {0.7, 0.2, 0.1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyPartition);
  }
}

TEST(Split, InvalidSpecRejected) {
  auto ds = make_windows(ramp_frame(50), 3, 2, kSnSt, kSnSt, 1);
  EXPECT_THROW(chronological_split(ds, {0.7, 0.2, 0.2}), Error);
  EXPECT_THROW(chronological_split(ds, {1.0, 0.0, 0.0}), Error);
}

TEST(Split, NoLeakageAcrossRandomSizes) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t length = 20 + rng.below(200);
    auto ds = make_windows(ramp_frame(length), 2 + rng.below(4), 1 + rng.below(4), kSnSt, kSnSt,
                           1 + rng.below(3));
    if (ds.size() < 10) continue;
    auto p = chronological_split(ds, {0.6, 0.2, 0.2});
    EXPECT_EQ(p.train.size() + p.val.size() + p.test.size(), ds.size());
    EXPECT_LT(p.train.samples.back().origin, p.val.samples.front().origin);
    EXPECT_LT(p.val.samples.back().origin, p.test.samples.front().origin);
    // targets of later partitions never overlap inputs of earlier samples
    const auto& last_train = p.train.samples.back();
    EXPECT_GE(p.val.samples.front().origin_index, last_train.origin_index);
  }
}

TEST(Normalization, RoundTripIsIdentity) {
  Rng rng(11);
  std::vector<Timestamp> ts(300);
  std::vector<double> sonar(300), stage(300);
  for (std::size_t i = 0; i < 300; ++i) {
    ts[i] = Timestamp{static_cast<std::int64_t>(i) * kSecondsPerHour};
    sonar[i] = 30.0 + 5.0 * rng.normal();
    stage[i] = 120.0 + 0.5 * rng.normal();
  }
  TimeSeriesFrame f(ts);
  f.set_channel(ChannelId::Sonar, sonar);
  f.set_channel(ChannelId::Stage, stage);
  auto raw = make_windows(f, 6, 3, kSnSt, kSnSt, 1);
  auto parts = chronological_split(raw, {0.7, 0.2, 0.1});
  auto stats = fit_normalization(parts.train);
  for (const auto& [id, s] : stats.channels) EXPECT_GT(s.std, 0.0);
  auto back = denormalize(normalize(parts.test, stats));
  for (std::size_t i = 0; i < back.size(); ++i) {
    for (std::size_t k = 0; k < back.samples[i].input.data.size(); ++k)
      EXPECT_NEAR(back.samples[i].input.data[k], parts.test.samples[i].input.data[k], 1e-10);
    for (std::size_t k = 0; k < back.samples[i].target.data.size(); ++k)
      EXPECT_NEAR(back.samples[i].target.data[k], parts.test.samples[i].target.data[k], 1e-10);
  }
}

TEST(Normalization, FitUsesDistinctRowsOfTrainingPartition) {
  auto frame = ramp_frame(20);
  auto ds = make_windows(frame, 3, 2, {ChannelId::Sonar}, {ChannelId::Sonar}, 1);
  auto stats = fit_normalization(ds.subset(0, 5));
  // samples 0..4 cover rows 0..8 exactly once each
  EXPECT_NEAR(stats.of(ChannelId::Sonar).mean, 4.0, 1e-12);
  EXPECT_NEAR(stats.of(ChannelId::Sonar).std, std::sqrt(60.0 / 9.0), 1e-12);
}

TEST(Normalization, ConstantChannelGetsUnitStd) {
  std::vector<Timestamp> ts(10);
  for (int i = 0; i < 10; ++i) ts[i] = Timestamp{i * kSecondsPerHour};
  TimeSeriesFrame f(ts);
  f.set_channel(ChannelId::Sonar, std::vector<double>(10, 42.0));
  auto ds = make_windows(f, 2, 1, {ChannelId::Sonar}, {ChannelId::Sonar}, 1);
  auto stats = fit_normalization(ds);
  EXPECT_EQ(stats.of(ChannelId::Sonar).std, 1.0);
  auto n = normalize(ds, stats);
  EXPECT_EQ(n.samples[0].target(0, 0), 0.0);
}
