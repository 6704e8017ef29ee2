#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "dpsnn/observables.hpp"

using namespace dpsnn;

TEST(FiringRate, Examples) {
  EXPECT_EQ(mean_firing_rate(0, 1000, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(mean_firing_rate(54000, 1000, 2.0), 27.0);
  EXPECT_THROW(mean_firing_rate(1, 1000, 0.0), std::invalid_argument);
}

TEST(Rastergram, Format) {
  std::ostringstream empty;
  write_rastergram(empty, {}, 1);
  EXPECT_EQ(empty.str(), std::string(kRastergramHeader) + "\n");

  const std::vector<SpikeRecord> s{{0, 3}, {0, 17}, {12, 3}};
  std::ostringstream os;
  write_rastergram(os, s, 1);
  EXPECT_EQ(os.str(), std::string(kRastergramHeader) + "\n0\t3\n0\t17\n12\t3\n");

  std::ostringstream half;
  write_rastergram(half, std::vector<SpikeRecord>{{3, 1}, {4, 2}}, 2);
  EXPECT_EQ(half.str(), std::string(kRastergramHeader) + "\n1.5\t1\n2\t2\n");
  EXPECT_EQ(format_time_ms(5, 4), "1.25");
}

TEST(Potentials, Format) {
  std::ostringstream os;
  write_potentials(os, std::vector<PotentialSample>{{7, 2, 30.0}, {7, 2, -65.0}}, 1);
  EXPECT_EQ(os.str(), "# time_ms\tgid\tv_mV\n7\t2\t30.000000\n7\t2\t-65.000000\n");
}

TEST(Profile, SharesSumToHundred) {
  BlockTimer a, b;
  a.add(Block::neural_dynamic, 0.6);
  a.add(Block::barrier, 0.3);
  a.add_total(1.0);
  b.add(Block::neural_dynamic, 0.8);
  b.add(Block::barrier, 0.2);
  b.add_total(1.0);
  const std::vector<BlockTimer> t{a, b};
  const auto rows = profile_report(t);
  ASSERT_EQ(rows.size(), kBlockCount + 1);
  double sum = 0;
  for (const auto& r : rows) sum += r.mean_percent;
  EXPECT_NEAR(sum, 100.0, 1e-9);
  const auto find = [&](const std::string& n) {
    return *std::find_if(rows.begin(), rows.end(), [&](const ProfileRow& r) { return r.block == n; });
  };
  EXPECT_NEAR(find("neural_dynamic").mean_percent, 70.0, 1e-9);
  EXPECT_NEAR(find("neural_dynamic").stddev_percent, std::sqrt(200.0), 1e-9);
  EXPECT_NEAR(find("barrier").mean_percent, 25.0, 1e-9);
  EXPECT_NEAR(find("unattributed").mean_percent, 5.0, 1e-9);

  std::ostringstream os;
  write_profile_csv(os, rows);
  EXPECT_EQ(os.str().rfind("block,mean_percent,stddev_percent\n", 0), 0u);
}

TEST(Profile, SingleBlockDominates) {
  BlockTimer t;
  {
    ScopedBlock b(t, Block::neural_dynamic);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  EXPECT_GE(t.seconds(Block::neural_dynamic), 0.015);
  t.add_total(t.attributed());
  const auto rows = profile_report(std::vector<BlockTimer>{t});
  EXPECT_NEAR(rows[static_cast<std::size_t>(Block::neural_dynamic)].mean_percent, 100.0, 1e-9);
  t.reset();
  EXPECT_EQ(t.total(), 0.0);
  EXPECT_EQ(t.attributed(), 0.0);
}

TEST(Scaling, SpeedupAndNormalisation) {
  // Reference pair: 1.75e-7 s on one core and 4.22e-9 s on 128 cores per
  // synaptic event; the implied speedup is about 41.5.
  const double syn = 204.8e6, rate = 23.0, sim = 10.0;
  ScalingRun one{"strong", 8, 8, 1, 1, sim, 1.75e-7 * rate * syn * sim, rate, syn};
  ScalingRun many{"strong", 8, 8, 128, 128, sim, 4.22e-9 * rate * syn * sim, rate, syn};
  const auto rows = scaling_table(std::vector<ScalingRun>{many, one});
  EXPECT_DOUBLE_EQ(rows[1].speedup, 1.0);
  EXPECT_NEAR(rows[0].speedup, 41.5, 0.05);
  EXPECT_NEAR(rows[1].normalized_total, 1.75e-7, 1e-18);
  EXPECT_NEAR(rows[0].normalized_total, 4.22e-9, 1e-20);
  EXPECT_NEAR(rows[0].normalized_per_core, 4.22e-9 * 128, 1e-18);
  EXPECT_DOUBLE_EQ(rows[0].exec_per_simulated_second, many.exec_seconds / sim);
}

TEST(Scaling, FailedRunsKeptWithoutMetrics) {
  ScalingRun ok{"strong", 1, 1, 1, 1, 1.0, 2.0, 20.0, 2e5};
  ScalingRun bad = ok;
  bad.contexts = bad.processes = 3;
  bad.status = "failed: H=3";
  const auto rows = scaling_table(std::vector<ScalingRun>{ok, bad});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].speedup, 0.0);
  std::ostringstream os;
  write_scaling_csv(os, rows);
  const std::string s = os.str();
  EXPECT_NE(s.find("strong,1x1,1,1,"), std::string::npos);
  EXPECT_NE(s.find("\"failed: H=3\""), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}

TEST(Histogram, Binning) {
  const std::vector<float> w{0.0f, 0.4f, 0.5f, 9.99f, 10.0f, -1.0f, 11.0f};
  const auto h = weight_histogram(w, 0.0, 10.0, 20);
  ASSERT_EQ(h.size(), 20u);
  EXPECT_EQ(h[0], 3u);  // 0, 0.4, clamped -1
  EXPECT_EQ(h[1], 1u);
  EXPECT_EQ(h[19], 3u);
  std::uint64_t n = 0;
  for (auto c : h) n += c;
  EXPECT_EQ(n, w.size());
}

TEST(RecorderTest, TraceAndRecord) {
  Recorder r;
  EXPECT_FALSE(r.tracing());
  const std::vector<Gid> g{4, 9};
  r.trace(g);
  EXPECT_TRUE(r.traced(9));
  EXPECT_FALSE(r.traced(5));
  r.record_spike(3, 4);
  r.record_potential(3, 4, 30.0);
  EXPECT_EQ(r.spikes(), (std::vector<SpikeRecord>{{3, 4}}));
  EXPECT_EQ(r.potentials().size(), 1u);
}
