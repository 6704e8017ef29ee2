#include <gtest/gtest.h>

#include <cmath>
#include <future>
#include <map>
#include <random>
#include <set>

#include "dpsnn/engine.hpp"
#include "dpsnn/inproc_transport.hpp"

using namespace dpsnn;

namespace {

EngineConfig tiny_config(std::uint32_t npc) {
  EngineConfig c;
  c.grid.neurons_per_column = npc;
  c.grid.excitatory_fraction = 1.0;
  c.grid.forward_synapses_per_neuron = 100;
  c.stimulus.rate = 0;
  return c;
}

SynapseRecord synapse(Gid src, Gid dst, std::uint8_t delay, float w) {
  SynapseRecord s;
  s.source_gid = src;
  s.target_gid = dst;
  s.delay = delay;
  s.weight = w;
  return s;
}

// Steps `p` until its clock reaches `until`, forcing the listed (step, gid) spikes.
void run_to(Process& p, std::int64_t until, const std::multimap<std::int64_t, Gid>& forced = {}) {
  while (p.clock() < until) {
    auto [b, e] = forced.equal_range(p.clock());
    for (auto it = b; it != e; ++it) p.force_spike(it->second);
    p.step();
  }
}

// Builds H processes on one fabric and runs construction concurrently.
struct Cluster {
  Cluster(const EngineConfig& cfg, int h, SynapseGenerator gen = {}) : fabric(h) {
    for (int r = 0; r < h; ++r) procs.push_back(std::make_unique<Process>(cfg, fabric.endpoint(r), gen));
    each([](Process& p) { p.construct(); });
  }
  template <class F>
  void each(F f) {
    std::vector<std::future<void>> fs;
    for (auto& p : procs) fs.push_back(std::async(std::launch::async, [&f, &p] { f(*p); }));
    for (auto& x : fs) x.get();
  }
  InprocFabric fabric;
  std::vector<std::unique_ptr<Process>> procs;
};

}  // namespace

TEST(SynapseStoreTest, GroupsAndIncoming) {
  std::vector<SynapseRecord> in{synapse(7, 11, 3, 1), synapse(2, 10, 5, 1), synapse(7, 10, 1, 1),
                                synapse(7, 12, 3, 1), synapse(2, 11, 5, 1)};
  const SynapseStore st(in, 10, 4);
  ASSERT_EQ(st.groups().size(), 3u);
  EXPECT_EQ(st.groups()[0].source, 2u);
  EXPECT_EQ(st.groups()[0].end - st.groups()[0].begin, 2u);
  EXPECT_EQ(st.groups()[1].delay, 1u);
  EXPECT_EQ(st.groups()[2].delay, 3u);
  // stable within a group
  EXPECT_EQ(st.synapses()[st.groups()[2].begin].target_gid, 11u);
  EXPECT_EQ(st.groups_of(7).size(), 2u);
  EXPECT_TRUE(st.groups_of(3).empty());
  std::size_t total = 0;
  for (std::uint32_t l = 0; l < 4; ++l)
    for (std::uint32_t i : st.incoming(l)) {
      EXPECT_EQ(st.synapses()[i].target_gid, 10 + l);
      ++total;
    }
  EXPECT_EQ(total, 5u);
  EXPECT_TRUE(st.incoming(3).empty());
}

TEST(SpikeQueueTest, ScheduleAndTake) {
  SpikeQueue q(21);
  q.schedule(5, 25, 9);
  q.schedule(5, 25, 2);
  q.schedule(5, 5, 4);
  EXPECT_THROW(q.schedule(5, 26, 1), std::logic_error);
  EXPECT_THROW(q.schedule(5, 4, 1), std::logic_error);
  EXPECT_EQ(q.pending(), 3u);
  EXPECT_EQ(q.take(5), (std::vector<std::uint32_t>{4}));
  EXPECT_TRUE(q.take(6).empty());
  EXPECT_EQ(q.take(25), (std::vector<std::uint32_t>{2, 9}));
  EXPECT_EQ(q.pending(), 0u);
}

TEST(PackSpikes, GroupsByTargetProcess) {
  TargetProcessIndex idx(8);
  idx.add(0, 3);
  idx.add(0, 1);
  idx.add(0, 2);
  idx.add(0, 1);
  idx.add(5, 1);
  EXPECT_EQ(std::vector(idx.targets(0).begin(), idx.targets(0).end()), (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_TRUE(pack_spikes({}, 100, 4, idx).empty());
  const std::vector<std::uint32_t> spiking{0, 5};
  const auto p = pack_spikes(spiking, 100, 4, idx);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p.at(1), (std::vector<AxonalSpike>{{100, 4}, {105, 4}}));
  EXPECT_EQ(p.at(2), (std::vector<AxonalSpike>{{100, 4}}));
  EXPECT_EQ(p.at(3), (std::vector<AxonalSpike>{{100, 4}}));
}

TEST(PlasticityEpoch, AppliesAndClears) {
  StdpConfig c;
  std::vector<SynapseRecord> s{synapse(0, 1, 1, 5.0f), synapse(0, 2, 1, 5.0f), synapse(1, 2, 1, -2.0f)};
  s[1].stdp_accumulator = 100.0;
  s[2].source_kind = NeuronKind::inhibitory;
  s[2].stdp_accumulator = 1.0;
  run_plasticity_epoch(s, c);
  EXPECT_EQ(s[0].weight, 5.0f);
  EXPECT_EQ(s[1].weight, 10.0f);
  EXPECT_EQ(s[2].weight, -2.0f);
  for (const auto& x : s) EXPECT_EQ(x.stdp_accumulator, 0.0);
}

TEST(Construction, CountersMatchBruteForceTally) {
  EngineConfig cfg;
  cfg.grid.cfx = 2;
  cfg.grid.cfy = 1;
  Cluster c(cfg, 4);
  const ProcessMap map(cfg.grid, 4);
  std::vector<std::vector<std::uint64_t>> tally(4, std::vector<std::uint64_t>(4, 0));
  for (Gid g = 0; g < cfg.grid.total_neurons(); ++g)
    for (const auto& s : generate_forward_synapses(g, cfg.grid)) ++tally[map.process_of(g)][map.process_of(s.target_gid)];
  std::uint64_t total = 0;
  for (int r = 0; r < 4; ++r) {
    const auto& p = *c.procs[static_cast<std::size_t>(r)];
    EXPECT_EQ(p.construction_outgoing(), tally[static_cast<std::size_t>(r)]);
    for (int s = 0; s < 4; ++s) EXPECT_EQ(p.construction_incoming()[static_cast<std::size_t>(s)], tally[static_cast<std::size_t>(s)][static_cast<std::size_t>(r)]);
    total += p.store().synapses().size();
    for (const auto& syn : p.store().synapses()) EXPECT_EQ(map.process_of(syn.target_gid), static_cast<std::uint32_t>(r));
  }
  EXPECT_EQ(total, cfg.grid.total_synapses());

  // target index equals the set of owning processes of each neuron's targets
  const auto& p1 = *c.procs[1];
  for (std::uint32_t l = 0; l < p1.loc_n(); l += 37) {
    std::set<std::uint32_t> want;
    for (const auto& s : generate_forward_synapses(p1.first_gid() + l, cfg.grid)) want.insert(map.process_of(s.target_gid));
    const auto got = p1.target_index().targets(l);
    EXPECT_EQ(std::set<std::uint32_t>(got.begin(), got.end()), want);
  }
}

TEST(Construction, GeneratorErrorsAreConfigErrors) {
  auto cfg = tiny_config(2);
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [](Gid g) { return std::vector{synapse(g, 5, 1, 1)}; });
  EXPECT_THROW(p.construct(), ConfigError);
}

class Delay : public ::testing::TestWithParam<int> {};

TEST_P(Delay, CurrentArrivesExactlyAfterDelay) {
  const int d = GetParam();
  auto cfg = tiny_config(2);
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [d](Gid g) {
    if (g == 0) return std::vector{synapse(0, 1, static_cast<std::uint8_t>(d), 0.5f)};
    return std::vector<SynapseRecord>{};
  });
  p.construct();
  const std::int64_t t0 = 5;
  for (std::int64_t t = 0; t < t0 + 25; ++t) {
    if (t == t0) p.force_spike(0);
    p.step();
    EXPECT_EQ(p.last_input(1), t == t0 + d ? 0.5 : 0.0) << "step " << t;
  }
  ASSERT_EQ(p.recorder().spikes().size(), 1u);
  EXPECT_EQ(p.recorder().spikes()[0], (SpikeRecord{t0, 0}));
}

INSTANTIATE_TEST_SUITE_P(OneToTwenty, Delay, ::testing::Range(1, 21));

TEST(Stepping, QuiescentNetworkStaysSilent) {
  EngineConfig cfg;
  cfg.stimulus.rate = 0;
  InprocFabric f(2);
  std::vector<TrafficEvent> ev;
  std::mutex mu;
  std::vector<std::unique_ptr<Process>> ps;
  for (int r = 0; r < 2; ++r) ps.push_back(std::make_unique<Process>(cfg, f.endpoint(r)));
  std::vector<std::future<void>> fs;
  for (auto& p : ps)
    fs.push_back(std::async(std::launch::async, [&p] { p->construct(); }));
  for (auto& x : fs) x.get();
  f.set_tap([&](const TrafficEvent& e) {
    std::lock_guard l(mu);
    ev.push_back(e);
  });
  fs.clear();
  for (auto& p : ps)
    fs.push_back(std::async(std::launch::async, [&p] { run_to(*p, 200); }));
  for (auto& x : fs) x.get();
  for (auto& p : ps) {
    EXPECT_TRUE(p->recorder().spikes().empty());
    for (std::uint32_t l = 0; l < p->loc_n(); ++l) EXPECT_EQ(p->last_input(l), 0.0);
  }
  for (const auto& e : ev) {
    EXPECT_NE(e.kind, FrameKind::payload);
    if (e.kind == FrameKind::counts) EXPECT_EQ(e.counter, 0u);
  }
}

TEST(Stepping, CurrentConservationAgainstEventList) {
  EngineConfig cfg;
  cfg.grid.neurons_per_column = 100;
  cfg.grid.forward_synapses_per_neuron = 100;
  cfg.stimulus.rate = 5;
  cfg.stdp.apply_interval = 1e6;
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0));
  p.construct();

  std::map<std::int64_t, double> expected;  // step -> synaptic input of the whole network
  std::size_t seen = 0;
  std::uint64_t spikes = 0;
  for (std::int64_t t = 0; t < 400; ++t) {
    p.step();
    double total = 0.0;
    for (std::uint32_t l = 0; l < p.loc_n(); ++l) total += p.last_input(l);
    const double want = expected[t] + cfg.stimulus.rate * cfg.stimulus.amplitude;
    ASSERT_NEAR(total, want, 1e-9 * std::max(1.0, std::fabs(want))) << "step " << t;
    const auto& sp = p.recorder().spikes();
    for (; seen < sp.size(); ++seen) {
      ++spikes;
      for (const auto& s : generate_forward_synapses(sp[seen].gid, cfg.grid))
        expected[sp[seen].step + s.delay] += s.weight;
    }
  }
  EXPECT_GT(spikes, 10u);
}

TEST(Plasticity, HandComputedPairings) {
  auto cfg = tiny_config(2);
  const StdpConfig& c = cfg.stdp;
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [](Gid g) {
    if (g == 0) return std::vector{synapse(0, 1, 3, 0.1f)};
    return std::vector<SynapseRecord>{};
  });
  p.construct();
  const auto acc = [&] { return p.store().synapses()[0].stdp_accumulator; };

  // arrival at 13, post spike at 15: potentiation applied at the start of 16
  run_to(p, 16, {{10, 0}, {15, 1}});
  EXPECT_EQ(acc(), 0.0);
  p.step();
  double want = c.a_plus * std::exp(-2.0 / c.tau_plus);
  EXPECT_NEAR(acc(), want, 1e-12);

  // arrival at 33, last post spike 15: depression
  run_to(p, 34, {{30, 0}});
  want += c.a_minus * std::exp(-18.0 / c.tau_minus);
  EXPECT_NEAR(acc(), want, 1e-12);

  // arrival and post spike in the same step: potentiation only, at t = 0
  run_to(p, 55, {{50, 0}, {53, 1}});
  want += c.a_plus;
  EXPECT_NEAR(acc(), want, 1e-12);

  // epoch at step 1000 folds the accumulator into the weight
  run_to(p, 1001);
  EXPECT_EQ(acc(), 0.0);
  EXPECT_NEAR(p.store().synapses()[0].weight, 0.1 + want, 1e-6);
}

TEST(Plasticity, RandomPairingsMatchOracleAndDepress) {
  auto cfg = tiny_config(20);
  const StdpConfig c = cfg.stdp;
  std::mt19937 rng(5);
  std::map<Gid, std::vector<SynapseRecord>> conn;
  std::uniform_int_distribution<Gid> tgt(0, 19);
  std::uniform_int_distribution<int> del(1, 20);
  // Mid-range weights, so the epoch below never clamps.
  for (Gid g = 0; g < 20; ++g)
    for (int k = 0; k < 6; ++k) conn[g].push_back(synapse(g, tgt(rng), static_cast<std::uint8_t>(del(rng)), 5.0f));
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [&](Gid g) { return conn[g]; });
  p.construct();

  std::bernoulli_distribution fire(0.02);
  std::multimap<std::int64_t, Gid> forced;
  for (std::int64_t t = 0; t < 1000; ++t)
    for (Gid g = 0; g < 20; ++g)
      if (fire(rng)) forced.emplace(t, g);
  run_to(p, 999, forced);

  std::map<Gid, std::vector<std::int64_t>> spikes;
  for (const auto& s : p.recorder().spikes()) spikes[s.gid].push_back(s.step);
  const std::int64_t last = p.clock() - 1;  // last completed step

  double before = 0.0, net = 0.0;
  std::size_t n = 0;
  for (const auto& s : p.store().synapses()) {
    std::vector<std::int64_t> arrivals;
    for (auto e : spikes[s.source_gid])
      if (e + s.delay <= last) arrivals.push_back(e + s.delay);
    const auto& post = spikes[s.target_gid];
    double want = 0.0;
    for (auto t : post) {
      if (t + 1 > last) continue;  // potentiation lands in the following step
      double best = -1;
      for (auto a : arrivals)
        if (a <= t) best = a;
      if (best >= 0) want += c.a_plus * std::exp(-(t - best) / c.tau_plus);
    }
    for (auto a : arrivals) {
      if (std::find(post.begin(), post.end(), a) != post.end()) continue;
      double prev = -1;
      for (auto t : post)
        if (t < a) prev = t;
      if (prev >= 0) want += c.a_minus * std::exp(-(a - prev) / c.tau_minus);
    }
    EXPECT_NEAR(s.stdp_accumulator, want, 1e-12) << s.source_gid << "->" << s.target_gid;
    before += s.weight;
    net += s.stdp_accumulator;
    ++n;
  }
  before /= n;
  EXPECT_LT(net, 0.0);

  run_to(p, 1001, forced);
  double after = 0.0;
  for (const auto& s : p.store().synapses()) {
    EXPECT_GT(s.weight, c.w_min);
    EXPECT_LT(s.weight, c.w_max);
    after += s.weight;
  }
  after /= n;
  EXPECT_LE(after, before);
}

TEST(Stepping, TraceShowsPeakThenReset) {
  auto cfg = tiny_config(2);
  cfg.trace_gids = {0};
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [](Gid) { return std::vector<SynapseRecord>{}; });
  p.construct();
  run_to(p, 5, {{3, 0}});
  const auto& pot = p.recorder().potentials();
  ASSERT_EQ(pot.size(), 6u);
  EXPECT_EQ(pot[3], (PotentialSample{3, 0, 30.0}));
  EXPECT_EQ(pot[4], (PotentialSample{3, 0, -65.0}));
  EXPECT_EQ(pot[5].step, 4);
}

TEST(Stepping, FailuresNameProcessAndStep) {
  auto cfg = tiny_config(2);
  InprocFabric f(1);
  Process p(cfg, f.endpoint(0), [](Gid) { return std::vector<SynapseRecord>{}; });
  p.construct();
  run_to(p, 3);
  f.abort("peer vanished");
  try {
    p.step();
    FAIL() << "expected EngineError";
  } catch (const EngineError& e) {
    EXPECT_EQ(e.rank(), 0);
    EXPECT_EQ(e.step(), 3);
    EXPECT_NE(std::string(e.what()).find("process 0, step 3: peer vanished"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsBadStep) {
  EngineConfig cfg;
  cfg.step.dt = 0.3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.step.dt = 0.5;
  EXPECT_EQ(cfg.steps_per_ms(), 2u);
  EXPECT_NO_THROW(cfg.validate());
  cfg.trace_gids = {1000};
  EXPECT_THROW(cfg.validate(), ConfigError);
}
