#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "dpsnn/model.hpp"

using namespace dpsnn;

namespace {

// Scalar reference, written out longhand from the update equations.
struct Scalar {
  double v, u;
  int spikes = 0;
};

void scalar_step(Scalar& s, double a, double b, double c, double d, double v_peak, double I, double dt) {
  if (s.v >= v_peak) {
    s.v = c;
    s.u = s.u + d;
    ++s.spikes;
    return;
  }
  const double dv = 0.04 * s.v * s.v + 5.0 * s.v + 140.0 - s.u + I;
  const double du = a * (b * s.v - s.u);
  double v = s.v + dt * dv;
  double u = s.u + dt * du;
  if (v >= v_peak) {
    v = c;
    u = u + d;
    ++s.spikes;
  }
  s.v = v;
  s.u = u;
}

double rel(double x, double ref) { return ref == 0.0 ? std::fabs(x) : std::fabs(x - ref) / std::fabs(ref); }

}  // namespace

TEST(NeuronStep, RestingRsWithoutInput) {
  const auto p = IzhikevichParams::regular_spiking();
  NeuronState s;
  s.v = -65.0;
  s.u = -13.0;
  const auto r = neuron_step(s, p, 0.0, {}, 0.0);
  Scalar o{-65.0, -13.0};
  scalar_step(o, 0.02, 0.2, -65.0, 8.0, 30.0, 0.0, 1.0);
  EXPECT_FALSE(r.spiked);
  EXPECT_DOUBLE_EQ(r.state.v, o.v);
  EXPECT_DOUBLE_EQ(r.state.u, o.u);
  EXPECT_NEAR(r.state.v, -68.0, 1e-9);
  EXPECT_NEAR(r.state.u, -13.0, 1e-12);
}

TEST(NeuronStep, AtPeakResets) {
  const auto p = IzhikevichParams::regular_spiking();
  for (double u : {-20.0, -13.0, 0.0, 7.5}) {
    NeuronState s;
    s.v = 30.0;
    s.u = u;
    const auto r = neuron_step(s, p, 0.0, {}, 12.0);
    EXPECT_TRUE(r.spiked);
    EXPECT_EQ(r.state.v, -65.0);
    EXPECT_EQ(r.state.u, u + 8.0);
    ASSERT_TRUE(r.state.last_spike_time.has_value());
    EXPECT_EQ(*r.state.last_spike_time, 12.0);
  }
}

TEST(NeuronStep, ConstantDriveFiresRegularly) {
  const auto p = IzhikevichParams::regular_spiking();
  auto s = NeuronState::resting(p, NeuronKind::excitatory);
  int spikes = 0;
  for (int t = 0; t < 1000; ++t) {
    auto r = neuron_step(s, p, 10.0, {}, t);
    spikes += r.spiked;
    s = r.state;
  }
  Scalar o{-65.0, 0.2 * -65.0};
  for (int t = 0; t < 1000; ++t) scalar_step(o, 0.02, 0.2, -65.0, 8.0, 30.0, 10.0, 1.0);
  EXPECT_GE(spikes, 5);
  EXPECT_EQ(spikes, o.spikes);
}

struct TrajectoryCase {
  bool fast;
  double current;
};

class Trajectory : public ::testing::TestWithParam<TrajectoryCase> {};

TEST_P(Trajectory, MatchesScalarEvaluator) {
  const auto [fast, I] = GetParam();
  const auto p = fast ? IzhikevichParams::fast_spiking() : IzhikevichParams::regular_spiking();
  const double a = fast ? 0.1 : 0.02, d = fast ? 2.0 : 8.0;
  auto s = NeuronState::resting(p, fast ? NeuronKind::inhibitory : NeuronKind::excitatory);
  Scalar o{-65.0, 0.2 * -65.0};
  for (int t = 0; t < 1000; ++t) {
    const auto r = neuron_step(s, p, I, {}, t);
    scalar_step(o, a, 0.2, -65.0, d, 30.0, I, 1.0);
    s = r.state;
    ASSERT_LE(rel(s.v, o.v), 1e-9) << "step " << t;
    ASSERT_LE(rel(s.u, o.u), 1e-9) << "step " << t;
    ASSERT_LE(s.v, p.v_peak);
  }
}

INSTANTIATE_TEST_SUITE_P(RsFs, Trajectory,
                         ::testing::Values(TrajectoryCase{false, 0.0}, TrajectoryCase{false, 5.0},
                                           TrajectoryCase{false, 10.0}, TrajectoryCase{true, 0.0},
                                           TrajectoryCase{true, 5.0}, TrajectoryCase{true, 10.0}));

TEST(NeuronStep, ResetInvariantOverRandomStates) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> v(-90.0, 40.0), u(-20.0, 20.0), I(0.0, 200.0);
  const auto p = IzhikevichParams::regular_spiking();
  int fired = 0;
  for (int i = 0; i < 5000; ++i) {
    NeuronState s;
    s.v = v(rng);
    s.u = u(rng);
    const double input = I(rng);
    const auto r = neuron_step(s, p, input, {}, 0.0);
    if (s.v >= p.v_peak) {
      EXPECT_TRUE(r.spiked);
      EXPECT_EQ(r.state.u, s.u + p.d);
    } else {
      const double vi = s.v + (0.04 * s.v * s.v + 5.0 * s.v + 140.0 - s.u + input);
      const double ui = s.u + p.a * (p.b * s.v - s.u);
      EXPECT_EQ(r.spiked, vi >= p.v_peak);
      if (r.spiked) EXPECT_EQ(r.state.u, ui + p.d);
    }
    if (r.spiked) {
      EXPECT_EQ(r.state.v, p.c);
      ++fired;
    }
    EXPECT_LE(r.state.v, p.v_peak);
  }
  EXPECT_GT(fired, 100);
}

TEST(NeuronStep, PureFunction) {
  const auto p = IzhikevichParams::fast_spiking();
  NeuronState s;
  s.v = -50.123;
  s.u = 3.25;
  const auto a = neuron_step(s, p, 7.0, {}, 1.0);
  const auto b = neuron_step(s, p, 7.0, {}, 1.0);
  EXPECT_EQ(std::memcmp(&a.state.v, &b.state.v, sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(&a.state.u, &b.state.u, sizeof(double)), 0);
}

TEST(NeuronStep, DivergenceThrows) {
  const auto p = IzhikevichParams::regular_spiking();
  NeuronState s;
  s.v = -1e200;
  s.u = 0.0;
  EXPECT_THROW(neuron_step(s, p, 0.0, {}, 0.0), NumericDivergence);
}

TEST(Params, Validation) {
  EXPECT_NO_THROW(IzhikevichParams::regular_spiking().validate());
  IzhikevichParams bad = IzhikevichParams::regular_spiking();
  bad.a = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = IzhikevichParams::regular_spiking();
  bad.v_peak = -70.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  StdpConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.a_minus = 0.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.tau_plus = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.w_min = 11.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW((StepConfig{0.0}.validate()), std::invalid_argument);
}

namespace {

double stdp_oracle(double t, const StdpConfig& c) {
  if (t >= 0) return c.a_plus * std::exp(-t / c.tau_plus);
  return c.a_minus * std::exp(t / c.tau_minus);
}

}  // namespace

TEST(Stdp, ReferencePoints) {
  const StdpConfig c;
  EXPECT_DOUBLE_EQ(stdp_delta(10.0, 7.0, 3.0, c), c.a_plus);
  EXPECT_NEAR(stdp_delta(20.0, 0.0, 0.0, c), c.a_plus / std::exp(1.0), 1e-15);
  EXPECT_NEAR(stdp_delta(0.0, 20.0, 0.0, c), c.a_minus / std::exp(1.0), 1e-15);
  EXPECT_LT(std::fabs(stdp_delta(0.0, 20.0, 0.0, c)), std::fabs(c.a_minus));
}

TEST(Stdp, MonotoneAndMatchesFormula) {
  StdpConfig c;
  c.tau_plus = 17.0;
  c.tau_minus = 23.0;
  double prev_pos = INFINITY, prev_neg = INFINITY;
  for (int i = 0; i < 40; ++i) {
    const double t = 0.75 * i;
    const double pos = stdp_delta(t + 5.0, 5.0, 0.0, c);
    const double neg = stdp_delta(0.0, t + 0.5, 0.0, c);
    EXPECT_LE(rel(pos, stdp_oracle(t, c)), 1e-12);
    EXPECT_LE(rel(neg, stdp_oracle(-(t + 0.5), c)), 1e-12);
    EXPECT_GT(pos, 0.0);
    EXPECT_LT(neg, 0.0);
    EXPECT_LT(pos, prev_pos);
    EXPECT_LT(std::fabs(neg), prev_neg);
    prev_pos = pos;
    prev_neg = std::fabs(neg);
  }
}

TEST(Stdp, AxonalDelayShiftsPairing) {
  const StdpConfig c;
  EXPECT_DOUBLE_EQ(stdp_delta(30.0, 10.0, 5.0, c), stdp_delta(15.0, 0.0, 0.0, c));
  EXPECT_LT(stdp_delta(12.0, 10.0, 5.0, c), 0.0);
}

TEST(Plasticity, ApplyAndClamp) {
  const StdpConfig c;
  EXPECT_EQ(apply_plasticity(5.0, 0.0, c), 5.0);
  EXPECT_EQ(apply_plasticity(c.w_max, 1.0, c), c.w_max);
  EXPECT_EQ(apply_plasticity(5.0, -2.0, c), 3.0);
  EXPECT_EQ(apply_plasticity(1.0, -5.0, c), c.w_min);
  EXPECT_EQ(apply_plasticity(-2.0, 3.0, c, NeuronKind::inhibitory), -2.0);
}
