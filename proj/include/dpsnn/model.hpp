#pragma once

// Numeric kernel: Izhikevich neuron integration, spike/reset rule, and the
// STDP weight-change function. Nothing in here knows about processes.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dpsnn {

enum class NeuronKind : std::uint8_t { excitatory = 0, inhibitory = 1 };

struct IzhikevichParams {
  double a = 0.02;       // 1/ms
  double b = 0.2;
  double c = -65.0;      // mV, reset potential
  double d = 8.0;        // recovery increment
  double v_peak = 30.0;  // mV

  /// Regular-spiking excitatory cell.
  static IzhikevichParams regular_spiking() { return {0.02, 0.2, -65.0, 8.0, 30.0}; }
  /// Fast-spiking inhibitory cell.
  static IzhikevichParams fast_spiking() { return {0.1, 0.2, -65.0, 2.0, 30.0}; }

  void validate() const;
};

struct NeuronState {
  double v = -65.0;
  double u = -13.0;
  std::optional<double> last_spike_time;  // ms
  NeuronKind kind = NeuronKind::excitatory;

  /// Resting state v = c, u = b*c.
  static NeuronState resting(const IzhikevichParams& p, NeuronKind kind);
};

struct StdpConfig {
  double a_plus = 0.1;
  double a_minus = -0.12;
  double tau_plus = 20.0;   // ms
  double tau_minus = 20.0;  // ms
  double w_min = 0.0;
  double w_max = 10.0;
  double apply_interval = 1000.0;  // ms

  void validate() const;
};

struct StepConfig {
  double dt = 1.0;  // ms

  void validate() const;
};

class NumericDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeuronStepResult {
  NeuronState state;
  bool spiked = false;
};

/// One explicit-Euler step of
///   dv/dt = 0.04 v^2 + 5 v + 140 - u + I
///   du/dt = a (b v - u)
/// A state already at or above v_peak, or an integrated v reaching v_peak,
/// fires: v <- c, u <- u + d, last_spike_time <- now_ms.
///
/// Throws NumericDivergence when the integrated state is not finite.
NeuronStepResult neuron_step(const NeuronState& state, const IzhikevichParams& params,
                             double input_current, const StepConfig& step, double now_ms);

/// Weight change for the pairing t = t_post - t_pre - d_axon:
/// A+ exp(-t/tau+) for t >= 0, A- exp(-|t|/tau-) for t < 0.
double stdp_delta(double t_post, double t_pre, double d_axon, const StdpConfig& cfg);

/// clamp(weight + accumulated_delta, w_min, w_max). Inhibitory synapses are
/// not plastic and keep their weight.
double apply_plasticity(double weight, double accumulated_delta, const StdpConfig& cfg,
                        NeuronKind source_kind = NeuronKind::excitatory);

}  // namespace dpsnn
