#include "dpsnn/model.hpp"

#include <algorithm>
#include <cmath>

namespace dpsnn {

void IzhikevichParams::validate() const {
  if (!(a > 0.0)) throw std::invalid_argument("izhikevich: a must be > 0");
  if (!(v_peak > c)) throw std::invalid_argument("izhikevich: v_peak must exceed c");
}

NeuronState NeuronState::resting(const IzhikevichParams& p, NeuronKind kind) {
  NeuronState s;
  s.v = p.c;
  s.u = p.b * p.c;
  s.kind = kind;
  return s;
}

void StdpConfig::validate() const {
  if (!(tau_plus > 0.0) || !(tau_minus > 0.0))
    throw std::invalid_argument("stdp: time constants must be > 0");
  if (!(a_plus > 0.0)) throw std::invalid_argument("stdp: a_plus must be > 0");
  if (!(a_minus < 0.0)) throw std::invalid_argument("stdp: a_minus must be < 0");
  if (!(w_min <= w_max)) throw std::invalid_argument("stdp: w_min must be <= w_max");
  if (!(apply_interval > 0.0)) throw std::invalid_argument("stdp: apply_interval must be > 0");
}

void StepConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
}

NeuronStepResult neuron_step(const NeuronState& state, const IzhikevichParams& params,
                             double input_current, const StepConfig& step, double now_ms) {
  NeuronStepResult out{state, false};
  NeuronState& s = out.state;

  if (state.v >= params.v_peak) {
    s.v = params.c;
    s.u = state.u + params.d;
    s.last_spike_time = now_ms;
    out.spiked = true;
    return out;
  }

  const double v = state.v;
  const double u = state.u;
  const double dv = 0.04 * v * v + 5.0 * v + 140.0 - u + input_current;
  const double du = params.a * (params.b * v - u);
  double v_next = v + step.dt * dv;
  double u_next = u + step.dt * du;

  if (!std::isfinite(v_next) || !std::isfinite(u_next))
    throw NumericDivergence("neuron state diverged (v=" + std::to_string(v_next) +
                            ", u=" + std::to_string(u_next) + ")");

  if (v_next >= params.v_peak) {
    // v is clamped to v_peak at the spike and reset within the same step.
    v_next = params.c;
    u_next += params.d;
    s.last_spike_time = now_ms;
    out.spiked = true;
  }
  s.v = v_next;
  s.u = u_next;
  return out;
}

double stdp_delta(double t_post, double t_pre, double d_axon, const StdpConfig& cfg) {
  const double t = t_post - t_pre - d_axon;
  if (t >= 0.0) return cfg.a_plus * std::exp(-t / cfg.tau_plus);
  return cfg.a_minus * std::exp(-std::fabs(t) / cfg.tau_minus);
}

double apply_plasticity(double weight, double accumulated_delta, const StdpConfig& cfg,
                        NeuronKind source_kind) {
  if (source_kind == NeuronKind::inhibitory) return weight;
  return std::clamp(weight + accumulated_delta, cfg.w_min, cfg.w_max);
}

}  // namespace dpsnn
