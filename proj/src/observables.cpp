#include "dpsnn/observables.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dpsnn {

double BlockTimer::attributed() const { return std::accumulate(seconds_.begin(), seconds_.end(), 0.0); }

void BlockTimer::reset() {
  seconds_.fill(0.0);
  total_ = 0.0;
}

std::string format_time_ms(std::int64_t step, std::uint32_t steps_per_ms) {
  if (steps_per_ms == 1) return std::to_string(step);
  std::ostringstream os;
  os << std::setprecision(12) << static_cast<double>(step) / steps_per_ms;
  return os.str();
}

namespace {
void check_stream(const std::ostream& os, const char* what) {
  if (!os) throw std::runtime_error(std::string("failed writing ") + what);
}
}  // namespace

void write_rastergram(std::ostream& os, std::span<const SpikeRecord> spikes, std::uint32_t steps_per_ms) {
  os << kRastergramHeader << '\n';
  for (const auto& s : spikes) os << format_time_ms(s.step, steps_per_ms) << '\t' << s.gid << '\n';
  os.flush();
  check_stream(os, "rastergram");
}

void write_potentials(std::ostream& os, std::span<const PotentialSample> samples, std::uint32_t steps_per_ms) {
  os << "# time_ms\tgid\tv_mV\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& s : samples) os << format_time_ms(s.step, steps_per_ms) << '\t' << s.gid << '\t' << s.v << '\n';
  os.flush();
  check_stream(os, "potentials");
}

double mean_firing_rate(std::uint64_t spike_count, std::uint64_t neuron_count, double simulated_seconds) {
  if (!(simulated_seconds > 0.0)) throw std::invalid_argument("mean_firing_rate: simulated seconds must be > 0");
  if (neuron_count == 0) return 0.0;
  return static_cast<double>(spike_count) / (static_cast<double>(neuron_count) * simulated_seconds);
}

double normalized_execution_time(double exec_seconds, double firing_rate_hz, double synapses,
                                 double simulated_seconds) {
  const double denom = firing_rate_hz * synapses * simulated_seconds;
  return denom > 0.0 ? exec_seconds / denom : 0.0;
}

std::vector<ProfileRow> profile_report(std::span<const BlockTimer> timers) {
  std::vector<ProfileRow> rows;
  if (timers.empty()) return rows;
  const std::size_t n = timers.size();

  auto summarize = [&](std::string name, auto share_of) {
    std::vector<double> shares;
    shares.reserve(n);
    for (const auto& t : timers) shares.push_back(t.total() > 0.0 ? 100.0 * share_of(t) / t.total() : 0.0);
    const double mean = std::accumulate(shares.begin(), shares.end(), 0.0) / n;
    double var = 0.0;
    for (double s : shares) var += (s - mean) * (s - mean);
    rows.push_back({std::move(name), mean, n > 1 ? std::sqrt(var / (n - 1)) : 0.0});
  };

  for (std::size_t b = 0; b < kBlockCount; ++b)
    summarize(std::string(kBlockNames[b]), [b](const BlockTimer& t) { return t.all()[b]; });
  summarize("unattributed", [](const BlockTimer& t) { return std::max(0.0, t.total() - t.attributed()); });
  return rows;
}

void write_profile_csv(std::ostream& os, std::span<const ProfileRow> rows) {
  os << "block,mean_percent,stddev_percent\n";
  os << std::setprecision(6);
  for (const auto& r : rows) os << r.block << ',' << r.mean_percent << ',' << r.stddev_percent << '\n';
  os.flush();
  check_stream(os, "profile");
}

std::vector<ScalingRow> scaling_table(std::span<const ScalingRun> runs) {
  // Baseline per grid: the successful run with the fewest contexts.
  std::map<std::pair<std::uint32_t, std::uint32_t>, const ScalingRun*> baseline;
  for (const auto& r : runs) {
    if (r.status != "ok") continue;
    auto& b = baseline[{r.cfx, r.cfy}];
    if (b == nullptr || r.contexts < b->contexts) b = &r;
  }

  std::vector<ScalingRow> rows;
  rows.reserve(runs.size());
  for (const auto& r : runs) {
    ScalingRow row{r};
    if (r.status == "ok" && r.simulated_seconds > 0.0) {
      row.exec_per_simulated_second = r.exec_seconds / r.simulated_seconds;
      row.normalized_total =
          normalized_execution_time(r.exec_seconds, r.firing_rate_hz, r.total_synapses, r.simulated_seconds);
      row.normalized_per_core = normalized_execution_time(r.exec_seconds, r.firing_rate_hz,
                                                          r.total_synapses / r.contexts, r.simulated_seconds);
      const ScalingRun* b = baseline[{r.cfx, r.cfy}];
      if (b != nullptr && r.exec_seconds > 0.0) row.speedup = b->exec_seconds / r.exec_seconds;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_scaling_csv(std::ostream& os, std::span<const ScalingRow> rows) {
  os << "axis,grid,processes,contexts,total_synapses,simulated_s,exec_s,exec_per_simulated_s,"
        "firing_rate_hz,normalized_total_s,normalized_per_core_s,speedup,status\n";
  os << std::setprecision(6);
  for (const auto& row : rows) {
    const auto& r = row.run;
    os << r.axis << ',' << r.cfx << 'x' << r.cfy << ',' << r.processes << ',' << r.contexts << ','
       << r.total_synapses << ',' << r.simulated_seconds << ',' << r.exec_seconds << ','
       << row.exec_per_simulated_second << ',' << r.firing_rate_hz << ',' << row.normalized_total << ','
       << row.normalized_per_core << ',' << row.speedup << ',' << '"' << r.status << '"' << '\n';
  }
  os.flush();
  check_stream(os, "scaling table");
}

std::vector<std::uint64_t> weight_histogram(std::span<const float> weights, double lo, double hi,
                                            std::size_t bins) {
  std::vector<std::uint64_t> h(bins, 0);
  if (bins == 0 || !(hi > lo)) return h;
  for (float w : weights) {
    const double x = (w - lo) / (hi - lo);
    auto i = static_cast<std::int64_t>(std::floor(x * static_cast<double>(bins)));
    i = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(bins) - 1);
    ++h[static_cast<std::size_t>(i)];
  }
  return h;
}

}  // namespace dpsnn
