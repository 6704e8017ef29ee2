#include "dpsnn/bench.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "dpsnn/inproc_transport.hpp"
#include "dpsnn/tcp_transport.hpp"

namespace dpsnn {

namespace {

using Clock = std::chrono::steady_clock;

// Runs one thread's share of processes phase by phase.
class Worker {
 public:
  Worker(std::vector<Process*> procs, std::vector<Transport*> transports) : procs_(std::move(procs)), tx_(std::move(transports)) {}

  template <class F>
  void each(F&& f) {
    for (auto* p : procs_) f(*p);
  }

  void run(const RunConfig& cfg, const SimulationOptions& opts, double& construction_seconds,
           std::vector<ProcessReport>* root_reports) {
    const auto t0 = Clock::now();
    each([](Process& p) { p.construct_begin(); });
    each([](Process& p) { p.construct_exchange(); });
    each([](Process& p) { p.construct_finish(); });
    construction_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (opts.after_construction) each(opts.after_construction);

    const auto steps = [&](std::int64_t n) {
      for (std::int64_t s = 0; s < n; ++s) {
        if (opts.before_step) each(opts.before_step);
        each([](Process& p) { p.step_begin(); });
        each([](Process& p) { p.step_send_counts(); });
        each([](Process& p) { p.step_send_payloads(); });
        each([](Process& p) { p.step_finish(); });
      }
    };
    steps(cfg.warmup_steps());
    each([](Process& p) { p.begin_measurement(); });
    steps(cfg.measure_steps());
    each([](Process& p) { p.end_measurement(); });
    gather(root_reports);
  }

 private:
  // Every process ships its report to process 0: a counts round carrying the
  // byte length, then one payload of 1-byte records, then a barrier so no
  // endpoint is torn down while a peer still reads from it.
  void gather(std::vector<ProcessReport>* root_reports) {
    std::vector<Bytes> blobs;
    for (auto* p : procs_) blobs.push_back(encode_report(p->report()));
    const std::vector<int> root{0};
    for (std::size_t i = 0; i < procs_.size(); ++i) {
      Counts c(static_cast<std::size_t>(tx_[i]->size()), 0);
      c[0] = blobs[i].size();
      tx_[i]->post_counts(c, root);
    }
    std::vector<Counts> incoming;
    for (std::size_t i = 0; i < procs_.size(); ++i) {
      const bool is_root = tx_[i]->rank() == 0;
      incoming.push_back(tx_[i]->collect_counts(is_root ? tx_[i]->full_roster() : std::vector<int>{}));
      Payloads out;
      out.emplace(0, std::move(blobs[i]));
      tx_[i]->post_payloads(std::move(out), 1);
    }
    for (std::size_t i = 0; i < procs_.size(); ++i) {
      auto got = tx_[i]->collect_payloads(incoming[i], 1);
      if (tx_[i]->rank() == 0 && root_reports != nullptr)
        for (auto& [peer, bytes] : got) root_reports->push_back(decode_report(bytes));
    }
    for (auto* t : tx_) t->post_barrier();
    for (auto* t : tx_) t->collect_barrier();
  }

  std::vector<Process*> procs_;
  std::vector<Transport*> tx_;
};

SimulationResult merge(const RunConfig& cfg, std::vector<ProcessReport> reports, double construction_seconds) {
  SimulationResult r;
  r.steps_per_ms = cfg.engine.steps_per_ms();
  r.construction_seconds = construction_seconds;
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });

  std::uint64_t measured = 0;
  double exec = 0.0;
  for (auto& rep : reports) {
    r.spikes.insert(r.spikes.end(), rep.spikes.begin(), rep.spikes.end());
    r.potentials.insert(r.potentials.end(), rep.potentials.begin(), rep.potentials.end());
    r.timers.push_back(rep.timer);
    r.construction_outgoing.push_back(rep.construction_outgoing);
    r.construction_incoming.push_back(rep.construction_incoming);
    if (r.weight_histogram.size() < rep.weight_histogram.size()) r.weight_histogram.resize(rep.weight_histogram.size());
    for (std::size_t i = 0; i < rep.weight_histogram.size(); ++i) r.weight_histogram[i] += rep.weight_histogram[i];
    r.metrics.per_process_spikes.push_back(rep.measured_spikes);
    measured += rep.measured_spikes;
    exec = std::max(exec, rep.measured_wall_seconds);
  }
  std::sort(r.spikes.begin(), r.spikes.end());
  std::stable_sort(r.potentials.begin(), r.potentials.end(), [](const auto& a, const auto& b) {
    return a.step != b.step ? a.step < b.step : a.gid < b.gid;
  });

  auto& m = r.metrics;
  m.total_neurons = cfg.engine.grid.total_neurons();
  m.total_synapses = cfg.engine.grid.total_synapses();
  m.simulated_seconds = static_cast<double>(cfg.measure_steps()) / (1000.0 * r.steps_per_ms);
  m.exec_seconds = exec;
  m.mean_firing_rate_hz = mean_firing_rate(measured, m.total_neurons, m.simulated_seconds);
  m.exec_per_simulated_second = exec / m.simulated_seconds;
  m.normalized_execution_time = normalized_execution_time(exec, m.mean_firing_rate_hz,
                                                          static_cast<double>(m.total_synapses), m.simulated_seconds);
  return r;
}

}  // namespace

SimulationResult simulate(const RunConfig& cfg, const SimulationOptions& opts) {
  cfg.validate();
  const int world = static_cast<int>(cfg.procs);
  const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(cfg.timeout_seconds * 1000.0));

  std::unique_ptr<InprocFabric> fabric;
  std::vector<std::unique_ptr<TcpTransport>> tcp;
  std::vector<Transport*> transports;
  if (cfg.backend == Backend::inproc) {
    fabric = std::make_unique<InprocFabric>(world, timeout);
    for (int r = 0; r < world; ++r) transports.push_back(&fabric->endpoint(r));
  } else if (cfg.rank >= 0) {
    Roster roster = load_roster(cfg.roster);
    if (roster.size() != cfg.procs)
      throw ConfigError("roster lists " + std::to_string(roster.size()) + " processes, procs is " +
                        std::to_string(cfg.procs));
    tcp.push_back(std::make_unique<TcpTransport>(cfg.rank, std::move(roster), timeout));
  } else if (!cfg.roster.empty()) {
    Roster roster = load_roster(cfg.roster);
    if (roster.size() != cfg.procs)
      throw ConfigError("roster lists " + std::to_string(roster.size()) + " processes, procs is " +
                        std::to_string(cfg.procs));
    for (int r = 0; r < world; ++r) tcp.push_back(std::make_unique<TcpTransport>(r, roster, timeout));
  } else {
    tcp = make_loopback_cluster(world, timeout);
  }
  for (auto& t : tcp) transports.push_back(t.get());
  if (opts.tap)
    for (auto* t : transports) t->set_tap(opts.tap);

  std::vector<std::unique_ptr<Process>> procs;
  for (auto* t : transports) procs.push_back(std::make_unique<Process>(cfg.engine, *t, opts.generator));

  const std::size_t contexts = std::min<std::size_t>(cfg.effective_contexts(), procs.size());
  std::vector<std::vector<Process*>> share(contexts);
  std::vector<std::vector<Transport*>> share_tx(contexts);
  for (std::size_t i = 0; i < procs.size(); ++i) {
    share[i % contexts].push_back(procs[i].get());
    share_tx[i % contexts].push_back(transports[i]);
  }

  std::mutex mu;
  std::exception_ptr failure;
  std::vector<ProcessReport> reports;
  std::vector<double> construction(contexts, 0.0);
  const auto body = [&](std::size_t k) {
    try {
      Worker(share[k], share_tx[k]).run(cfg, opts, construction[k], &reports);
    } catch (...) {
      {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
      std::string why = "peer failed";
      try {
        throw;
      } catch (const std::exception& e) {
        why = e.what();
      } catch (...) {
      }
      for (auto* t : transports) t->abort("aborted: " + why);
    }
  };

  if (contexts == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < contexts; ++k) threads.emplace_back(body, k);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const bool has_root = transports.front()->rank() == 0;
  if (!has_root) {
    SimulationResult r;
    r.is_root = false;
    return r;
  }
  return merge(cfg, std::move(reports), *std::max_element(construction.begin(), construction.end()));
}

std::string rastergram_text(const SimulationResult& r) {
  std::ostringstream os;
  write_rastergram(os, r.spikes, r.steps_per_ms);
  return os.str();
}

void write_outputs(const std::string& dir, const RunConfig& cfg, const SimulationResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("raster.tsv");
    write_rastergram(f, r.spikes, r.steps_per_ms);
  }
  {
    auto f = open("potentials.tsv");
    write_potentials(f, r.potentials, r.steps_per_ms);
  }
  {
    auto f = open("profile.csv");
    const auto rows = profile_report(r.timers);
    write_profile_csv(f, rows);
  }
  {
    auto f = open("metrics.csv");
    const auto& m = r.metrics;
    f << std::setprecision(10);
    f << "key,value\n"
      << "grid," << cfg.engine.grid.cfx << 'x' << cfg.engine.grid.cfy << '\n'
      << "processes," << cfg.procs << '\n'
      << "contexts," << cfg.effective_contexts() << '\n'
      << "total_neurons," << m.total_neurons << '\n'
      << "total_synapses," << m.total_synapses << '\n'
      << "simulated_seconds," << m.simulated_seconds << '\n'
      << "mean_firing_rate_hz," << m.mean_firing_rate_hz << '\n'
      << "exec_seconds," << m.exec_seconds << '\n'
      << "exec_per_simulated_second," << m.exec_per_simulated_second << '\n'
      << "normalized_execution_time," << m.normalized_execution_time << '\n'
      << "construction_seconds," << r.construction_seconds << '\n';
    for (std::size_t p = 0; p < m.per_process_spikes.size(); ++p)
      f << "spikes_process_" << p << ',' << m.per_process_spikes[p] << '\n';
    if (!f) throw std::runtime_error("failed writing metrics");
  }
  {
    auto f = open("weights.csv");
    f << "bin_low,bin_high,count\n";
    const auto& s = cfg.engine.stdp;
    const std::size_t n = r.weight_histogram.size();
    for (std::size_t i = 0; i < n; ++i)
      f << format_double(s.w_min + (s.w_max - s.w_min) * i / n) << ','
        << format_double(s.w_min + (s.w_max - s.w_min) * (i + 1) / n) << ',' << r.weight_histogram[i] << '\n';
    if (!f) throw std::runtime_error("failed writing weights");
  }
  {
    auto f = open("config.txt");
    write_config(f, cfg);
  }
}

void print_summary(std::ostream& os, const RunConfig& cfg, const SimulationResult& r) {
  const auto& m = r.metrics;
  os << std::setprecision(4);
  os << "grid " << cfg.engine.grid.cfx << 'x' << cfg.engine.grid.cfy << "  neurons " << m.total_neurons
     << "  synapses " << m.total_synapses << "  processes " << cfg.procs << "  contexts "
     << cfg.effective_contexts() << '\n';
  os << "mean firing rate " << m.mean_firing_rate_hz << " Hz  exec " << m.exec_seconds << " s for "
     << m.simulated_seconds << " simulated s  (" << m.exec_per_simulated_second << " s/s)  normalized "
     << m.normalized_execution_time << " s/(syn*Hz*s)\n";
}

std::optional<SpikeRecord> first_divergence(std::span<const SpikeRecord> a, std::span<const SpikeRecord> b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] != b[i]) return std::min(a[i], b[i]);
  if (a.size() != b.size()) return a.size() > n ? a[n] : b[n];
  return std::nullopt;
}

VerifyReport verify(const RunConfig& base, std::span<const std::uint32_t> process_counts) {
  if (process_counts.size() < 2) throw ConfigError("verify needs at least two process counts");
  for (std::uint32_t h : process_counts) {
    RunConfig c = base;
    c.procs = h;
    c.contexts = 0;
    c.validate();
  }
  VerifyReport report;
  std::vector<SpikeRecord> reference;
  std::string reference_text;
  for (std::size_t i = 0; i < process_counts.size(); ++i) {
    RunConfig c = base;
    c.procs = process_counts[i];
    c.contexts = 0;
    auto r = simulate(c);
    VerifyOutcome o;
    o.procs = c.procs;
    o.spikes = r.spikes.size();
    const std::string text = rastergram_text(r);
    if (i == 0) {
      reference = std::move(r.spikes);
      reference_text = text;
    } else if (text != reference_text) {
      o.identical = false;
      o.divergence = first_divergence(reference, r.spikes);
      report.pass = false;
    }
    report.runs.push_back(o);
  }
  return report;
}

void print_verify(std::ostream& os, const VerifyReport& r) {
  for (const auto& o : r.runs) {
    os << "H=" << o.procs << "  spikes " << o.spikes << "  " << (o.identical ? "identical" : "DIFFERS");
    if (o.divergence) os << "  first divergence at time step " << o.divergence->step << ", gid " << o.divergence->gid;
    os << '\n';
  }
  os << (r.pass ? "verify: PASS" : "verify: FAIL") << '\n';
}

std::pair<std::uint32_t, std::uint32_t> near_square_grid(std::uint32_t columns) {
  std::uint32_t cfy = 1;
  for (std::uint32_t d = 1; d * d <= columns; ++d)
    if (columns % d == 0) cfy = d;
  return {columns / cfy, cfy};
}

std::vector<ScalingRun> sweep(const RunConfig& base, const std::string& axis, std::span<const std::uint32_t> points,
                              std::ostream* log) {
  if (axis != "strong" && axis != "weak") throw ConfigError("sweep axis must be strong or weak");
  if (points.empty()) throw ConfigError("sweep needs at least one point");
  std::vector<ScalingRun> runs;
  for (std::uint32_t n : points) {
    RunConfig c = base;
    c.procs = n;
    c.contexts = n;
    c.out_dir.clear();
    if (axis == "weak") {
      const auto [x, y] = near_square_grid(base.engine.grid.cft() * n);
      c.engine.grid.cfx = x;
      c.engine.grid.cfy = y;
    }
    ScalingRun run;
    run.axis = axis;
    run.cfx = c.engine.grid.cfx;
    run.cfy = c.engine.grid.cfy;
    run.processes = n;
    run.contexts = n;
    run.total_synapses = static_cast<double>(c.engine.grid.total_synapses());
    try {
      auto r = simulate(c);
      run.simulated_seconds = r.metrics.simulated_seconds;
      run.exec_seconds = r.metrics.exec_seconds;
      run.firing_rate_hz = r.metrics.mean_firing_rate_hz;
    } catch (const std::exception& e) {
      run.status = std::string("failed: ") + e.what();
    }
    if (log != nullptr)
      *log << axis << " point " << n << " (" << run.cfx << 'x' << run.cfy << "): " << run.status << ", exec "
           << run.exec_seconds << " s\n";
    runs.push_back(run);
  }
  return runs;
}

}  // namespace dpsnn
