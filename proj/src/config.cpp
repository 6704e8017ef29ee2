#include "dpsnn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>

namespace dpsnn {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty())
    throw ConfigError("bad value for '" + std::string(key) + "': '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const double d = parse_number<double>(key, v);
  if (!std::isfinite(d)) throw ConfigError("value for '" + std::string(key) + "' must be finite");
  return d;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean for '" + std::string(key) + "': '" + std::string(v) + "'");
}

std::string join(const std::vector<Gid>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::int64_t to_steps(double seconds, const EngineConfig& e, const char* what) {
  const double steps = seconds * 1000.0 * e.steps_per_ms();
  if (seconds < 0.0 || std::fabs(steps - std::round(steps)) > 1e-6)
    throw ConfigError(std::string(what) + " must be a non-negative whole number of time steps");
  return std::llround(steps);
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto dbl = [](auto get) {
      return Setter([get](RunConfig& c, std::string_view k, std::string_view v) { get(c) = parse_double(k, v); });
    };
    auto u32 = [](auto get) {
      return Setter(
          [get](RunConfig& c, std::string_view k, std::string_view v) { get(c) = parse_number<std::uint32_t>(k, v); });
    };
    t["grid"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      const auto x = v.find_first_of("xX");
      if (x == std::string_view::npos) throw ConfigError("grid must look like CxR, got '" + std::string(v) + "'");
      c.engine.grid.cfx = parse_number<std::uint32_t>(k, v.substr(0, x));
      c.engine.grid.cfy = parse_number<std::uint32_t>(k, v.substr(x + 1));
    };
    t["neurons_per_column"] = u32([](RunConfig& c) -> auto& { return c.engine.grid.neurons_per_column; });
    t["excitatory_fraction"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.excitatory_fraction; });
    t["synapses_per_neuron"] = u32([](RunConfig& c) -> auto& { return c.engine.grid.forward_synapses_per_neuron; });
    t["fraction_same"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.projection_fractions.same; });
    t["fraction_first"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.projection_fractions.first_each; });
    t["fraction_second"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.projection_fractions.second_each; });
    t["fraction_third"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.projection_fractions.third_each; });
    t["delay_min"] = u32([](RunConfig& c) -> auto& { return c.engine.grid.delay_min; });
    t["delay_max"] = u32([](RunConfig& c) -> auto& { return c.engine.grid.delay_max; });
    t["seed"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.engine.grid.master_seed = parse_number<std::uint64_t>(k, v);
    };
    t["weight_exc"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.initial_weights.excitatory; });
    t["weight_inh"] = dbl([](RunConfig& c) -> auto& { return c.engine.grid.initial_weights.inhibitory; });
    t["stimulus_rate"] = u32([](RunConfig& c) -> auto& { return c.engine.stimulus.rate; });
    t["stimulus_amplitude"] = dbl([](RunConfig& c) -> auto& { return c.engine.stimulus.amplitude; });
    t["stdp_a_plus"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.a_plus; });
    t["stdp_a_minus"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.a_minus; });
    t["stdp_tau_plus"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.tau_plus; });
    t["stdp_tau_minus"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.tau_minus; });
    t["w_min"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.w_min; });
    t["w_max"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.w_max; });
    t["plasticity_interval"] = dbl([](RunConfig& c) -> auto& { return c.engine.stdp.apply_interval; });
    t["rs_a"] = dbl([](RunConfig& c) -> auto& { return c.engine.excitatory.a; });
    t["rs_b"] = dbl([](RunConfig& c) -> auto& { return c.engine.excitatory.b; });
    t["rs_c"] = dbl([](RunConfig& c) -> auto& { return c.engine.excitatory.c; });
    t["rs_d"] = dbl([](RunConfig& c) -> auto& { return c.engine.excitatory.d; });
    t["fs_a"] = dbl([](RunConfig& c) -> auto& { return c.engine.inhibitory.a; });
    t["fs_b"] = dbl([](RunConfig& c) -> auto& { return c.engine.inhibitory.b; });
    t["fs_c"] = dbl([](RunConfig& c) -> auto& { return c.engine.inhibitory.c; });
    t["fs_d"] = dbl([](RunConfig& c) -> auto& { return c.engine.inhibitory.d; });
    t["v_peak"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.engine.excitatory.v_peak = c.engine.inhibitory.v_peak = parse_double(k, v);
    };
    t["dt"] = dbl([](RunConfig& c) -> auto& { return c.engine.step.dt; });
    t["barrier"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.engine.barrier_enabled = parse_bool(k, v); };
    t["trace"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.engine.trace_gids.clear();
      for (auto g : parse_uint_list(v)) c.engine.trace_gids.push_back(g);
    };
    t["procs"] = u32([](RunConfig& c) -> auto& { return c.procs; });
    t["contexts"] = u32([](RunConfig& c) -> auto& { return c.contexts; });
    t["backend"] = [](RunConfig& c, std::string_view, std::string_view v) {
      if (v == "inproc")
        c.backend = Backend::inproc;
      else if (v == "tcp")
        c.backend = Backend::tcp;
      else
        throw ConfigError("backend must be inproc or tcp, got '" + std::string(v) + "'");
    };
    t["roster"] = [](RunConfig& c, std::string_view, std::string_view v) { c.roster = std::string(v); };
    t["rank"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.rank = parse_number<int>(k, v); };
    t["warmup"] = dbl([](RunConfig& c) -> auto& { return c.warmup_seconds; });
    t["measure"] = dbl([](RunConfig& c) -> auto& { return c.measure_seconds; });
    t["out"] = [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); };
    t["timeout"] = dbl([](RunConfig& c) -> auto& { return c.timeout_seconds; });
    return t;
  }();
  return table;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<std::uint32_t> parse_uint_list(std::string_view text) {
  std::vector<std::uint32_t> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = text.find(',', pos);
    const auto item = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    out.push_back(parse_number<std::uint32_t>("list", item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::int64_t RunConfig::warmup_steps() const { return to_steps(warmup_seconds, engine, "warmup"); }
std::int64_t RunConfig::measure_steps() const { return to_steps(measure_seconds, engine, "measure"); }

void RunConfig::validate() const {
  engine.validate();
  if (procs == 0) throw ConfigError("procs must be positive");
  ProcessMap(engine.grid, procs);
  if (contexts > procs) throw ConfigError("contexts must not exceed procs");
  if (measure_steps() <= 0) throw ConfigError("measure must be positive");
  warmup_steps();
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be positive");
  if (rank >= 0) {
    if (backend != Backend::tcp) throw ConfigError("rank is only meaningful with the tcp backend");
    if (roster.empty()) throw ConfigError("rank requires a roster file");
    if (rank >= static_cast<int>(procs)) throw ConfigError("rank must be below procs");
  }
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& t = setters();
  auto it = t.find(trim(key));
  if (it == t.end()) throw ConfigError("unknown configuration key '" + std::string(trim(key)) + "'");
  it->second(cfg, trim(key), trim(value));
}

void load_config(RunConfig& cfg, std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  load_config(cfg, in);
}

void write_config(std::ostream& out, const RunConfig& c) {
  const auto& e = c.engine;
  const auto& g = e.grid;
  const auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << '\n'; };
  const auto d = [&](const char* k, double v) { kv(k, format_double(v)); };
  const auto u = [&](const char* k, std::uint64_t v) { kv(k, std::to_string(v)); };
  kv("grid", std::to_string(g.cfx) + "x" + std::to_string(g.cfy));
  u("neurons_per_column", g.neurons_per_column);
  d("excitatory_fraction", g.excitatory_fraction);
  u("synapses_per_neuron", g.forward_synapses_per_neuron);
  d("fraction_same", g.projection_fractions.same);
  d("fraction_first", g.projection_fractions.first_each);
  d("fraction_second", g.projection_fractions.second_each);
  d("fraction_third", g.projection_fractions.third_each);
  u("delay_min", g.delay_min);
  u("delay_max", g.delay_max);
  u("seed", g.master_seed);
  d("weight_exc", g.initial_weights.excitatory);
  d("weight_inh", g.initial_weights.inhibitory);
  u("stimulus_rate", e.stimulus.rate);
  d("stimulus_amplitude", e.stimulus.amplitude);
  d("stdp_a_plus", e.stdp.a_plus);
  d("stdp_a_minus", e.stdp.a_minus);
  d("stdp_tau_plus", e.stdp.tau_plus);
  d("stdp_tau_minus", e.stdp.tau_minus);
  d("w_min", e.stdp.w_min);
  d("w_max", e.stdp.w_max);
  d("plasticity_interval", e.stdp.apply_interval);
  d("rs_a", e.excitatory.a);
  d("rs_b", e.excitatory.b);
  d("rs_c", e.excitatory.c);
  d("rs_d", e.excitatory.d);
  d("fs_a", e.inhibitory.a);
  d("fs_b", e.inhibitory.b);
  d("fs_c", e.inhibitory.c);
  d("fs_d", e.inhibitory.d);
  d("v_peak", e.excitatory.v_peak);
  d("dt", e.step.dt);
  kv("barrier", e.barrier_enabled ? "true" : "false");
  kv("trace", join(e.trace_gids));
  u("procs", c.procs);
  u("contexts", c.contexts);
  kv("backend", c.backend == Backend::tcp ? "tcp" : "inproc");
  kv("roster", c.roster);
  kv("rank", std::to_string(c.rank));
  d("warmup", c.warmup_seconds);
  d("measure", c.measure_seconds);
  kv("out", c.out_dir);
  d("timeout", c.timeout_seconds);
}

}  // namespace dpsnn
