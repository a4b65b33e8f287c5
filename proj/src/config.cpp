#include "ssde/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ssde/errors.hpp"
#include "ssde/rng.hpp"

namespace ssde {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "auto";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v, bool allow_auto = false) {
  if (allow_auto && v == "auto") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error(key + ": expected a number, got '" + v + "'");
  }
}

template <typename I>
I to_int(const std::string& key, const std::string& v) {
  I out{};
  // Accept scientific shorthand such as 6e4 for step counts.
  if (v.find_first_of("eE.") != std::string::npos) {
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 9.0e15) throw config_error(key + ": expected an integer, got '" + v + "'");
    return static_cast<I>(d);
  }
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw config_error(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> to_widths(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string part;
  while (std::getline(is, part, ',')) out.push_back(to_int<int>(key, trim(part)));
  if (out.empty()) throw config_error(key + ": expected a comma-separated width list");
  return out;
}

std::string fmt_widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

struct Key {
  const char* name;
  bool affects_results;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define KEY_INT(NAME, FIELD, TYPE)                                           \
  Key{NAME, true, [](const RunConfig& c) { return std::to_string(c.FIELD); }, \
      [](RunConfig& c, const std::string& v) { c.FIELD = to_int<TYPE>(NAME, v); }}
#define KEY_DBL(NAME, FIELD)                                        \
  Key{NAME, true, [](const RunConfig& c) { return fmt_double(c.FIELD); }, \
      [](RunConfig& c, const std::string& v) { c.FIELD = to_double(NAME, v); }}
#define KEY_BOOL(NAME, FIELD)                                                      \
  Key{NAME, true, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }, \
      [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(NAME, v); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      KEY_INT("suite.tasks", tasks, int),
      KEY_INT("suite.seed", suite_seed, uint64_t),
      KEY_INT("suite.repeats", repeats, int),
      KEY_INT("embed.dim", embed_dim, int),
      KEY_INT("embed.seed", embed_seed, uint64_t),
      Key{"embed.file", true, [](const RunConfig& c) { return c.embed_file; },
          [](RunConfig& c, const std::string& v) { c.embed_file = v; }},
      KEY_DBL("alloc.lambda_global", alloc.lambda_global),
      KEY_DBL("alloc.lambda_local", alloc.lambda_local),
      KEY_DBL("alloc.epsilon", alloc.epsilon),
      KEY_INT("alloc.seed", alloc.global_seed, uint64_t),
      KEY_BOOL("alloc.use_local", alloc.use_local),
      KEY_DBL("beta", beta),
      Key{"dormant.variant", true, [](const RunConfig& c) { return to_string(c.dormant.variant); },
          [](RunConfig& c, const std::string& v) { c.dormant.variant = parse_dormant_variant(v); }},
      KEY_DBL("dormant.tau", dormant.tau),
      KEY_INT("dormant.interval", dormant.reset_interval, int64_t),
      KEY_INT("dormant.batch", dormant.sample_batch, int),
      KEY_DBL("dormant.delta_scale", dormant.delta_scale),
      KEY_INT("dormant.window", dormant.state_window, int),
      KEY_DBL("sac.gamma", sac.gamma),
      Key{"sac.target_entropy", true, [](const RunConfig& c) { return fmt_double(c.sac.target_entropy); },
          [](RunConfig& c, const std::string& v) { c.sac.target_entropy = to_double("sac.target_entropy", v, true); }},
      KEY_DBL("sac.polyak", sac.polyak),
      KEY_INT("sac.batch", sac.batch, int),
      KEY_INT("sac.buffer", sac.buffer_capacity, int64_t),
      KEY_INT("sac.exploratory_steps", sac.exploratory_steps, int64_t),
      KEY_DBL("sac.lr", sac.lr),
      Key{"sac.actor_hidden", true, [](const RunConfig& c) { return fmt_widths(c.sac.actor_hidden); },
          [](RunConfig& c, const std::string& v) { c.sac.actor_hidden = to_widths("sac.actor_hidden", v); }},
      Key{"sac.critic_hidden", true, [](const RunConfig& c) { return fmt_widths(c.sac.critic_hidden); },
          [](RunConfig& c, const std::string& v) { c.sac.critic_hidden = to_widths("sac.critic_hidden", v); }},
      KEY_DBL("sac.leaky_slope", sac.leaky_slope),
      KEY_DBL("sac.init_temperature", sac.init_temperature),
      KEY_DBL("sac.log_std_min", sac.log_std_min),
      KEY_DBL("sac.log_std_max", sac.log_std_max),
      KEY_BOOL("sac.reset_critics", sac.reset_critics),
      KEY_INT("steps_per_task", steps_per_task, int64_t),
      KEY_INT("eval.interval", eval_interval, int64_t),
      KEY_INT("eval.episodes", eval_episodes, int),
      KEY_INT("log.interval", log_interval, int64_t),
      KEY_INT("seed", seed, uint64_t),
      Key{"out", false, [](const RunConfig& c) { return c.out; }, [](RunConfig& c, const std::string& v) { c.out = v; }},
      Key{"baseline_cache", false, [](const RunConfig& c) { return c.baseline_cache; },
          [](RunConfig& c, const std::string& v) { c.baseline_cache = v; }},
  };
  return k;
}

#undef KEY_INT
#undef KEY_DBL
#undef KEY_BOOL

}  // namespace

void RunConfig::validate() const {
  if (tasks < 2) throw config_error("suite.tasks must be >= 2");
  if (repeats < 1) throw config_error("suite.repeats must be >= 1");
  if (embed_dim < 8) throw config_error("embed.dim must be >= 8");
  if (!(alloc.lambda_global > 0.0) || !(alloc.lambda_local > 0.0)) throw config_error("alloc lambdas must be > 0");
  if (!(alloc.epsilon >= 0.0)) throw config_error("alloc.epsilon must be >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw config_error("beta must be in [0, 1]");
  dormant.validate();
  sac.validate();
  if (sac.buffer_capacity < sac.batch) throw config_error("sac.batch must not exceed sac.buffer");
  if (steps_per_task < 1) throw config_error("steps_per_task must be >= 1");
  if (eval_interval < 1 || steps_per_task % eval_interval != 0)
    throw config_error("eval.interval must be >= 1 and divide steps_per_task");
  if (eval_episodes < 1) throw config_error("eval.episodes must be >= 1");
  if (log_interval < 1) throw config_error("log.interval must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& k : keys()) s += std::string(k.name) + " = " + k.get(*this) + "\n";
  return s;
}

uint64_t RunConfig::hash() const {
  std::string s;
  for (const auto& k : keys())
    if (k.affects_results) s += std::string(k.name) + "=" + k.get(*this) + ";";
  return fnv1a(s);
}

uint64_t RunConfig::actor_seed() const { return derive_seed(seed, 0x6163746f72ULL); }
uint64_t RunConfig::eval_seed() const { return derive_seed(seed, 0x6576616cULL); }
uint64_t RunConfig::task_seed(int task_index) const {
  return derive_seed(seed, 0x7461736bULL, static_cast<uint64_t>(task_index));
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const Error& e) {
      throw config_error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace ssde
