#include "nls/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "nls/errors.hpp"

namespace nls::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Recursive-descent evaluator: expr := term (('+'|'-') term)*,
// term := unary (('*'|'/') unary)*, unary := '-' unary | power,
// power := primary ('^' unary)?, primary := number | 'pi' | '(' expr ')'.
class ExprParser {
 public:
  explicit ExprParser(const std::string& s) : s_(s) {}

  double parse() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + s_.substr(pos_) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("cannot evaluate '" + s_ + "': " + why);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  double power() {
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (s_.compare(pos_, 2, "pi") == 0) {
      pos_ += 2;
      return std::numbers::pi;
    }
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

// Reads keys and remembers which were used so leftovers can be reported.
class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  const std::string* find(const std::string& sec, const std::string& key) {
    auto s = raw_.sections.find(sec);
    if (s == raw_.sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(sec + "." + key);
    return &k->second;
  }
  double number(const std::string& sec, const std::string& key, double fallback) {
    const std::string* v = find(sec, key);
    const double x = v ? eval_expression(*v) : fallback;
    echo_[sec + "." + key] = fmt::format("{}", x);
    return x;
  }
  bool has(const std::string& sec, const std::string& key) const {
    auto s = raw_.sections.find(sec);
    return s != raw_.sections.end() && s->second.count(key) > 0;
  }
  long long integer(const std::string& sec, const std::string& key, long long fallback) {
    const std::string* v = find(sec, key);
    if (!v) {
      echo_[sec + "." + key] = std::to_string(fallback);
      return fallback;
    }
    const double x = eval_expression(*v);
    if (x != std::floor(x) || std::abs(x) > 9e15) throw ConfigError(sec + "." + key + " must be an integer");
    echo_[sec + "." + key] = std::to_string(static_cast<long long>(x));
    return static_cast<long long>(x);
  }
  std::vector<double> list(const std::string& sec, const std::string& key, std::vector<double> fallback) {
    const std::string* v = find(sec, key);
    std::vector<double> out = v ? eval_list(*v) : std::move(fallback);
    std::string e;
    for (double x : out) e += (e.empty() ? "" : " ") + fmt::format("{}", x);
    echo_[sec + "." + key] = e;
    return out;
  }
  std::string text(const std::string& sec, const std::string& key, const std::string& fallback) {
    const std::string* v = find(sec, key);
    std::string out = v ? *v : fallback;
    echo_[sec + "." + key] = out;
    return out;
  }
  void check_all_used() const {
    for (const auto& [sec, keys] : raw_.sections) {
      for (const auto& [key, value] : keys) {
        if (!used_.count(sec + "." + key)) throw ConfigError("unknown configuration key '" + sec + "." + key + "'");
      }
    }
  }
  std::map<std::string, std::string> echo() const { return echo_; }

 private:
  const RawConfig& raw_;
  std::set<std::string> used_;
  std::map<std::string, std::string> echo_;
};

std::vector<int> to_ints(const std::vector<double>& v, const std::string& what) {
  std::vector<int> out;
  for (double x : v) {
    if (x != std::floor(x) || x < 1 || x > 1e9) throw ConfigError(what + " entries must be positive integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

void require_monotone(const std::vector<double>& v, const std::string& what) {
  if (v.size() < 3) throw ConfigError(what + " needs at least 3 entries to fit a slope");
  const bool inc = std::is_sorted(v.begin(), v.end(), std::less_equal<>());
  const bool dec = std::is_sorted(v.begin(), v.end(), std::greater_equal<>());
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] == v[i - 1]) throw ConfigError(what + " entries must be strictly monotone");
  }
  if (!inc && !dec) throw ConfigError(what + " entries must be strictly monotone");
}

Scheme parse_scheme(const std::string& s) {
  const std::string l = lower_case(s);
  if (l == "si") return Scheme::SI;
  if (l == "sii") return Scheme::SII;
  throw ConfigError("unknown scheme '" + s + "' (expected SI or SII)");
}

}  // namespace

double eval_expression(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError("empty numeric value");
  return ExprParser(t).parse();
}

std::vector<double> eval_list(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(eval_expression(tok));
  return out;
}

RawConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = lower_case(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      raw.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any section");
    const std::string key = lower_case(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (raw.sections[section].count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    raw.sections[section][key] = value;
  }
  return raw;
}

RawConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(RawConfig& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string sec = lower_case(trim(assignment.substr(0, dot)));
  const std::string key = lower_case(trim(assignment.substr(dot + 1, eq - dot - 1)));
  if (sec.empty() || key.empty()) throw ConfigError("override '" + assignment + "' has an empty section or key");
  raw.sections[sec][key] = trim(assignment.substr(eq + 1));
}

const std::set<std::string>& experiment_kinds() {
  static const std::set<std::string> kinds = {"simulate",  "converge-space", "converge-time", "converge-samples",
                                              "basis",     "pod-bench",      "localization"};
  return kinds;
}

int ExperimentConfig::steps() const { return static_cast<int>(std::llround(T / dt)); }

ExperimentConfig build_experiment_config(const RawConfig& raw, const std::string& kind_override) {
  Reader r(raw);
  ExperimentConfig c;
  c.kind = r.text("experiment", "kind", "");
  if (!kind_override.empty()) c.kind = kind_override;
  if (!experiment_kinds().count(c.kind)) throw ConfigError("unknown or missing experiment kind '" + c.kind + "'");

  c.dimension = static_cast<int>(r.integer("domain", "dimension", 1));
  if (c.dimension != 1 && c.dimension != 2) throw ConfigError("domain.dimension must be 1 or 2");
  const double pi = std::numbers::pi;
  const auto lo = r.list("domain", "lower", c.dimension == 1 ? std::vector<double>{-pi} : std::vector<double>{0.0, 0.0});
  const auto hi = r.list("domain", "upper", c.dimension == 1 ? std::vector<double>{pi} : std::vector<double>{1.0, 1.0});
  const auto cells = r.list("domain", "cells", {});
  auto per_axis = [&](const std::vector<double>& v, const std::string& what) {
    if (v.size() == 1) return std::array<double, 2>{v[0], v[0]};
    if (static_cast<int>(v.size()) == c.dimension) return std::array<double, 2>{v[0], c.dimension == 2 ? v[1] : 0.0};
    throw ConfigError(what + " needs 1 or " + std::to_string(c.dimension) + " entries");
  };
  const auto l2 = per_axis(lo, "domain.lower");
  const auto u2 = per_axis(hi, "domain.upper");
  c.lower = {l2[0], c.dimension == 2 ? l2[1] : 0.0};
  c.upper = {u2[0], c.dimension == 2 ? u2[1] : 0.0};
  for (int a = 0; a < c.dimension; ++a) {
    if (!(c.upper[a] > c.lower[a])) throw ConfigError("domain bounds are empty on axis " + std::to_string(a));
  }
  if (cells.empty()) throw ConfigError("domain.cells is required");
  const auto n2 = per_axis(cells, "domain.cells");
  const auto ci = to_ints({n2[0], c.dimension == 2 ? n2[1] : 1.0}, "domain.cells");
  c.cells = {ci[0], c.dimension == 2 ? ci[1] : 1};
  if (c.cells[0] < 2 || (c.dimension == 2 && c.cells[1] < 2)) throw ConfigError("domain.cells must be at least 2 per axis");

  c.eps = r.number("physics", "eps", 1.0 / 16.0);
  c.lambda = r.number("physics", "lambda", 0.0);
  c.T = r.number("physics", "t", 1.0);
  c.dt = r.number("physics", "dt", 1e-3);
  if (!(c.eps > 0.0)) throw ConfigError("physics.eps must be positive");
  if (!(c.lambda >= 0.0)) throw ConfigError("physics.lambda must be nonnegative");
  if (!(c.T > 0.0)) throw ConfigError("physics.t must be positive");
  if (!(c.dt > 0.0)) throw ConfigError("physics.dt must be positive");
  auto check_steps = [&](double dt, const std::string& what) {
    const double n = c.T / dt;
    if (std::abs(n - std::round(n)) > 1e-9 * n) throw ConfigError(what + " does not divide physics.t into whole steps");
  };
  check_steps(c.dt, "physics.dt");

  const Point mid{0.5 * (c.lower[0] + c.upper[0]), 0.5 * (c.lower[1] + c.upper[1])};
  const auto center = r.list("initial", "center", {mid[0], mid[1]});
  c.initial_center = {center.at(0), center.size() > 1 ? center[1] : 0.0};
  c.initial_width = r.number("initial", "width", c.dimension == 1 ? 20.0 : 5.0);
  c.initial_amplitude = r.number("initial", "amplitude",
                                 c.dimension == 1 ? std::pow(10.0 * pi, 0.25) : std::pow(10.0 / pi, 0.25));
  if (!(c.initial_width > 0.0)) throw ConfigError("initial.width must be positive");

  c.schemes.clear();
  {
    std::istringstream in(r.text("scheme", "scheme", "SI"));
    std::string tok;
    while (in >> tok) {
      if (lower_case(tok) == "both") {
        c.schemes = {Scheme::SI, Scheme::SII};
      } else {
        c.schemes.push_back(parse_scheme(tok));
      }
    }
    if (c.schemes.empty()) throw ConfigError("scheme.scheme is empty");
  }
  const std::string space = lower_case(r.text("scheme", "space", "fem"));
  if (space == "fem") c.space = SpaceKind::FEM;
  else if (space == "msfem") c.space = SpaceKind::MsFEM;
  else throw ConfigError("scheme.space must be fem or msfem");
  c.ratio = static_cast<int>(r.integer("scheme", "ratio", 6));
  if (c.ratio < 1) throw ConfigError("scheme.ratio must be positive");
  const std::string comp = lower_case(r.text("scheme", "compression", "l2"));
  if (comp == "l2") c.compression = Compression::L2;
  else if (comp == "clement") c.compression = Compression::Clement;
  else throw ConfigError("scheme.compression must be l2 or clement");
  const std::string norm = lower_case(r.text("scheme", "normalization", "coarse_mass"));
  if (norm == "coarse_mass") c.normalization = Normalization::CoarseMass;
  else if (norm == "unit") c.normalization = Normalization::Unit;
  else throw ConfigError("scheme.normalization must be coarse_mass or unit");
  c.dense_node_limit = static_cast<int>(r.integer("scheme", "dense_node_limit", 4096));

  c.potential_tag = lower_case(r.text("potential", "tag", "harmonic"));
  for (const char* key : {"coefficient", "eps", "eps1", "eps2", "sigma", "beta", "m", "mean"}) {
    if (r.has("potential", key)) c.potential_params.scalars[key] = r.number("potential", key, 0.0);
  }
  for (const char* key : {"breakpoints", "levels"}) {
    if (r.has("potential", key)) c.potential_params.lists[key] = r.list("potential", key, {});
  }
  if (r.has("potential", "side")) {
    const std::string side = lower_case(r.text("potential", "side", "left"));
    if (side != "left" && side != "right") throw ConfigError("potential.side must be left or right");
    c.potential_params.scalars["side"] = side == "left" ? 0.0 : 1.0;
  }
  if (c.potential_tag == "kl_gaussian") {
    c.kernel.variance = r.number("potential", "variance", 1.0);
    const auto len = r.list("potential", "lengths", {1.0});
    c.kernel.lengths = {len.at(0), len.size() > 1 ? len[1] : len[0]};
    c.kl_modes = static_cast<int>(r.integer("potential", "modes", 5));
  }
  c.xi = r.list("potential", "xi", {});

  c.sampling_method = lower_case(r.text("sampling", "method", "qmc"));
  if (c.sampling_method != "qmc" && c.sampling_method != "mc" && c.sampling_method != "both") {
    throw ConfigError("sampling.method must be qmc, mc or both");
  }
  c.samples = r.integer("sampling", "n", 64);
  c.shifts = static_cast<int>(r.integer("sampling", "shifts", 1));
  c.replicates = static_cast<int>(r.integer("sampling", "replicates", 8));
  c.seed = static_cast<std::uint64_t>(r.integer("sampling", "seed", 20240601));
  c.generator = r.integer("sampling", "generator", 1571);
  c.vector_file = r.text("sampling", "vector_file", "");
  if (c.samples < 1) throw ConfigError("sampling.n must be positive");
  if (c.shifts < 0 || c.replicates < 1) throw ConfigError("sampling.shifts must be >= 0 and sampling.replicates >= 1");

  const auto rc = r.list("reference", "cells", {});
  if (!rc.empty()) {
    const auto rc2 = per_axis(rc, "reference.cells");
    const auto ri = to_ints({rc2[0], c.dimension == 2 ? rc2[1] : 1.0}, "reference.cells");
    c.ref_cells = {ri[0], c.dimension == 2 ? ri[1] : 1};
  } else {
    c.ref_cells = c.cells;
  }
  c.ref_dt = r.number("reference", "dt", c.dt / 4.0);
  c.ref_samples = r.integer("reference", "n", 8192);
  if (!(c.ref_dt > 0.0)) throw ConfigError("reference.dt must be positive");
  check_steps(c.ref_dt, "reference.dt");

  c.study_cells = to_ints(r.list("study", "cells", {}), "study.cells");
  c.study_coarse_cells = to_ints(r.list("study", "coarse_cells", {}), "study.coarse_cells");
  c.study_dt = r.list("study", "dt", {});
  for (double v : r.list("study", "n", {})) {
    if (v != std::floor(v) || v < 1) throw ConfigError("study.n entries must be positive integers");
    c.study_samples.push_back(static_cast<std::int64_t>(v));
  }
  c.study_lambdas = r.list("study", "lambdas", {});

  c.cadence = static_cast<int>(r.integer("output", "cadence", 0));
  if (c.cadence < 0) throw ConfigError("output.cadence must be nonnegative");

  c.pod_Q = static_cast<int>(r.integer("pod", "q", 200));
  c.pod_mp = static_cast<int>(r.integer("pod", "m_p", 3));
  c.pod_online = r.integer("pod", "online", 800);
  c.pod_fem_samples = static_cast<int>(r.integer("pod", "fem_samples", 4));

  c.basis_node = static_cast<int>(r.integer("basis", "node", -1));
  c.basis_layers = static_cast<int>(r.integer("basis", "layers", 8));

  c.workers = static_cast<int>(r.integer("run", "workers", 1));
  if (c.workers < 1) throw ConfigError("run.workers must be positive");

  r.check_all_used();

  // Kind-specific requirements, checked before any computation starts.
  auto need_ratio = [&](const std::array<int, 2>& fine, int k, const std::string& what) {
    for (int a = 0; a < c.dimension; ++a) {
      if (fine[a] % k != 0) throw ConfigError(what + ": fine cell count not divisible by ratio on axis " + std::to_string(a));
      if (fine[a] / k < 2) throw ConfigError(what + ": coarse mesh would have fewer than 2 cells on axis " + std::to_string(a));
    }
  };
  if (c.space == SpaceKind::MsFEM && c.kind != "converge-space") need_ratio(c.cells, c.ratio, "scheme.ratio");
  if (c.kind == "converge-space") {
    if (c.space == SpaceKind::FEM) {
      std::vector<double> h(c.study_cells.begin(), c.study_cells.end());
      require_monotone(h, "study.cells");
      for (int n : c.study_cells) {
        if (n >= c.ref_cells[0] || c.ref_cells[0] % n != 0) {
          throw ConfigError("reference.cells must be a strictly finer multiple of every study.cells entry");
        }
      }
      if (!(c.ref_dt < c.dt)) throw ConfigError("reference.dt must be smaller than physics.dt");
    } else {
      std::vector<double> h(c.study_coarse_cells.begin(), c.study_coarse_cells.end());
      require_monotone(h, "study.coarse_cells");
      for (int n : c.study_coarse_cells) {
        if (n >= c.cells[0] || c.cells[0] % n != 0) {
          throw ConfigError("study.coarse_cells entries must divide domain.cells and be coarser");
        }
      }
      if (!(c.ref_dt <= c.dt)) throw ConfigError("reference.dt must not exceed physics.dt");
    }
  }
  if (c.kind == "converge-time") {
    require_monotone(c.study_dt, "study.dt");
    for (double dt : c.study_dt) {
      check_steps(dt, "study.dt entry");
      if (!(c.ref_dt < dt)) throw ConfigError("reference.dt must be smaller than every study.dt entry");
    }
  }
  if (c.kind == "converge-samples") {
    std::vector<double> n(c.study_samples.begin(), c.study_samples.end());
    require_monotone(n, "study.n");
    for (auto v : c.study_samples) {
      if (v >= c.ref_samples) throw ConfigError("reference.n must exceed every study.n entry");
      if (c.study_samples.back() % v != 0) throw ConfigError("study.n entries must divide the largest entry");
    }
  }
  if (c.kind == "localization" && c.study_lambdas.empty()) c.study_lambdas = {c.lambda};
  if (c.kind == "pod-bench" && (c.pod_Q < c.pod_mp + 1 || c.pod_online < 1)) {
    throw ConfigError("pod.q must be at least pod.m_p + 1 and pod.online positive");
  }
  c.echo = r.echo();
  c.echo["experiment.kind"] = c.kind;
  return c;
}

}  // namespace nls::harness
