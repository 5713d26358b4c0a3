#include "bsdelab/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace bsdelab {

ConfigError::ConfigError(int l, int c, const std::string& what)
    : std::runtime_error(fmt::format("config:{}:{}: {}", l, c, what)), line(l), column(c) {}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"figure-kq", "table2", "continuum", "classify", "psi-path"};
  return names;
}

namespace {

struct Value {
  std::string text;
  int line, column;
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(line, column, msg); }

  double number() const {
    double v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || !std::isfinite(v)) fail(fmt::format("'{}' is not a finite number", text));
    return v;
  }
  std::uint64_t unsigned_int() const {
    std::uint64_t v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail(fmt::format("'{}' is not a non-negative integer", text));
    return v;
  }
  std::vector<std::string> items() const {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ',')) {
      const auto b = cur.find_first_not_of(" \t");
      const auto e = cur.find_last_not_of(" \t");
      if (b == std::string::npos) fail("empty list item");
      out.push_back(cur.substr(b, e - b + 1));
    }
    if (out.empty()) fail("empty list");
    return out;
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& s : items()) out.push_back(Value{s, line, column}.number());
    return out;
  }
  bool boolean() const {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    fail(fmt::format("'{}' is not a boolean", text));
  }
};

using Setter = std::function<void(ExperimentConfig&, const Value&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s{
      {"spec",
       {{"kind",
         [](ExperimentConfig& c, const Value& v) {
           try {
             c.spec.kind = kind_from_name(v.text);
           } catch (const std::exception&) {
             v.fail(fmt::format("unknown kind '{}'", v.text));
           }
         }},
        {"q",
         [](ExperimentConfig& c, const Value& v) {
           c.spec.q = v.number();
           c.spec_q_set = true;
         }},
        {"level", [](ExperimentConfig& c, const Value& v) { c.spec.level = v.number(); }},
        {"a", [](ExperimentConfig& c, const Value& v) { c.spec.a = v.number(); }},
        {"b", [](ExperimentConfig& c, const Value& v) { c.spec.b = v.number(); }},
        {"c", [](ExperimentConfig& c, const Value& v) { c.spec.c = v.number(); }},
        {"T", [](ExperimentConfig& c, const Value& v) { c.spec.T = v.number(); }},
        {"measure",
         [](ExperimentConfig& c, const Value& v) {
           if (v.text == "P")
             c.spec.measure = Measure::P;
           else if (v.text == "Tilde")
             c.spec.measure = Measure::Tilde;
           else
             v.fail(fmt::format("measure must be P or Tilde, got '{}'", v.text));
         }}}},
      {"ensemble",
       {{"paths",
         [](ExperimentConfig& c, const Value& v) {
           const auto n = v.unsigned_int();
           if (n < 1000) v.fail("paths must be at least 1000");
           c.n_paths = static_cast<Index>(n);
         }},
        {"seed", [](ExperimentConfig& c, const Value& v) { c.seed = v.unsigned_int(); }},
        {"seeds",
         [](ExperimentConfig& c, const Value& v) {
           c.seeds.clear();
           for (const auto& s : v.items()) c.seeds.push_back(Value{s, v.line, v.column}.unsigned_int());
         }},
        {"coarse_steps",
         [](ExperimentConfig& c, const Value& v) {
           const auto n = v.unsigned_int();
           if (n < 2 || n % 2 || n > 4096) v.fail("coarse_steps must be even and in [2, 4096]");
           c.coarse_steps = static_cast<int>(n);
         }},
        {"ratio",
         [](ExperimentConfig& c, const Value& v) {
           c.ratio = v.number();
           if (!(c.ratio > 0 && c.ratio < 1)) v.fail("ratio must lie in (0,1)");
         }},
        {"gap",
         [](ExperimentConfig& c, const Value& v) {
           c.gap = v.number();
           if (!(c.gap > 0)) v.fail("gap must be positive");
         }}}},
      {"run",
       {{"suite",
         [](ExperimentConfig& c, const Value& v) {
           const auto& n = suite_names();
           if (std::find(n.begin(), n.end(), v.text) == n.end())
             v.fail(fmt::format("unknown suite '{}' (expected one of {})", v.text, fmt::join(n, ", ")));
           c.suite = v.text;
         }},
        {"out",
         [](ExperimentConfig& c, const Value& v) {
           if (v.text.empty()) v.fail("out must not be empty");
           c.out = v.text;
         }},
        {"q",
         [](ExperimentConfig& c, const Value& v) {
           c.q = v.number();
           if (!(c.q < 1)) v.fail("q must be < 1");
         }},
        {"b_offsets",
         [](ExperimentConfig& c, const Value& v) {
           c.b_offsets = v.numbers();
           for (double b : c.b_offsets)
             if (b < 0) v.fail("b_offsets must be non-negative");
         }},
        {"c_values",
         [](ExperimentConfig& c, const Value& v) {
           c.c_values = v.numbers();
           for (double x : c.c_values)
             if (!(x > 0)) v.fail("c_values must be positive");
         }},
        {"kq_points",
         [](ExperimentConfig& c, const Value& v) {
           const auto n = v.unsigned_int();
           if (n < 2 || n > 100000) v.fail("kq_points must lie in [2, 100000]");
           c.kq_points = static_cast<int>(n);
         }},
        {"refinement",
         [](ExperimentConfig& c, const Value& v) {
           const auto n = v.unsigned_int();
           if (n > 6) v.fail("refinement must be at most 6");
           c.refinement = static_cast<int>(n);
         }},
        {"exponent", [](ExperimentConfig& c, const Value& v) { c.exponent = v.boolean(); }}}}};
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  c.text = text;
  const auto& sch = schema();
  std::string section;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line = raw;
    const auto cpos = line.find_first_of("#;");
    if (cpos != std::string::npos) line.erase(cpos);
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t");
    const int col = static_cast<int>(b) + 1;
    if (line[b] == '[') {
      if (line[e] != ']') throw ConfigError(lineno, static_cast<int>(e) + 1, "expected ']' to close the section");
      section = line.substr(b + 1, e - b - 1);
      if (!sch.count(section)) throw ConfigError(lineno, col + 1, fmt::format("unknown section '{}'", section));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, col, "expected 'key = value'");
    if (section.empty()) throw ConfigError(lineno, col, "key outside of any section");
    auto kend = line.find_last_not_of(" \t", eq == 0 ? 0 : eq - 1);
    if (eq == b || kend == std::string::npos || kend < b) throw ConfigError(lineno, col, "missing key");
    const std::string key = line.substr(b, kend - b + 1);
    const auto& keys = sch.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(lineno, col, fmt::format("unknown key '{}' in [{}]", key, section));
    if (!seen.insert(section + "." + key).second)
      throw ConfigError(lineno, col, fmt::format("duplicate key '{}' in [{}]", key, section));
    const auto vb = line.find_first_not_of(" \t", eq + 1);
    if (vb == std::string::npos) throw ConfigError(lineno, static_cast<int>(eq) + 2, fmt::format("missing value for '{}'", key));
    const Value v{line.substr(vb, e - vb + 1), lineno, static_cast<int>(vb) + 1};
    it->second(c, v);
  }
  if (c.seeds.empty()) c.seeds = {c.seed};
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(0, 0, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  MprSpec s = c.spec;
  if (!c.spec_q_set) s.q = c.q;
  try {
    validate(s);
  } catch (const std::exception& e) {
    throw ConfigError(0, 0, e.what());
  }
  if (!(c.q < 1)) throw ConfigError(0, 0, "q must be < 1");
  if (c.gap >= c.spec.T / 2) throw ConfigError(0, 0, "gap must be below T/2");
  if (c.suite == "table2" && !(c.q < 0)) throw ConfigError(0, 0, "table2 needs q < 0");
  if (c.suite == "continuum") {
    if (!(c.q < 1) || c.q == 0) throw ConfigError(0, 0, "continuum needs q < 1 and q != 0");
    if (c.spec.kind != MprKind::Zero && c.spec.kind != MprKind::Constant)
      throw ConfigError(0, 0, "continuum supports the Zero and Constant kinds");
  }
  if (c.seeds.empty()) throw ConfigError(0, 0, "no seeds");
}

std::string format_config(const ExperimentConfig& c) {
  std::string out = "[spec]\n";
  out += fmt::format("kind = {}\n", kind_name(c.spec.kind));
  if (c.spec_q_set) out += fmt::format("q = {:.17g}\n", c.spec.q);
  out += fmt::format("level = {:.17g}\na = {:.17g}\nb = {:.17g}\nc = {:.17g}\nT = {:.17g}\nmeasure = {}\n", c.spec.level,
                     c.spec.a, c.spec.b, c.spec.c, c.spec.T, c.spec.measure == Measure::P ? "P" : "Tilde");
  out += "\n[ensemble]\n";
  out += fmt::format("paths = {}\nseed = {}\nseeds = {}\ncoarse_steps = {}\nratio = {:.17g}\ngap = {:.17g}\n", c.n_paths,
                     c.seed, fmt::join(c.seeds, ", "), c.coarse_steps, c.ratio, c.gap);
  out += "\n[run]\n";
  std::vector<std::string> bo, cv;
  for (double b : c.b_offsets) bo.push_back(fmt::format("{:.17g}", b));
  for (double x : c.c_values) cv.push_back(fmt::format("{:.17g}", x));
  out += fmt::format("suite = {}\nout = {}\nq = {:.17g}\nb_offsets = {}\nc_values = {}\nkq_points = {}\nrefinement = {}\nexponent = {}\n",
                     c.suite, c.out, c.q, fmt::join(bo, ", "), fmt::join(cv, ", "), c.kq_points, c.refinement,
                     c.exponent ? "true" : "false");
  return out;
}

}  // namespace bsdelab
