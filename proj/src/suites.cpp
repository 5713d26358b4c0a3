#include "bsdelab/suites.hpp"

#include <boost/version.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "bsdelab/bsde.hpp"

#ifndef BSDELAB_VERSION
#define BSDELAB_VERSION "0.0.0"
#endif

namespace bsdelab {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

MprSpec effective_spec(const ExperimentConfig& c) {
  MprSpec s = c.spec;
  if (!c.spec_q_set) s.q = c.q;
  return s;
}

TimeGrid config_grid(const ExperimentConfig& c) { return build_grid(c.spec.T, c.coarse_steps, c.ratio, c.gap); }

std::vector<KqPoint> kq_curve(int n) {
  std::vector<KqPoint> pts;
  for (int i = 1; i <= n; ++i) {
    const double p = static_cast<double>(i) / (n + 1);
    const double q = p / (p - 1);
    pts.push_back({p, q, kq(q)});
  }
  return pts;
}

std::string kq_csv(const std::vector<KqPoint>& pts) {
  std::string out = "p,q,k_q\n";
  for (const auto& x : pts) out += fmt::format("{:.17g},{:.17g},{:.17g}\n", x.p, x.q, x.kq);
  return out;
}

Solution expected_table2(MprKind kind, double c) {
  const double a = std::abs(c);
  switch (kind) {
    case MprKind::NoSol: return a < 1 ? Solution::Bounded : Solution::None;
    case MprKind::AlphaArccos: return a < 1 ? Solution::Bounded : a == 1 ? Solution::Unbounded : Solution::None;
    case MprKind::SigmaGamma: return a < 1 ? Solution::Bounded : Solution::Unbounded;
    default: throw std::invalid_argument("expected_table2: not a table construction");
  }
}

namespace {

ordered_json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
  f << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json evidence_json(const std::vector<Verdict>& ev) {
  ordered_json a = ordered_json::array();
  for (const auto& v : ev) a.push_back({{"name", v.name}, {"passed", v.passed}, {"skipped", v.skipped}, {"detail", v.detail}});
  return a;
}

ordered_json interval_json(const ExponentInterval& iv) {
  ordered_json trail = ordered_json::array();
  for (const auto& m : iv.trail)
    trail.push_back({{"k", num(m.k)}, {"value", num(m.value)}, {"se", num(m.se)}, {"diverged", m.diverged}, {"worst", m.worst}});
  return {{"lo", num(iv.lo)}, {"hi", num(iv.hi)}, {"infinite", iv.infinite}, {"iterations", iv.iterations}, {"trail", trail}};
}

PathEnsemble ensemble(const ExperimentConfig& c, std::uint64_t seed) { return sample_paths(config_grid(c), c.n_paths, seed); }

SuiteResult figure_kq(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  SuiteResult r;
  const auto pts = kq_curve(c.kq_points);
  write_file(out / "figure_kq.csv", kq_csv(pts));
  r.files.push_back("figure_kq.csv");
  bool positive = true, increasing = true;
  double worst = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    positive = positive && pts[i].kq > 0;
    if (i) increasing = increasing && pts[i].kq > pts[i - 1].kq;
    const double d = pts[i].q - std::sqrt(pts[i].q * pts[i].q - pts[i].q);
    worst = std::max(worst, std::abs(pts[i].kq - 0.5 * d * d));
  }
  r.checks.push_back({"k_q positive", positive, fmt::format("{} points", pts.size())});
  r.checks.push_back({"k_q increasing in p", increasing, fmt::format("from {:.6g} to {:.6g}", pts.front().kq, pts.back().kq)});
  double worst_num = 0;
  for (const auto& x : pts) worst_num = std::max(worst_num, std::abs(x.kq - kq_numeric(x.q)) / std::max(1.0, x.kq));
  r.checks.push_back({"closed form against the minimisation", worst_num < 1e-10,
                      fmt::format("max relative gap {:.3g}", worst_num)});
  log << fmt::format("figure-kq: {} points, k_q in [{:.6g}, {:.6g}]\n", pts.size(), pts.front().kq, pts.back().kq);
  return r;
}

SuiteResult table2(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  SuiteResult r;
  const std::vector<MprSpec> bases{MprSpec::nosol(c.q, c.spec.T), MprSpec::alpha_arccos(c.q, c.spec.T),
                                   MprSpec::sigma_gamma(c.q, c.spec.T)};
  ordered_json j;
  j["q"] = c.q;
  j["c_values"] = c.c_values;
  j["constructions"] = {"NoSol", "AlphaArccos", "SigmaGamma"};
  ordered_json expected;
  for (const auto& b : bases) {
    ordered_json row = ordered_json::array();
    for (double x : c.c_values) row.push_back(solution_name(expected_table2(b.kind, x)));
    expected[kind_name(b.kind)] = row;
  }
  j["expected"] = expected;
  j["seeds"] = ordered_json::array();
  std::vector<std::vector<Solution>> first;
  bool matches = true, stable = true;
  for (std::size_t si = 0; si < c.seeds.size(); ++si) {
    const std::uint64_t seed = c.seeds[si];
    const auto ens = ensemble(c, seed);
    const auto clk = shared_clock(ens);
    ordered_json js{{"seed", seed}};
    ordered_json verdicts, evidence;
    std::vector<std::vector<Solution>> grid;
    for (const auto& b : bases) {
      ordered_json row = ordered_json::array(), ev = ordered_json::array();
      grid.emplace_back();
      for (double x : c.c_values) {
        const auto s = b.scaled_by(x);
        const auto cl = classify(realize(s, ens, clk), c.q, ens);
        grid.back().push_back(cl.verdict);
        row.push_back(solution_name(cl.verdict));
        ev.push_back(evidence_json(cl.evidence));
        matches = matches && cl.verdict == expected_table2(b.kind, x);
        log << fmt::format("table2 seed {}: {} c={} -> {}\n", seed, kind_name(b.kind), x, solution_name(cl.verdict));
      }
      verdicts[kind_name(b.kind)] = row;
      evidence[kind_name(b.kind)] = ev;
    }
    if (si == 0)
      first = grid;
    else
      stable = stable && grid == first;
    js["verdicts"] = verdicts;
    js["evidence"] = evidence;
    j["seeds"].push_back(js);
  }
  j["matches_expected"] = matches;
  j["stable_across_seeds"] = stable;
  write_file(out / "table2.json", dump(j));
  r.files.push_back("table2.json");
  r.checks.push_back({"verdict matrix matches the expected pattern", matches,
                      fmt::format("{} cells x {} seeds", 3 * c.c_values.size(), c.seeds.size())});
  r.checks.push_back({"verdicts stable across seeds", stable, fmt::format("{} seeds", c.seeds.size())});
  return r;
}

constexpr double kGridTolerance = 5e-3;

SuiteResult continuum_suite(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  SuiteResult r;
  const MprSpec s = effective_spec(c);
  const auto ens = ensemble(c, c.seed);
  MultRepOptions mo;
  mo.refinement = c.refinement;
  ordered_json j;
  j["kind"] = kind_name(s.kind);
  j["level"] = s.level;
  j["q"] = c.q;
  j["grid_tolerance"] = kGridTolerance;
  j["solutions"] = ordered_json::array();
  std::vector<double> psi0;
  bool within = true, residual_ok = true, martingale_ok = true;
  for (double b : c.b_offsets) {
    const auto res = continuum(s, c.q, b, ens, mo);
    const auto rs = driver_residual(res.triple, s, c.q, ens);
    const bool in_ci = std::abs(res.psi0 - res.psi0_formula) <= res.psi0_tolerance;
    within = within && in_ci;
    residual_ok = residual_ok && rs.median < kGridTolerance;
    martingale_ok = martingale_ok && (res.martingale_passes == (b == 0));
    psi0.push_back(res.psi0);
    j["solutions"].push_back({{"b", b},
                              {"c", num(res.c)},
                              {"psi0", num(res.psi0)},
                              {"psi0_se", num(res.psi0_se)},
                              {"psi0_tolerance", num(res.psi0_tolerance)},
                              {"psi0_formula", num(res.psi0_formula)},
                              {"martingale_mean", num(res.martingale.mean)},
                              {"martingale_se", num(res.martingale.se)},
                              {"martingale_passes", res.martingale_passes},
                              {"residual_median", num(rs.median)},
                              {"residual_p95", num(rs.p95)},
                              {"median_mismatch", num(res.median_mismatch)}});
    log << fmt::format("continuum b={}: psi0 {:.6g} (formula {:.6g}), martingale {:.4g}, residual median {:.3g}\n", b,
                       res.psi0, res.psi0_formula, res.martingale.mean, rs.median);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < psi0.size(); ++i) increasing = increasing && psi0[i] > psi0[i - 1];
  write_file(out / "continuum.json", dump(j));
  r.files.push_back("continuum.json");
  r.checks.push_back({"Psi_0 matches log(E[xi]+b)/(1-q)", within, fmt::format("{} offsets", psi0.size())});
  r.checks.push_back({"Psi_0 strictly increasing in b", increasing, fmt::format("{:.6g}", fmt::join(psi0, ", "))});
  r.checks.push_back({"martingale test passes only at b = 0", martingale_ok, ""});
  r.checks.push_back({"driver residual below grid tolerance", residual_ok, fmt::format("tolerance {}", kGridTolerance)});
  return r;
}

SuiteResult classify_suite(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  SuiteResult r;
  const MprSpec s = effective_spec(c);
  const auto ens = ensemble(c, c.seed);
  const auto real = realize(s, ens);
  ClassifyOptions co;
  co.exponent = c.exponent;
  const auto cl = classify(real, c.q, ens, co);
  ordered_json j;
  j["spec"] = to_text(s);
  j["q"] = c.q;
  j["verdict"] = solution_name(cl.verdict);
  j["evidence"] = evidence_json(cl.evidence);
  j["k_q"] = num(cl.kq_value);
  if (c.exponent) {
    j["exponent"] = interval_json(cl.exponent);
    j["side"] = cl.side;
  }
  const auto bmo = bmo_norm(real, ens);
  j["bmo"] = {{"value", num(bmo.value)},
              {"se", num(bmo.se)},
              {"upper", num(bmo.upper)},
              {"infinite", bmo.infinite},
              {"caveat", bmo.caveat}};
  write_file(out / "classify.json", dump(j));
  r.files.push_back("classify.json");
  r.checks.push_back({"classification", true, solution_name(cl.verdict)});
  log << fmt::format("classify {}: {}\n", kind_name(s.kind), solution_name(cl.verdict));
  return r;
}

SuiteResult psi_path_suite(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  SuiteResult r;
  const MprSpec s = effective_spec(c);
  const auto ens = ensemble(c, c.seed);
  const auto tr = psi_path(s, c.q, ens);
  std::ostringstream csv;
  write_triple_csv(tr, csv, 100);
  write_file(out / "psi_path.csv", csv.str());
  r.files.push_back("psi_path.csv");
  const auto pu = psi_unconditional(s, c.q, ens);
  ordered_json j;
  j["spec"] = to_text(s);
  j["q"] = c.q;
  j["psi0_unconditional"] = num(pu.estimate);
  j["psi0_se"] = num(pu.se);
  j["diverged"] = pu.diverged;
  j["psi0_path_mean"] = num(tr.psi.col(0).mean());
  j["warnings"] = tr.warnings;
  write_file(out / "psi_path.json", dump(j));
  r.files.push_back("psi_path.json");
  r.checks.push_back({"unconditional moment finite", !pu.diverged, fmt::format("Psi_0 {:.6g}", pu.estimate)});
  log << fmt::format("psi-path {}: Psi_0 {:.6g}\n", kind_name(s.kind), pu.estimate);
  return r;
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

SuiteResult run_suite(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  SuiteResult r;
  if (c.suite == "figure-kq")
    r = figure_kq(c, out, log);
  else if (c.suite == "table2")
    r = table2(c, out, log);
  else if (c.suite == "continuum")
    r = continuum_suite(c, out, log);
  else if (c.suite == "classify")
    r = classify_suite(c, out, log);
  else if (c.suite == "psi-path")
    r = psi_path_suite(c, out, log);
  else
    throw ConfigError(0, 0, fmt::format("unknown suite '{}'", c.suite));
  r.suite = c.suite;

  ordered_json checks;
  checks["suite"] = c.suite;
  checks["checks"] = ordered_json::array();
  for (const auto& k : r.checks) checks["checks"].push_back({{"name", k.name}, {"passed", k.passed}, {"detail", k.detail}});
  write_file(out / "checks.json", dump(checks));
  r.files.push_back("checks.json");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ordered_json m;
  m["suite"] = c.suite;
  m["seed"] = c.seed;
  m["seeds"] = c.seeds;
  m["paths"] = c.n_paths;
  m["versions"] = {{"bsdelab", BSDELAB_VERSION},
                   {"compiler", __VERSION__},
                   {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                   {"boost", BOOST_LIB_VERSION},
                   {"fmt", FMT_VERSION},
                   {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                                 NLOHMANN_JSON_VERSION_PATCH)}};
  m["files"] = r.files;
  m["config"] = format_config(c);
  m["wall_time_s"] = wall;
  m["timestamp"] = timestamp();
  write_file(out / "manifest.json", dump(m));
  return r;
}

namespace {

bool read_json(const fs::path& p, ordered_json& j) {
  std::ifstream f(p);
  if (!f) return false;
  try {
    j = ordered_json::parse(f);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

std::string cell(const std::string& verdict) {
  if (verdict == "BoundedSolution") return "bounded";
  if (verdict == "UnboundedSolution") return "unbounded";
  if (verdict == "NoSolution") return "no solution";
  return verdict;
}

}  // namespace

int report(const fs::path& dir, std::ostream& os) {
  if (!fs::is_directory(dir)) {
    os << fmt::format("report: '{}' is not a directory\n", dir.string());
    return 2;
  }
  int sections = 0;
  bool all = true;
  ordered_json checks;
  if (read_json(dir / "checks.json", checks) && checks.contains("checks")) {
    ++sections;
    os << fmt::format("suite {}\n", checks.value("suite", "?"));
    for (const auto& c : checks["checks"]) {
      const bool ok = c.value("passed", false);
      all = all && ok;
      os << fmt::format("  [{}] {}: {}\n", ok ? "PASS" : "FAIL", c.value("name", "?"), c.value("detail", ""));
    }
  }
  ordered_json t2;
  if (read_json(dir / "table2.json", t2)) {
    ++sections;
    const auto cv = t2["c_values"];
    for (const auto& s : t2["seeds"]) {
      os << fmt::format("verdict matrix, seed {}\n", s["seed"].get<std::uint64_t>());
      std::string head = fmt::format("  {:<12}", "");
      for (const auto& x : cv) head += fmt::format(" | c = {:<12}", x.get<double>());
      os << head << "\n";
      for (const auto& name : t2["constructions"]) {
        std::string line = fmt::format("  {:<12}", name.get<std::string>());
        for (const auto& v : s["verdicts"][name.get<std::string>()]) line += fmt::format(" | {:<16}", cell(v.get<std::string>()));
        os << line << "\n";
      }
    }
    os << fmt::format("  matches expected: {}, stable across seeds: {}\n", t2.value("matches_expected", false),
                      t2.value("stable_across_seeds", false));
  }
  std::ifstream csv(dir / "figure_kq.csv");
  if (csv) {
    std::string line;
    std::getline(csv, line);
    std::vector<KqPoint> pts;
    bool parsed = line == "p,q,k_q";
    while (parsed && std::getline(csv, line)) {
      KqPoint x{};
      if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &x.p, &x.q, &x.kq) != 3) parsed = false;
      pts.push_back(x);
    }
    if (parsed && !pts.empty()) {
      ++sections;
      bool inc = true, pos = true;
      double worst = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        pos = pos && pts[i].kq > 0;
        if (i) inc = inc && pts[i].kq > pts[i - 1].kq && pts[i].p > pts[i - 1].p;
        worst = std::max(worst, std::abs(pts[i].kq - kq(pts[i].q)));
      }
      os << fmt::format("k_q curve: {} points, p in [{:.4g}, {:.4g}], k_q in [{:.6g}, {:.6g}]\n", pts.size(), pts.front().p,
                        pts.back().p, pts.front().kq, pts.back().kq);
      os << fmt::format("  [{}] positive\n  [{}] increasing in p\n  [{}] closed form to 1e-12 (max gap {:.3g})\n",
                        pos ? "PASS" : "FAIL", inc ? "PASS" : "FAIL", worst <= 1e-12 ? "PASS" : "FAIL", worst);
      all = all && pos && inc && worst <= 1e-12;
    } else {
      os << "figure_kq.csv is malformed\n";
      all = false;
    }
  }
  ordered_json co;
  if (read_json(dir / "continuum.json", co)) {
    ++sections;
    os << "continuum of solutions\n";
    for (const auto& s : co["solutions"])
      os << fmt::format("  b = {:<5} Psi_0 = {} (formula {}), martingale test {}\n", s["b"].get<double>(), s["psi0"].dump(),
                        s["psi0_formula"].dump(), s["martingale_passes"].get<bool>() ? "passes" : "fails");
  }
  ordered_json cl;
  if (read_json(dir / "classify.json", cl)) {
    ++sections;
    os << fmt::format("classification: {}\n", cl.value("verdict", "?"));
    for (const auto& v : cl["evidence"])
      os << fmt::format("  {}: {}\n", v.value("name", "?"), v.value("detail", ""));
  }
  if (sections == 0) {
    os << fmt::format("report: no artifacts in '{}'\n", dir.string());
    return 2;
  }
  return all ? 0 : 1;
}

}  // namespace bsdelab
