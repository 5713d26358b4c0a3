#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "bsdelab/config.hpp"
#include "bsdelab/suites.hpp"

using namespace bsdelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bsdelab_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(BSDELAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

void expect_error(const std::string& text, int line, int column) {
  try {
    parse_config(text);
    FAIL("no error for: " << text);
  } catch (const ConfigError& e) {
    CHECK_MESSAGE(e.line == line, e.what());
    CHECK_MESSAGE(e.column == column, e.what());
  }
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "# demo\n"
      "[spec]\n"
      "kind = AlphaArccos\n"
      "q = -2   ; construction\n"
      "c = 0.5\n"
      "\n"
      "[ensemble]\n"
      "paths = 5000\n"
      "seeds = 3, 4\n"
      "[run]\n"
      "suite = table2\n"
      "b_offsets = 0, 0.25\n"
      "exponent = true\n");
  CHECK(c.spec.kind == MprKind::AlphaArccos);
  CHECK(c.spec.q == -2);
  CHECK(c.spec_q_set);
  CHECK(c.spec.c == 0.5);
  CHECK(c.n_paths == 5000);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.suite == "table2");
  CHECK(c.b_offsets == std::vector<double>{0, 0.25});
  CHECK(c.exponent);

  const auto d = parse_config("");
  CHECK(d.seeds == std::vector<std::uint64_t>{d.seed});
  CHECK(d.suite == "figure-kq");

  const auto back = parse_config(format_config(c));
  CHECK(format_config(back) == format_config(c));
}

TEST_CASE("config errors carry line and column") {
  expect_error("[spec]\nkind = Banana\n", 2, 8);
  expect_error("[spec]\nlevel = 0.5x\n", 2, 9);
  expect_error("[run]\nfoo = 1\n", 2, 1);
  expect_error("[nope]\n", 1, 2);
  expect_error("[run\n", 1, 4);
  expect_error("kind = Zero\n", 1, 1);
  expect_error("[run]\n  suite\n", 2, 3);
  expect_error("[run]\nsuite =\n", 2, 8);
  expect_error("[run]\nq = 0.2\nq = 0.3\n", 3, 1);
  expect_error("[run]\nq = 1.5\n", 2, 5);
  expect_error("[ensemble]\npaths = 10\n", 2, 9);
  expect_error("[ensemble]\ncoarse_steps = 7\n", 2, 16);
  expect_error("[run]\nsuite = table3\n", 2, 9);

  ExperimentConfig bad = parse_config("[spec]\nkind = NoSol\nq = 0.5\n");
  CHECK_THROWS_AS(validate(bad), ConfigError);
  ExperimentConfig cont = parse_config("[spec]\nkind = Reverting\n[run]\nsuite = continuum\n");
  CHECK_THROWS_AS(validate(cont), ConfigError);
  // the construction parameter falls back to the run exponent
  ExperimentConfig ok = parse_config("[spec]\nkind = NoSol\n[run]\nq = -3\n");
  CHECK_NOTHROW(validate(ok));
  CHECK(effective_spec(ok).q == -3);
}

TEST_CASE("k_q curve data") {
  const auto pts = kq_curve(99);
  REQUIRE(pts.size() == 99);
  CHECK(pts.front().p == doctest::Approx(0.01));
  CHECK(pts.back().p == doctest::Approx(0.99));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].kq > 0);
    if (i) CHECK(pts[i].kq > pts[i - 1].kq);
    const double d = pts[i].q - std::sqrt(pts[i].q * pts[i].q - pts[i].q);
    CHECK(std::abs(pts[i].kq - 0.5 * d * d) <= 1e-12 * std::max(1.0, pts[i].kq));
  }
  const std::string csv = kq_csv({{0.5, -1.0, kq(-1.0)}});
  CHECK(csv == "p,q,k_q\n0.5,-1,2.9142135623730949\n");
}

TEST_CASE("expected verdict pattern") {
  CHECK(expected_table2(MprKind::NoSol, 0.5) == Solution::Bounded);
  CHECK(expected_table2(MprKind::NoSol, 1.0) == Solution::None);
  CHECK(expected_table2(MprKind::AlphaArccos, 1.0) == Solution::Unbounded);
  CHECK(expected_table2(MprKind::AlphaArccos, 1.5) == Solution::None);
  CHECK(expected_table2(MprKind::SigmaGamma, 1.5) == Solution::Unbounded);
  CHECK_THROWS(expected_table2(MprKind::Zero, 1.0));
}

TEST_CASE("command line: exit codes and reproducibility") {
  const fs::path a = scratch("a"), b = scratch("b");
  CHECK(run("--suite figure-kq --out " + a.string()) == 0);
  CHECK(run("--suite figure-kq --out " + b.string()) == 0);
  CHECK(slurp(a / "figure_kq.csv") == slurp(b / "figure_kq.csv"));
  CHECK(slurp(a / "checks.json") == slurp(b / "checks.json"));
  CHECK(fs::exists(a / "manifest.json"));
  const std::string manifest = slurp(a / "manifest.json");
  CHECK(manifest.find("\"wall_time_s\"") != std::string::npos);
  CHECK(manifest.find("\"seed\"") != std::string::npos);
  CHECK(manifest.find("\"versions\"") != std::string::npos);
  CHECK(run("report " + a.string()) == 0);

  const fs::path empty = scratch("empty");
  fs::create_directories(empty);
  CHECK(run("report " + empty.string()) == 2);
  CHECK(run("report " + scratch("missing").string()) == 2);

  const fs::path cfg = scratch("bad.ini");
  write(cfg, "[spec]\nkind = Constant\nlevel = ");
  CHECK(run("--config " + cfg.string()) == 2);
  write(cfg, "[run]\nunknown = 1\n");
  CHECK(run("--config " + cfg.string()) == 2);
  CHECK(run("--config " + scratch("none.ini").string()) == 2);
  CHECK(run("--suite nope") == 2);
  CHECK(run("--paths 5") == 2);

  // a deliberately broken artifact makes the report fail
  write(a / "figure_kq.csv", "p,q,k_q\n0.5,-1,3\n");
  CHECK(run("report " + a.string()) == 1);
}

TEST_CASE("command line: small verdict matrix is reproducible") {
  const fs::path a = scratch("t2a"), b = scratch("t2b");
  const int ra = run("--suite table2 --paths 2000 --seed 3 --out " + a.string());
  const int rb = run("--suite table2 --paths 2000 --seed 3 --out " + b.string());
  CHECK((ra == 0 || ra == 1));
  CHECK(ra == rb);
  CHECK(slurp(a / "table2.json") == slurp(b / "table2.json"));
  std::ostringstream os;
  CHECK(report(a, os) == ra);
  CHECK(os.str().find("SigmaGamma") != std::string::npos);

  const fs::path c = scratch("cont");
  CHECK(run("--suite continuum --paths 2000 --out " + c.string()) >= 0);
  CHECK(fs::exists(c / "continuum.json"));
}
