#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "bsdelab/clock.hpp"
#include "bsdelab/functionals.hpp"
#include "bsdelab/grid.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/stats.hpp"

using namespace bsdelab;

TEST_CASE("philox known answers") {
  auto z = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(z[0] == 0x6627e8d5u);
  CHECK(z[1] == 0xe169c58du);
  CHECK(z[2] == 0xbc57ac4cu);
  CHECK(z[3] == 0x9b00dbd8u);
  auto f = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(f[0] == 0x408f276du);
  CHECK(f[1] == 0x41c83b0eu);
  CHECK(f[2] == 0xa20bc7c6u);
  CHECK(f[3] == 0x6d5451fdu);
}

TEST_CASE("normals from the counter generator look standard") {
  CounterRng rng(7, 3, Stream::aux);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal(static_cast<std::uint64_t>(i));
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 4 / std::sqrt(double(n)));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(static_cast<std::uint64_t>(i));
    REQUIRE(u > 0);
    REQUIRE(u < 1);
  }
}

TEST_CASE("grid layout") {
  SUBCASE("halving down to 2^-20") {
    auto g = build_grid(1, 4, 0.5, std::ldexp(1.0, -20));
    CHECK(g.nodes[0] == 0);
    CHECK(g.nodes[1] == 0.25);
    CHECK(g.nodes[2] == 0.5);
    CHECK(g.nodes[3] == 0.75);
    CHECK(g.nodes[4] == 0.875);
    CHECK(g.nodes[g.size() - 1] == 1 - std::ldexp(1.0, -20));
    CHECK(g.half == 2);
    // T/2 plus the clustered nodes down to T - gap
    CHECK(g.size() - g.half == 20);
    for (Index i = 1; i < g.size(); ++i) CHECK(g.nodes[i] > g.nodes[i - 1]);
    for (Index i = g.half + 1; i + 1 < g.size(); ++i)
      CHECK((1 - g.nodes[i]) / (1 - g.nodes[i - 1]) == doctest::Approx(0.5));
  }
  SUBCASE("one clustering step") {
    auto g = build_grid(1, 2, 0.5, 0.25);
    REQUIRE(g.size() == 3);
    CHECK(g.nodes[0] == 0);
    CHECK(g.nodes[1] == 0.5);
    CHECK(g.nodes[2] == 0.75);
  }
  SUBCASE("rejections") {
    CHECK_THROWS(build_grid(0, 4, 0.5, 0.01));
    CHECK_THROWS(build_grid(std::nan(""), 4, 0.5, 0.01));
    CHECK_THROWS(build_grid(1, 4, 1.0, 0.01));
    CHECK_THROWS(build_grid(1, 4, 0.0, 0.01));
    CHECK_THROWS(build_grid(1, 1, 0.5, 0.01));
    CHECK_THROWS(build_grid(1, 4, 0.5, 0.3));
    CHECK_NOTHROW(build_grid(1, 4, 0.5, 0.25));
  }
}

TEST_CASE("sample_paths") {
  auto g = default_grid();
  CHECK_THROWS(sample_paths(g, 0, 1));
  auto a = sample_paths(g, 1000, 42);
  auto b = sample_paths(g, 1000, 42);
  CHECK(a.increments == b.increments);
  auto c = sample_paths(g, 1000, 43);
  CHECK(a.increments != c.increments);

  auto e = sample_paths(g, 100000, 11);
  Eigen::VectorXd wT = e.w_at(g.size() - 1);
  const double T = g.nodes[g.size() - 1];
  auto m = mean_se(wT);
  CHECK(std::abs(m.mean) < 3 * std::sqrt(1.0 / 1e5));
  const double var = (wT.array() - m.mean).square().mean();
  CHECK(var == doctest::Approx(T).epsilon(0.02));
}

TEST_CASE("results do not depend on the worker count") {
  auto g = default_grid();
  setenv("BSDELAB_WORKERS", "1", 1);
  auto a = sample_paths(g, 3000, 5);
  auto ca = hitting_time(a, 0.5, 0.7);
  setenv("BSDELAB_WORKERS", "3", 1);
  auto b = sample_paths(g, 3000, 5);
  auto cb = hitting_time(b, 0.5, 0.7);
  unsetenv("BSDELAB_WORKERS");
  CHECK(a.increments == b.increments);
  CHECK(ca.H == cb.H);
}

TEST_CASE("ensemble container round trip") {
  auto e = with_drift(sample_paths(build_grid(1, 4, 0.5, 0.01), 17, 9), 0.3);
  std::stringstream ss;
  write_ensemble(e, ss);
  auto r = read_ensemble(ss);
  CHECK(r.n_paths == 17);
  CHECK(r.seed == 9);
  CHECK(r.grid.nodes == e.grid.nodes);
  CHECK(r.grid.half == e.grid.half);
  CHECK(r.increments == e.increments);
  CHECK(r.drift == e.drift);
  std::stringstream bad("garbage");
  CHECK_THROWS(read_ensemble(bad));
}

TEST_CASE("ito integrals") {
  auto g = build_grid(1, 200, 0.9, std::ldexp(1.0, -20));
  auto e = sample_paths(g, 100000, 3);
  auto zero = ito_integral(e, [](Index, Index, double, double) { return 0.0; });
  CHECK(zero.integral.cwiseAbs().maxCoeff() == 0);
  auto one = ito_integral(e, [](Index, Index, double, double) { return 1.0; });
  auto W = e.w();
  CHECK((one.integral - W).cwiseAbs().maxCoeff() < 1e-12);
  auto lin = ito_integral(e, [](Index, Index, double t, double) { return t; });
  const Eigen::VectorXd I = lin.terminal_integral();
  const double lhs = I.array().square().mean();
  CHECK(lhs == doctest::Approx(1.0 / 3).epsilon(0.03));
  // isometry against the grid quadrature, within 3 SE
  const double quad = lin.qv(0, lin.last());
  auto sq = mean_se(Eigen::VectorXd(I.array().square()));
  CHECK(std::abs(sq.mean - quad) < 3 * sq.se);
  for (Index j = 1; j < lin.qv.cols(); ++j) CHECK(lin.qv(0, j) >= lin.qv(0, j - 1));

  auto bad = ito_integral(e, [](Index p, Index j, double, double) { return (p == 5 && j == 3) ? std::nan("") : 1.0; });
  CHECK(bad.flag[5] == PathFlag::nan);
  CHECK(std::isnan(bad.integral(5, bad.last())));
  CHECK(bad.flag[4] == PathFlag::ok);
}

TEST_CASE("stochastic exponential") {
  auto g = default_grid();
  auto e = sample_paths(g, 100000, 21);
  auto z = stoch_exponential(ito_integral(e, [](Index, Index, double, double) { return 0.0; }));
  CHECK((z.expo.array() == 1.0).all());
  auto f = stoch_exponential(ito_integral(e, [](Index, Index, double, double) { return 1.0; }));
  CHECK((f.expo.array() > 0).all());
  const Eigen::VectorXd ET = f.expo.col(f.last());
  CHECK(ET.mean() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(ET.array().square().mean() == doctest::Approx(std::exp(1.0)).epsilon(0.05));
  const Eigen::VectorXd r = exponential_ratio(f, 3);
  CHECK((r.array() - (ET.array() / f.expo.col(3).array())).abs().maxCoeff() < 1e-9);
}

TEST_CASE("hitting clock") {
  auto g = default_grid();
  auto e = sample_paths(g, 100000, 77);
  auto c = hitting_time(e, 0.0, 1.0);
  CHECK(c.censored_fraction() < 1e-3);
  for (Index p = 0; p < c.n_paths(); ++p) {
    REQUIRE(c.H[p] > 0);
    REQUIRE(c.tau[p] > 0.5);
    REQUIRE(c.tau[p] < 1.0);
    // int_{T/2}^tau dt/(T-t) evaluated analytically
    REQUIRE(std::log(0.5 / (1 - c.tau[p])) == doctest::Approx(c.H[p]).epsilon(1e-12));
  }
  for (double cc : {0.0, 0.5}) {
    const double theta = cc * cc * std::numbers::pi * std::numbers::pi / 8;
    const double m = (theta * c.H).array().exp().mean();
    CHECK(m == doctest::Approx(1 / std::cos(cc * std::numbers::pi / 2)).epsilon(0.02));
  }
  CHECK(c.H.mean() == doctest::Approx(1.0).epsilon(0.02));

  // drifted clock: E[H] = tanh(mu)/mu
  auto d = hitting_time(e, 1.0, 1.0);
  const double mu = std::numbers::pi / std::sqrt(8.0);
  CHECK(d.H.mean() == doctest::Approx(exit_mean(mu)).epsilon(0.02));
  CHECK_THROWS(hitting_time(e, 0.0, 1.5));
}

TEST_CASE("exit time formulas") {
  CHECK(exit_moment(0) == 1);
  CHECK(exit_moment(std::numbers::pi * std::numbers::pi / 32) == doctest::Approx(std::sqrt(2.0)));
  CHECK(std::isinf(exit_moment(std::numbers::pi * std::numbers::pi / 8)));
  // drift raises the explosion point to pi^2/8 + mu^2/2
  CHECK(std::isfinite(exit_moment(std::numbers::pi * std::numbers::pi / 8, 1.0)));
  CHECK(exit_survival(0) == 1);
  CHECK(exit_survival(5) == doctest::Approx(4 / std::numbers::pi * std::exp(-5 * std::numbers::pi * std::numbers::pi / 8)).epsilon(1e-6));
  const double th = 0.9;
  CHECK(exit_moment_truncated(th, 200) == doctest::Approx(exit_moment(th)).epsilon(1e-9));
  CHECK(exit_moment_truncated(th, 0) == 1);
  CHECK(exit_moment_truncated(th, 1.0) < exit_moment(th));
}

TEST_CASE("girsanov weights") {
  auto g = default_grid();
  auto e = sample_paths(g, 100000, 5);
  auto z = girsanov_weights(ito_integral(e, [](Index, Index, double, double) { return 0.0; }));
  CHECK((z.weights.array() == 1.0).all());
  CHECK_FALSE(z.warning);
  const double th = 0.4;
  auto w = girsanov_weights(ito_integral(e, [&](Index, Index, double, double) { return -th; }));
  CHECK_FALSE(w.warning);
  const Eigen::VectorXd wT = e.w_at(g.size() - 1);
  auto [m, se] = reweighted_mean(w, wT);
  CHECK(std::abs(m - (-th * g.nodes[g.size() - 1])) < 3 * se);
  auto u = girsanov_weights(ito_integral(e, [](Index, Index, double, double) { return -1.0; }));
  auto [m2, se2] = reweighted_mean(u, Eigen::VectorXd(wT.array().exp()));
  // E[exp(-W - 1/2) exp(W)] = e^{-1/2}
  CHECK(m2 == doctest::Approx(std::exp(-0.5)).epsilon(0.03));
}

TEST_CASE("divergence heuristic separates tail indices") {
  const Index n = 100000;
  CounterRng rng(1, 0, Stream::aux);
  Eigen::VectorXd heavy(n), light(n);
  for (Index i = 0; i < n; ++i) {
    const double ex = -std::log(rng.uniform(static_cast<std::uint64_t>(i)));
    heavy[i] = ex / 0.8;  // Pareto index 0.8
    light[i] = ex / 3.0;  // Pareto index 3
  }
  auto h = divergence_test(heavy);
  CHECK(h.diverged);
  CHECK(h.hill == doctest::Approx(0.8).epsilon(0.1));
  auto l = divergence_test(light);
  CHECK_FALSE(l.diverged);
  CHECK(l.hill > 2.5);
  REQUIRE(l.growth.size() == 2);
  CHECK(l.growth[0] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("binning and uniformity helpers") {
  Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(1000, -1, 1);
  Eigen::VectorXd v = s.cwiseAbs();
  auto bins = bin_means(s, v, 100, 20);
  CHECK(bins.size() == 10);
  for (auto& b : bins) CHECK(b.count == 100);
  auto up = tail_trend(bins, true);
  CHECK(up.slope == doctest::Approx(1.0).epsilon(0.05));
  CHECK(up.growing);
  Eigen::VectorXd u = (Eigen::VectorXd::LinSpaced(1000, 0, 999).array() + 0.5) / 1000;
  CHECK(ks_uniform(u) < 1e-3);
  CHECK(normal_cdf(normal_quantile(0.3)) == doctest::Approx(0.3));
}
