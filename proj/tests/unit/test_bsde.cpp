#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "bsdelab/bsde.hpp"
#include "bsdelab/rng.hpp"

using namespace bsdelab;
using std::numbers::pi;

namespace {

const PathEnsemble& ens20k() {
  static const PathEnsemble ens = sample_paths(default_grid(1.0), 20000, 303);
  return ens;
}

double constant_psi(double q, double level, double T, double t) { return -0.5 * q * level * level * (T - t); }

}  // namespace

TEST_CASE("driver") {
  CHECK(driver(0.0, 1.3, 0.7) == doctest::Approx(0.5 * 1.3 * 1.3));
  CHECK(driver(-1.0, 0.0, 0.5) == doctest::Approx(0.125));
  CHECK(driver(0.5, 0.2, 0.3) == doctest::Approx(0.02 - 0.25 * 0.25));
  CHECK(default_eps0(-1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(default_eps0(0) == 1.0);

  CounterRng rng(1, 0, Stream::aux);
  const Index n = 20000;
  Eigen::VectorXd z(n), l(n);
  for (Index i = 0; i < n; ++i) {
    z[i] = 5 * rng.normal(static_cast<std::uint64_t>(2 * i));
    l[i] = 3 * rng.normal(static_cast<std::uint64_t>(2 * i + 1));
  }
  for (double q : {-8.0, -1.0, -0.1, 0.0, 0.3, 0.9}) {
    const auto v = driver_props(q, z, l, default_eps0(q));
    CHECK_MESSAGE(v.all(), "q = " << q);
    CHECK(v.samples == n);
  }
  CHECK_THROWS(driver_props(1.0, z, l, 1.0));
}

TEST_CASE("log power summand") {
  Eigen::VectorXd i(2), v(2);
  i << 0.3, -1.0;
  v << 0.5, 2.0;
  const auto s = log_power_summand(i, v, -2.0);
  CHECK(s[0] == doctest::Approx(0.6 + 0.5));
  CHECK(s[1] == doctest::Approx(-2.0 + 2.0));
}

TEST_CASE("constant market price of risk") {
  const auto& ens = ens20k();
  const double q = -1, level = 0.5;
  const auto s = MprSpec::constant(level);
  const auto pu = psi_unconditional(s, q, ens);
  CHECK_FALSE(pu.diverged);
  CHECK(pu.estimate == doctest::Approx(constant_psi(q, level, 1, 0)).epsilon(0.01));

  const auto tr = psi_path(s, q, ens);
  CHECK(tr.provenance == Provenance::Explicit);
  double worst = 0;
  for (Index j = 0; j < tr.psi.cols(); ++j)
    worst = std::max(worst, std::abs(tr.psi.col(j).mean() - constant_psi(q, level, 1, tr.grid.nodes[j])));
  CHECK(worst <= 0.02 * constant_psi(q, level, 1, 0));
  CHECK(tr.psi.col(tr.psi.cols() - 1).cwiseAbs().maxCoeff() == 0.0);

  const auto rs = driver_residual(tr, s, q, ens);
  CHECK(rs.median < 5e-3);

  const auto opt = optimizers(tr, s, q, 1.0, ens);
  CHECK(opt.terminal_product.mean == doctest::Approx(opt.initial_product).epsilon(0.02));
  CHECK(opt.strategy(0, 0) == doctest::Approx((1 - q) * (tr.z(0, 0) + level)));

  for (double qq : {0.0, 0.5}) {
    const auto p2 = psi_unconditional(s, qq, ens);
    if (qq == 0)
      CHECK(p2.estimate == 0.0);
    else
      CHECK(p2.estimate == doctest::Approx(constant_psi(qq, level, 1, 0)).epsilon(0.02));
  }
}

TEST_CASE("zero market price of risk") {
  const auto& ens = ens20k();
  const auto tr = psi_path(MprSpec::zero(), -2.0, ens);
  CHECK(tr.psi.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(psi_unconditional(MprSpec::zero(), -2.0, ens).estimate == 0.0);
  std::ostringstream os;
  write_triple_csv(tr, os, 2);
  const std::string text = os.str();
  CHECK(text.rfind("path,t,psi,z\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * tr.grid.size());
}

TEST_CASE("NoSol moment flagged, scaled version finite") {
  const auto& ens = ens20k();
  CHECK(psi_unconditional(MprSpec::nosol(-1), -1, ens).diverged);
  const auto half = psi_unconditional(MprSpec::nosol(-1).scaled_by(0.5), -1, ens);
  CHECK_FALSE(half.diverged);
  CHECK(std::isfinite(half.estimate));
}

TEST_CASE("conditional T/2 estimates sit above the analytic bounds") {
  const PathEnsemble inner = sample_paths(default_grid(1.0), 8000, 17);
  for (auto s : {MprSpec::alpha_arccos(-1), MprSpec::sigma_gamma(-1)}) {
    const double dir = supremum_state(s) > 0 ? 1 : -1;
    double prev = -INFINITY;
    for (double w : {0.0, 0.75, 1.5}) {
      const auto e = psi_conditional_halfT(s, -1, dir * w, inner);
      CHECK(std::isfinite(e.lower_bound));
      CHECK(e.estimate >= e.lower_bound - 3 * e.se);
      CHECK(e.estimate >= prev);
      prev = e.estimate;
    }
  }
}

TEST_CASE("xi functionals") {
  const auto one = XiFunctional::constant(2.0);
  CHECK(one.is_constant());
  CHECK(xi_conditional(one, 1.0, 0.3, 0.7) == 2.0);
  CHECK(xi_log_gradient(one, 1.0, 0.3, 0.7) == 0.0);

  const auto g = XiFunctional::of_terminal([](double w) { return 1.5 + std::tanh(w); }, 0.5, 2.5);
  CHECK_FALSE(g.is_constant());
  CHECK(xi_conditional(g, 1.0, 1.0, 0.4) == doctest::Approx(1.5 + std::tanh(0.4)));
  // odd part averages out from w = 0
  CHECK(xi_conditional(g, 1.0, 0.0, 0.0) == doctest::Approx(1.5).epsilon(1e-9));
  const double h = 1e-5;
  const double fd = (std::log(xi_conditional(g, 1.0, 0.5, 0.3 + h)) - std::log(xi_conditional(g, 1.0, 0.5, 0.3 - h))) / (2 * h);
  CHECK(xi_log_gradient(g, 1.0, 0.5, 0.3) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("multiplicative representation") {
  const PathEnsemble ens = sample_paths(default_grid(1.0), 4000, 404);
  MultRepOptions opt;
  opt.refinement = 2;
  const auto r = mult_rep(XiFunctional::constant(1.0), 4.0, ens, opt);
  CHECK(r.mean_xi == doctest::Approx(1.0));
  CHECK(r.median_error() < 1e-3);
  CHECK(r.tau.maxCoeff() < 1.0);
  CHECK(r.tau.minCoeff() > 0.0);

  const auto m = tau_exp_moment(1.0, 4.0, sample_paths(default_grid(1.0), 20000, 405));
  CHECK(m.mean == doctest::Approx(2.0).epsilon(0.03));

  // a non-constant functional of W_T is reproduced as well
  const auto xg = XiFunctional::of_terminal([](double w) { return 1.0 + 0.5 / (1.0 + w * w); }, 1.0, 1.5);
  opt.refinement = 1;
  const auto rg = mult_rep(xg, 3.0, ens, opt);
  CHECK(rg.median_error() < 5e-3);
}

TEST_CASE("continuum of solutions") {
  const PathEnsemble ens = sample_paths(default_grid(1.0), 4000, 505);
  const auto s = MprSpec::constant(0.5);
  MultRepOptions opt;
  opt.refinement = 1;
  double prev = -INFINITY;
  for (double b : {0.0, 0.5, 1.0}) {
    const auto c = continuum(s, -1, b, ens, opt);
    CHECK(std::abs(c.psi0 - c.psi0_formula) <= c.psi0_tolerance);
    CHECK(c.psi0 > prev);
    prev = c.psi0;
    CHECK(c.martingale_passes == (b == 0));
    CHECK(driver_residual(c.triple, s, -1, ens).median < 5e-3);
  }
  CHECK_THROWS(continuum(MprSpec::reverting(), -1, 0.5, ens, opt));
}
