#include "doctest.h"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "bsdelab/bmo.hpp"
#include "bsdelab/mpr.hpp"
#include "bsdelab/rng.hpp"

using namespace bsdelab;
using std::numbers::pi;

namespace {

const PathEnsemble& small_ensemble() {
  static const PathEnsemble ens = sample_paths(default_grid(1.0), 20000, 101);
  return ens;
}

}  // namespace

TEST_CASE("spec validation and text round trip") {
  CHECK_THROWS(validate(MprSpec::nosol(0.5)));
  CHECK_THROWS(validate(MprSpec::alpha_arccos(0.0)));
  CHECK_THROWS(validate(MprSpec::sigma_gamma(0.2)));
  CHECK_THROWS(validate(MprSpec::scaled(0.0, 1.0, -1)));
  CHECK_THROWS(validate(MprSpec::constant(NAN)));
  CHECK_NOTHROW(validate(MprSpec::tilde(-3.0)));

  MprSpec s = MprSpec::scaled(0.7, 0.25, -2.5, 2.0).scaled_by(0.5).under(Measure::Tilde);
  s.seed = 42;
  const MprSpec t = spec_from_text(to_text(s));
  CHECK(t.kind == MprKind::Scaled);
  CHECK(t.a == s.a);
  CHECK(t.b == s.b);
  CHECK(t.q == s.q);
  CHECK(t.T == s.T);
  CHECK(t.c == 0.5);
  CHECK(t.seed == 42);
  CHECK(t.measure == Measure::Tilde);
  CHECK_THROWS(spec_from_text("kind = Banana\n"));
  CHECK_THROWS(spec_from_text("kind = Zero\nq = x\n"));
}

TEST_CASE("arccos weight") {
  CHECK(alpha_of(-INFINITY, 1.0) == doctest::Approx(1.0));
  CHECK(alpha_of(INFINITY, 1.0) == doctest::Approx(0.0));
  CHECK(alpha_of(0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(alpha_of(0.3, 1.0) < alpha_of(-0.3, 1.0));
}

TEST_CASE("probability integral transform of W_T/2 is uniform") {
  const PathEnsemble ens = sample_paths(default_grid(1.0), 100000, 5);
  const Eigen::VectorXd w = ens.w_at(ens.grid.half);
  Eigen::VectorXd u(w.size());
  for (Index i = 0; i < w.size(); ++i) u[i] = normal_cdf(std::sqrt(2.0) * w[i]);
  CHECK(ks_uniform(u) < 1.63 / std::sqrt(1e5));

  const SigmaSampler sg = make_sigma_sampler(1.0);
  Eigen::VectorXd fu(w.size());
  for (Index i = 0; i < w.size(); ++i) fu[i] = sg.cdf(sg.sigma_of(w[i]));
  CHECK(ks_uniform(fu) < 1.63 / std::sqrt(1e5));
}

TEST_CASE("sigma sampler") {
  const SigmaSampler sg = make_sigma_sampler(1.0);
  auto f = [](double s) { return std::exp(-1.0 / (1.0 - s)); };
  const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.5, 1.0, 15, 1e-13);
  CHECK(sg.c0 == doctest::Approx(1.0 / mass).epsilon(1e-9));
  CHECK(sg.cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(sg.cdf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (double u : {0.01, 0.3, 0.77, 0.999}) CHECK(sg.cdf(sg.inverse(u)) == doctest::Approx(u).epsilon(1e-9));
  for (double a = 0.55; a < 1.0; a += 0.1) CHECK(sg.cdf(a) < sg.cdf(a + 0.04));

  // closed form against quadrature of the density times the clock power
  for (int rho = 2; rho <= 6; ++rho) {
    auto g = [&](double s) { return sg.c0 * std::exp(-1.0 / (1.0 - s)) * std::pow(0.5 / (1.0 - s), rho); };
    const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.5, 1.0, 15, 1e-13);
    CHECK(sigma_clock_moment(1.0, rho) == doctest::Approx(q).epsilon(1e-8));
  }
  CHECK(sigma_clock_moment(1.0, 2) == doctest::Approx(sg.c0 * std::exp(-2.0) / 4).epsilon(1e-12));
  CHECK(sigma_clock_moment(1.0, 2) == doctest::Approx(1.80).epsilon(0.01));

  // Monte Carlo over sigma alone
  CounterRng rng(9, 0, Stream::aux);
  const int n = 1000000;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = std::pow(0.5 / (1.0 - sg.inverse(rng.uniform(static_cast<std::uint64_t>(i)))), 2);
  const auto e = mean_se(v);
  CHECK(e.mean == doctest::Approx(sigma_clock_moment(1.0, 2)).epsilon(0.03));
}

TEST_CASE("grid constructions") {
  const auto& ens = small_ensemble();
  const auto W = ens.w();
  const Index N = ens.grid.size() - 1;

  const auto z = lambda_zero(ens);
  CHECK(mvt_terminal(z).cwiseAbs().maxCoeff() == 0.0);

  const auto c = lambda_constant(ens, 0.5);
  const double span = ens.grid.nodes[N];  // the grid stops at T - gap
  CHECK((mvt_terminal(c).array() - 0.25 * span).abs().maxCoeff() < 1e-14);
  CHECK((c.terminal_integral() - 0.5 * W.col(N)).cwiseAbs().maxCoeff() < 1e-12);

  const auto r = lambda_reverting(ens);
  bool bound = true;
  for (Index p = 0; p < ens.n_paths; ++p) bound = bound && r.terminal_qv()[p] <= W.row(p).cwiseAbs().maxCoeff() + 1e-12;
  CHECK(bound);
  // E int |W_t| dt = (2/3) sqrt(2/pi); left-point sums need a fine grid for this
  const PathEnsemble fine = sample_paths(build_grid(1.0, 1024, 0.95, ens.grid.gap), 20000, 102);
  CHECK(mean_se(lambda_reverting(fine).terminal_qv()).mean == doctest::Approx(2.0 / 3.0 * std::sqrt(2 / pi)).epsilon(0.02));

  PathEnsemble flat = ens;
  flat.increments.row(0).setZero();
  const auto rf = lambda_reverting(flat);
  CHECK(rf.terminal_qv()[0] == 0.0);
  CHECK(rf.terminal_integral()[0] == 0.0);
}

TEST_CASE("clock constructions") {
  const auto& ens = small_ensemble();
  const double q = -1;

  const auto ns = lambda_nosol(ens, q);
  CHECK(ns.terminal_integral().cwiseAbs().maxCoeff() <= pi / (2 * std::sqrt(-q)) + 1e-12);
  // (pi^2/4) E[H] with E[H] = 1
  CHECK(mean_se(mvt_terminal(ns)).mean == doctest::Approx(pi * pi / 4).epsilon(0.02));

  const auto al = lambda_alpha(ens, q);
  const Eigen::VectorXd w_half = ens.w_at(ens.grid.half);
  bool measurable = true;
  for (Index p = 0; p < ens.n_paths; ++p) measurable = measurable && al.mark[p] == alpha_of(w_half[p], 1.0);
  CHECK(measurable);
  CHECK(al.mark.minCoeff() >= 0.0);
  CHECK(al.mark.maxCoeff() < 1.0);
  Eigen::VectorXd logs = -q * al.terminal_integral() - 0.5 * q * al.terminal_qv();
  const auto m = mean_se_log(logs);
  CHECK(m.mean <= 2 * std::exp(pi * std::sqrt(-q) / 2) + 3 * m.se);

  const auto [sg_f, sg] = lambda_sigma(ens, q);
  bool sig_measurable = true, sig_range = true;
  for (Index p = 0; p < ens.n_paths; ++p) {
    sig_measurable = sig_measurable && sg_f.mark[p] == sg.sigma_of(w_half[p]);
    sig_range = sig_range && sg_f.mark[p] > 0.5 && sg_f.mark[p] <= 1.0;
  }
  CHECK(sig_measurable);
  CHECK(sig_range);
  CHECK(sg_f.terminal_integral().cwiseAbs().maxCoeff() <= pi / 2 + 1e-12);
}

TEST_CASE("NoSol moment diverges, its half scaling does not") {
  const auto& ens = small_ensemble();
  const auto f = lambda_nosol(ens, -1);
  const Eigen::VectorXd logs = f.terminal_integral() + 0.5 * f.terminal_qv();
  CHECK(divergence_test(logs).diverged);
  const auto h = scale(f, 0.5);
  const Eigen::VectorXd logh = h.terminal_integral() + 0.5 * h.terminal_qv();
  CHECK_FALSE(divergence_test(logh).diverged);
  // Kazamaki-type bound 1/cos(c pi / 2) on E exp((c^2 pi^2/8) H) = E exp(c^2 <.>/2)
  const auto e = mean_se_log(0.5 * h.terminal_qv());
  CHECK(e.mean <= 1 / std::cos(0.25 * pi) + 3 * e.se);
}

TEST_CASE("tilde construction") {
  const auto& ens = small_ensemble();
  for (double b : {0.5, -1.0}) {
    const auto f = lambda_tilde(ens, b, Measure::P);
    const Eigen::VectorXd adj = f.terminal_integral() + b * f.terminal_qv();
    CHECK(adj.cwiseAbs().maxCoeff() <= pi / std::sqrt(8.0) + 1e-9);
  }
  const auto r = realize(MprSpec::tilde(0.5), ens);
  FamilyOptions fo;
  fo.include_limit = false;
  bool below = true;
  for (const auto& m : stopping_family(r, ens, fo))
    for (const auto& bin : bin_means(m.stat, m.qv)) below = below && bin.mean <= pi / (std::sqrt(2.0) * 0.5) + 3 * bin.se;
  CHECK(below);

  // under the tilde measure the clock is driftless and the moment threshold sits at |c| = 1
  const auto ft = lambda_tilde(ens, 0.5, Measure::Tilde);
  CHECK_FALSE(divergence_test(0.49 * ft.terminal_qv()).diverged);
  CHECK(divergence_test(1.69 * ft.terminal_qv(), moment_gate()).diverged);
}

TEST_CASE("scaled construction") {
  const double q = -1;
  const double k = 2.0;
  const auto ch = choose_scaled(q, k, ScaledMode::below_threshold);
  CHECK(ch.a > 0);
  CHECK(k < q * q - q / 2 - q * std::sqrt(q * q - q - 2 * ch.a * ch.a));
  CHECK(k / (ch.a * ch.a) - ch.b * ch.b / 2 < 1);
  CHECK(ch.b == doctest::Approx((q - std::sqrt(q * q - q - 2 * ch.a * ch.a)) / ch.a).epsilon(1e-12));
  CHECK_THROWS(choose_scaled(q, kq(q), ScaledMode::below_threshold));
  CHECK_THROWS(choose_scaled(0.5, 1.0, ScaledMode::below_threshold));

  const auto at = choose_scaled(q, kq(q), ScaledMode::at_threshold);
  CHECK(std::abs(kq(q) / (at.a * at.a) - at.b * at.b / 2 - 1) < 1e-12);
  CHECK(q * at.b / at.a - q / (2 * at.a * at.a) - at.b * at.b / 2 < 1);

  const auto& ens = small_ensemble();
  const auto sr = lambda_scaled(ens, q, k);
  const auto tl = lambda_tilde(ens, sr.b, Measure::P);
  CHECK((sr.f.terminal_integral() - tl.terminal_integral() / sr.a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("k_q") {
  CHECK(kq(-1) == doctest::Approx(0.5 * std::pow(-1 - std::sqrt(2.0), 2)).epsilon(1e-15));
  CHECK(kq(-1) == doctest::Approx(2.9142).epsilon(1e-4));
  for (int i = 0; i < 20; ++i) {
    const double q = -0.1 - i * (7.9 / 19);
    CHECK(std::abs(kq(q) - kq_numeric(q)) < 1e-10 * std::max(1.0, kq(q)));
    CHECK(kq(q) > -q / 2);
  }
  CHECK_THROWS(kq(0.5));
}
