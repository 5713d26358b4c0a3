#include "bsdelab/functionals.hpp"

#include <cmath>
#include <limits>

#include "bsdelab/parallel.hpp"

namespace bsdelab {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PathFunctionals ito_integral(const PathEnsemble& ens, const Integrand& theta) {
  const Index n = ens.n_paths;
  const Index m = ens.grid.size();
  PathFunctionals f;
  f.grid = ens.grid;
  f.integral.setZero(n, m);
  f.qv.setZero(n, m);
  f.state.resize(n, m);
  f.stop = Eigen::VectorXd::Constant(n, kNaN);
  f.mark = Eigen::VectorXd::Constant(n, kNaN);
  f.flag.assign(static_cast<std::size_t>(n), PathFlag::ok);
  parallel_for(n, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (std::ptrdiff_t p = b; p < e; ++p) {
      double w = 0, I = 0, Q = 0;
      f.state(p, 0) = 0;
      for (Index j = 0; j + 1 < m; ++j) {
        const double th = theta(p, j, ens.grid.nodes[j], w);
        const double dw = ens.increments(p, j);
        if (!std::isfinite(th)) {
          f.flag[static_cast<std::size_t>(p)] = PathFlag::nan;
          for (Index k = j + 1; k < m; ++k) f.integral(p, k) = f.qv(p, k) = kNaN;
          for (Index k = j + 1; k < m; ++k) f.state(p, k) = kNaN;
          break;
        }
        I += th * dw;
        Q += th * th * ens.grid.dt(j);
        w += dw;
        f.integral(p, j + 1) = I;
        f.qv(p, j + 1) = Q;
        f.state(p, j + 1) = w;
      }
    }
  });
  return f;
}

PathFunctionals scale(const PathFunctionals& f, double factor) {
  PathFunctionals out = f;
  out.integral *= factor;
  out.qv *= factor * factor;
  out.expo.resize(0, 0);
  return out;
}

PathFunctionals stoch_exponential(PathFunctionals f) {
  f.expo = (f.integral - 0.5 * f.qv).array().exp().matrix();
  return f;
}

Eigen::VectorXd exponential_ratio(const PathFunctionals& f, Index from) {
  const Index N = f.last();
  return ((f.integral.col(N) - f.integral.col(from)) - 0.5 * (f.qv.col(N) - f.qv.col(from))).array().exp().matrix();
}

WeightDiagnostics girsanov_weights(const PathFunctionals& f) {
  WeightDiagnostics d;
  d.weights = exponential_ratio(f, 0);
  double s = 0, s2 = 0;
  Index k = 0;
  for (Index p = 0; p < d.weights.size(); ++p) {
    if (!f.ok(p)) continue;
    s += d.weights[p];
    s2 += d.weights[p] * d.weights[p];
    ++k;
  }
  d.mean = k ? s / k : kNaN;
  d.se = k > 1 ? std::sqrt(std::max(0.0, s2 / k - d.mean * d.mean) / (k - 1)) : 0.0;
  d.warning = std::abs(d.mean - 1) > 5 * d.se && std::abs(d.mean - 1) > 1e-12;
  return d;
}

std::pair<double, double> reweighted_mean(const WeightDiagnostics& w, const Eigen::VectorXd& g) {
  const Eigen::ArrayXd y = w.weights.array() * g.array();
  const double n = static_cast<double>(y.size());
  const double m = y.mean();
  const double var = (y - m).square().sum() / std::max(1.0, n - 1);
  return {m, std::sqrt(var / n)};
}

}  // namespace bsdelab
