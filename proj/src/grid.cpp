#include "bsdelab/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace bsdelab {

double TimeGrid::clock(Index i) const {
  if (i <= half) return 0.0;
  return std::log((T / 2) / (T - nodes[i]));
}

TimeGrid build_grid(double T, int n_coarse, double ratio, double gap) {
  if (!std::isfinite(T) || T <= 0) throw std::invalid_argument("build_grid: T must be finite and positive");
  if (!(ratio > 0 && ratio < 1)) throw std::invalid_argument("build_grid: ratio must lie in (0,1)");
  if (n_coarse < 2 || n_coarse % 2 != 0) throw std::invalid_argument("build_grid: n_coarse must be an even integer >= 2");
  if (!std::isfinite(gap) || gap <= 0 || gap > T / 4) throw std::invalid_argument("build_grid: gap must lie in (0, T/4]");

  std::vector<double> t;
  const int n_half = n_coarse / 2;
  for (int i = 0; i <= n_half; ++i) t.push_back(i == n_half ? T / 2 : T * i / n_coarse);
  const Index half = n_half;
  double d = T / 2;
  for (;;) {
    d *= ratio;
    if (!(d > gap * (1 + 1e-12))) break;
    t.push_back(T - d);
  }
  t.push_back(T - gap);

  TimeGrid g;
  g.T = T;
  g.gap = gap;
  g.ratio = ratio;
  g.half = half;
  g.nodes = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Index>(t.size()));
  return g;
}

TimeGrid default_grid(double T) { return build_grid(T, 16, 0.5, std::ldexp(T, -20)); }

}  // namespace bsdelab
