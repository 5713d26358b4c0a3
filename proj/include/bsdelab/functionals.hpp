#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bsdelab/paths.hpp"

namespace bsdelab {

enum class PathFlag : std::uint8_t { ok = 0, censored = 1, nan = 2 };

struct PathFunctionals {
  TimeGrid grid;
  RowMatrix integral;  // running int theta dW at nodes
  RowMatrix qv;        // running int theta^2 dt at nodes
  RowMatrix expo;      // stochastic exponential at nodes, empty until computed
  RowMatrix state;     // conditioning statistic at nodes, NaN once the path has stopped
  Eigen::VectorXd stop;  // recorded stopping time, NaN when none
  Eigen::VectorXd mark;  // F_{T/2}-measurable parameter (alpha, sigma), NaN when none
  std::vector<PathFlag> flag;

  Index n_paths() const { return integral.rows(); }
  Index last() const { return integral.cols() - 1; }
  Eigen::VectorXd terminal_integral() const { return integral.col(last()); }
  Eigen::VectorXd terminal_qv() const { return qv.col(last()); }
  bool ok(Index p) const { return flag[static_cast<std::size_t>(p)] != PathFlag::nan; }
};

// theta(path, node, t, W_t) evaluated at the left end of each interval.
using Integrand = std::function<double(Index, Index, double, double)>;

PathFunctionals ito_integral(const PathEnsemble& ens, const Integrand& theta);

// Functionals of factor*theta from those of theta.
PathFunctionals scale(const PathFunctionals& f, double factor);

PathFunctionals stoch_exponential(PathFunctionals f);

// E(theta.W)_T / E(theta.W)_t for t = nodes[from].
Eigen::VectorXd exponential_ratio(const PathFunctionals& f, Index from);

struct WeightDiagnostics {
  Eigen::VectorXd weights;
  double mean = 0;
  double se = 0;
  bool warning = false;  // mean more than 5 SE away from 1
};

WeightDiagnostics girsanov_weights(const PathFunctionals& f);

// Reweighted mean and standard error of g under the weights.
std::pair<double, double> reweighted_mean(const WeightDiagnostics& w, const Eigen::VectorXd& g);

}  // namespace bsdelab
