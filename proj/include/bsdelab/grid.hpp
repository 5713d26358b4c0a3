#pragma once

#include <Eigen/Dense>

namespace bsdelab {

using Eigen::Index;

struct TimeGrid {
  double T = 1.0;
  double gap = 0.0;
  double ratio = 0.5;
  Eigen::VectorXd nodes;
  Index half = 0;  // index of the node T/2

  Index size() const { return nodes.size(); }
  Index intervals() const { return nodes.size() - 1; }
  double dt(Index i) const { return nodes[i + 1] - nodes[i]; }
  // Clock time log((T/2)/(T-t)) of node i; zero before T/2.
  double clock(Index i) const;
};

// Uniform step T/n_coarse on [0, T/2], then distances to T shrinking by `ratio`
// until the last node T - gap. n_coarse must be even so that T/2 is a node.
TimeGrid build_grid(double T, int n_coarse, double ratio, double gap);

// Defaults: 16 coarse steps, ratio 0.5, gap 2^-20 T.
TimeGrid default_grid(double T = 1.0);

}  // namespace bsdelab
