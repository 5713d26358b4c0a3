#pragma once

#include <cstdint>
#include <vector>

#include "bsdelab/paths.hpp"

namespace bsdelab {

struct ClockOptions {
  double du = 1e-3;     // Euler step in clock units
  double horizon = 0;   // 0: clock depth of the last grid node, log((T/2)/gap)
  Eigen::VectorXd mark; // optional per-path clock times at which to record the process
};

// Exit of B_u + mu*u from (-1,1) in the clock u = log((T/2)/(T-t)).
struct HittingClock {
  double T = 1.0;
  double horizon = 0;
  Eigen::VectorXd H;      // clock exit time; the horizon for censored paths
  Eigen::VectorXd tau;    // T - (T/2) exp(-H)
  Eigen::VectorXd side;   // +1 / -1 exit side, 0 when censored
  Eigen::VectorXd mu;     // per-path clock drift
  std::vector<std::uint8_t> censored;
  Index first_node = 0;   // grid index of T/2
  Eigen::VectorXd u_nodes;  // clock times of grid nodes from T/2 on
  RowMatrix x_nodes;        // drifted process at u_nodes, NaN after exit
  Eigen::VectorXd x_mark;   // process at min(H, mark) when marks were given

  Index n_paths() const { return H.size(); }
  double censored_fraction() const;
};

// Clock drift b*pi*alpha/sqrt(8). The Brownian noise is drawn from its own
// stream, so every drift sees the same B (common random numbers).
HittingClock hitting_time(const PathEnsemble& ens, double b, double alpha, const ClockOptions& opt = {});
HittingClock hitting_time(const PathEnsemble& ens, double b, const Eigen::VectorXd& alpha,
                          const ClockOptions& opt = {});

// Analytic facts about the exit time H of (-1,1) started at 0.
// E[exp(theta H)] with clock drift mu; +inf beyond the explosion point.
double exit_moment(double theta, double mu = 0.0);
// P(H > u), driftless.
double exit_survival(double u);
// E[exp(theta (H ^ s))], driftless; s may be +inf.
double exit_moment_truncated(double theta, double s);
// E[H] with drift mu.
double exit_mean(double mu = 0.0);

}  // namespace bsdelab
