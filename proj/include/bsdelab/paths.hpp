#pragma once

#include <cstdint>
#include <iosfwd>

#include "bsdelab/grid.hpp"

namespace bsdelab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PathEnsemble {
  TimeGrid grid;
  Index n_paths = 0;
  std::uint64_t seed = 0;
  RowMatrix increments;  // n_paths x intervals, variance dt per interval
  RowMatrix drift;       // empty, or the per-interval drift added to the increments

  // W at node j for every path.
  Eigen::VectorXd w_at(Index node) const;
  // Full W matrix, n_paths x nodes.
  RowMatrix w() const;
};

PathEnsemble sample_paths(const TimeGrid& grid, Index n_paths, std::uint64_t seed);

// Same noise, increments shifted by theta*dt; the shift is kept in the drift record.
PathEnsemble with_drift(const PathEnsemble& ens, double theta);

// Binary container: "BSDLENS1", T, gap, ratio, n_paths, seed, half index,
// node count, nodes, drift flag, increments row-major by path, optional drift.
void write_ensemble(const PathEnsemble& ens, std::ostream& os);
PathEnsemble read_ensemble(std::istream& is);

}  // namespace bsdelab
