#include "bsdelab/paths.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

Eigen::VectorXd PathEnsemble::w_at(Index node) const {
  if (node == 0) return Eigen::VectorXd::Zero(n_paths);
  return increments.leftCols(node).rowwise().sum();
}

RowMatrix PathEnsemble::w() const {
  RowMatrix out(n_paths, grid.size());
  out.col(0).setZero();
  for (Index j = 1; j < grid.size(); ++j) out.col(j) = out.col(j - 1) + increments.col(j - 1);
  return out;
}

PathEnsemble sample_paths(const TimeGrid& grid, Index n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("sample_paths: n_paths must be >= 1");
  PathEnsemble ens;
  ens.grid = grid;
  ens.n_paths = n_paths;
  ens.seed = seed;
  const Index m = grid.intervals();
  ens.increments.resize(n_paths, m);
  Eigen::VectorXd sd(m);
  for (Index i = 0; i < m; ++i) sd[i] = std::sqrt(grid.dt(i));
  parallel_for(n_paths, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (std::ptrdiff_t p = b; p < e; ++p) {
      CounterRng rng(seed, static_cast<std::uint64_t>(p), Stream::grid);
      for (Index i = 0; i < m; ++i) ens.increments(p, i) = sd[i] * rng.normal(static_cast<std::uint64_t>(i));
    }
  });
  return ens;
}

PathEnsemble with_drift(const PathEnsemble& ens, double theta) {
  PathEnsemble out = ens;
  const Index m = ens.grid.intervals();
  RowMatrix shift(ens.n_paths, m);
  for (Index i = 0; i < m; ++i) shift.col(i).setConstant(theta * ens.grid.dt(i));
  out.increments += shift;
  out.drift = ens.drift.size() ? RowMatrix(ens.drift + shift) : shift;
  return out;
}

namespace {

constexpr char kMagic[8] = {'B', 'S', 'D', 'L', 'E', 'N', 'S', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("read_ensemble: truncated container");
  return v;
}

void read_doubles(std::istream& is, double* dst, std::size_t n) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("read_ensemble: truncated container");
}

}  // namespace

void write_ensemble(const PathEnsemble& ens, std::ostream& os) {
  os.write(kMagic, sizeof kMagic);
  put(os, ens.grid.T);
  put(os, ens.grid.gap);
  put(os, ens.grid.ratio);
  put(os, static_cast<std::uint64_t>(ens.n_paths));
  put(os, ens.seed);
  put(os, static_cast<std::uint64_t>(ens.grid.half));
  put(os, static_cast<std::uint64_t>(ens.grid.size()));
  os.write(reinterpret_cast<const char*>(ens.grid.nodes.data()),
           static_cast<std::streamsize>(ens.grid.size() * sizeof(double)));
  put(os, static_cast<std::uint8_t>(ens.drift.size() ? 1 : 0));
  os.write(reinterpret_cast<const char*>(ens.increments.data()),
           static_cast<std::streamsize>(ens.increments.size() * sizeof(double)));
  if (ens.drift.size())
    os.write(reinterpret_cast<const char*>(ens.drift.data()),
             static_cast<std::streamsize>(ens.drift.size() * sizeof(double)));
}

PathEnsemble read_ensemble(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("read_ensemble: not an ensemble container");
  PathEnsemble ens;
  ens.grid.T = get<double>(is);
  ens.grid.gap = get<double>(is);
  ens.grid.ratio = get<double>(is);
  ens.n_paths = static_cast<Index>(get<std::uint64_t>(is));
  ens.seed = get<std::uint64_t>(is);
  ens.grid.half = static_cast<Index>(get<std::uint64_t>(is));
  const auto n_nodes = static_cast<Index>(get<std::uint64_t>(is));
  if (n_nodes < 2 || ens.n_paths < 1) throw std::runtime_error("read_ensemble: bad header");
  ens.grid.nodes.resize(n_nodes);
  read_doubles(is, ens.grid.nodes.data(), static_cast<std::size_t>(n_nodes));
  const bool has_drift = get<std::uint8_t>(is) != 0;
  ens.increments.resize(ens.n_paths, n_nodes - 1);
  read_doubles(is, ens.increments.data(), static_cast<std::size_t>(ens.increments.size()));
  if (has_drift) {
    ens.drift.resize(ens.n_paths, n_nodes - 1);
    read_doubles(is, ens.drift.data(), static_cast<std::size_t>(ens.drift.size()));
  }
  return ens;
}

}  // namespace bsdelab
