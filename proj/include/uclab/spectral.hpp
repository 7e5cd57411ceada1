#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "uclab/common.hpp"
#include "uclab/grid.hpp"
#include "uclab/hamiltonian.hpp"

namespace uclab {

struct SolverOptions {
  double tol = 1e-8;                  // residual contract: ||H x - E x|| <= tol*max(1,|E|)
  std::int64_t dense_threshold = 4096;  // dense eigensolver up to this many points
  bool force_iterative = false;
  int max_subspace = 0;  // Krylov cap, 0 = auto
  std::uint64_t start_seed = 0x5eedULL;
};

struct EigenSolution {
  std::vector<double> energies;  // ascending
  std::vector<Field> modes;      // orthonormal in the discrete L2 inner product
  std::vector<double> residuals;
};

namespace detail {

// Shift-invert Lanczos with full reorthogonalization. The bottom of the
// spectrum is clustered relative to the stencil's spectral width, so the
// iteration runs on (H - sigma)^{-1} with sigma below the spectrum (sparse
// LDLT factorization); Ritz pairs are accepted against the true residual of
// H itself. Full reorthogonalization keeps ghost eigenvalues out.
inline EigenSolution lanczos_lowest(const HamiltonianOperator& H, int how_many,
                                    const SolverOptions& opt) {
  const Grid& grid = H.grid();
  const std::int64_t N = grid.total_points();
  const int max_dim =
      opt.max_subspace > 0 ? static_cast<int>(std::min<std::int64_t>(opt.max_subspace, N))
                           : static_cast<int>(std::min<std::int64_t>(N, std::max(2 * how_many + 40, 80)));
  require(how_many <= max_dim, Errc::invalid_parameter, "subspace cap below request");

  const double sigma = H.potential().field.values.minCoeff() - 1.0;
  Eigen::SparseMatrix<double> A = H.sparse_matrix();
  for (std::int64_t i = 0; i < N; ++i) A.coeffRef(i, i) -= sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  require(ldlt.info() == Eigen::Success, Errc::no_convergence,
          "sparse factorization of the shifted operator failed");

  Eigen::MatrixXd V(N, max_dim);
  std::vector<double> alpha, beta;

  SplitMix64 rng(opt.start_seed);
  Eigen::VectorXd v(N);
  for (std::int64_t i = 0; i < N; ++i) v[i] = rng.next_in(-1.0, 1.0);
  v.normalize();
  V.col(0) = v;

  Field work(grid);
  auto apply_H = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    work.values = in;
    out = H.apply(work).values;
  };

  const double hd = std::sqrt(grid.cell_volume());
  Eigen::VectorXd w(N), hx(N);
  double achieved = std::numeric_limits<double>::infinity();

  // Ritz extraction: the largest eigenvalues of the inverse are the smallest
  // of H; certified with true residuals, or nullopt when not converged.
  auto extract = [&](int dim, bool record_best) -> std::optional<EigenSolution> {
    if (dim < how_many) return std::nullopt;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
      T(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < dim) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    EigenSolution sol;
    double worst = 0.0;
    for (int i = 0; i < how_many; ++i) {
      const int col = dim - 1 - i;  // descending mu = ascending lambda
      Eigen::VectorXd x = V.leftCols(dim) * es.eigenvectors().col(col);
      x.normalize();
      apply_H(x, hx);
      const double E = x.dot(hx);  // Rayleigh quotient in H
      const double res = (hx - E * x).norm();  // plain = weighted for unit x
      worst = std::max(worst, res);
      if (res > opt.tol * std::max(1.0, std::abs(E))) {
        if (record_best) achieved = std::min(achieved, worst);
        return std::nullopt;
      }
      sol.energies.push_back(E);
      sol.residuals.push_back(res);
      Field mode(grid);
      mode.values = x / hd;
      sol.modes.push_back(std::move(mode));
    }
    // the inverse ordering delivers them ascending already; enforce it
    for (std::size_t i = 1; i < sol.energies.size(); ++i)
      require(sol.energies[i - 1] <= sol.energies[i] + opt.tol, Errc::no_convergence,
              "Ritz values not ordered; increase the subspace cap");
    return sol;
  };

  int j = 0;
  while (true) {
    w = ldlt.solve(V.col(j));
    if (j > 0) w -= beta[static_cast<std::size_t>(j - 1)] * V.col(j - 1);
    const double a = V.col(j).dot(w);
    alpha.push_back(a);
    w -= a * V.col(j);
    for (int pass = 0; pass < 2; ++pass)
      w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
    double b = w.norm();
    if (j + 1 == max_dim) break;
    if (b < 1e-13) {
      // invariant subspace: continue in a fresh direction
      for (std::int64_t i = 0; i < N; ++i) w[i] = rng.next_in(-1.0, 1.0);
      for (int pass = 0; pass < 2; ++pass)
        w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
      b = w.norm();
      if (b < 1e-13) break;
    }
    beta.push_back(b);
    V.col(j + 1) = w / b;
    ++j;
    if (j + 1 >= how_many + 2 && (j % 4 == 0 || j + 1 == max_dim)) {
      if (auto sol = extract(j + 1, false)) return *sol;
    }
  }
  if (auto sol = extract(std::min(j + 1, max_dim), true)) return *sol;
  fail(Errc::no_convergence, "Krylov subspace cap " + std::to_string(max_dim) +
                                 " reached; best residual " + std::to_string(achieved));
}

inline EigenSolution dense_lowest(const HamiltonianOperator& H, int how_many,
                                  const SolverOptions& opt) {
  const Grid& grid = H.grid();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense_matrix());
  require(es.info() == Eigen::Success, Errc::no_convergence, "dense eigensolver failed");
  EigenSolution sol;
  const double hd = std::sqrt(grid.cell_volume());
  for (int i = 0; i < how_many; ++i) {
    const double E = es.eigenvalues()[i];
    Field mode(grid);
    mode.values = es.eigenvectors().col(i) / hd;
    sol.energies.push_back(E);
    sol.modes.push_back(std::move(mode));
  }
  for (int i = 0; i < how_many; ++i) {
    const double res = residual_norm(H, sol.modes[i], sol.energies[i]);
    require(res <= opt.tol * std::max(1.0, std::abs(sol.energies[i])), Errc::no_convergence,
            "dense eigenpair residual " + std::to_string(res) +
                " misses the tolerance (rounding floor scales with 1/h^2)");
    sol.residuals.push_back(res);
  }
  return sol;
}

}  // namespace detail

// Lowest eigenpairs of H, dense below the threshold and Krylov above it.
inline EigenSolution eigenpairs(const HamiltonianOperator& H, int how_many,
                                const SolverOptions& opt = {}) {
  require(how_many >= 1, Errc::invalid_parameter, "need at least one eigenpair");
  require(how_many <= H.grid().total_points(), Errc::invalid_parameter,
          "more eigenpairs than grid points");
  require(opt.tol > 0.0, Errc::invalid_parameter, "solver tolerance must be > 0");
  if (!opt.force_iterative && H.grid().total_points() <= opt.dense_threshold)
    return detail::dense_lowest(H, how_many, opt);
  return detail::lanczos_lowest(H, how_many, opt);
}

// Orthonormal basis of the span of eigenvectors with eigenvalue in I = [a,b].
struct ProjectorBasis {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> energies;
  std::vector<Field> columns;

  int rank() const { return static_cast<int>(columns.size()); }
};

inline ProjectorBasis projector_basis(const HamiltonianOperator& H, double a, double b,
                                      const SolverOptions& opt = {}) {
  require(a <= b && std::isfinite(a) && std::isfinite(b), Errc::invalid_parameter,
          "interval must be bounded with a <= b");
  const std::int64_t N = H.grid().total_points();
  const bool dense = !opt.force_iterative && N <= opt.dense_threshold;

  ProjectorBasis basis;
  basis.a = a;
  basis.b = b;
  auto in_interval = [&](double E) {
    const double tau = opt.tol * std::max(1.0, std::abs(E));
    return E >= a - tau && E <= b + tau;
  };

  if (dense) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.dense_matrix());
    require(es.info() == Eigen::Success, Errc::no_convergence, "dense eigensolver failed");
    const double hd = std::sqrt(H.grid().cell_volume());
    for (std::int64_t i = 0; i < N; ++i) {
      const double E = es.eigenvalues()[i];
      if (!in_interval(E)) continue;
      Field mode(H.grid());
      mode.values = es.eigenvectors().col(i) / hd;
      basis.energies.push_back(E);
      basis.columns.push_back(std::move(mode));
    }
    return basis;
  }

  EigenSolution sol;
  int m = 8;
  while (true) {
    sol = detail::lanczos_lowest(H, m, opt);
    const double top = sol.energies.back();
    if (top > b + opt.tol * std::max(1.0, std::abs(b)) || m >= N) break;
    m = static_cast<int>(std::min<std::int64_t>(N, 2 * m));
  }
  for (std::size_t i = 0; i < sol.energies.size(); ++i) {
    if (!in_interval(sol.energies[i])) continue;
    basis.energies.push_back(sol.energies[i]);
    basis.columns.push_back(sol.modes[i]);
  }
  return basis;
}

// ---------------------------------------------------------------------------
// Weyl iterates: normalized psi_n with ||(H - E) psi_n|| < 1/n.

enum class WeylStrategy { gaussian_packet, eigen_defect };

struct WeylParams {
  std::vector<double> center;    // packet center; empty = box center
  double sigma0 = 2.0;           // initial envelope width
  double sigma_growth = 1.25;
  double boundary_sigmas = 6.5;  // keep this many sigmas to the nearest wall
  double defect_fraction = 0.0;  // eigen-defect: prescribed residual = fraction/n
  int defect_eigs = 8;           // eigen-defect: pairs to compute
  SolverOptions solver;
};

struct WeylIterate {
  int n = 0;
  Field psi;
  double E = 0.0;
  double residual = 0.0;
  WeylStrategy strategy = WeylStrategy::gaussian_packet;
  double sigma = 0.0;                                   // packet width used
  double xi = 0.0;                                      // carrier wavevector (axis 1)
  std::vector<double> center;                           // packet center
  std::vector<std::pair<double, double>> search_trace;  // (sigma, residual)
};

class UnreachableResidual : public Error {
 public:
  UnreachableResidual(double best, double at, const std::string& what)
      : Error(Errc::unreachable_residual, what), best_residual(best), best_sigma(at) {}
  double best_residual;
  double best_sigma;
};

namespace detail {

// cos(xi . (x - x0)) * exp(-|x - x0|^2 / (4 sigma^2)), normalized
inline Field gaussian_packet(const Grid& grid, const std::vector<double>& x0, double xi,
                             double sigma) {
  Field psi(grid);
  std::vector<double> x(grid.d);
  const std::int64_t N = grid.total_points();
  for (std::int64_t f = 0; f < N; ++f) {
    grid.point_of_flat(f, x);
    double r2 = 0.0;
    for (int i = 0; i < grid.d; ++i) {
      double t = x[i] - x0[i];
      r2 += t * t;
    }
    psi.values[f] = std::cos(xi * (x[0] - x0[0])) * std::exp(-r2 / (4.0 * sigma * sigma));
  }
  return psi.normalize();
}

inline WeylIterate weyl_gaussian(const HamiltonianOperator& H, double E, int n,
                                 const WeylParams& params) {
  const Grid& grid = H.grid();
  std::vector<double> x0 = params.center;
  if (x0.empty()) x0.assign(grid.d, 0.0);
  require(static_cast<int>(x0.size()) == grid.d, Errc::invalid_parameter,
          "packet center rank mismatch");

  // carrier on axis 1 solving the discrete dispersion relation
  // (2/h^2)(1 - cos(xi h)) = E - V(x0)
  std::int64_t fc = 0;
  for (int i = 0; i < grid.d; ++i) {
    auto j = static_cast<std::int64_t>(std::llround((x0[i] + grid.L / 2.0) / grid.h()));
    j = std::clamp<std::int64_t>(j, 1, grid.n);
    fc = fc * grid.n + (j - 1);
  }
  const double V0 = H.potential().field.values[fc];
  const double h = grid.h();
  const double kin = E - V0;
  if (kin < 0.0 || kin > 4.0 / (h * h))
    throw UnreachableResidual(std::numeric_limits<double>::infinity(), 0.0,
                              "target energy outside the grid's dispersive range");
  const double xi = std::acos(1.0 - kin * h * h / 2.0) / h;

  double wall = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.d; ++i)
    wall = std::min(wall, grid.L / 2.0 - std::abs(x0[i]));
  require(wall > 0.0, Errc::invalid_parameter, "packet center outside the box");

  WeylIterate it;
  it.n = n;
  it.E = E;
  it.strategy = WeylStrategy::gaussian_packet;
  it.xi = xi;
  it.center = x0;

  const double target = 1.0 / static_cast<double>(n);
  double best = std::numeric_limits<double>::infinity();
  double best_sigma = 0.0;
  for (double sigma = params.sigma0; sigma * params.boundary_sigmas <= wall;
       sigma *= params.sigma_growth) {
    Field psi = gaussian_packet(grid, x0, xi, sigma);
    const double res = residual_norm(H, psi, E);
    it.search_trace.emplace_back(sigma, res);
    if (res < best) {
      best = res;
      best_sigma = sigma;
    }
    if (res < target) {
      it.psi = std::move(psi);
      it.sigma = sigma;
      it.residual = res;
      return it;
    }
  }
  throw UnreachableResidual(best, best_sigma,
                            "residual target 1/" + std::to_string(n) +
                                " not reachable on this grid; best " + std::to_string(best));
}

inline WeylIterate weyl_eigen_defect(const HamiltonianOperator& H, double E, int n,
                                     const WeylParams& params) {
  const int m = std::min<std::int64_t>(std::max(2, params.defect_eigs),
                                       H.grid().total_points());
  EigenSolution sol = eigenpairs(H, m, params.solver);

  std::size_t closest = 0;
  for (std::size_t i = 1; i < sol.energies.size(); ++i)
    if (std::abs(sol.energies[i] - E) < std::abs(sol.energies[closest] - E)) closest = i;
  const double rc = std::abs(sol.energies[closest] - E);
  const double target = 1.0 / static_cast<double>(n);
  if (rc >= target)
    throw UnreachableResidual(rc, 0.0, "nearest computed level is " + std::to_string(rc) +
                                           " from E; cannot reach 1/" + std::to_string(n));

  WeylIterate it;
  it.n = n;
  it.E = E;
  it.strategy = WeylStrategy::eigen_defect;

  const double prescribed = std::max(rc, params.defect_fraction * target);
  std::size_t other = closest + 1 < sol.energies.size() ? closest + 1
                      : (closest > 0 ? closest - 1 : closest);
  const double r2 = std::abs(sol.energies[other] - E);
  if (prescribed <= rc || other == closest || r2 * r2 <= prescribed * prescribed) {
    it.psi = sol.modes[closest];
  } else {
    // mix in a second mode: residual^2 = cos^2 t * rc^2 + sin^2 t * r2^2
    const double s2 = (prescribed * prescribed - rc * rc) / (r2 * r2 - rc * rc);
    const double s = std::sqrt(std::clamp(s2, 0.0, 1.0));
    const double c = std::sqrt(1.0 - s * s);
    Field psi(H.grid());
    psi.values = c * sol.modes[closest].values + s * sol.modes[other].values;
    it.psi = std::move(psi);
  }
  it.psi.normalize();
  it.residual = residual_norm(H, it.psi, E);
  if (it.residual >= target)
    throw UnreachableResidual(it.residual, 0.0, "defect construction exceeded 1/n");
  return it;
}

}  // namespace detail

inline WeylIterate weyl_sequence(const HamiltonianOperator& H, double E, int n,
                                 WeylStrategy strategy, const WeylParams& params = {}) {
  require(n >= 1, Errc::invalid_parameter, "Weyl index must be >= 1");
  require(params.defect_fraction >= 0.0 && params.defect_fraction < 1.0,
          Errc::invalid_parameter, "defect fraction must lie in [0,1)");
  WeylIterate it = strategy == WeylStrategy::gaussian_packet
                       ? detail::weyl_gaussian(H, E, n, params)
                       : detail::weyl_eigen_defect(H, E, n, params);
  return it;
}

}  // namespace uclab
