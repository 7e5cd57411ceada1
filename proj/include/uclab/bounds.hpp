#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "uclab/common.hpp"
#include "uclab/geometry.hpp"
#include "uclab/grid.hpp"
#include "uclab/hamiltonian.hpp"

namespace uclab {

// Inputs shared by every closed-form bound. v_norm plays ||V - E||_inf or
// ||V||_inf depending on the formula; K is always an explicit parameter (the
// underlying exponent constants are not known numerically).
struct BoundParams {
  double delta = 0.25;
  double M = 1.0;
  double v_norm = 0.0;
  double E0 = 0.0;  // spectral-interval ceiling (projector bound only)
  double K = 1.0;
};

enum class DeltaRange { closed_half, open_half };  // delta in (0, M/2] vs (0, M/2)

inline void check_bound_params(const BoundParams& p, DeltaRange range) {
  require(std::isfinite(p.delta) && std::isfinite(p.M) && std::isfinite(p.v_norm) &&
              std::isfinite(p.K),
          Errc::invalid_parameter, "bound parameters must be finite");
  require(p.M > 0.0, Errc::invalid_parameter, "M must be > 0");
  if (range == DeltaRange::closed_half)
    require(p.delta > 0.0 && p.delta <= p.M / 2.0, Errc::invalid_parameter,
            "delta must lie in (0, M/2]");
  else
    require(p.delta > 0.0 && p.delta < p.M / 2.0, Errc::invalid_parameter,
            "delta must lie in (0, M/2) for this bound");
  require(p.v_norm >= 0.0, Errc::invalid_parameter, "v_norm must be >= 0");
  require(p.K > 0.0, Errc::invalid_parameter, "K must be > 0");
}

// (delta/M)^(K (1 + M^{4/3} v^{2/3})), the scale-free sampling factor.
inline double thm1_bound(const BoundParams& p) {
  check_bound_params(p, DeltaRange::closed_half);
  const double expo =
      p.K * (1.0 + std::pow(p.M, 4.0 / 3.0) * std::pow(p.v_norm, 2.0 / 3.0));
  return std::pow(p.delta / p.M, expo);
}

// gamma with gamma^2 = (1/(2 M^4)) (delta/M)^(K (1 + M^{4/3} (2 v + E0)^{2/3})).
inline double thm2_gamma(const BoundParams& p) {
  check_bound_params(p, DeltaRange::open_half);
  require(std::isfinite(p.E0) && p.E0 > 0.0, Errc::invalid_parameter, "E0 must be > 0");
  const double eff = 2.0 * p.v_norm + p.E0;
  const double expo = p.K * (1.0 + std::pow(p.M, 4.0 / 3.0) * std::pow(eff, 2.0 / 3.0));
  const double gamma2 = 0.5 / std::pow(p.M, 4.0) * std::pow(p.delta / p.M, expo);
  return std::sqrt(gamma2);
}

// Residual-form inequality: lhs = factor * ||psi||^2,
// rhs = ||W psi||^2 + delta^2 M^2 ||H psi||^2. v_norm plays ||V||_inf here;
// pass an energy-shifted operator to evaluate the V - E variant.
template <class Scalar>
inline std::pair<double, double> thm3_lhs_rhs(const FieldT<Scalar>& psi, const Mask& mask,
                                              const BoundParams& p,
                                              const HamiltonianOperator& H) {
  check_bound_params(p, DeltaRange::open_half);
  require(psi.grid.same_as(mask.grid), Errc::grid_mismatch, "field and mask grids differ");
  require(psi.grid.same_as(H.grid()), Errc::grid_mismatch, "field and operator grids differ");
  const double lhs = thm1_bound({p.delta, p.M, p.v_norm, 0.0, p.K}) * psi.squared_norm();
  const double masked = mask.apply(psi).squared_norm();
  FieldT<Scalar> hpsi = H.apply(psi);
  const double rhs = masked + p.delta * p.delta * p.M * p.M * hpsi.squared_norm();
  return {lhs, rhs};
}

// Index threshold sqrt(2) delta M (delta/M)^(-(1/2) K (1 + M^{4/3} v^{2/3})).
inline double weyl_threshold(const BoundParams& p) {
  check_bound_params(p, DeltaRange::closed_half);
  const double expo =
      0.5 * p.K * (1.0 + std::pow(p.M, 4.0 / 3.0) * std::pow(p.v_norm, 2.0 / 3.0));
  return std::sqrt(2.0) * p.delta * p.M * std::pow(p.delta / p.M, -expo);
}

// ---------------------------------------------------------------------------
// Dominant-site census at M = 1: a site k is dominant when the mass of its
// unit cell is at least 1/(2 T^d) of the mass of the T-box around it (ties
// dominant, as the criterion is stated with >=).

struct DominantCensus {
  double T = 0.0;
  NeighborRule variant = NeighborRule::thm1;
  IndexBox window;
  std::vector<std::vector<int>> dominant;
  std::vector<std::vector<int>> weak;
  std::vector<std::vector<int>> clipped;  // sites whose T-box leaves the grid
  double mass_dominant = 0.0;
  double mass_weak = 0.0;
  double mass_total = 0.0;
};

template <class Scalar>
inline DominantCensus classify_dominant(const FieldT<Scalar>& phi, double T,
                                        const IndexBox& window) {
  require(T > 0.0, Errc::invalid_parameter, "T must be > 0");
  const Grid& grid = phi.grid;
  require(window.dim() == grid.d, Errc::invalid_parameter, "window rank mismatch");

  const std::int64_t N = grid.total_points();
  std::vector<double> density(static_cast<std::size_t>(N));
  for (std::int64_t f = 0; f < N; ++f)
    density[static_cast<std::size_t>(f)] = std::norm(phi.values[f]);

  // per-cell masses by direct assignment (cells at scale 1)
  std::vector<double> cell_mass(static_cast<std::size_t>(window.count()), 0.0);
  std::vector<double> x(grid.d);
  std::vector<int> k(grid.d);
  const double hd = grid.cell_volume();
  double total = 0.0;
  for (std::int64_t f = 0; f < N; ++f) {
    grid.point_of_flat(f, x);
    for (int i = 0; i < grid.d; ++i) k[i] = static_cast<int>(cell_of(x[i], 1.0));
    require(window.contains(k), Errc::window_too_small,
            "census window does not cover the grid");
    const double m = hd * density[static_cast<std::size_t>(f)];
    cell_mass[static_cast<std::size_t>(window.flat(k))] += m;
    total += m;
  }

  // T-box masses via prefix sums; the membership rule |x_i - k_i| < T/2 turns
  // into a contiguous per-axis index range.
  std::vector<std::int64_t> extents(grid.d, grid.n);
  PrefixSums prefix(density, extents);
  const double half = T / 2.0;
  const double h = grid.h();

  DominantCensus census;
  census.T = T;
  census.window = window;
  census.mass_total = total;
  const double norm = 1.0 / (2.0 * std::pow(T, grid.d));

  std::vector<std::int64_t> lo(grid.d), hi(grid.d);
  window.for_each([&](const std::vector<int>& site) {
    bool clipped = false;
    for (int i = 0; i < grid.d; ++i) {
      const double a = site[i] - half;
      const double b = site[i] + half;
      if (a < -grid.L / 2.0 - kGeomTol || b > grid.L / 2.0 + kGeomTol) clipped = true;
      // grid coordinate x_j = -L/2 + j h; strict inequalities on both sides
      double t = (a + grid.L / 2.0) / h;
      std::int64_t jlo = static_cast<std::int64_t>(std::floor(t)) + 1;  // x_j > a
      t = (b + grid.L / 2.0) / h;
      std::int64_t jhi = static_cast<std::int64_t>(std::ceil(t)) - 1;  // x_j < b
      lo[i] = jlo - 1;  // to 0-based point index
      hi[i] = jhi - 1;
    }
    const double box_mass = hd * prefix.box_sum(lo, hi);
    const double cm = cell_mass[static_cast<std::size_t>(window.flat(site))];
    const bool dominant = cm >= norm * box_mass;
    if (dominant) {
      census.dominant.push_back(site);
      census.mass_dominant += cm;
    } else {
      census.weak.push_back(site);
      census.mass_weak += cm;
    }
    if (clipped) census.clipped.push_back(site);
  });
  return census;
}

struct DominantMassCheck {
  bool ok = false;
  double mass_total = 0.0;
  double mass_dominant = 0.0;
  std::vector<std::vector<int>> clipped;
};

// The pigeonhole estimate ||phi||^2 <= 2 ||chi_D phi||^2; failures are
// reported with the clipped-site list since they indicate boundary artifacts.
inline DominantMassCheck dominant_mass_bound(const DominantCensus& census,
                                             double rel_tol = 1e-12) {
  DominantMassCheck check;
  check.mass_total = census.mass_total;
  check.mass_dominant = census.mass_dominant;
  check.clipped = census.clipped;
  check.ok = census.mass_total <= 2.0 * census.mass_dominant + rel_tol * census.mass_total;
  return check;
}

// Number of lattice T-boxes that can cover one point: at most ceil(T)^d.
inline double covering_multiplicity_limit(double T, int d) {
  return std::pow(std::ceil(T), d);
}

}  // namespace uclab
