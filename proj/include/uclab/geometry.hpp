#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uclab/common.hpp"
#include "uclab/grid.hpp"

namespace uclab {

// One sampling point z_k per cube cell M*k + (-M/2, M/2)^d, with the ball
// B(z_k, delta) contained in the cell. Offsets u_k = z_k - M*k are stored;
// the window is the finite set of materialized cells.
class EquidistributedSequence {
 public:
  EquidistributedSequence(int d, double M, double delta, IndexBox window,
                          std::vector<double> offsets)
      : d_(d), M_(M), delta_(delta), window_(std::move(window)), offsets_(std::move(offsets)) {
    require(d_ >= 1, Errc::invalid_parameter, "dimension must be >= 1");
    require(M_ > 0.0 && std::isfinite(M_), Errc::invalid_parameter, "cell scale M must be > 0");
    require(delta_ > 0.0 && delta_ <= M_ / 2.0, Errc::invalid_parameter,
            "ball radius must satisfy 0 < delta <= M/2");
    require(window_.dim() == d_, Errc::invalid_parameter, "window rank mismatch");
    require(offsets_.size() == static_cast<std::size_t>(window_.count()) * d_,
            Errc::invalid_parameter, "offset storage size mismatch");
  }

  int dim() const { return d_; }
  double M() const { return M_; }
  double delta() const { return delta_; }
  const IndexBox& window() const { return window_; }

  bool materialized(const std::vector<int>& k) const { return window_.contains(k); }

  // offset u_k = z_k - M*k, component i
  double offset(const std::vector<int>& k, int i) const {
    return offsets_[static_cast<std::size_t>(window_.flat(k)) * d_ + i];
  }

  // physical center z_k
  std::vector<double> center(const std::vector<int>& k) const {
    require(materialized(k), Errc::invalid_parameter, "cell not materialized");
    std::vector<double> z(d_);
    for (int i = 0; i < d_; ++i) z[i] = M_ * k[i] + offset(k, i);
    return z;
  }

  // Proof-step scaling x -> x/M: maps an (M,delta) sequence to a (1, delta/M) one.
  EquidistributedSequence normalized() const {
    std::vector<double> off(offsets_.size());
    for (std::size_t i = 0; i < offsets_.size(); ++i) off[i] = offsets_[i] / M_;
    return EquidistributedSequence(d_, 1.0, delta_ / M_, window_, std::move(off));
  }

 private:
  int d_;
  double M_;
  double delta_;
  IndexBox window_;
  std::vector<double> offsets_;  // window.count() * d, row-major over window
};

struct ValidationResult {
  bool ok = true;
  std::vector<int> offending_cell;  // first violator, empty when ok
  double violated_margin = 0.0;     // M/2 - (|u_i| + delta) at the violation
  std::string message;
};

// Accepts iff the Euclidean ball B(z_k, delta) fits in the open cell for every
// materialized k, i.e. |u_i| + delta <= M/2 per coordinate (slack kGeomTol*M).
inline ValidationResult validate_sequence(const EquidistributedSequence& Z) {
  const double tol = kGeomTol * Z.M();
  ValidationResult res;
  Z.window().for_each([&](const std::vector<int>& k) {
    if (!res.ok) return;
    for (int i = 0; i < Z.dim(); ++i) {
      double margin = Z.M() / 2.0 - (std::abs(Z.offset(k, i)) + Z.delta());
      if (margin < -tol) {
        res.ok = false;
        res.offending_cell = k;
        res.violated_margin = margin;
        res.message = "ball escapes cell along axis " + std::to_string(i);
        return;
      }
    }
  });
  return res;
}

inline EquidistributedSequence make_periodic_sequence(int d, double M, double delta,
                                                      const IndexBox& window) {
  require(M > 0.0, Errc::invalid_parameter, "M must be > 0");
  require(delta > 0.0 && delta <= M / 2.0, Errc::invalid_parameter,
          "delta must lie in (0, M/2]");
  std::vector<double> offsets(static_cast<std::size_t>(window.count()) * d, 0.0);
  return EquidistributedSequence(d, M, delta, window, std::move(offsets));
}

// Centers drawn uniformly from the admissible sub-cell, shrunk by a safety
// margin so validation can never fail from rounding. Same seed and window
// reproduce bit-identical centers.
inline EquidistributedSequence make_perturbed_sequence(int d, double M, double delta,
                                                       const IndexBox& window,
                                                       std::uint64_t seed) {
  require(M > 0.0, Errc::invalid_parameter, "M must be > 0");
  require(delta > 0.0 && delta <= M / 2.0, Errc::invalid_parameter,
          "delta must lie in (0, M/2]");
  const double eps = 1e-9 * M;
  const double slack = std::max(0.0, M / 2.0 - delta - eps);
  std::vector<double> offsets(static_cast<std::size_t>(window.count()) * d, 0.0);
  SplitMix64 rng(seed);
  std::size_t pos = 0;
  window.for_each([&](const std::vector<int>&) {
    for (int i = 0; i < d; ++i) offsets[pos++] = rng.next_in(-slack, slack);
  });
  return EquidistributedSequence(d, M, delta, window, std::move(offsets));
}

// ---------------------------------------------------------------------------
// Mask: indicator of the ball union, sampled at grid points.

struct Mask {
  Grid grid;
  std::vector<std::uint8_t> indicator;  // one byte per grid point, 0 or 1
  double covered_fraction = 0.0;

  template <class Scalar>
  FieldT<Scalar> apply(const FieldT<Scalar>& psi) const {
    require(grid.same_as(psi.grid), Errc::grid_mismatch, "mask and field on different grids");
    FieldT<Scalar> out(grid);
    for (std::int64_t i = 0; i < psi.values.size(); ++i)
      out.values[i] = indicator[static_cast<std::size_t>(i)] ? psi.values[i] : Scalar(0);
    return out;
  }
};

// Cell index of x at scale M; cells are M*k + (-M/2, M/2), so the cell index
// is the nearest integer to x/M (half-away rounding keeps assignment unique).
inline std::int64_t cell_of(double x, double M) {
  return std::llround(x / M);
}

// Smallest index box of cells at scale M whose closed union covers the grid box.
inline IndexBox cell_window_for(const Grid& grid, double M) {
  std::vector<int> lo(grid.d), hi(grid.d);
  for (int i = 0; i < grid.d; ++i) {
    lo[i] = static_cast<int>(cell_of(-grid.L / 2.0, M));
    hi[i] = static_cast<int>(cell_of(grid.L / 2.0, M));
  }
  return IndexBox(lo, hi);
}

// A grid point belongs to the mask iff it lies in some ball B(z_k, delta).
// Balls sit inside disjoint cells, so only the point's own cell can claim it.
inline Mask rasterize_mask(const EquidistributedSequence& Z, const Grid& grid) {
  require(grid.d == Z.dim(), Errc::grid_mismatch, "grid and sequence dimension differ");
  require(Z.window().contains_box(cell_window_for(grid, Z.M())), Errc::window_too_small,
          "grid extends beyond materialized cells");

  Mask mask;
  mask.grid = grid;
  const std::int64_t N = grid.total_points();
  mask.indicator.assign(static_cast<std::size_t>(N), 0);
  const double delta2 = Z.delta() * Z.delta();

  std::vector<double> x(grid.d);
  std::vector<int> k(grid.d);
  std::int64_t covered = 0;
  for (std::int64_t f = 0; f < N; ++f) {
    grid.point_of_flat(f, x);
    for (int i = 0; i < grid.d; ++i) k[i] = static_cast<int>(cell_of(x[i], Z.M()));
    double r2 = 0.0;
    for (int i = 0; i < grid.d; ++i) {
      double t = x[i] - (Z.M() * k[i] + Z.offset(k, i));
      r2 += t * t;
    }
    if (r2 < delta2) {
      mask.indicator[static_cast<std::size_t>(f)] = 1;
      ++covered;
    }
  }
  mask.covered_fraction = static_cast<double>(covered) / static_cast<double>(N);
  return mask;
}

// ---------------------------------------------------------------------------
// Proof geometry: near-neighbors, annulus, Q, observation box.

enum class NeighborRule { thm1, thm3 };

// thm1: k+ = k + (ceil(sqrt(d))+1) e1;  thm3: k+ = k + 2 e1
inline std::vector<int> near_neighbor(const std::vector<int>& k, int d, NeighborRule rule) {
  std::vector<int> kp = k;
  int shift = (rule == NeighborRule::thm1)
                  ? static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))) + 1
                  : 2;
  kp[0] += shift;
  return kp;
}

// R = ceil(sqrt(d)) + y_k with y_k = <e1, z_{k+}> - <e1, k+> + 1/2, at M = 1.
inline double annulus_radius(const std::vector<int>& k, const EquidistributedSequence& Z) {
  require(Z.M() == 1.0, Errc::scale_not_normalized,
          "annulus radius is defined at M = 1; rescale the sequence first");
  const std::vector<int> kp = near_neighbor(k, Z.dim(), NeighborRule::thm1);
  require(Z.materialized(kp), Errc::invalid_parameter, "near-neighbor cell not materialized");
  const double y = Z.offset(kp, 0) + 0.5;
  require(y >= 0.0 && y <= 1.0, Errc::invalid_parameter, "y_k outside [0,1]");
  return std::ceil(std::sqrt(static_cast<double>(Z.dim()))) + y;
}

// Open axis-aligned box in physical coordinates.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }

  static Box unit_cell(const std::vector<int>& k) {
    Box b;
    b.lo.resize(k.size());
    b.hi.resize(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
      b.lo[i] = k[i] - 0.5;
      b.hi[i] = k[i] + 0.5;
    }
    return b;
  }
};

// Euclidean distance from x0 to the closed box (0 when x0 is inside).
inline double distance_to_box(const std::vector<double>& x0, const Box& box) {
  double s = 0.0;
  for (int i = 0; i < box.dim(); ++i) {
    double t = 0.0;
    if (x0[i] < box.lo[i]) t = box.lo[i] - x0[i];
    else if (x0[i] > box.hi[i]) t = x0[i] - box.hi[i];
    s += t * t;
  }
  return std::sqrt(s);
}

// Q(x0, Theta) = sup over the closed box of |y - x0|_2, attained at a corner.
inline double geometric_q(const std::vector<double>& x0, const Box& theta) {
  double s = 0.0;
  for (int i = 0; i < theta.dim(); ++i) {
    double t = std::max(std::abs(theta.lo[i] - x0[i]), std::abs(theta.hi[i] - x0[i]));
    s += t * t;
  }
  return std::sqrt(s);
}

struct ProofGeometry {
  std::vector<int> k;       // dominant site
  std::vector<int> k_plus;  // near-neighbor site
  std::vector<double> x0;   // ball center z_{k+}
  Box theta;                // unit cell at k
  double Q = 0.0;           // sup_{y in Theta} |y - x0|
  std::optional<double> R;  // annulus inner radius (thm1 rule only)
  double T = 0.0;           // observation-box side
  NeighborRule rule = NeighborRule::thm1;
};

// T = 62*ceil(sqrt(d)) for the thm1 construction, 46*sqrt(d) for thm3.
inline double observation_box_side(int d, NeighborRule rule) {
  return rule == NeighborRule::thm1
             ? 62.0 * std::ceil(std::sqrt(static_cast<double>(d)))
             : 46.0 * std::sqrt(static_cast<double>(d));
}

inline ProofGeometry make_proof_geometry(const EquidistributedSequence& Z,
                                         const std::vector<int>& k, NeighborRule rule) {
  require(Z.M() == 1.0, Errc::scale_not_normalized,
          "proof geometry is built at M = 1; rescale the sequence first");
  ProofGeometry g;
  g.k = k;
  g.rule = rule;
  g.k_plus = near_neighbor(k, Z.dim(), rule);
  g.x0 = Z.center(g.k_plus);
  g.theta = Box::unit_cell(k);
  g.Q = geometric_q(g.x0, g.theta);
  g.T = observation_box_side(Z.dim(), rule);
  if (rule == NeighborRule::thm1) g.R = annulus_radius(k, Z);
  return g;
}

// Certificate for Theta inside the closed annulus B(x0, 2R) \ B(x0, R):
// the near side via exact projection onto the box, the far side over corners.
inline bool check_annulus_containment(const ProofGeometry& g) {
  require(g.R.has_value(), Errc::invalid_parameter, "annulus radius not set (thm3 rule?)");
  const double R = *g.R;
  const double near = distance_to_box(g.x0, g.theta);
  const double far = geometric_q(g.x0, g.theta);
  return near >= R - kGeomTol && far <= 2.0 * R + kGeomTol;
}

// Sufficient triangle-inequality certificate for
// B(z_{k+}, 6Q+2) inside B(k, T/2): |k - z_{k+}| + 6Q + 2 <= T/2.
inline bool check_observation_box(const ProofGeometry& g) {
  double dist2 = 0.0;
  for (std::size_t i = 0; i < g.k.size(); ++i) {
    double t = static_cast<double>(g.k[i]) - g.x0[i];
    dist2 += t * t;
  }
  return std::sqrt(dist2) + 6.0 * g.Q + 2.0 <= g.T / 2.0 + kGeomTol;
}

}  // namespace uclab
