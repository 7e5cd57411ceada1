#pragma once

#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <vector>

#include "uclab/common.hpp"
#include "uclab/geometry.hpp"
#include "uclab/grid.hpp"

namespace uclab {

enum class PotentialFamily { constant, step, periodic_cosine, random_alloy };

inline const char* family_name(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::constant: return "constant";
    case PotentialFamily::step: return "step";
    case PotentialFamily::periodic_cosine: return "periodic-cosine";
    case PotentialFamily::random_alloy: return "random-alloy";
  }
  return "unknown";
}

struct PotentialSpec {
  PotentialFamily family = PotentialFamily::constant;
  double value = 0.0;      // constant: the value
  double v0 = 0.0;         // step: height; periodic-cosine / random-alloy: amplitude
  double edge = 0.0;       // step: V = v0 on { x_1 > edge }
  double period = 1.0;     // periodic-cosine
  double bump_radius = 0.5;  // random-alloy single-site radius
  std::uint64_t seed = 0;  // random-alloy couplings
};

struct Potential {
  Grid grid;
  Field field;
  double sup_norm = 0.0;
  PotentialSpec spec;
};

// Bounded measurable potentials, one sample per grid point. The random alloy
// places i.i.d.-uniform couplings in [0, v0] on the unit-cell lattice, each
// multiplying a cos^2 bump of the given radius.
inline Potential build_potential(const PotentialSpec& spec, const Grid& grid) {
  for (double p : {spec.value, spec.v0, spec.edge, spec.period, spec.bump_radius})
    require(std::isfinite(p), Errc::invalid_parameter, "potential parameters must be finite");

  Potential pot;
  pot.grid = grid;
  pot.spec = spec;
  pot.field = Field(grid);
  const std::int64_t N = grid.total_points();
  std::vector<double> x(grid.d);

  switch (spec.family) {
    case PotentialFamily::constant:
      pot.field.values.setConstant(spec.value);
      break;
    case PotentialFamily::step:
      for (std::int64_t f = 0; f < N; ++f) {
        grid.point_of_flat(f, x);
        pot.field.values[f] = x[0] > spec.edge ? spec.v0 : 0.0;
      }
      break;
    case PotentialFamily::periodic_cosine:
      require(spec.period > 0.0, Errc::invalid_parameter, "cosine period must be > 0");
      for (std::int64_t f = 0; f < N; ++f) {
        grid.point_of_flat(f, x);
        double s = 0.0;
        for (int i = 0; i < grid.d; ++i)
          s += std::cos(2.0 * M_PI * x[i] / spec.period);
        pot.field.values[f] = spec.v0 * s;
      }
      break;
    case PotentialFamily::random_alloy: {
      require(spec.bump_radius > 0.0, Errc::invalid_parameter, "bump radius must be > 0");
      IndexBox cells = cell_window_for(grid, 1.0);
      std::vector<double> couplings(static_cast<std::size_t>(cells.count()));
      SplitMix64 rng(spec.seed);
      for (auto& c : couplings) c = rng.next_in(0.0, spec.v0);
      const double r = spec.bump_radius;
      std::vector<int> k(grid.d);
      for (std::int64_t f = 0; f < N; ++f) {
        grid.point_of_flat(f, x);
        // bumps with radius <= 1/2 only reach points in their own cell's
        // immediate neighborhood; scan the 3^d adjacent cells
        double v = 0.0;
        for (int i = 0; i < grid.d; ++i) k[i] = static_cast<int>(cell_of(x[i], 1.0));
        IndexBox nbhd = [&] {
          std::vector<int> lo(grid.d), hi(grid.d);
          for (int i = 0; i < grid.d; ++i) {
            lo[i] = k[i] - 1;
            hi[i] = k[i] + 1;
          }
          return IndexBox(lo, hi);
        }();
        nbhd.for_each([&](const std::vector<int>& kk) {
          if (!cells.contains(kk)) return;
          double d2 = 0.0;
          for (int i = 0; i < grid.d; ++i) {
            double t = x[i] - kk[i];
            d2 += t * t;
          }
          if (d2 < r * r) {
            double c = std::cos(0.5 * M_PI * std::sqrt(d2) / r);
            v += couplings[static_cast<std::size_t>(cells.flat(kk))] * c * c;
          }
        });
        pot.field.values[f] = v;
      }
      break;
    }
  }
  pot.sup_norm = pot.field.values.size() ? pot.field.values.cwiseAbs().maxCoeff() : 0.0;
  return pot;
}

// H = -Delta_h + V with the (2d+1)-point central-difference Laplacian and
// Dirichlet boundary. Application is pure; instances are freely shareable.
class HamiltonianOperator {
 public:
  HamiltonianOperator(const Grid& grid, Potential potential)
      : grid_(grid), potential_(std::move(potential)) {
    require(grid_.same_as(potential_.grid), Errc::grid_mismatch,
            "potential sampled on a different grid");
  }

  const Grid& grid() const { return grid_; }
  const Potential& potential() const { return potential_; }

  template <class Scalar>
  FieldT<Scalar> apply(const FieldT<Scalar>& psi) const {
    require(grid_.same_as(psi.grid), Errc::grid_mismatch, "field lives on a different grid");
    FieldT<Scalar> out(grid_);
    const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
    const double diag = 2.0 * grid_.d * inv_h2;
    const std::int64_t N = grid_.total_points();
    const auto& v = psi.values;
    auto& o = out.values;
    for (std::int64_t f = 0; f < N; ++f)
      o[f] = (diag + potential_.field.values[f]) * v[f];
    for (int axis = 0; axis < grid_.d; ++axis) {
      const std::int64_t s = grid_.stride(axis);
      for (std::int64_t f = 0; f < N; ++f) {
        const std::int64_t j = grid_.axis_index(f, axis);
        if (j > 1) o[f] -= inv_h2 * v[f - s];
        if (j < grid_.n) o[f] -= inv_h2 * v[f + s];
      }
    }
    return out;
  }

  // Sparse matrix of the operator (plain coefficient representation).
  Eigen::SparseMatrix<double> sparse_matrix() const {
    const std::int64_t N = grid_.total_points();
    const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
    const double diag = 2.0 * grid_.d * inv_h2;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N * (1 + 2 * grid_.d)));
    for (std::int64_t f = 0; f < N; ++f)
      trip.emplace_back(f, f, diag + potential_.field.values[f]);
    for (int axis = 0; axis < grid_.d; ++axis) {
      const std::int64_t s = grid_.stride(axis);
      for (std::int64_t f = 0; f < N; ++f) {
        if (grid_.axis_index(f, axis) < grid_.n) {
          trip.emplace_back(f, f + s, -inv_h2);
          trip.emplace_back(f + s, f, -inv_h2);
        }
      }
    }
    Eigen::SparseMatrix<double> A(N, N);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
  }

  // Dense matrix of the operator (plain coefficient representation; symmetric).
  Eigen::MatrixXd dense_matrix() const {
    const std::int64_t N = grid_.total_points();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
    const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
    const double diag = 2.0 * grid_.d * inv_h2;
    for (std::int64_t f = 0; f < N; ++f) A(f, f) = diag + potential_.field.values[f];
    for (int axis = 0; axis < grid_.d; ++axis) {
      const std::int64_t s = grid_.stride(axis);
      for (std::int64_t f = 0; f < N; ++f) {
        const std::int64_t j = grid_.axis_index(f, axis);
        if (j < grid_.n) {
          A(f, f + s) = -inv_h2;
          A(f + s, f) = -inv_h2;
        }
      }
    }
    return A;
  }

 private:
  Grid grid_;
  Potential potential_;
};

// ||H psi - E psi|| in the discrete L2 norm.
template <class Scalar>
inline double residual_norm(const HamiltonianOperator& H, const FieldT<Scalar>& psi, double E) {
  require(psi.values.size() > 0 && psi.squared_norm() > 0.0, Errc::zero_field,
          "residual of the zero field is undefined");
  FieldT<Scalar> r = H.apply(psi);
  r.values -= Scalar(E) * psi.values;
  return r.norm();
}

// Exact eigenvalue of the 1D 3-point stencil for the m-th discrete sine mode.
inline double discrete_sine_eigenvalue(const Grid& grid, int m) {
  const double h = grid.h();
  return 2.0 / (h * h) * (1.0 - std::cos(m * M_PI * h / grid.L));
}

// The m-th discrete sine mode on a 1D grid (exact -Delta_h eigenvector).
inline Field discrete_sine_mode(const Grid& grid, int m) {
  require(grid.d == 1, Errc::invalid_parameter, "sine modes are 1D");
  Field psi(grid);
  for (std::int64_t j = 1; j <= grid.n; ++j)
    psi.values[j - 1] = std::sin(static_cast<double>(m) * M_PI * static_cast<double>(j) /
                                 static_cast<double>(grid.n + 1));
  return psi;
}

}  // namespace uclab
