#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>

#include "uclab/common.hpp"

namespace uclab {

// Regular discretization of the box [-L/2, L/2]^d. Only interior points are
// stored; the Dirichlet boundary layer at j=0 and j=n+1 is implicit zero.
// Points are x_j = -L/2 + j*h, j in {1..n}^d, h = L/(n+1).
struct Grid {
  int d = 1;
  double L = 1.0;
  std::int64_t n = 1;  // points per axis

  Grid() = default;
  Grid(int dim, double box_side, std::int64_t points_per_axis)
      : d(dim), L(box_side), n(points_per_axis) {
    require(d >= 1, Errc::invalid_parameter, "grid dimension must be >= 1");
    require(L > 0.0 && std::isfinite(L), Errc::invalid_parameter, "grid side must be positive");
    require(n >= 1, Errc::invalid_parameter, "grid needs at least one point per axis");
  }

  double h() const { return L / static_cast<double>(n + 1); }

  std::int64_t total_points() const {
    std::int64_t N = 1;
    for (int i = 0; i < d; ++i) N *= n;
    return N;
  }

  // cell volume h^d, the weight of the discrete L2 inner product
  double cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < d; ++i) v *= h();
    return v;
  }

  double coord(std::int64_t j) const { return -L / 2.0 + static_cast<double>(j) * h(); }

  // Row-major decode, axis 0 slowest; j components in {1..n}.
  void point_of_flat(std::int64_t flat, std::vector<double>& x) const {
    x.resize(d);
    for (int i = d - 1; i >= 0; --i) {
      x[i] = coord(flat % n + 1);
      flat /= n;
    }
  }

  // 1-based multi-index component i of a flat index
  std::int64_t axis_index(std::int64_t flat, int axis) const {
    for (int i = d - 1; i > axis; --i) flat /= n;
    return flat % n + 1;
  }

  std::int64_t stride(int axis) const {
    std::int64_t s = 1;
    for (int i = d - 1; i > axis; --i) s *= n;
    return s;
  }

  bool same_as(const Grid& g) const { return d == g.d && L == g.L && n == g.n; }
};

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A scalar function sampled on a Grid. Norms carry the h^d weight so that
// discrete quantities track their continuum counterparts without rescaling.
template <class Scalar>
struct FieldT {
  Grid grid;
  Vector<Scalar> values;

  FieldT() = default;
  explicit FieldT(const Grid& g) : grid(g), values(Vector<Scalar>::Zero(g.total_points())) {}
  FieldT(const Grid& g, Vector<Scalar> v) : grid(g), values(std::move(v)) {
    require(values.size() == grid.total_points(), Errc::grid_mismatch,
            "field length does not match grid");
  }

  double squared_norm() const { return grid.cell_volume() * values.squaredNorm(); }
  double norm() const { return std::sqrt(squared_norm()); }

  Scalar dot(const FieldT& other) const {
    require(grid.same_as(other.grid), Errc::grid_mismatch, "fields on different grids");
    if constexpr (std::is_same_v<Scalar, double>) {
      return grid.cell_volume() * values.dot(other.values);
    } else {
      return static_cast<Scalar>(grid.cell_volume()) * values.dot(other.values);
    }
  }

  FieldT& normalize() {
    double nn = norm();
    require(nn > 0.0, Errc::zero_field, "cannot normalize the zero field");
    values /= nn;
    return *this;
  }

  // mass h^d * sum |psi|^2 over points adjacent to the Dirichlet boundary
  double boundary_mass() const {
    double s = 0.0;
    const std::int64_t N = grid.total_points();
    for (std::int64_t f = 0; f < N; ++f) {
      bool adjacent = false;
      std::int64_t rem = f;
      for (int i = grid.d - 1; i >= 0; --i) {
        std::int64_t j = rem % grid.n + 1;
        rem /= grid.n;
        if (j == 1 || j == grid.n) {
          adjacent = true;
          break;
        }
      }
      if (adjacent) s += std::norm(values[f]);
    }
    return grid.cell_volume() * s;
  }
};

using Field = FieldT<double>;
using ComplexField = FieldT<std::complex<double>>;

}  // namespace uclab
