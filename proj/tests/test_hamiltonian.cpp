#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "uclab/hamiltonian.hpp"
#include "uclab/io.hpp"

using namespace uclab;

namespace {

Field random_field(const Grid& g, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Field f(g);
  for (std::int64_t i = 0; i < f.values.size(); ++i) f.values[i] = rng.next_in(-1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("potential families and sup norms") {
  Grid g(1, 8.0, 127);

  auto zero = build_potential({PotentialFamily::constant, 0.0}, g);
  REQUIRE(zero.sup_norm == 0.0);
  REQUIRE(zero.field.values.maxCoeff() == 0.0);

  PotentialSpec cspec;
  cspec.family = PotentialFamily::constant;
  cspec.value = -2.5;
  REQUIRE(build_potential(cspec, g).sup_norm == 2.5);

  PotentialSpec sspec;
  sspec.family = PotentialFamily::step;
  sspec.v0 = 3.0;
  auto step = build_potential(sspec, g);
  REQUIRE(step.sup_norm == 3.0);
  // left half zero, right half v0
  REQUIRE(step.field.values[0] == 0.0);
  REQUIRE(step.field.values[g.total_points() - 1] == 3.0);

  PotentialSpec aspec;
  aspec.family = PotentialFamily::random_alloy;
  aspec.v0 = 1.5;
  aspec.seed = 9;
  auto alloy1 = build_potential(aspec, g);
  auto alloy2 = build_potential(aspec, g);
  REQUIRE(alloy1.field.values == alloy2.field.values);
  REQUIRE(alloy1.sup_norm <= 1.5 + 1e-12);
  REQUIRE(alloy1.sup_norm > 0.0);
  REQUIRE(alloy1.field.values.minCoeff() >= 0.0);

  PotentialSpec bad;
  bad.value = std::nan("");
  REQUIRE_THROWS_AS(build_potential(bad, g), Error);
}

TEST_CASE("sup-norm transfer under constant shifts") {
  Grid g(1, 4.0, 63);
  PotentialSpec pc;
  pc.family = PotentialFamily::periodic_cosine;
  pc.v0 = 0.7;
  pc.period = 2.0;
  auto V = build_potential(pc, g);
  for (double c : {0.3, -1.2, 5.0}) {
    Potential shifted = V;
    shifted.field.values.array() += c;
    shifted.sup_norm = shifted.field.values.cwiseAbs().maxCoeff();
    REQUIRE(shifted.sup_norm <= V.sup_norm + std::abs(c) + 1e-12);
  }
  PotentialSpec c4;
  c4.family = PotentialFamily::constant;
  c4.value = 4.0;
  auto V4 = build_potential(c4, g);
  Potential V4s = V4;
  V4s.field.values.array() += 2.0;
  REQUIRE(V4s.field.values.cwiseAbs().maxCoeff() == V4.sup_norm + 2.0);
}

TEST_CASE("zero maps to zero and constant shifts add") {
  Grid g(2, 4.0, 15);
  HamiltonianOperator H0(g, build_potential({PotentialFamily::constant, 0.0}, g));
  Field zero(g);
  REQUIRE(H0.apply(zero).norm() == 0.0);

  PotentialSpec cs;
  cs.family = PotentialFamily::constant;
  cs.value = 1.75;
  HamiltonianOperator Hc(g, build_potential(cs, g));
  Field psi = random_field(g, 3);
  Field a = Hc.apply(psi);
  Field b = H0.apply(psi);
  b.values += 1.75 * psi.values;
  REQUIRE((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-12 * a.values.cwiseAbs().maxCoeff());
}

TEST_CASE("discrete sine modes are exact eigenvectors") {
  Grid g(1, 2.0, 255);
  HamiltonianOperator H(g, build_potential({PotentialFamily::constant, 0.0}, g));
  for (int m : {1, 2, 5, 17}) {
    Field psi = discrete_sine_mode(g, m);
    const double lambda = discrete_sine_eigenvalue(g, m);
    // eigenvalue formula to 1e-12 relative (Rayleigh quotient)
    const double rayleigh = psi.dot(H.apply(psi)) / psi.squared_norm();
    REQUIRE(std::abs(rayleigh - lambda) <= 1e-12 * lambda);
    REQUIRE(residual_norm(H, psi, lambda) <= 1e-10 * psi.norm());
  }
}

TEST_CASE("operator symmetry on random pairs") {
  for (int d : {1, 2}) {
    Grid g(d, 3.0, d == 1 ? 255 : 31);
    PotentialSpec spec;
    spec.family = PotentialFamily::random_alloy;
    spec.v0 = 2.0;
    spec.seed = 5;
    HamiltonianOperator H(g, build_potential(spec, g));
    for (std::uint64_t s = 0; s < 8; ++s) {
      Field phi = random_field(g, 100 + s);
      Field psi = random_field(g, 200 + s);
      const double lhs = H.apply(phi).dot(psi);
      const double rhs = phi.dot(H.apply(psi));
      // stencil entries are ~1/h^2; scale the allowance accordingly
      const double scale = phi.norm() * psi.norm() / (g.h() * g.h());
      REQUIRE(std::abs(lhs - rhs) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("residual norm identities") {
  Grid g(1, 2.0, 127);
  HamiltonianOperator H(g, build_potential({PotentialFamily::constant, 0.0}, g));
  Field psi = discrete_sine_mode(g, 3);
  psi.normalize();
  const double lambda = discrete_sine_eigenvalue(g, 3);

  REQUIRE(residual_norm(H, psi, lambda) <= 1e-10);
  for (double s : {0.5, -2.0, 10.0})
    REQUIRE(residual_norm(H, psi, lambda + s) == Catch::Approx(std::abs(s)).epsilon(1e-12));

  Field zero(g);
  REQUIRE_THROWS_AS(residual_norm(H, zero, 1.0), Error);

  Grid other(1, 2.0, 63);
  Field wrong(other);
  wrong.values.setOnes();
  REQUIRE_THROWS_AS(H.apply(wrong), Error);
}

TEST_CASE("gaussian packet residual follows the 1/sigma law") {
  Grid g(1, 256.0, 4095);
  HamiltonianOperator H(g, build_potential({PotentialFamily::constant, 0.0}, g));
  const double h = g.h();
  const double xi = 1.0;
  const double E = 2.0 / (h * h) * (1.0 - std::cos(xi * h));  // discrete symbol at xi

  auto packet = [&](double sigma) {
    Field psi(g);
    for (std::int64_t j = 1; j <= g.n; ++j) {
      const double x = g.coord(j);
      psi.values[j - 1] = std::cos(xi * x) * std::exp(-x * x / (4.0 * sigma * sigma));
    }
    return psi.normalize();
  };

  double prev = residual_norm(H, packet(4.0), E);
  for (double sigma : {8.0, 16.0}) {
    const double res = residual_norm(H, packet(sigma), E);
    REQUIRE(res < prev);
    REQUIRE(prev / res == Catch::Approx(2.0).margin(0.25));
    prev = res;
  }
}

TEST_CASE("boundary mass flags wall-touching states") {
  Grid g(1, 2.0, 127);
  Field sine = discrete_sine_mode(g, 1);
  sine.normalize();
  const double bm = sine.boundary_mass();
  REQUIRE(bm > 0.0);
  REQUIRE(bm < 1e-2);

  Field interior(g);
  for (std::int64_t j = 1; j <= g.n; ++j) {
    const double x = g.coord(j);
    interior.values[j - 1] = std::abs(x) < 0.25 ? 1.0 : 0.0;
  }
  REQUIRE(interior.boundary_mass() == 0.0);
}

TEST_CASE("binary field round-trip") {
  Grid g(2, 3.5, 13);
  Field f = random_field(g, 77);
  std::string bytes = field_to_bytes(f);
  REQUIRE(bytes.size() == 8 + 4 + 4 + 2 * 8 + 8 + sizeof(double) * 13 * 13);
  Field back = field_from_bytes(bytes);
  REQUIRE(back.grid.d == 2);
  REQUIRE(back.grid.n == 13);
  REQUIRE(back.grid.L == 3.5);
  REQUIRE(back.values == f.values);

  REQUIRE_THROWS_AS(field_from_bytes("garbage"), Error);
}

TEST_CASE("stencil ground eigenvalue converges at second order") {
  const double exact = M_PI * M_PI;  // (pi/L)^2 at L = 1
  double prev_err = -1.0;
  for (std::int64_t n : {63, 127, 255, 511}) {
    Grid g(1, 1.0, n);
    const double err = std::abs(discrete_sine_eigenvalue(g, 1) - exact);
    if (prev_err > 0) {
      const double order = std::log2(prev_err / err);
      REQUIRE(order >= 1.9);
      REQUIRE(order <= 2.1);
    }
    prev_err = err;
  }
}
