#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "uclab/bounds.hpp"
#include "uclab/spectral.hpp"

using namespace uclab;

TEST_CASE("thm1 bound hand values") {
  REQUIRE(thm1_bound({0.5, 1.0, 0.0, 0.0, 1.0}) == 0.5);
  // exponent 1 * (1 + 1) = 2 at v = 1
  REQUIRE(thm1_bound({0.1, 1.0, 1.0, 0.0, 1.0}) == Catch::Approx(0.01).epsilon(1e-14));
  // independent of M when v = 0
  for (double M : {0.5, 1.0, 3.0, 17.0})
    REQUIRE(thm1_bound({M / 2.0, M, 0.0, 0.0, 4.0}) ==
            Catch::Approx(std::pow(0.5, 4.0)).epsilon(1e-14));
}

TEST_CASE("thm1 bound scaling invariance") {
  SplitMix64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const double M = rng.next_in(0.2, 4.0);
    const double delta = rng.next_in(0.01, 0.49) * M;
    const double v = rng.next_in(0.0, 9.0);
    const double K = rng.next_in(0.1, 4.0);
    const double s = rng.next_in(0.1, 10.0);
    const double base = thm1_bound({delta, M, v, 0.0, K});
    const double scaled = thm1_bound({s * delta, s * M, v / (s * s), 0.0, K});
    REQUIRE(scaled == Catch::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("thm1 bound range and monotonicity") {
  SplitMix64 rng(32);
  for (int t = 0; t < 200; ++t) {
    const double M = rng.next_in(0.2, 4.0);
    const double delta = rng.next_in(0.01, 0.5) * M;
    const double v = rng.next_in(0.0, 9.0);
    const double K = rng.next_in(0.1, 4.0);
    const double b = thm1_bound({delta, M, v, 0.0, K});
    REQUIRE(b > 0.0);
    REQUIRE(b <= 1.0);
    if (delta < M / 2.0) REQUIRE(b < 1.0);
    if (delta * 1.1 <= M / 2.0)
      REQUIRE(thm1_bound({delta * 1.1, M, v, 0.0, K}) > b);
    REQUIRE(thm1_bound({delta, M, v + 0.5, 0.0, K}) < b);
    REQUIRE(thm1_bound({delta, M, v, 0.0, K + 0.5}) < b);
  }
  REQUIRE_THROWS_AS(thm1_bound({0.6, 1.0, 0.0, 0.0, 1.0}), Error);
  REQUIRE_THROWS_AS(thm1_bound({0.25, 1.0, -1.0, 0.0, 1.0}), Error);
}

TEST_CASE("thm2 gamma hand value and monotonicity") {
  // gamma^2 = (1/2) (1/2)^(1 * (1 + (2*0 + 1)^(2/3))) = 1/8
  const double gamma = thm2_gamma({0.5 - 1e-15, 1.0, 0.0, 1.0, 1.0});
  REQUIRE(gamma == Catch::Approx(std::sqrt(0.125)).epsilon(1e-9));

  const double g1 = thm2_gamma({0.25, 1.0, 0.5, 1.0, 1.0});
  const double g2 = thm2_gamma({0.25, 1.0, 0.5, 2.0, 1.0});
  REQUIRE(g2 < g1);  // doubling E0 shrinks gamma

  REQUIRE(thm2_gamma({1e-8, 1.0, 0.5, 1.0, 1.0}) < 1e-6);  // delta -> 0

  // the floor in the operator bound is M^4 gamma^2, the same gamma
  const BoundParams p{0.3, 1.4, 0.7, 2.0, 1.3};
  const double g = thm2_gamma(p);
  const double expo = p.K * (1.0 + std::pow(p.M, 4.0 / 3.0) *
                                       std::pow(2.0 * p.v_norm + p.E0, 2.0 / 3.0));
  const double floor = std::pow(p.M, 4.0) * g * g;
  REQUIRE(floor == Catch::Approx(0.5 * std::pow(p.delta / p.M, expo)).epsilon(1e-12));

  REQUIRE_THROWS_AS(thm2_gamma({0.5, 1.0, 0.0, 1.0, 1.0}), Error);  // needs delta < M/2
  REQUIRE_THROWS_AS(thm2_gamma({0.25, 1.0, 0.0, -1.0, 1.0}), Error);
}

TEST_CASE("weyl threshold hand value and probes") {
  REQUIRE(weyl_threshold({0.5, 1.0, 0.0, 0.0, 1.0}) == Catch::Approx(1.0).epsilon(1e-14));

  // monotone in v_norm
  REQUIRE(weyl_threshold({0.25, 1.0, 2.0, 0.0, 1.0}) >
          weyl_threshold({0.25, 1.0, 1.0, 0.0, 1.0}));

  // the sign of d(threshold)/d(delta) follows the sign of 1 - K(1+X)/2;
  // probe it numerically rather than assuming a direction
  auto dthr = [](double K, double v) {
    const double e = 1e-6;
    const double up = weyl_threshold({0.25 + e, 1.0, v, 0.0, K});
    const double dn = weyl_threshold({0.25 - e, 1.0, v, 0.0, K});
    return (up - dn) / (2.0 * e);
  };
  REQUIRE(dthr(1.0, 0.0) > 0.0);  // exponent 1 - 1/2 > 0: increasing
  REQUIRE(dthr(4.0, 0.0) < 0.0);  // exponent 1 - 2 < 0: decreasing
}

TEST_CASE("dominant census: single-cell indicator") {
  Grid g(1, 8.0, 255);
  Field phi(g);
  std::vector<double> x(1);
  for (std::int64_t f = 0; f < g.total_points(); ++f) {
    g.point_of_flat(f, x);
    phi.values[f] = (std::abs(x[0]) < 0.5) ? 1.0 : 0.0;
  }
  auto census = classify_dominant(phi, 62.0, cell_window_for(g, 1.0));
  // site 0 carries everything: 1 >= 1/124 of its T-box mass
  bool zero_dominant = false;
  for (const auto& k : census.dominant)
    if (k == std::vector<int>{0}) zero_dominant = true;
  REQUIRE(zero_dominant);
  // sites with zero mass whose T-box sees the bump are weak; T = 62 covers
  // the whole box from every site here, so all other sites are weak
  REQUIRE(census.weak.size() == census.window.count() - 1);
  REQUIRE(census.mass_dominant == Catch::Approx(census.mass_total).epsilon(1e-12));
  REQUIRE(dominant_mass_bound(census).ok);
}

TEST_CASE("dominant census: zero-mass ties are dominant") {
  Grid g(1, 8.0, 127);
  Field phi(g);
  std::vector<double> x(1);
  for (std::int64_t f = 0; f < g.total_points(); ++f) {
    g.point_of_flat(f, x);
    phi.values[f] = (std::abs(x[0] - 3.5) < 0.4) ? 1.0 : 0.0;  // mass near +3.5
  }
  // T = 2: the box around site -3 misses the bump entirely: 0 >= 0, dominant
  auto census = classify_dominant(phi, 2.0, cell_window_for(g, 1.0));
  bool far_site_dominant = false;
  for (const auto& k : census.dominant)
    if (k == std::vector<int>{-3}) far_site_dominant = true;
  REQUIRE(far_site_dominant);
}

TEST_CASE("dominant census: uniform field and the partition identity") {
  Grid g(2, 8.0, 31);
  Field one(g);
  one.values.setOnes();
  auto census = classify_dominant(one, 62.0, cell_window_for(g, 1.0));
  // every cell holds >= 1/(2 T^d) of its (clipped) T-box mass
  REQUIRE(census.weak.empty());

  SplitMix64 rng(8);
  Field noisy(g);
  for (std::int64_t i = 0; i < noisy.values.size(); ++i)
    noisy.values[i] = rng.next_in(-1.0, 1.0);
  for (double T : {62.0, 46.0 * std::sqrt(2.0)}) {
    auto c = classify_dominant(noisy, T, cell_window_for(g, 1.0));
    REQUIRE(c.mass_dominant + c.mass_weak == Catch::Approx(c.mass_total).epsilon(1e-12));
    REQUIRE(c.dominant.size() + c.weak.size() ==
            static_cast<std::size_t>(c.window.count()));
  }
}

TEST_CASE("dominant mass bound on random interior fields") {
  Grid g(1, 130.0, 519);
  SplitMix64 rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    Field phi(g);
    std::vector<double> x(1);
    for (std::int64_t f = 0; f < g.total_points(); ++f) {
      g.point_of_flat(f, x);
      phi.values[f] = std::abs(x[0]) <= 3.0 ? rng.next_in(-1.0, 1.0) : 0.0;
    }
    for (double T : {62.0, 46.0}) {
      auto census = classify_dominant(phi, T, cell_window_for(g, 1.0));
      auto check = dominant_mass_bound(census);
      REQUIRE(check.ok);
      REQUIRE(check.mass_total <= 2.0 * check.mass_dominant + 1e-12 * check.mass_total);
    }
  }
}

TEST_CASE("dominant mass bound on a computed 2D ground state") {
  Grid g(2, 16.0, 31);
  PotentialSpec spec;
  spec.family = PotentialFamily::random_alloy;
  spec.v0 = 2.0;
  spec.seed = 3;
  HamiltonianOperator H(g, build_potential(spec, g));
  auto sol = eigenpairs(H, 1);
  auto census = classify_dominant(sol.modes[0], 124.0, cell_window_for(g, 1.0));
  REQUIRE(dominant_mass_bound(census).ok);
  // the 16-box is far smaller than T = 124: every site is clipped
  REQUIRE_FALSE(census.clipped.empty());
}

TEST_CASE("covering multiplicity limit on the lattice") {
  SplitMix64 rng(55);
  for (double T : {62.0, 46.0, 46.0 * std::sqrt(2.0), 5.5}) {
    for (int d : {1, 2}) {
      const double limit = covering_multiplicity_limit(T, d);
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(d);
        for (auto& c : x) c = rng.next_in(-3.0, 3.0);
        // count lattice sites k with |x_i - k_i| < T/2 for all i
        std::int64_t count = 1;
        for (int i = 0; i < d; ++i) {
          const double lo = x[i] - T / 2.0, hi = x[i] + T / 2.0;
          std::int64_t axis = 0;
          for (std::int64_t k = static_cast<std::int64_t>(std::floor(lo)) - 1;
               k <= static_cast<std::int64_t>(std::ceil(hi)) + 1; ++k)
            if (k > lo && k < hi) ++axis;
          count *= axis;
        }
        REQUIRE(static_cast<double>(count) <= limit);
      }
    }
  }
}

TEST_CASE("thm3 lhs/rhs: ball-supported field passes for every K") {
  Grid g(1, 8.0, 511);
  auto V = build_potential({PotentialFamily::constant, 0.0}, g);
  HamiltonianOperator H(g, V);
  auto Z = make_periodic_sequence(1, 1.0, 0.25, cell_window_for(g, 1.0));
  Mask mask = rasterize_mask(Z, g);

  Field psi(g);
  std::vector<double> x(1);
  for (std::int64_t f = 0; f < g.total_points(); ++f) {
    g.point_of_flat(f, x);
    // smooth bump inside B(0, 0.25)
    const double r = std::abs(x[0]) / 0.25;
    psi.values[f] = r < 1.0 ? std::cos(0.5 * M_PI * r) * std::cos(0.5 * M_PI * r) : 0.0;
  }
  for (double K : {0.1, 1.0, 5.0, 20.0}) {
    auto [lhs, rhs] = thm3_lhs_rhs(psi, mask, {0.25, 1.0, 0.0, 0.0, K}, H);
    REQUIRE(rhs >= psi.squared_norm() * 0.999);  // mask holds the whole field
    REQUIRE(lhs <= rhs);
  }
}

TEST_CASE("thm3 rhs cross-checks against residual_norm") {
  Grid g(1, 4.0, 255);
  auto V = build_potential({PotentialFamily::constant, 0.0}, g);
  HamiltonianOperator H(g, V);
  auto Z = make_periodic_sequence(1, 1.0, 0.2, cell_window_for(g, 1.0));
  Mask mask = rasterize_mask(Z, g);

  Field psi = discrete_sine_mode(g, 2);
  psi.normalize();
  const double lambda = discrete_sine_eigenvalue(g, 2);
  auto [lhs, rhs] = thm3_lhs_rhs(psi, mask, {0.2, 1.0, 0.0, 0.0, 1.0}, H);
  // || H psi ||^2 at the E = 0 shift equals residual_norm(H, psi, 0)^2
  const double r0 = residual_norm(H, psi, 0.0);
  REQUIRE(rhs == Catch::Approx(mask.apply(psi).squared_norm() + 0.04 * r0 * r0).epsilon(1e-12));
  REQUIRE(rhs == Catch::Approx(mask.apply(psi).squared_norm() + 0.04 * lambda * lambda)
                     .epsilon(1e-9));
  (void)lhs;
}

TEST_CASE("bound parameter validation per delta range") {
  // closed range admits delta = M/2
  REQUIRE_NOTHROW(thm1_bound({0.5, 1.0, 0.0, 0.0, 1.0}));
  REQUIRE_NOTHROW(weyl_threshold({0.5, 1.0, 0.0, 0.0, 1.0}));
  // open range rejects it
  REQUIRE_THROWS_AS(thm2_gamma({0.5, 1.0, 0.0, 1.0, 1.0}), Error);
  Grid g(1, 2.0, 31);
  auto V = build_potential({PotentialFamily::constant, 0.0}, g);
  HamiltonianOperator H(g, V);
  auto Z = make_periodic_sequence(1, 1.0, 0.5, cell_window_for(g, 1.0));
  Mask mask = rasterize_mask(Z, g);
  Field psi(g);
  psi.values.setOnes();
  REQUIRE_THROWS_AS(thm3_lhs_rhs(psi, mask, {0.5, 1.0, 0.0, 0.0, 1.0}, H), Error);
}

TEST_CASE("prefix sums match brute-force box sums") {
  SplitMix64 rng(404);
  for (int d : {1, 2, 3}) {
    std::vector<std::int64_t> ext(d);
    for (auto& e : ext) e = 3 + static_cast<std::int64_t>(rng.next_u64() % 6);
    std::int64_t total = 1;
    for (auto e : ext) total *= e;
    std::vector<double> vals(static_cast<std::size_t>(total));
    for (auto& v : vals) v = rng.next_in(-2.0, 2.0);
    PrefixSums prefix(vals, ext);

    std::vector<std::int64_t> strides(d, 1);
    for (int i = d - 2; i >= 0; --i) strides[i] = strides[i + 1] * ext[i + 1];

    for (int trial = 0; trial < 40; ++trial) {
      std::vector<std::int64_t> lo(d), hi(d);
      for (int i = 0; i < d; ++i) {
        lo[i] = static_cast<std::int64_t>(rng.next_u64() % (ext[i] + 2)) - 1;
        hi[i] = lo[i] + static_cast<std::int64_t>(rng.next_u64() % (ext[i] + 1));
      }
      double brute = 0.0;
      for (std::int64_t f = 0; f < total; ++f) {
        bool in = true;
        for (int i = 0; i < d; ++i) {
          const std::int64_t idx = f / strides[i] % ext[i];
          in = in && idx >= lo[i] && idx <= hi[i];
        }
        if (in) brute += vals[static_cast<std::size_t>(f)];
      }
      REQUIRE(prefix.box_sum(lo, hi) == Catch::Approx(brute).margin(1e-10));
    }
  }
}
