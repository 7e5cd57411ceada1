#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "uclab/experiments.hpp"

using namespace uclab;

namespace {

Json small_cfg() {
  Json cfg = default_config();
  cfg["run"]["dimension"] = 1;
  cfg["grid"]["L"] = 8.0;
  cfg["grid"]["n"] = 255;
  cfg["potential"]["family"] = "step";
  cfg["potential"]["v0"] = 6.0;
  cfg["sequence"]["kind"] = "perturbed";
  cfg["sampling"]["delta"] = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5};
  cfg["solver"]["n_eigs"] = 2;
  return cfg;
}

// independent mask-mass oracle: scan every center, no cell shortcut
double quadrature_ratio_oracle(const Field& phi, const EquidistributedSequence& Z) {
  const Grid& g = phi.grid;
  std::vector<double> x(g.d);
  double masked = 0.0, total = 0.0;
  for (std::int64_t f = 0; f < g.total_points(); ++f) {
    g.point_of_flat(f, x);
    bool inside = false;
    Z.window().for_each([&](const std::vector<int>& k) {
      if (inside) return;
      auto z = Z.center(k);
      double r2 = 0.0;
      for (int i = 0; i < g.d; ++i) r2 += (x[i] - z[i]) * (x[i] - z[i]);
      if (r2 < Z.delta() * Z.delta()) inside = true;
    });
    const double m = phi.values[f] * phi.values[f];
    total += m;
    if (inside) masked += m;
  }
  return masked / total;
}

}  // namespace

TEST_CASE("sampling ratio: trivial masks and the quadrature oracle") {
  Grid g(1, 8.0, 255);
  auto H = HamiltonianOperator(g, build_potential({PotentialFamily::constant, 0.0}, g));
  auto sol = eigenpairs(H, 1);
  const Field& phi = sol.modes[0];

  Mask all;
  all.grid = g;
  all.indicator.assign(g.total_points(), 1);
  REQUIRE(sampling_ratio(phi, all) == Catch::Approx(1.0).margin(1e-14));

  auto Z = make_periodic_sequence(1, 1.0, 0.25, cell_window_for(g, 1.0));
  Mask mask = rasterize_mask(Z, g);
  // field supported outside every ball
  Field outside(g);
  std::vector<double> x(1);
  for (std::int64_t f = 0; f < g.total_points(); ++f) {
    g.point_of_flat(f, x);
    const double frac = x[0] - std::round(x[0]);
    outside.values[f] = std::abs(frac) > 0.3 ? 1.0 : 0.0;
  }
  REQUIRE(sampling_ratio(outside, mask) == 0.0);

  REQUIRE(sampling_ratio(phi, mask) ==
          Catch::Approx(quadrature_ratio_oracle(phi, Z)).margin(1e-10));

  Field zero(g);
  REQUIRE_THROWS_AS(sampling_ratio(zero, mask), Error);
}

TEST_CASE("exponent fit recovers synthetic power laws") {
  std::vector<double> deltas = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (double c : {0.5, 1.0, 2.7}) {
    std::vector<double> ratios;
    for (double d : deltas) ratios.push_back(std::pow(d, c));
    // v = 1, M = 1: K_hat = c / (1 + 1) = c/2
    auto fit = fit_exponent_from_ratios(deltas, ratios, 1.0, 1.0);
    REQUIRE(fit.K_hat == Catch::Approx(c / 2.0).epsilon(1e-8));
    REQUIRE(fit.r_squared >= 1.0 - 1e-12);
  }

  REQUIRE_THROWS_AS(fit_exponent_from_ratios({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}, 1.0, 0.0),
                    Error);  // degenerate: 3 points
  REQUIRE_THROWS_AS(
      fit_exponent_from_ratios({0.1, 0.2, 0.3, 0.4}, {0.1, 0.0, 0.3, 0.4}, 1.0, 0.0),
      Error);  // nonpositive ratio
}

TEST_CASE("fit-exponent run: positive K, high R^2, holdout passes") {
  auto out = run_fit_exponent(small_cfg());
  REQUIRE(out.n_fail == 0);
  const Json& fit = out.report["fit"];
  REQUIRE(fit["K_hat"].get<double>() > 0.0);
  REQUIRE(fit["r_squared"].get<double>() >= 0.9);
  REQUIRE(fit["holdout_all_pass"].get<bool>());
  REQUIRE(fit["holdout"].size() == 5 * 8);
}

TEST_CASE("verify-thm1: records, ranges and the full-cover limit") {
  auto out = run_verify_thm1(small_cfg());
  REQUIRE(out.n_fail == 0);
  REQUIRE(out.report["records"].size() == 2 * 8);
  for (const auto& rec : out.report["records"]) {
    const double ratio = rec["observed_ratio"].get<double>();
    REQUIRE(ratio >= -1e-12);
    REQUIRE(ratio <= 1.0 + 1e-12);
    // pass flags recomputable from the stored numbers
    const bool expected = rec["bound"].get<double>() <= ratio;
    if (rec["pass"].is_boolean()) REQUIRE(rec["pass"].get<bool>() == expected);
  }
  // delta = M/2: balls tile the line up to their boundary points, so the
  // ratio tends to 1 as h -> 0 (a few grid points sit exactly on ball edges)
  Json fine = small_cfg();
  fine["grid"]["n"] = 1023;
  fine["sampling"]["delta"] = {0.2, 0.3, 0.4, 0.5};
  auto out_fine = run_verify_thm1(fine);
  bool saw_full = false;
  for (const auto& rec : out_fine.report["records"])
    if (rec["field_index"] == 0 && rec["delta"] == 0.5) {
      REQUIRE(rec["observed_ratio"].get<double>() >= 0.99);
      REQUIRE(rec["bound"].get<double>() < 1.0);
      REQUIRE(rec["pass"].get<bool>());
      saw_full = true;
    }
  REQUIRE(saw_full);
  // census blocks present with the mass identity
  REQUIRE(out.report["census"].is_array());
  for (const auto& c : out.report["census"]) REQUIRE(c["mass_bound_ok"].get<bool>());
}

TEST_CASE("verify-thm1 determinism: bytes and job counts") {
  auto a = run_verify_thm1(small_cfg(), 1);
  auto b = run_verify_thm1(small_cfg(), 1);
  REQUIRE(a.report.dump() == b.report.dump());
  auto c = run_verify_thm1(small_cfg(), 4);
  REQUIRE(a.report.dump() == c.report.dump());
}

TEST_CASE("verify-projector: trivial rank, rank-1 identity, dense oracle") {
  Json cfg = default_config();
  cfg["grid"]["L"] = 8.0;
  cfg["grid"]["n"] = 64;
  cfg["potential"]["family"] = "constant";
  cfg["sampling"]["delta"] = {0.25};
  cfg["bound"]["K"] = 1.0;
  cfg["interval"]["E0"] = 6.0;
  cfg["solver"]["tol"] = 1e-10;

  // rank 0: interval below the spectrum
  Json trivial = cfg;
  trivial["interval"]["center"] = -100.0;
  trivial["interval"]["halfwidth"] = 0.001;
  auto out0 = run_verify_projector(trivial);
  REQUIRE(out0.n_fail == 0);
  REQUIRE(out0.report["records"][0]["rank"] == 0);
  REQUIRE(out0.report["records"][0]["trivial_pass"] == true);

  // ground interval: rank 1, mu_min equals the sampling ratio of the mode
  auto out1 = run_verify_projector(cfg);
  REQUIRE(out1.n_fail == 0);
  const Json& rec = out1.report["records"][0];
  REQUIRE(rec["rank"] == 1);
  REQUIRE(rec["rank1_ratio_check"].get<double>() <= 1e-10);
  REQUIRE(rec["pass"].get<bool>());
  REQUIRE(rec["mu_min"].get<double>() >= rec["floor"].get<double>());
  REQUIRE(rec["dense_oracle_ok"].get<bool>());
  REQUIRE(rec["dense_oracle_max_diff"].get<double>() <= 1e-8);
  REQUIRE(rec["chain_all_ok"].get<bool>());
  REQUIRE(rec["complex_split"]["norm_split_ok"].get<bool>());

  // interval wider than 2 gamma is a configuration error
  Json wide = cfg;
  wide["interval"]["halfwidth"] = 5.0;
  REQUIRE_THROWS_AS(run_verify_projector(wide), Error);

  // delta = M/2 violates the open-range hypothesis
  Json half = cfg;
  half["sampling"]["delta"] = {0.5};
  REQUIRE_THROWS_AS(run_verify_projector(half), Error);
}

TEST_CASE("verify-projector: per-delta cases in a sweep") {
  Json cfg = default_config();
  cfg["grid"]["L"] = 8.0;
  cfg["grid"]["n"] = 64;
  cfg["potential"]["family"] = "constant";
  cfg["sampling"]["delta"] = {0.15, 0.25};
  cfg["bound"]["K"] = 1.0;
  cfg["interval"]["E0"] = 6.0;
  cfg["solver"]["tol"] = 1e-10;
  auto out = run_verify_projector(cfg);
  REQUIRE(out.n_fail == 0);
  REQUIRE(out.report["records"].size() == 2);
  const double g0 = out.report["records"][0]["gamma"].get<double>();
  const double g1 = out.report["records"][1]["gamma"].get<double>();
  REQUIRE(g0 < g1);  // gamma grows with delta
  for (const auto& rec : out.report["records"]) REQUIRE(rec["pass"].get<bool>());
}

TEST_CASE("verify-projector: rank-2 compression matches brute force") {
  Json cfg = default_config();
  cfg["grid"]["L"] = 8.0;
  cfg["grid"]["n"] = 64;
  cfg["potential"]["family"] = "constant";
  cfg["sampling"]["delta"] = {0.25};
  cfg["bound"]["K"] = 0.1;  // small K: gamma wide enough for two levels
  cfg["interval"]["E0"] = 6.0;
  cfg["interval"]["center"] = 0.4;
  cfg["interval"]["halfwidth"] = 0.3;
  cfg["solver"]["tol"] = 1e-10;
  auto out = run_verify_projector(cfg);
  const Json& rec = out.report["records"][0];
  REQUIRE(rec["rank"] == 2);
  REQUIRE(rec["dense_oracle_ok"].get<bool>());
  REQUIRE(rec["dense_oracle_max_diff"].get<double>() <= 1e-8);
}

TEST_CASE("verify-residual: all families pass and flags recompute") {
  Json cfg = small_cfg();
  cfg["sampling"]["delta"] = {0.05, 0.1, 0.25, 0.4};
  cfg["residual"]["eigenfunctions"] = 2;
  cfg["residual"]["packets_x0"] = {-2.0};
  cfg["residual"]["packets_sigma"] = {0.4};
  cfg["residual"]["packets_xi"] = {2.0};
  cfg["residual"]["band_limited"] = 2;
  cfg["residual"]["band_modes"] = 4;
  auto out = run_verify_residual(cfg);
  REQUIRE(out.n_fail == 0);
  REQUIRE(out.report["records"].size() == (2 + 1 + 2) * 4);
  for (const auto& rec : out.report["records"]) {
    REQUIRE(rec["pass"].get<bool>() ==
            (rec["lhs"].get<double>() <= rec["rhs"].get<double>()));
  }
}

TEST_CASE("verify-weyl: eigen-defect reduces to the sampling check") {
  Json cfg = default_config();
  cfg["grid"]["L"] = 8.0;
  cfg["grid"]["n"] = 255;
  cfg["potential"]["family"] = "constant";
  cfg["sampling"]["delta"] = {0.25};
  cfg["bound"]["K"] = 1.0;
  cfg["solver"]["n_eigs"] = 2;

  // ground energy of the discrete box
  Workspace ws(cfg);
  auto sol = eigenpairs(ws.H, 1, ws.solver);
  cfg["weyl"]["E"] = sol.energies[0];
  cfg["weyl"]["strategy"] = "eigen-defect";
  cfg["weyl"]["n_from"] = 3;
  cfg["weyl"]["n_to"] = 6;

  auto out = run_verify_weyl(cfg);
  REQUIRE_FALSE(out.solver_error);
  REQUIRE(out.n_fail == 0);
  int in_scope = 0;
  for (const auto& rec : out.report["records"]) {
    REQUIRE(rec["residual_contract_ok"].get<bool>());
    if (rec["in_scope"].get<bool>()) {
      ++in_scope;
      REQUIRE(rec["pass"].is_boolean());
      REQUIRE(rec["bound"].get<double>() <= rec["observed_ratio"].get<double>());
    }
  }
  REQUIRE(in_scope > 0);

  // a large K pushes the threshold above every index: all out of scope
  Json big = cfg;
  big["bound"]["K"] = 6.0;
  auto out2 = run_verify_weyl(big);
  for (const auto& rec : out2.report["records"]) {
    REQUIRE_FALSE(rec["in_scope"].get<bool>());
    REQUIRE(rec["pass"] == "out-of-scope");
  }
}

TEST_CASE("oracle agreement: dense recomputation on a tiny grid") {
  Json cfg = small_cfg();
  cfg["grid"]["n"] = 255;
  cfg["sampling"]["delta"] = {0.1, 0.25};
  cfg["bound"]["K"] = 0.5;
  auto out = run_verify_thm1(cfg);

  // independent assembly: stencil matrix built here, diagonalized by Eigen
  Workspace ws(cfg);
  const std::int64_t N = ws.grid.total_points();
  const double inv_h2 = 1.0 / (ws.grid.h() * ws.grid.h());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (std::int64_t i = 0; i < N; ++i) {
    A(i, i) = 2.0 * inv_h2 + ws.pot.field.values[i];
    if (i > 0) A(i, i - 1) = -inv_h2;
    if (i + 1 < N) A(i, i + 1) = -inv_h2;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);

  for (const auto& rec : out.report["records"]) {
    const int e = rec["field_index"].get<int>();
    const double delta = rec["delta"].get<double>();
    Field phi(ws.grid);
    phi.values = es.eigenvectors().col(e) / std::sqrt(ws.grid.cell_volume());
    const double ratio = quadrature_ratio_oracle(phi, ws.sequence(delta));
    REQUIRE(rec["observed_ratio"].get<double>() == Catch::Approx(ratio).margin(1e-8));
  }
}

TEST_CASE("CSV flattening") {
  auto out = run_fit_exponent(small_cfg());
  const std::string csv = csv_from_report(out.report);
  REQUIRE(csv.rfind("case_id,", 0) == 0);
  // header + one line per record
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  REQUIRE(lines == 1 + static_cast<long>(out.report["records"].size()));
}

TEST_CASE("validate-geometry run") {
  Json cfg = default_config();
  cfg["geometry"]["trials"] = 50;
  cfg["run"]["dimension"] = 2;
  cfg["grid"]["L"] = 6.0;
  cfg["grid"]["n"] = 63;
  cfg["geometry"]["export_mask"] = true;
  cfg["sequence"]["kind"] = "perturbed";
  cfg["sampling"]["delta"] = {0.3};
  auto out = run_validate_geometry(cfg);
  REQUIRE(out.n_fail == 0);
  REQUIRE(out.report["q_correction_witness"]["Q"].get<double>() == 2.9);
  REQUIRE(out.artifacts.count("mask.pgm") == 1);
  REQUIRE(out.artifacts.count("sequence.json") == 1);
}

TEST_CASE("eigen run artifacts") {
  Json cfg = default_config();
  cfg["grid"]["L"] = 1.0;
  cfg["grid"]["n"] = 127;
  cfg["solver"]["n_eigs"] = 3;
  auto out = run_eigen(cfg);
  REQUIRE(out.artifacts.count("manifest.json") == 1);
  REQUIRE(out.artifacts.count("mode_000.f64") == 1);
  REQUIRE(out.artifacts.count("mode_002.f64") == 1);
  Field mode = field_from_bytes(out.artifacts.at("mode_000.f64"));
  REQUIRE(std::abs(mode.norm() - 1.0) <= 1e-10);
  Json manifest = Json::parse(out.artifacts.at("manifest.json"));
  REQUIRE(manifest["energies"].size() == 3);
}
