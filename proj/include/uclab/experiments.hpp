#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "uclab/bounds.hpp"
#include "uclab/config.hpp"
#include "uclab/geometry.hpp"
#include "uclab/grid.hpp"
#include "uclab/hamiltonian.hpp"
#include "uclab/io.hpp"
#include "uclab/spectral.hpp"

namespace uclab {

// ||W phi||^2 / ||phi||^2, the observed counterpart of the sampling bounds.
// Reports store squared quantities throughout ("squared" norm convention);
// the exponent constant K is the squared-convention constant as well.
template <class Scalar>
inline double sampling_ratio(const FieldT<Scalar>& phi, const Mask& mask) {
  require(phi.grid.same_as(mask.grid), Errc::grid_mismatch, "field and mask grids differ");
  const double total = phi.squared_norm();
  require(total > 0.0, Errc::zero_field, "sampling ratio of the zero field");
  return mask.apply(phi).squared_norm() / total;
}

// Runs fn(0..count-1) on a small pool; results must be written to
// preallocated slots so merge order never depends on scheduling.
inline void parallel_for(std::int64_t count, int jobs, const std::function<void(std::int64_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  const int workers = static_cast<int>(std::min<std::int64_t>(jobs, count));
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        std::int64_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Workspace: everything a run derives from its config document.

struct Workspace {
  Json cfg;
  int d;
  std::uint64_t seed;
  Grid grid;
  Potential pot;
  HamiltonianOperator H;
  double M;
  std::vector<double> deltas;
  SolverOptions solver;
  double boundary_flag;
  double ratio_slack;
  int jobs;

  static PotentialSpec potential_spec(const Json& cfg) {
    PotentialSpec spec;
    const auto& p = cfg.at("potential");
    const std::string fam = p.at("family").get<std::string>();
    if (fam == "constant") spec.family = PotentialFamily::constant;
    else if (fam == "step") spec.family = PotentialFamily::step;
    else if (fam == "periodic-cosine") spec.family = PotentialFamily::periodic_cosine;
    else if (fam == "random-alloy") spec.family = PotentialFamily::random_alloy;
    else fail(Errc::bad_config, "unknown potential family: " + fam);
    spec.value = p.at("value").get<double>();
    spec.v0 = p.at("v0").get<double>();
    spec.edge = p.at("edge").get<double>();
    spec.period = p.at("period").get<double>();
    spec.bump_radius = p.at("bump_radius").get<double>();
    spec.seed = p.at("seed").get<std::uint64_t>();
    return spec;
  }

  explicit Workspace(Json config, int job_count = 1)
      : cfg(std::move(config)),
        d(cfg.at("run").at("dimension").get<int>()),
        seed(cfg.at("run").at("seed").get<std::uint64_t>()),
        grid(d, cfg.at("grid").at("L").get<double>(), cfg.at("grid").at("n").get<std::int64_t>()),
        pot(build_potential(potential_spec(cfg), grid)),
        H(grid, pot),
        M(cfg.at("sequence").at("M").get<double>()),
        deltas(cfg.at("sampling").at("delta").get<std::vector<double>>()),
        boundary_flag(cfg.at("report").at("boundary_flag").get<double>()),
        ratio_slack(cfg.at("report").at("ratio_slack").get<double>()),
        jobs(job_count) {
    require(M > 0.0, Errc::bad_config, "sequence.M must be > 0");
    require(!deltas.empty(), Errc::bad_config, "sampling.delta must be nonempty");
    const auto& s = cfg.at("solver");
    solver.tol = s.at("tol").get<double>();
    solver.dense_threshold = s.at("dense_threshold").get<std::int64_t>();
    solver.force_iterative = s.at("force_iterative").get<bool>();
    solver.max_subspace = s.at("max_subspace").get<int>();
  }

  EquidistributedSequence sequence(double delta, std::optional<std::uint64_t> seed_override =
                                                     std::nullopt) const {
    const IndexBox window = cell_window_for(grid, M);
    const std::string kind = cfg.at("sequence").at("kind").get<std::string>();
    if (kind == "periodic" && !seed_override)
      return make_periodic_sequence(d, M, delta, window);
    const std::uint64_t s =
        seed_override ? *seed_override : cfg.at("sequence").at("seed").get<std::uint64_t>();
    if (kind == "periodic" || kind == "perturbed")
      return make_perturbed_sequence(d, M, delta, window, s);
    fail(Errc::bad_config, "unknown sequence kind: " + kind);
  }

  double v_norm_sup(double E) const {
    return (pot.field.values.array() - E).abs().maxCoeff();
  }

  double resolved_K(double fallback_fit_value) const {
    const Json& K = cfg.at("bound").at("K");
    if (K.is_string()) {
      require(K.get<std::string>() == "fit", Errc::bad_config,
              "bound.K must be a number or \"fit\"");
      return fallback_fit_value;
    }
    return K.get<double>();
  }

  bool wants_fit() const { return cfg.at("bound").at("K").is_string(); }
};

// ---------------------------------------------------------------------------
// Exponent fit: least-squares slope of log(ratio) against log(delta/M) for the
// ground state, K_hat = slope / (1 + M^{4/3} v^{2/3}), then held-out checks
// with fresh sequence seeds and a configurable exponent margin.

struct FitPoint {
  double delta = 0.0;
  double ratio = 0.0;
  double fitted = 0.0;
  double log_residual = 0.0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double K_hat = 0.0;
  double v_norm = 0.0;
  double margin = 0.0;
  std::vector<FitPoint> points;
  struct Holdout {
    std::uint64_t seed;
    double delta;
    double ratio;
    double bound;
    bool pass;
  };
  std::vector<Holdout> holdout;
  bool holdout_all_pass = true;
};

inline FitResult fit_exponent_from_ratios(const std::vector<double>& deltas,
                                          const std::vector<double>& ratios, double M,
                                          double v_norm) {
  require(deltas.size() == ratios.size(), Errc::invalid_parameter, "sweep size mismatch");
  require(deltas.size() >= 4, Errc::degenerate_sweep,
          "exponent fit needs at least 4 sweep points");
  for (double r : ratios)
    require(r > 0.0, Errc::nonpositive_ratio, "sampling ratio must be positive for the fit");

  const std::size_t n = deltas.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = std::log(deltas[i] / M);
    ys[i] = std::log(ratios[i]);
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  require(std::abs(denom) > 1e-30, Errc::degenerate_sweep, "sweep points are collinear in x");
  FitResult fit;
  fit.slope = (nn * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / nn;
  double ss_res = 0, ss_tot = 0;
  const double ymean = sy / nn;
  for (std::size_t i = 0; i < n; ++i) {
    const double yhat = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - yhat) * (ys[i] - yhat);
    ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    fit.points.push_back({deltas[i], ratios[i], std::exp(yhat), ys[i] - yhat});
  }
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.v_norm = v_norm;
  fit.K_hat = fit.slope / (1.0 + std::pow(M, 4.0 / 3.0) * std::pow(v_norm, 2.0 / 3.0));
  return fit;
}

// ---------------------------------------------------------------------------
// Run outcomes: a deterministic JSON report plus exit-relevant tallies.

struct RunOutput {
  Json report;
  int n_pass = 0;
  int n_fail = 0;
  int n_advisory = 0;
  bool solver_error = false;
  std::map<std::string, std::string> artifacts;  // extra files (PGM, fields, ...)

  bool hard_fail() const { return n_fail > 0; }
};

inline Json report_header(const char* verb, const Json& cfg) {
  Json j;
  j["tool"] = "uclab";
  j["format_version"] = 1;
  j["verb"] = verb;
  j["conventions"] = {
      {"norm", "squared"},
      {"note", "observed_ratio and bound are squared quantities; K is the "
               "squared-convention exponent constant"}};
  j["config"] = cfg;
  return j;
}

namespace detail {

inline Json census_to_json(const DominantCensus& census, const std::string& variant) {
  Json j;
  j["T"] = census.T;
  j["variant"] = variant;
  j["dominant"] = census.dominant;
  j["mass_dominant"] = census.mass_dominant;
  j["mass_total"] = census.mass_total;
  j["clipped"] = census.clipped;
  j["n_dominant"] = census.dominant.size();
  j["n_weak"] = census.weak.size();
  const auto check = dominant_mass_bound(census);
  j["mass_bound_ok"] = check.ok;
  return j;
}

inline Json fit_to_json(const FitResult& fit) {
  Json j;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r_squared"] = fit.r_squared;
  j["K_hat"] = fit.K_hat;
  j["v_norm"] = fit.v_norm;
  j["margin"] = fit.margin;
  Json pts = Json::array();
  for (const auto& p : fit.points)
    pts.push_back({{"delta", p.delta},
                   {"ratio", p.ratio},
                   {"fitted", p.fitted},
                   {"log_residual", p.log_residual}});
  j["points"] = std::move(pts);
  Json ho = Json::array();
  for (const auto& h : fit.holdout)
    ho.push_back({{"seed", h.seed},
                  {"delta", h.delta},
                  {"ratio", h.ratio},
                  {"bound", h.bound},
                  {"pass", h.pass}});
  j["holdout"] = std::move(ho);
  j["holdout_all_pass"] = fit.holdout_all_pass;
  return j;
}

// Shared by the fit verb and K = "fit" resolution: ground-state ratios over
// the delta sweep, fit, then holdout validation.
inline FitResult run_fit(const Workspace& ws, const EigenSolution& sol) {
  const double E0 = sol.energies.front();
  const double v = ws.v_norm_sup(E0);
  std::vector<double> ratios(ws.deltas.size());
  std::vector<Mask> masks(ws.deltas.size());
  parallel_for(static_cast<std::int64_t>(ws.deltas.size()), ws.jobs, [&](std::int64_t i) {
    masks[i] = rasterize_mask(ws.sequence(ws.deltas[i]), ws.grid);
  });
  for (std::size_t i = 0; i < ws.deltas.size(); ++i)
    ratios[i] = sampling_ratio(sol.modes.front(), masks[i]);

  FitResult fit = fit_exponent_from_ratios(ws.deltas, ratios, ws.M, v);
  fit.margin = ws.cfg.at("bound").at("fit_margin").get<double>();
  const auto seeds = ws.cfg.at("bound").at("holdout_seeds").get<std::vector<std::uint64_t>>();
  const double K_val = fit.K_hat * (1.0 + fit.margin);
  for (std::uint64_t s : seeds) {
    for (double delta : ws.deltas) {
      Mask mask = rasterize_mask(ws.sequence(delta, s), ws.grid);
      const double ratio = sampling_ratio(sol.modes.front(), mask);
      const double bound = thm1_bound({delta, ws.M, v, 0.0, K_val});
      const bool pass = bound <= ratio;
      fit.holdout.push_back({s, delta, ratio, bound, pass});
      fit.holdout_all_pass = fit.holdout_all_pass && pass;
    }
  }
  return fit;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// verify-thm1: eigenfunction sampling ratios against the closed-form bound.

inline RunOutput run_verify_thm1(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("verify-thm1", cfg);

  const int n_eigs = ws.cfg.at("solver").at("n_eigs").get<int>();
  EigenSolution sol = eigenpairs(ws.H, n_eigs, ws.solver);

  std::optional<FitResult> fit;
  if (ws.wants_fit()) fit = detail::run_fit(ws, sol);
  const double K = ws.resolved_K(fit ? fit->K_hat : 1.0);
  out.report["K"] = K;
  out.report["K_source"] = ws.wants_fit() ? "fit" : "config";

  std::vector<Mask> masks(ws.deltas.size());
  parallel_for(static_cast<std::int64_t>(ws.deltas.size()), ws.jobs, [&](std::int64_t i) {
    masks[i] = rasterize_mask(ws.sequence(ws.deltas[i]), ws.grid);
  });

  Json records = Json::array();
  int case_id = 0;
  for (int e = 0; e < n_eigs; ++e) {
    const double E = sol.energies[static_cast<std::size_t>(e)];
    const double v = ws.v_norm_sup(E);
    const Field& phi = sol.modes[static_cast<std::size_t>(e)];
    const double bmass = phi.boundary_mass() / phi.squared_norm();
    const bool advisory = bmass >= ws.boundary_flag;
    for (std::size_t i = 0; i < ws.deltas.size(); ++i) {
      const double delta = ws.deltas[i];
      const double ratio = sampling_ratio(phi, masks[i]);
      const double bound = thm1_bound({delta, ws.M, v, 0.0, K});
      const bool in_range = ratio >= -ws.ratio_slack && ratio <= 1.0 + ws.ratio_slack;
      const bool pass = bound <= ratio && in_range;
      Json rec;
      rec["case_id"] = case_id++;
      rec["field_index"] = e;
      rec["energy"] = E;
      rec["v_norm"] = v;
      rec["delta"] = delta;
      rec["M"] = ws.M;
      rec["observed_ratio"] = ratio;
      rec["bound"] = bound;
      rec["ratio_in_range"] = in_range;
      rec["pass"] = pass;
      rec["advisory"] = advisory;
      rec["boundary_mass"] = bmass;
      records.push_back(std::move(rec));
      if (advisory && pass) ++out.n_advisory;
      else if (pass) ++out.n_pass;
      else if (advisory) ++out.n_advisory;
      else ++out.n_fail;
    }
  }
  out.report["records"] = std::move(records);
  if (fit) out.report["fit"] = detail::fit_to_json(*fit);

  // dominant-site census at the normalized scale
  if (ws.M == 1.0) {
    Json censuses = Json::array();
    const double T = observation_box_side(ws.d, NeighborRule::thm1);
    const IndexBox window = cell_window_for(ws.grid, 1.0);
    for (int e = 0; e < n_eigs; ++e) {
      DominantCensus census = classify_dominant(sol.modes[static_cast<std::size_t>(e)], T, window);
      Json cj = detail::census_to_json(census, "thm1");
      cj["field_index"] = e;
      censuses.push_back(std::move(cj));
    }
    out.report["census"] = std::move(censuses);
  } else {
    out.report["census"] = "skipped (census is defined at M = 1)";
  }

  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// fit-exponent verb.

inline RunOutput run_fit_exponent(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("fit-exponent", cfg);
  EigenSolution sol = eigenpairs(ws.H, 1, ws.solver);
  FitResult fit = detail::run_fit(ws, sol);
  out.report["fit"] = detail::fit_to_json(fit);
  out.report["ground_energy"] = sol.energies.front();

  Json records = Json::array();
  int case_id = 0;
  for (const auto& h : fit.holdout) {
    Json rec;
    rec["case_id"] = case_id++;
    rec["seed"] = h.seed;
    rec["delta"] = h.delta;
    rec["M"] = ws.M;
    rec["observed_ratio"] = h.ratio;
    rec["bound"] = h.bound;
    rec["pass"] = h.pass;
    records.push_back(std::move(rec));
    h.pass ? ++out.n_pass : ++out.n_fail;
  }
  out.report["records"] = std::move(records);

  const bool fit_ok = std::isfinite(fit.K_hat) && fit.K_hat > 0.0;
  if (!fit_ok) ++out.n_fail;
  out.report["summary"] = {{"K_hat", fit.K_hat},
                           {"r_squared", fit.r_squared},
                           {"fit_ok", fit_ok},
                           {"holdout_all_pass", fit.holdout_all_pass},
                           {"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// verify-projector: compressed mask on a spectral subspace vs the gamma floor.

// Gram-style compression G_ij = <b_i, W b_j> of the mask on a projector basis.
inline Eigen::MatrixXd compress_mask(const ProjectorBasis& basis, const Mask& mask) {
  const int r = basis.rank();
  Eigen::MatrixXd G(r, r);
  for (int i = 0; i < r; ++i) {
    Field wi = mask.apply(basis.columns[static_cast<std::size_t>(i)]);
    for (int j = i; j < r; ++j) {
      G(i, j) = G(j, i) = wi.dot(basis.columns[static_cast<std::size_t>(j)]);
    }
  }
  return G;
}

inline RunOutput run_verify_projector(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("verify-projector", cfg);

  // hypotheses of the projector bound: delta strictly inside (0, M/2), E0 > 0
  const double E0 = ws.cfg.at("interval").at("E0").get<double>();
  for (double delta : ws.deltas)
    require(delta > 0.0 && delta < ws.M / 2.0, Errc::invalid_parameter,
            "projector bound requires delta in the open interval (0, M/2)");

  std::optional<FitResult> fit;
  EigenSolution low = eigenpairs(ws.H, std::min<std::int64_t>(2, ws.grid.total_points()),
                                 ws.solver);
  if (ws.wants_fit()) fit = detail::run_fit(ws, low);
  const double K = ws.resolved_K(fit ? fit->K_hat : 1.0);
  out.report["K"] = K;
  out.report["K_source"] = ws.wants_fit() ? "fit" : "config";
  if (fit) out.report["fit"] = detail::fit_to_json(*fit);

  const double vsup = ws.pot.sup_norm;
  const double mu_tol = ws.cfg.at("report").at("mu_tolerance").get<double>();
  const double chain_tol = ws.cfg.at("report").at("chain_tolerance").get<double>();

  // interval center: explicit number or the lowest eigenvalue
  const Json& cspec = ws.cfg.at("interval").at("center");
  const double center = cspec.is_string() ? low.energies.front() : cspec.get<double>();

  Json records = Json::array();
  int case_id = 0;
  for (double delta : ws.deltas) {
    const BoundParams params{delta, ws.M, vsup, E0, K};
    const double gamma = thm2_gamma(params);
    const double floor = std::pow(ws.M, 4.0) * gamma * gamma;

    const Json& wspec = ws.cfg.at("interval").at("halfwidth");
    double halfwidth;
    if (wspec.is_string()) {
      // stay inside |I| <= 2 gamma and below the first spectral gap
      halfwidth = 0.95 * gamma;
      if (low.energies.size() >= 2)
        halfwidth = std::min(halfwidth, 0.45 * (low.energies[1] - low.energies[0]));
    } else {
      halfwidth = wspec.get<double>();
    }
    const double a = center - halfwidth, b = center + halfwidth;
    require(b - a <= 2.0 * gamma + kGeomTol, Errc::interval_too_wide,
            "interval width exceeds 2*gamma");
    require(b <= E0 + kGeomTol, Errc::invalid_parameter,
            "interval must lie below E0 (hypothesis I in (-inf, E0])");

    ProjectorBasis basis = projector_basis(ws.H, a, b, ws.solver);
    Mask mask = rasterize_mask(ws.sequence(delta), ws.grid);

    Json rec;
    rec["case_id"] = case_id++;
    rec["delta"] = delta;
    rec["M"] = ws.M;
    rec["E0"] = E0;
    rec["gamma"] = gamma;
    rec["floor"] = floor;  // M^4 gamma^2, identical to the bound's own gamma
    rec["interval"] = {a, b};
    rec["rank"] = basis.rank();

    if (basis.rank() == 0) {
      rec["trivial_pass"] = true;
      rec["pass"] = true;
      ++out.n_pass;
      records.push_back(std::move(rec));
      continue;
    }

    Eigen::MatrixXd G = compress_mask(basis, mask);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const double mu_min = es.eigenvalues().minCoeff();
    const bool pass = mu_min >= floor - mu_tol;
    rec["mu_min"] = mu_min;
    rec["pass"] = pass;
    double bmass = 0.0;
    for (const auto& col : basis.columns)
      bmass = std::max(bmass, col.boundary_mass() / col.squared_norm());
    const bool advisory = bmass >= ws.boundary_flag;
    rec["boundary_mass"] = bmass;
    rec["advisory"] = advisory;
    if (advisory) ++out.n_advisory;
    else pass ? ++out.n_pass : ++out.n_fail;

    if (basis.rank() == 1)
      rec["rank1_ratio_check"] =
          std::abs(mu_min - sampling_ratio(basis.columns.front(), mask));

    // Proof chain for fields in the projector range, at E = interval center:
    //   (L1) 2 M^4 g^2 |psi|^2 <= |W psi|^2 + d^2 M^2 |(H-E)psi|^2
    //   (L2) residual bound |(H-E)psi| <= g |psi|
    //   (L3) 2 M^4 g^2 - d^2 M^2 g^2 >= M^4 g^2
    //   (C)  <psi, W psi> >= M^4 g^2 |psi|^2
    {
      Json chain = Json::array();
      SplitMix64 rng(derive_seed(ws.seed, 0x11));
      const int combos = basis.rank() == 1 ? 1 : 4;
      bool all_ok = true;
      for (int c = 0; c < combos; ++c) {
        Field psi(ws.grid);
        if (c == 0) {
          psi = basis.columns.front();
        } else {
          psi.values.setZero();
          for (const auto& col : basis.columns)
            psi.values += rng.next_in(-1.0, 1.0) * col.values;
          psi.normalize();
        }
        const double nn = psi.squared_norm();
        const double resid = residual_norm(ws.H, psi, center);
        const double masked = mask.apply(psi).squared_norm();
        const double lhs1 = 2.0 * floor * nn;
        const double mid = masked + delta * delta * ws.M * ws.M * resid * resid;
        const double rhs2 = masked + delta * delta * ws.M * ws.M * gamma * gamma * nn;
        const bool l1 = lhs1 <= mid + chain_tol;
        const bool l2 = resid <= gamma * std::sqrt(nn) + chain_tol;
        const bool l3 = 2.0 * floor - delta * delta * ws.M * ws.M * gamma * gamma >=
                        floor - chain_tol;
        const bool concl = masked >= floor * nn - chain_tol;
        all_ok = all_ok && l1 && l2 && l3 && concl && (mid <= rhs2 + chain_tol);
        chain.push_back({{"residual", resid},
                         {"masked_sq", masked},
                         {"lhs_2M4g2", lhs1},
                         {"mid", mid},
                         {"rhs_gamma", rhs2},
                         {"L1", l1},
                         {"L2", l2},
                         {"L3", l3},
                         {"conclusion", concl}});
      }
      // complex split: |psi|^2 = |Re psi|^2 + |Im psi|^2, parts checked apart
      if (basis.rank() >= 1) {
        ComplexField zpsi(ws.grid);
        Field re = basis.columns.front();
        Field im = basis.columns.back();
        for (std::int64_t i = 0; i < zpsi.values.size(); ++i)
          zpsi.values[i] = std::complex<double>(re.values[i], im.values[i]);
        const double total = zpsi.squared_norm();
        const double parts = re.squared_norm() + im.squared_norm();
        const double masked_total = mask.apply(zpsi).squared_norm();
        const double masked_parts =
            mask.apply(re).squared_norm() + mask.apply(im).squared_norm();
        const bool split_ok = std::abs(total - parts) <= chain_tol * std::max(1.0, total) &&
                              std::abs(masked_total - masked_parts) <=
                                  chain_tol * std::max(1.0, masked_total);
        const bool complex_bound = masked_total >= floor * total - chain_tol;
        rec["complex_split"] = {{"norm_split_ok", split_ok}, {"bound_ok", complex_bound}};
        all_ok = all_ok && split_ok && complex_bound;
      }
      rec["chain"] = std::move(chain);
      rec["chain_all_ok"] = all_ok;
      if (!all_ok) ++out.n_fail;
    }

    // dense oracle on small grids: full chi_I W chi_I vs the compressed matrix
    if (ws.grid.total_points() <= 512) {
      const std::int64_t N = ws.grid.total_points();
      Eigen::MatrixXd B(N, basis.rank());
      for (int i = 0; i < basis.rank(); ++i)
        B.col(i) = basis.columns[static_cast<std::size_t>(i)].values;
      const double hd = ws.grid.cell_volume();
      Eigen::MatrixXd P = hd * B * B.transpose();
      Eigen::VectorXd w(N);
      for (std::int64_t i = 0; i < N; ++i)
        w[i] = mask.indicator[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      Eigen::MatrixXd PWP = P * w.asDiagonal() * P;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_es(PWP);
      Eigen::VectorXd dv = dense_es.eigenvalues();
      std::vector<double> top(dv.data(), dv.data() + dv.size());
      std::sort(top.begin(), top.end(), std::greater<>());
      top.resize(static_cast<std::size_t>(basis.rank()));
      std::vector<double> comp(es.eigenvalues().data(),
                               es.eigenvalues().data() + basis.rank());
      std::sort(comp.begin(), comp.end(), std::greater<>());
      double max_diff = 0.0;
      for (int i = 0; i < basis.rank(); ++i)
        max_diff = std::max(max_diff, std::abs(top[static_cast<std::size_t>(i)] -
                                               comp[static_cast<std::size_t>(i)]));
      rec["dense_oracle_max_diff"] = max_diff;
      const double otol = ws.cfg.at("report").at("oracle_tolerance").get<double>();
      rec["dense_oracle_ok"] = max_diff <= otol;
      if (max_diff > otol) ++out.n_fail;
    }
    records.push_back(std::move(rec));
  }
  out.report["records"] = std::move(records);
  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// verify-residual: the residual-augmented form on eigenfunctions, packets and
// band-limited fields.

inline RunOutput run_verify_residual(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("verify-residual", cfg);

  for (double delta : ws.deltas)
    require(delta > 0.0 && delta < ws.M / 2.0, Errc::invalid_parameter,
            "residual bound requires delta in (0, M/2)");

  const auto& rc = ws.cfg.at("residual");
  const int n_eig_fields = rc.at("eigenfunctions").get<int>();
  const int band_count = rc.at("band_limited").get<int>();
  const int band_modes = rc.at("band_modes").get<int>();
  const auto px0 = rc.at("packets_x0").get<std::vector<double>>();
  const auto psig = rc.at("packets_sigma").get<std::vector<double>>();
  const auto pxi = rc.at("packets_xi").get<std::vector<double>>();
  require(px0.size() == psig.size() && psig.size() == pxi.size(), Errc::bad_config,
          "packet parameter arrays must have equal length");

  const int solver_fields = std::max({n_eig_fields, band_modes, 1});
  EigenSolution sol = eigenpairs(ws.H, solver_fields, ws.solver);

  std::optional<FitResult> fit;
  if (ws.wants_fit()) fit = detail::run_fit(ws, sol);
  const double K = ws.resolved_K(fit ? fit->K_hat : 1.0);
  out.report["K"] = K;
  out.report["K_source"] = ws.wants_fit() ? "fit" : "config";
  if (fit) out.report["fit"] = detail::fit_to_json(*fit);

  struct TestField {
    std::string kind;
    Field psi;
    double energy;  // informational
  };
  std::vector<TestField> fields;
  for (int e = 0; e < n_eig_fields; ++e)
    fields.push_back({"eigenfunction", sol.modes[static_cast<std::size_t>(e)],
                      sol.energies[static_cast<std::size_t>(e)]});
  for (std::size_t p = 0; p < px0.size(); ++p) {
    std::vector<double> x0(ws.d, 0.0);
    x0[0] = px0[p];
    Field psi = detail::gaussian_packet(ws.grid, x0, pxi[p], psig[p]);
    fields.push_back({"gaussian-packet", std::move(psi), pxi[p] * pxi[p]});
  }
  {
    SplitMix64 rng(rc.at("band_seed").get<std::uint64_t>());
    for (int b = 0; b < band_count; ++b) {
      Field psi(ws.grid);
      psi.values.setZero();
      for (int m = 0; m < band_modes; ++m)
        psi.values += rng.next_in(-1.0, 1.0) * sol.modes[static_cast<std::size_t>(m)].values;
      psi.normalize();
      fields.push_back({"band-limited", std::move(psi), sol.energies.back()});
    }
  }

  const double vsup = ws.pot.sup_norm;
  Json records = Json::array();
  int case_id = 0;
  for (const auto& tf : fields) {
    const double bmass = tf.psi.boundary_mass() / tf.psi.squared_norm();
    const bool advisory = bmass >= ws.boundary_flag;
    for (double delta : ws.deltas) {
      Mask mask = rasterize_mask(ws.sequence(delta), ws.grid);
      auto [lhs, rhs] = thm3_lhs_rhs(tf.psi, mask, {delta, ws.M, vsup, 0.0, K}, ws.H);
      const bool pass = lhs <= rhs;
      Json rec;
      rec["case_id"] = case_id++;
      rec["kind"] = tf.kind;
      rec["energy"] = tf.energy;
      rec["delta"] = delta;
      rec["M"] = ws.M;
      rec["v_norm"] = vsup;
      rec["lhs"] = lhs;
      rec["rhs"] = rhs;
      rec["pass"] = pass;
      rec["advisory"] = advisory;
      rec["boundary_mass"] = bmass;
      records.push_back(std::move(rec));
      if (advisory && pass) ++out.n_advisory;
      else if (pass) ++out.n_pass;
      else if (advisory) ++out.n_advisory;
      else ++out.n_fail;
    }
  }
  out.report["records"] = std::move(records);

  if (ws.M == 1.0) {
    const double T = observation_box_side(ws.d, NeighborRule::thm3);
    const IndexBox window = cell_window_for(ws.grid, 1.0);
    Json censuses = Json::array();
    for (int e = 0; e < n_eig_fields; ++e) {
      DominantCensus census =
          classify_dominant(sol.modes[static_cast<std::size_t>(e)], T, window);
      Json cj = detail::census_to_json(census, "thm3");
      cj["field_index"] = e;
      censuses.push_back(std::move(cj));
    }
    out.report["census"] = std::move(censuses);
  }

  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// verify-weyl: packet (or defect) iterates past the index threshold must meet
// the halved sampling bound; below-threshold indices are out of scope.

inline RunOutput run_verify_weyl(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("verify-weyl", cfg);

  const auto& wc = ws.cfg.at("weyl");
  const double E = wc.at("E").get<double>();
  const int n_from = wc.at("n_from").get<int>();
  const int n_to = wc.at("n_to").get<int>();
  require(n_from >= 1 && n_to >= n_from, Errc::bad_config, "bad weyl index range");
  const std::string strat = wc.at("strategy").get<std::string>();
  WeylStrategy strategy;
  if (strat == "gaussian-packet") strategy = WeylStrategy::gaussian_packet;
  else if (strat == "eigen-defect") strategy = WeylStrategy::eigen_defect;
  else fail(Errc::bad_config, "unknown weyl strategy: " + strat);

  WeylParams params;
  params.center = wc.at("center").get<std::vector<double>>();
  params.sigma0 = wc.at("sigma0").get<double>();
  params.sigma_growth = wc.at("sigma_growth").get<double>();
  params.boundary_sigmas = wc.at("boundary_sigmas").get<double>();
  params.defect_fraction = wc.at("defect_fraction").get<double>();
  params.defect_eigs = wc.at("defect_eigs").get<int>();
  params.solver = ws.solver;

  std::optional<FitResult> fit;
  if (ws.wants_fit()) {
    EigenSolution low = eigenpairs(ws.H, 1, ws.solver);
    fit = detail::run_fit(ws, low);
  }
  const double K = ws.resolved_K(fit ? fit->K_hat : 1.0);
  out.report["K"] = K;
  out.report["K_source"] = ws.wants_fit() ? "fit" : "config";
  if (fit) out.report["fit"] = detail::fit_to_json(*fit);

  const double v = ws.v_norm_sup(E);
  const double delta = ws.deltas.front();
  const BoundParams params_bound{delta, ws.M, v, 0.0, K};
  const double threshold = weyl_threshold(params_bound);
  // squared form of the halved display bound
  const double half_bound = thm1_bound(params_bound);
  const double bound_sq = 0.25 * half_bound * half_bound;
  out.report["E"] = E;
  out.report["v_norm"] = v;
  out.report["threshold"] = threshold;
  out.report["bound_sq"] = bound_sq;
  out.report["delta"] = delta;
  out.report["M"] = ws.M;

  Mask mask = rasterize_mask(ws.sequence(delta), ws.grid);

  Json records = Json::array();
  for (int n = n_from; n <= n_to; ++n) {
    Json rec;
    rec["n"] = n;
    const bool in_scope = static_cast<double>(n) >= threshold;
    rec["in_scope"] = in_scope;
    try {
      WeylIterate it = weyl_sequence(ws.H, E, n, strategy, params);
      const double ratio = sampling_ratio(it.psi, mask);
      const double bmass = it.psi.boundary_mass();
      const bool advisory = bmass >= ws.boundary_flag;
      rec["residual"] = it.residual;
      rec["residual_contract_ok"] = it.residual < 1.0 / static_cast<double>(n);
      rec["sigma"] = it.sigma;
      rec["xi"] = it.xi;
      rec["center"] = it.center;
      rec["observed_ratio"] = ratio;
      rec["bound"] = bound_sq;
      rec["boundary_mass"] = bmass;
      rec["advisory"] = advisory;
      if (!in_scope) {
        rec["pass"] = "out-of-scope";
      } else {
        const bool pass = bound_sq <= ratio;
        rec["pass"] = pass;
        if (advisory && pass) ++out.n_advisory;
        else if (pass) ++out.n_pass;
        else if (advisory) ++out.n_advisory;
        else ++out.n_fail;
      }
    } catch (const UnreachableResidual& e) {
      rec["unreachable"] = true;
      rec["best_residual"] = e.best_residual;
      rec["error"] = e.what();
      out.solver_error = true;
    }
    records.push_back(std::move(rec));
  }
  out.report["records"] = std::move(records);
  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory},
                           {"solver_error", out.solver_error}};
  return out;
}

// ---------------------------------------------------------------------------
// validate-geometry: sequence validation and the proof-geometry certificates,
// optionally exporting the rasterized mask.

inline RunOutput run_validate_geometry(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("validate-geometry", cfg);

  const auto& gc = ws.cfg.at("geometry");
  const int trials = gc.at("trials").get<int>();
  const auto dims = gc.at("dims").get<std::vector<int>>();

  Json blocks = Json::array();
  for (int d : dims) {
    const int reach = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))) + 1;
    IndexBox window = IndexBox::cube(d, -1, reach + 1);
    SplitMix64 rng(derive_seed(ws.seed, 0x9e0 + static_cast<std::uint64_t>(d)));
    int annulus_ok = 0, q_ok = 0, obs_ok = 0, valid_ok = 0;
    for (int t = 0; t < trials; ++t) {
      const double delta = rng.next_in(0.01, 0.49);
      auto Z = make_perturbed_sequence(d, 1.0, delta, window, rng.next_u64());
      if (validate_sequence(Z).ok) ++valid_ok;
      std::vector<int> k(d, 0);
      ProofGeometry g1 = make_proof_geometry(Z, k, NeighborRule::thm1);
      if (check_annulus_containment(g1)) ++annulus_ok;
      ProofGeometry g3 = make_proof_geometry(Z, k, NeighborRule::thm3);
      const double limit = 3.0 * std::sqrt(static_cast<double>(d));
      if (g3.Q >= 1.0 - kGeomTol && g3.Q <= limit + kGeomTol) ++q_ok;
      if (check_observation_box(g3)) ++obs_ok;
    }
    Json b;
    b["d"] = d;
    b["trials"] = trials;
    b["valid"] = valid_ok;
    b["annulus_ok"] = annulus_ok;
    b["q_ok"] = q_ok;
    b["observation_box_ok"] = obs_ok;
    const bool all = valid_ok == trials && annulus_ok == trials && q_ok == trials &&
                     obs_ok == trials;
    b["all_ok"] = all;
    all ? ++out.n_pass : ++out.n_fail;
    blocks.push_back(std::move(b));
  }
  out.report["certificates"] = std::move(blocks);

  // the Q-correction witness: an off-center ball center in d = 1 pushes Q
  // past (5/2) sqrt(d) while staying below 3 sqrt(d)
  {
    Box theta = Box::unit_cell(std::vector<int>(1, 0));
    const double q = geometric_q({2.4}, theta);
    const bool witness = q > 2.5 && q <= 3.0;
    out.report["q_correction_witness"] = {{"x0", 2.4}, {"Q", q}, {"exhibits", witness}};
    witness ? ++out.n_pass : ++out.n_fail;
  }

  // mask export for the configured sequence
  if (gc.at("export_mask").get<bool>()) {
    const double delta = ws.deltas.front();
    auto Z = ws.sequence(delta);
    auto vres = validate_sequence(Z);
    out.report["sequence_valid"] = vres.ok;
    if (!vres.ok) {
      out.report["sequence_error"] = vres.message;
      ++out.n_fail;
    } else {
      Mask mask = rasterize_mask(Z, ws.grid);
      out.report["covered_fraction"] = mask.covered_fraction;
      out.artifacts["mask.pgm"] = mask_to_pgm(mask);
      out.artifacts["mask.json"] = mask_sidecar(mask, Z).dump(2) + "\n";
      out.artifacts["sequence.json"] = sequence_to_json(Z).dump(2) + "\n";
      ++out.n_pass;
    }
  }

  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// eigen: compute and export eigenpairs.

inline RunOutput run_eigen(const Json& cfg, int jobs = 1) {
  Workspace ws(cfg, jobs);
  RunOutput out;
  out.report = report_header("eigen", cfg);
  const int n_eigs = ws.cfg.at("solver").at("n_eigs").get<int>();
  EigenSolution sol = eigenpairs(ws.H, n_eigs, ws.solver);

  Json manifest;
  manifest["tol"] = ws.solver.tol;
  manifest["energies"] = sol.energies;
  manifest["residuals"] = sol.residuals;
  Json files = Json::array();
  for (int e = 0; e < n_eigs; ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "mode_%03d.f64", e);
    out.artifacts[name] = field_to_bytes(sol.modes[static_cast<std::size_t>(e)]);
    files.push_back(name);
  }
  manifest["files"] = std::move(files);
  out.artifacts["manifest.json"] = manifest.dump(2) + "\n";

  out.report["energies"] = sol.energies;
  out.report["residuals"] = sol.residuals;
  out.n_pass = n_eigs;
  out.report["summary"] = {{"n_pass", out.n_pass},
                           {"n_fail", out.n_fail},
                           {"n_advisory", out.n_advisory}};
  return out;
}

// ---------------------------------------------------------------------------
// CSV flattening: one row per record, columns from the first record's keys.

inline std::string csv_from_report(const Json& report) {
  std::ostringstream csv;
  if (!report.contains("records") || report["records"].empty()) return "";
  const Json& records = report["records"];
  std::vector<std::string> cols;
  for (auto it = records.front().begin(); it != records.front().end(); ++it)
    if (!it.value().is_structured()) cols.push_back(it.key());
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) csv << ",";
      if (!rec.contains(cols[i])) continue;
      const Json& v = rec[cols[i]];
      if (v.is_number_float()) csv << format_double(v.get<double>());
      else if (v.is_string()) csv << v.get<std::string>();
      else csv << v.dump();
    }
    csv << "\n";
  }
  return csv.str();
}

// Log-log plot of observed ratios and bounds against delta/M (or index n).
inline std::string svg_from_report(const Json& report) {
  std::vector<PlotSeries> series;
  PlotSeries obs, bnd;
  obs.label = "observed ratio (squared)";
  obs.color = "#1f77b4";
  obs.line = false;
  bnd.label = "bound (squared)";
  bnd.color = "#d62728";
  const std::string verb = report.value("verb", "");
  if (!report.contains("records")) return render_loglog_svg({}, "", "");
  for (const auto& rec : report["records"]) {
    double x = 0.0;
    if (rec.contains("delta") && rec.contains("M"))
      x = rec["delta"].get<double>() / rec["M"].get<double>();
    else if (rec.contains("n"))
      x = rec["n"].get<double>();
    else
      continue;
    if (rec.contains("observed_ratio")) {
      obs.x.push_back(x);
      obs.y.push_back(rec["observed_ratio"].get<double>());
    }
    if (rec.contains("bound")) {
      bnd.x.push_back(x);
      bnd.y.push_back(rec["bound"].get<double>());
    } else if (rec.contains("lhs") && rec.contains("rhs")) {
      obs.x.push_back(x);
      obs.y.push_back(rec["rhs"].get<double>());
      bnd.x.push_back(x);
      bnd.y.push_back(rec["lhs"].get<double>());
    }
  }
  series.push_back(std::move(obs));
  series.push_back(std::move(bnd));
  const std::string xlabel = verb == "verify-weyl" ? "n" : "delta / M";
  return render_loglog_svg(series, xlabel, "squared mass ratio");
}

}  // namespace uclab
