#include "hkt/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "hkt/errors.hpp"

namespace hkt {

using json = nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

// Strict typed field access on config objects.
template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) invalid(std::string(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) invalid(std::string(key) + " must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (it->is_number_integer() && it->get<std::int64_t>() < 0 && !it->is_number_unsigned())
          invalid(std::string(key) + " must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) invalid(std::string(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) invalid(std::string(key) + " must be a string");
    }
    return it->get<T>();
  } catch (const json::exception& e) {
    invalid(std::string(key) + ": " + e.what());
  }
}

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) invalid(where + " must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) invalid("unknown key '" + k + "' in " + where);
}

double ratio(double num, double den) { return den > 0.0 ? num / den : num; }

CheckResult check_le(const std::string& name, double value, double tol) {
  CheckResult c;
  c.name = name;
  c.value = value;
  c.tolerance = tol;
  c.relation = "<=";
  c.passed = std::isfinite(value) && value <= tol;
  return c;
}

CheckResult check_gt(const std::string& name, double value, double bound) {
  CheckResult c = check_le(name, value, bound);
  c.relation = ">";
  c.passed = std::isfinite(value) && value > bound;
  return c;
}

// Runs f(i) for i < n on up to `threads` threads. Results are written by index,
// so the outcome does not depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errs(n);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) {
        try {
          f(i);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

std::mt19937_64 sample_rng(std::uint64_t seed, int i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i)};
  return std::mt19937_64(seq);
}

std::vector<InducedStructure> structures(int extra, std::uint64_t seed) {
  std::vector<InducedStructure> Ls{induced(1, 0, 0), induced(0, 1, 0), induced(0, 0, 1)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (int i = 0; i < extra; ++i) {
    double a = g(rng), b = g(rng), c = g(rng);
    const double n = std::sqrt(a * a + b * b + c * c);
    Ls.push_back(induced(a / n, b / n, c / n));
  }
  return Ls;
}

CMat random_matrix(int r, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMat m(r, r);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) m(a, b) = cplx(g(rng), g(rng));
  return m;
}

// X dz1 + Y dz2, dz1 = dx1 - i dx2, dz2 = dx3 - i dx4.
MatrixForm constant_10(const CMat& X, const CMat& Y, int cutoff) {
  const cplx i(0.0, 1.0);
  return constant_form(static_cast<int>(X.rows()), 1, cutoff, {X, -i * X, Y, -i * Y});
}

MatrixForm strictly_upper(const MatrixForm& s) {
  MatrixForm u(s.rank(), s.degree(), s.cutoff());
  const int r = s.rank();
  for (const auto& [k, b] : s.modes()) {
    Block c = b;
    for (int row = 0; row < c.rows(); ++row)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j <= i; ++j) c(row, r * i + j) = 0.0;
    u.mode(k) = c;
  }
  return u;
}

std::vector<RVec> phases_from_json(const json& j, int rank) {
  if (!j.is_array() || j.size() != 4) invalid("phases must be an array of 4 arrays");
  std::vector<RVec> out;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != rank) invalid("each phase row needs rank entries");
    RVec v(rank);
    for (int a = 0; a < rank; ++a) {
      if (!row[a].is_number()) invalid("phases must be numbers");
      v(a) = row[a].get<double>();
    }
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments.

void run_identities(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {"checks"}, "params");
  IdentitySuiteOptions opt;
  opt.tolerance = 1e-10 * cfg.tol_scale;
  opt.record_violations = true;
  if (cfg.params.contains("checks")) {
    if (!cfg.params["checks"].is_array()) invalid("params.checks must be an array of names");
    const auto& names = identity_check_names();
    for (const auto& n : cfg.params["checks"]) {
      if (!n.is_string() || std::find(names.begin(), names.end(), n.get<std::string>()) == names.end())
        invalid("unknown identity check " + n.dump());
      opt.checks.push_back(n.get<std::string>());
    }
  }
  const auto conn = build_connection(cfg);
  const int samples = cfg.samples < 0 ? 20 : cfg.samples;
  const auto report = identity_suite(conn, structures(cfg.structures, cfg.seed), samples, cfg.seed, opt);
  rep.result = report.to_json();
  for (const auto& c : report.checks) {
    CheckResult r = check_le(c.name, c.residual, c.tolerance);
    if (!c.hypothesis_ok) {
      r.passed = false;
      r.note = "hypothesis '" + c.hypothesis + "' violated";
    }
    rep.checks.push_back(r);
  }
}

void run_analyze(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {}, "params");
  const auto conn = build_connection(cfg);
  const int samples = cfg.samples < 0 ? 20 : cfg.samples;
  const auto a = analyze(conn, 1e-10 * cfg.tol_scale, samples, cfg.seed);
  rep.result = a.to_json();
  rep.checks.push_back(check_le("hyperholomorphic-equivalence", a.equivalence_consistent ? 0.0 : 1.0, 0.0));
}

void run_bg(const ExperimentConfig& cfg, ExperimentReport& rep, int threads) {
  only_keys(cfg.params, {"min_theta20"}, "params");
  const double min_theta20 = get_or<double>(cfg.params, "min_theta20", 1e-6);
  const int n = cfg.samples < 0 ? 100 : cfg.samples;
  const double tol = 1e-10 * cfg.tol_scale;
  const QuaternionFrame frame = make_frame(2);
  std::vector<BGSample> samples(n);
  parallel_for(n, threads, [&](int i) {
    auto rng = sample_rng(cfg.seed, i);
    samples[i] = bg_functional(bg_random_input(cfg.rank, frame, rng), frame);
  });
  int used = 0, nonnegative = 0;
  double fmin = INFINITY, fmax = -INFINITY, imag = 0, herm = 0, transpose = 0, pairing = 0, trace = 0, reduction = 0,
         index_gap = 0, offspan = 0, projection = 0;
  for (const auto& s : samples) {
    if (s.theta20.norm() < min_theta20) continue;
    ++used;
    const double f = s.functional.real();
    if (!(f < 0.0)) ++nonnegative;
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
    imag = std::max(imag, std::abs(s.functional.imag()));
    herm = std::max(herm, s.hermitian_residual);
    transpose = std::max(transpose, s.transpose_residual);
    pairing = std::max(pairing, s.offspan_pairing_residual);
    trace = std::max(trace, s.trace_residual);
    reduction = std::max(reduction, s.reduction_residual);
    index_gap = std::max(index_gap, std::abs(s.functional - s.index_expansion) / std::max(1.0, std::abs(s.functional)));
    offspan = std::max(offspan, s.offspan_fraction);
    projection = std::max(projection, s.projection_distance);
  }
  rep.result = {{"samples", n},
                {"used", used},
                {"fiber_dimension", 8},
                {"c0", n > 0 ? samples[0].c0.real() : 0.0},
                {"functional_min", used ? fmin : 0.0},
                {"functional_max", used ? fmax : 0.0},
                {"functional_imag_max", imag},
                {"nonnegative_count", nonnegative},
                {"hermitian_residual_max", herm},
                {"transpose_residual_max", transpose},
                {"offspan_pairing_residual_max", pairing},
                {"trace_residual_max", trace},
                {"reduction_residual_max", reduction},
                {"two_index_gap_max", index_gap},
                {"offspan_fraction_max", offspan},
                {"projection_distance_max", projection}};
  rep.checks.push_back(check_le("ineq-5.1-bg", nonnegative, 0.0));
  rep.checks.push_back(check_le("bg-hermitian-coefficients", herm, tol));
  rep.checks.push_back(check_le("bg-trace-free", trace, tol));
  rep.checks.push_back(check_le("bg-reduction", reduction, tol));
  rep.checks.push_back(check_le("bg-two-index-expansion", index_gap, tol));
}

void run_kuranishi(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {"rho", "max_order", "tol"}, "params");
  const json rho_spec = cfg.params.value("rho", json{{"kind", "exact-upper"}});
  only_keys(rho_spec, {"kind", "amplitude", "bandwidth", "seed"}, "params.rho");
  const std::string kind = get_or<std::string>(rho_spec, "kind", "exact-upper");
  const double amp = get_or<double>(rho_spec, "amplitude", 1e-3);
  const int bw = get_or<int>(rho_spec, "bandwidth", 1);
  const std::uint64_t rseed = get_or<std::uint64_t>(rho_spec, "seed", cfg.seed);
  KuranishiOptions opt;
  opt.max_order = get_or<int>(cfg.params, "max_order", 12);
  opt.tol = get_or<double>(cfg.params, "tol", 1e-12);
  if (opt.max_order < 2) invalid("params.max_order must be at least 2");
  if (bw < 0 || bw > cfg.cutoff) invalid("params.rho.bandwidth must lie in [0, cutoff]");

  const EndComplex cx(build_connection(cfg));
  std::mt19937_64 rng(rseed);
  MatrixForm rho(cfg.rank, 1, cfg.cutoff);
  bool harmonic = false;
  if (kind == "exact-upper" || kind == "exact") {
    MatrixForm s = random_form(cfg.rank, 0, cfg.cutoff, bw, amp, rng);
    if (kind == "exact-upper") s = strictly_upper(s);
    rho = cx.partial(s);
  } else if (kind == "constant-commuting") {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CMat X = CMat::Zero(cfg.rank, cfg.rank), Y = CMat::Zero(cfg.rank, cfg.rank);
    for (int a = 0; a < cfg.rank; ++a) {
      X(a, a) = amp * cplx(u(rng), u(rng));
      Y(a, a) = amp * cplx(u(rng), u(rng));
    }
    rho = constant_10(X, Y, cfg.cutoff);
    harmonic = true;
  } else if (kind != "zero") {
    invalid("params.rho.kind must be exact-upper, exact, constant-commuting or zero");
  }

  const auto s = kuranishi(cx, rho, opt);
  rep.result = s.to_json();
  rep.result["rho_kind"] = kind;
  rep.artifacts.push_back({"deformed_connection.json", to_json(s.deformed).dump(2) + "\n"});

  const double scale = s.rho_norm * s.rho_norm;
  const double tol = cfg.tol_scale;
  double left = 0, exact = 0, hat_res = 0, bound = 0;
  for (const auto& t : s.stats) {
    left = std::max(left, t.left_inverse_residual);
    exact = std::max(exact, t.exact_residual);
    hat_res = std::max(hat_res, t.hat_residual);
    if (t.norm > 0.0) bound = std::max(bound, ratio(t.norm, t.bound));
  }
  rep.checks.push_back(check_le("kuranishi-left-inverse", left, 1e-10 * tol));
  rep.checks.push_back(check_le("kuranishi-exactness", exact, 1e-9 * tol));
  rep.checks.push_back(check_le("kuranishi-residual", s.relative_residual(), 1e-9 * tol));
  rep.checks.push_back(check_le("kuranishi-residual-agreement", ratio(s.residual.difference, scale), 1e-10 * tol));
  rep.checks.push_back(check_le("kuranishi-hat-compatibility", hat_res, 1e-10 * tol));
  rep.checks.push_back(check_le("kuranishi-norm-bound", bound, 1.0 + 1e-12));
  CheckResult quarter = check_le("kuranishi-quarter-bound", ratio(s.eta_norm, s.rho_norm), 0.25);
  if (!(s.rho_norm < s.radius)) {
    quarter.applicable = false;
    quarter.passed = true;
    quarter.note = "rho outside the measured radius";
  }
  rep.checks.push_back(quarter);
  if (harmonic) {
    const auto ym = deformed_is_yang_mills(cx, rho, opt);
    rep.result["yang_mills"] = {{"integrability", ym.integrability},
                                {"lambda", ym.lambda},
                                {"scaled_integrability", ym.scaled_integrability()},
                                {"scaled_lambda", ym.scaled_lambda()}};
  }
}

void run_cone(const ExperimentConfig& cfg, ExperimentReport& rep, int threads) {
  only_keys(cfg.params, {"tolerance"}, "params");
  const double tol = get_or<double>(cfg.params, "tolerance", 1e-9) * cfg.tol_scale;
  const int n = cfg.samples < 0 ? 500 : cfg.samples;
  const int r = cfg.rank;
  const EndComplex cx(build_connection(cfg));
  cx.solver(2).harmonic_basis();  // built before the workers share it
  std::vector<int> in(n), oracle(n);
  std::vector<double> obstruction(n);
  parallel_for(n, threads, [&](int i) {
    auto rng = sample_rng(cfg.seed, i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const CMat Q = random_matrix(r, rng);
    const CMat Qi = Q.inverse();
    CMat DX = CMat::Zero(r, r), DY = CMat::Zero(r, r);
    for (int a = 0; a < r; ++a) {
      DX(a, a) = cplx(u(rng) - 0.5, u(rng) - 0.5);
      DY(a, a) = cplx(u(rng) - 0.5, u(rng) - 0.5);
    }
    CMat X = Q * DX * Qi, Y = Q * DY * Qi;
    if (i % 3 == 1) Y = random_matrix(r, rng);
    if (i % 3 == 2) Y += std::pow(10.0, -14.0 + 10.0 * u(rng)) * random_matrix(r, rng);
    const auto m = cone_membership(cx, constant_10(X, Y, cfg.cutoff), tol);
    in[i] = m.in_cone;
    obstruction[i] = ratio(m.obstruction_norm, m.rho_norm * m.rho_norm);
    // |dz1 ^ dz2|^2 = 4, |dz_a|^2 = 2
    oracle[i] = (X * Y - Y * X).norm() <= tol * (X.squaredNorm() + Y.squaredNorm());
  });
  int disagree = 0, members = 0;
  for (int i = 0; i < n; ++i) {
    disagree += in[i] != oracle[i];
    members += in[i];
  }
  rep.result = {{"samples", n}, {"tolerance", tol}, {"in_cone", members}, {"disagreements", disagree}};
  rep.checks.push_back(check_le("cone-commutator-agreement", disagree, 0.0));
}

void run_sl2(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {}, "params");
  const auto s = sl2_action(build_connection(cfg));
  rep.result = {{"dims", s.dims},
                {"weights", s.weights},
                {"bracket_weights", s.bracket_weights},
                {"harmonicity_residual", s.harmonicity_residual},
                {"scalar_defect", s.scalar_defect},
                {"lc_min_singular", s.lc_min_singular},
                {"lc_injective_low", s.lc_injective_low}};
  rep.checks.push_back(check_le("sl2-weights", s.scalar_defect, 1e-10 * cfg.tol_scale));
  rep.checks.push_back(check_gt("lefschetz-h0-h2", s.lc_min_singular, 1e-6));
}

void run_tangent(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {}, "params");
  const auto t = tangent_structure(EndComplex(build_connection(cfg)));
  rep.result = t.to_json();
  const double tol = 1e-9 * cfg.tol_scale;
  rep.checks.push_back(check_le("tangent-quaternion-relations", t.action.relation_residual, tol));
  rep.checks.push_back(check_le("tangent-metric-invariance", t.metric_invariance, tol));
  rep.checks.push_back(check_le("tangent-omega-skew", t.omega_skew, tol));
  rep.checks.push_back(check_gt("tangent-omega-rank", t.omega_min_singular, 1e-6));
}

void run_flow(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {"steps", "rate", "target", "threshold", "perturbation"}, "params");
  FlowOptions opt;
  opt.steps = get_or<int>(cfg.params, "steps", 600);
  opt.rate = get_or<double>(cfg.params, "rate", 0.1);
  opt.target = get_or<double>(cfg.params, "target", 1e-7);
  const double threshold = get_or<double>(cfg.params, "threshold", 1e-6) * cfg.tol_scale;
  if (opt.steps < 0 || !(opt.rate > 0)) invalid("params.steps must be >= 0 and params.rate > 0");
  const json pert = cfg.params.value("perturbation", json::object());
  only_keys(pert, {"amplitude", "bandwidth"}, "params.perturbation");
  const double amp = get_or<double>(pert, "amplitude", 1e-3);
  const int bw = get_or<int>(pert, "bandwidth", 1);
  if (bw < 0 || bw > cfg.cutoff) invalid("params.perturbation.bandwidth must lie in [0, cutoff]");

  MatrixForm p = build_connection(cfg).potential();
  if (amp > 0.0) p += HermitianConnection::seeded_random(cfg.rank, cfg.cutoff, bw, amp, cfg.seed, true).potential();
  const auto tr = yang_mills_flow(HermitianConnection(p, true), opt);
  int increases = 0;
  for (std::size_t i = 1; i < tr.history.size(); ++i) increases += tr.history[i].residual >= tr.history[i - 1].residual;
  rep.result = {{"steps", static_cast<int>(tr.history.size()) - 1},
                {"initial_residual", tr.history.front().residual},
                {"final_residual", tr.history.back().residual},
                {"total_halvings", tr.total_halvings},
                {"truncated", tr.truncated}};
  rep.artifacts.push_back({"flow.csv", tr.to_csv()});
  rep.checks.push_back(check_le("flow-monotone", increases, 0.0));
  rep.checks.push_back(check_le("flow-residual", tr.history.back().residual, threshold));
}

void run_pq_table(const ExperimentConfig& cfg, ExperimentReport& rep) {
  only_keys(cfg.params, {}, "params");
  const auto t = pq_cohomology(build_connection(cfg));
  rep.result = {{"rows", t.rows}, {"totals", t.totals}, {"consistent", t.consistent()}};
  rep.artifacts.push_back({"pq_table.csv", t.to_csv()});
  rep.checks.push_back(check_le("pq-table-consistency", t.consistent() ? 0.0 : 1.0, 0.0));
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"identities", "analyze", "bg",   "kuranishi",
                                                 "cone",       "sl2",     "tangent", "flow", "pq-table"};
  return names;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  only_keys(j, {"experiment", "seed", "rank", "cutoff", "connection", "allow_truncation", "tol_scale", "samples",
                "structures", "params"},
            "config");
  ExperimentConfig c;
  c.experiment = get_or<std::string>(j, "experiment", "");
  if (!c.experiment.empty() &&
      std::find(experiment_names().begin(), experiment_names().end(), c.experiment) == experiment_names().end())
    invalid("unknown experiment '" + c.experiment + "'");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.rank = get_or<int>(j, "rank", c.rank);
  c.cutoff = get_or<int>(j, "cutoff", c.cutoff);
  c.allow_truncation = get_or<bool>(j, "allow_truncation", c.allow_truncation);
  c.tol_scale = get_or<double>(j, "tol_scale", c.tol_scale);
  c.samples = get_or<int>(j, "samples", c.samples);
  c.structures = get_or<int>(j, "structures", c.structures);
  if (j.contains("connection")) c.connection = j["connection"];
  if (j.contains("params")) c.params = j["params"];
  if (c.rank < 1 || c.rank > 4) invalid("rank must lie in [1, 4]");
  if (c.cutoff < 0 || c.cutoff > 6) invalid("cutoff must lie in [0, 6]");
  if (!(c.tol_scale > 0.0)) invalid("tol_scale must be positive");
  if (c.samples < -1) invalid("samples must be non-negative");
  if (c.structures < 0) invalid("structures must be non-negative");
  if (!c.params.is_object()) invalid("params must be an object");
  only_keys(c.connection, {"kind", "phases", "seed", "bandwidth", "amplitude", "path"}, "connection");
  return c;
}

json ExperimentConfig::to_json() const {
  return {{"experiment", experiment}, {"seed", seed},
          {"rank", rank},             {"cutoff", cutoff},
          {"connection", connection}, {"allow_truncation", allow_truncation},
          {"tol_scale", tol_scale},   {"samples", samples},
          {"structures", structures}, {"params", params}};
}

HermitianConnection build_connection(const ExperimentConfig& cfg) {
  const json& c = cfg.connection;
  const std::string kind = get_or<std::string>(c, "kind", "zero");
  const bool allow = cfg.allow_truncation;
  if (kind == "zero") return HermitianConnection::zero(cfg.rank, cfg.cutoff).with_truncation(allow);
  if (kind == "constant-commuting") {
    if (c.contains("phases"))
      return HermitianConnection::constant_commuting(cfg.rank, cfg.cutoff, phases_from_json(c["phases"], cfg.rank))
          .with_truncation(allow);
    return HermitianConnection::constant_commuting(cfg.rank, cfg.cutoff, get_or<std::uint64_t>(c, "seed", cfg.seed))
        .with_truncation(allow);
  }
  if (kind == "constant-noncommuting") {
    if (cfg.rank < 2) invalid("constant-noncommuting needs rank >= 2");
    return HermitianConnection::constant_noncommuting(cfg.rank, cfg.cutoff).with_truncation(allow);
  }
  if (kind == "seeded-random") {
    const int bw = get_or<int>(c, "bandwidth", 1);
    if (bw < 0 || bw > cfg.cutoff) invalid("connection.bandwidth must lie in [0, cutoff]");
    return HermitianConnection::seeded_random(cfg.rank, cfg.cutoff, bw, get_or<double>(c, "amplitude", 0.1),
                                              get_or<std::uint64_t>(c, "seed", cfg.seed), allow);
  }
  if (kind == "file") {
    const std::string path = get_or<std::string>(c, "path", "");
    std::ifstream in(path);
    if (!in) invalid("cannot open connection file '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      invalid("connection file: " + std::string(e.what()));
    }
    auto conn = connection_from_json(j, allow);
    if (conn.rank() != cfg.rank || conn.cutoff() != cfg.cutoff)
      invalid("connection file disagrees with rank/cutoff of the config");
    return conn;
  }
  invalid("unknown connection kind '" + kind + "'");
}

json CheckResult::to_json() const {
  json j = {{"name", name},         {"value", value},   {"tolerance", tolerance},
            {"relation", relation}, {"applicable", applicable}, {"passed", passed}};
  if (!note.empty()) j["note"] = note;
  return j;
}

std::string ExperimentReport::status() const {
  if (!errors.empty()) return "error";
  for (const auto& c : checks)
    if (!c.passed) return "fail";
  return "pass";
}

int ExperimentReport::exit_code() const {
  const std::string s = status();
  return s == "pass" ? 0 : s == "fail" ? 2 : 1;
}

json ExperimentReport::to_json() const {
  json checks_j = json::array();
  for (const auto& c : checks) checks_j.push_back(c.to_json());
  json files = json::array();
  for (const auto& a : artifacts) files.push_back(a.file);
  return {{"schema_version", kReportSchemaVersion},
          {"experiment", experiment},
          {"config", config},
          {"status", status()},
          {"checks", checks_j},
          {"errors", errors},
          {"result", result},
          {"artifacts", files}};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, int threads) {
  ExperimentReport rep;
  rep.experiment = cfg.experiment;
  rep.config = cfg.to_json();
  try {
    const std::string& e = cfg.experiment;
    if (e == "identities") run_identities(cfg, rep);
    else if (e == "analyze") run_analyze(cfg, rep);
    else if (e == "bg") run_bg(cfg, rep, threads);
    else if (e == "kuranishi") run_kuranishi(cfg, rep);
    else if (e == "cone") run_cone(cfg, rep, threads);
    else if (e == "sl2") run_sl2(cfg, rep);
    else if (e == "tangent") run_tangent(cfg, rep);
    else if (e == "flow") run_flow(cfg, rep);
    else if (e == "pq-table") run_pq_table(cfg, rep);
    else invalid("unknown experiment '" + e + "'");
  } catch (const Error& err) {
    rep.errors.push_back({{"kind", error_kind_name(err.kind())}, {"message", err.what()}});
  }
  return rep;
}

const std::vector<CatalogEntry>& check_catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    std::vector<CatalogEntry> v;
    const std::map<std::string, std::string> identity_text = {
        {"kodaira-lambda-partial", "[Lambda_I, partial] = i dbar^*"},
        {"kodaira-lambda-dbar", "[Lambda_I, dbar] = -i partial^*"},
        {"prop-3.1a-laplacian-sum", "Delta_partial + Delta_dbar = Delta_d on integrable L"},
        {"prop-3.1b-laplacian-difference", "Delta_partial - Delta_dbar = i [Lambda_L, Theta] on integrable L"},
        {"prop-3.1c-dc-laplacian", "Delta_{d^c} = Delta_d"},
        {"prop-4.1-partial-j-square", "partial_j^2 = 0 and {partial, partial_j} = 0"},
        {"prop-4.2-lj-commutator", "[L_J, partial^*] = -partial_j"},
        {"prop-4.3-anticommutation", "{partial^*, partial_j} = {partial_j^*, partial} = {delta^*, delta_bar} = 0"},
        {"cor-4.1-delta-commutators", "[L_J, delta^*] = -i delta_bar, [L_J, delta_bar^*] = i delta"},
        {"thm-4.1-laplacians", "Delta_partial_j = Delta_partial = 2 Delta_delta = 2 Delta_delta_bar"},
        {"thm-8.1-conjugation", "R Delta_partial_I R^-1 = Delta_partial_{L I L^-1}"},
    };
    for (const auto& n : identity_check_names()) {
      auto it = identity_text.find(n);
      v.push_back({n, "identities", 1e-10, "<=", it == identity_text.end() ? n : it->second});
    }
    v.push_back({"hyperholomorphic-equivalence", "analyze", 0.0, "<=",
                 "SU(2)-invariance of the curvature agrees with integrability for every sampled L"});
    v.push_back({"ineq-5.1-bg", "bg", 0.0, "<=", "count of samples with Tr Lambda_c^2(Theta20 ^ Theta20) >= 0"});
    v.push_back({"bg-hermitian-coefficients", "bg", 1e-10, "<=", "A_ij = A_ij^* for the x_i ^ x_j' coefficients"});
    v.push_back({"bg-trace-free", "bg", 1e-10, "<=", "sum_i A_ii = 0"});
    v.push_back({"bg-reduction", "bg", 1e-10, "<=", "Lambda_c^2(Theta ^ Theta) = Lambda_c^2(Theta20 ^ Theta20)"});
    v.push_back({"bg-two-index-expansion", "bg", 1e-10, "<=",
                 "functional = Tr sum_{i!=j} (-A_ij A_ji + A_ii A_jj)"});
    v.push_back({"kuranishi-left-inverse", "kuranishi", 1e-10, "<=", "partial Gamma tau_n = tau_n per term"});
    v.push_back({"kuranishi-exactness", "kuranishi", 1e-9, "<=", "harmonic part of tau_n vanishes"});
    v.push_back({"kuranishi-residual", "kuranishi", 1e-9, "<=",
                 "||nabla eta_hat + (rho_hat + eta_hat)^2|| / ||rho||^2"});
    v.push_back({"kuranishi-residual-agreement", "kuranishi", 1e-10, "<=",
                 "equation and curvature forms of the residual agree (scaled by ||rho||^2)"});
    v.push_back({"kuranishi-hat-compatibility", "kuranishi", 1e-10, "<=",
                 "nabla eta_hat_n = -sum eta_hat_i ^ eta_hat_j per term (relative)"});
    v.push_back({"kuranishi-norm-bound", "kuranishi", 1.0 + 1e-12, "<=",
                 "||eta_n|| / (gammaNorm sum ||eta_i|| ||eta_j||)"});
    v.push_back({"kuranishi-quarter-bound", "kuranishi", 0.25, "<=", "||eta|| / ||rho|| inside the measured radius"});
    v.push_back({"cone-commutator-agreement", "cone", 0.0, "<=",
                 "disagreements between cone membership and the commutator test"});
    v.push_back({"sl2-weights", "sl2", 1e-10, "<=", "H acts on harmonic (i,0)-forms by 2 - 2i"});
    v.push_back({"lefschetz-h0-h2", "sl2", 1e-6, ">", "smallest singular value of L_c: H^0 -> H^2"});
    v.push_back({"tangent-quaternion-relations", "tangent", 1e-9, "<=", "I, barJ, barK satisfy the quaternion relations"});
    v.push_back({"tangent-metric-invariance", "tangent", 1e-9, "<=", "Gram matrix invariant under I, barJ, barK"});
    v.push_back({"tangent-omega-skew", "tangent", 1e-9, "<=", "Omega + Omega^T = 0"});
    v.push_back({"tangent-omega-rank", "tangent", 1e-6, ">", "smallest singular value of Omega"});
    v.push_back({"flow-monotone", "flow", 0.0, "<=", "count of steps where the residual did not decrease"});
    v.push_back({"flow-residual", "flow", 1e-6, "<=", "final sqrt(E)"});
    v.push_back({"pq-table-consistency", "pq-table", 0.0, "<=", "type pieces sum to the totals"});
    return v;
  }();
  return entries;
}

int thread_count_from_env() {
  if (const char* s = std::getenv("HKT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || n < 1 || n > 1024) invalid("HKT_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

}  // namespace hkt
