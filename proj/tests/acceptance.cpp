// Acceptance suite: one PASS/FAIL line per criterion. Exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "bg_oracle.hpp"
#include "deformation_oracle.hpp"
#include "hkt/deformation.hpp"
#include "hkt/errors.hpp"
#include "hkt/hyperholomorphic.hpp"

using namespace hkt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<RVec> phases_pm(double t) {
  std::vector<RVec> ph(4, RVec(2));
  for (auto& v : ph) {
    v(0) = t;
    v(1) = -t;
  }
  return ph;
}

std::vector<InducedStructure> random_structures(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<InducedStructure> out;
  for (int i = 0; i < n; ++i) {
    double a = g(rng), b = g(rng), c = g(rng);
    const double s = std::sqrt(a * a + b * b + c * c);
    out.push_back(induced(a / s, b / s, c / s));
  }
  return out;
}

// 1. Quaternion algebra
void criterion_1(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto I = induced(1, 0, 0), J = induced(0, 1, 0), K = induced(0, 0, 1);
  const auto adI = ad_operator(I), adJ = ad_operator(J), adK = ad_operator(K);
  double comm = 0.0;
  for (int p = 0; p <= 4; ++p)
    comm = std::max(comm, (adI.block(p) * adJ.block(p) - adJ.block(p) * adI.block(p) - 2.0 * adK.block(p)).norm());
  double frame = 0.0;
  for (int n : {1, 2}) {
    const auto f = make_frame(n);
    const RMat id = RMat::Identity(f.dim(), f.dim());
    for (const RMat& m : {RMat(f.I * f.I + id), RMat(f.J * f.J + id), RMat(f.K * f.K + id), RMat(f.I * f.J - f.K),
                          RMat(f.J * f.I + f.K), RMat(f.I.transpose() * f.I - id), RMat(f.J.transpose() * f.J - id),
                          RMat(f.K.transpose() * f.K - id)})
      frame = std::max(frame, m.norm());
  }
  const double t = seconds_since(t0);
  o.pass = comm <= 1e-12 && frame == 0.0 && t < 1.0;
  o.detail << "max ||[adI,adJ]-2adK|| = " << fmt(comm) << " over degrees 0..4, frame defect " << fmt(frame) << ", "
           << fmt(t) << " s";
}

// 2. Kodaira identities and the Laplacian relations on integrable bundles
void criterion_2(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  IdentitySuiteOptions opt;
  opt.checks = {"kodaira-lambda-partial", "kodaira-lambda-dbar", "prop-3.1a-laplacian-sum",
                "prop-3.1b-laplacian-difference", "prop-3.1c-dc-laplacian"};
  double worst = 0.0;
  int min_samples = 1 << 30;
  bool ok = true;
  for (const auto& conn : {HermitianConnection::zero(1, 2), HermitianConnection::constant_commuting(2, 2, phases_pm(0.3))}) {
    const auto rep = identity_suite(conn, {induced(1, 0, 0)}, 50, 2024, opt);
    for (const auto& c : rep.checks) {
      worst = std::max(worst, c.residual);
      min_samples = std::min(min_samples, c.samples);
      ok = ok && c.passed();
    }
  }
  const double t = seconds_since(t0);
  o.pass = ok && worst <= 1e-10 && min_samples >= 50 && t < 60.0;
  o.detail << "5 identities x 2 bundles, " << min_samples << " samples each, max residual " << fmt(worst) << ", "
           << fmt(t) << " s";
}

// 3. Laplacian equalities and conjugation by induced structures
void criterion_3(Outcome& o) {
  const auto conn = HermitianConnection::constant_commuting(2, 2, phases_pm(0.3));
  IdentitySuiteOptions opt;
  opt.checks = {"thm-4.1-laplacians", "thm-8.1-conjugation"};
  auto Ls = random_structures(5, 99);
  const auto rep = identity_suite(conn, Ls, 50, 77, opt);
  double worst = 0.0;
  bool ok = true;
  for (const auto& c : rep.checks) {
    worst = std::max(worst, c.residual);
    ok = ok && c.passed() && c.samples >= 50;
    o.detail << c.name << " " << fmt(c.residual) << " (" << c.samples << " samples); ";
  }
  o.pass = ok && worst <= 1e-10;
  o.detail << "5 random L";
}

// 4. sl(2) weights, Lefschetz bijection H^0 -> H^2, type table
void criterion_4(Outcome& o) {
  const auto conn = HermitianConnection::zero(1, 2);
  const auto s = sl2_action(conn);
  const std::vector<int> dims{1, 2, 1};
  const double expect[3] = {2.0, 0.0, -2.0};
  double wdev = 0.0;
  bool mult = s.dims == dims;
  for (int i = 0; i < 3 && mult; ++i) {
    mult = mult && static_cast<int>(s.weights[i].size()) == dims[i];
    for (double w : s.weights[i]) wdev = std::max(wdev, std::abs(w - expect[i]));
  }
  const auto pq = pq_cohomology(conn);
  o.pass = mult && wdev <= 1e-10 && s.lc_min_singular > 1e-6 && pq.consistent();
  o.detail << "dims (" << s.dims[0] << "," << s.dims[1] << "," << s.dims[2] << "), weight deviation " << fmt(wdev)
           << ", smallest singular value of Lc: H0->H2 " << fmt(s.lc_min_singular) << ", table consistent "
           << (pq.consistent() ? "yes" : "no");
}

// 5. Pointwise curvature functional
void criterion_5(Outcome& o) {
  const QuaternionFrame frame = make_frame(2);
  int used = 0, negative = 0;
  double herm = 0, trace = 0, reduction = 0, two_index = 0, oracle_gap = 0, fmin = INFINITY, fmax = -INFINITY;
  double transpose = 0;
  for (int i = 0; i < 1000; ++i) {
    std::mt19937_64 rng(1000 + i);
    const BGSample s = bg_functional(bg_random_input(2, frame, rng), frame);
    if (s.theta20.norm() < 1e-6) continue;
    ++used;
    const double f = s.functional.real();
    negative += f < 0.0;
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
    herm = std::max(herm, s.hermitian_residual);
    transpose = std::max(transpose, s.transpose_residual);
    trace = std::max(trace, s.trace_residual);
    reduction = std::max(reduction, s.reduction_residual);
    const double scale = std::max(1.0, std::abs(s.functional));
    two_index = std::max(two_index, std::abs(s.functional - s.index_expansion) / scale);
    oracle_gap = std::max(oracle_gap, std::abs(s.functional - oracle::full_index_expansion(s)) / scale);
  }
  o.pass = used == 1000 && negative == used && herm <= 1e-10 && trace <= 1e-10 && reduction <= 1e-10 &&
           two_index <= 1e-10 && oracle_gap <= 1e-10;
  o.detail << used << " samples, functional < 0 on " << negative << " (range " << fmt(fmin) << " .. " << fmt(fmax)
           << "); A_ij - A_ij^* " << fmt(herm) << " (A_ji + A_ij^* " << fmt(transpose) << "); trace " << fmt(trace)
           << "; reduction " << fmt(reduction) << "; two-index formula gap " << fmt(two_index)
           << "; full index-loop oracle gap " << fmt(oracle_gap);
}

// 6. partial partial_j lemma
void criterion_6(Outcome& o) {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  int n = 0;
  bool rejected = true;
  for (const auto& conn : {HermitianConnection::zero(1, 2), HermitianConnection::constant_commuting(2, 2, phases_pm(0.3))}) {
    const auto I = induced(1, 0, 0);
    const auto part = partial_op(conn, I), pj = partial_j_op(conn);
    for (int s = 0; s < 10; ++s) {
      const MatrixForm omega = part(pj(random_form(conn.rank(), 0, 2, 1, 1.0, rng)));
      const auto res = ddj_solve(conn, omega);
      worst = std::max(worst, l2_norm(part(pj(res.kappa)) - omega) / l2_norm(omega));
      ++n;
    }
    const auto hb = harmonic_basis(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(2, 0)));
    try {
      ddj_solve(conn, hb.forms.at(0));
      rejected = false;
    } catch (const Error& e) {
      rejected = rejected && e.kind() == ErrorKind::NotExact;
    }
  }
  o.pass = n == 20 && worst <= 1e-8 && rejected;
  o.detail << n << " manufactured inputs, max ||dd_j kappa - omega||/||omega|| = " << fmt(worst)
           << ", harmonic input rejected with NotExact: " << (rejected ? "yes" : "no");
}

// 7. Deformation series
void criterion_7(Outcome& o) {
  const EndComplex cx(HermitianConnection::zero(3, 4));
  KuranishiOptions opt;
  opt.max_order = 3;
  const double amps[3] = {1e-2, 1e-3, 1e-4};
  int runs = 0, converged = 0;
  double worst_res = 0, worst_agree = 0, worst_quarter = 0, worst_left = 0, worst_parts_20_02 = 0;
  std::string err;
  for (int d = 0; d < 3; ++d)
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::mt19937_64 rng(seed);
      MatrixForm s = random_form(3, 0, 4, 1, amps[d], rng);
      MatrixForm u(3, 0, 4);
      for (const auto& [k, b] : s.modes()) {
        Block c = b;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j <= i; ++j) c(0, 3 * i + j) = 0.0;
        u.mode(k) = c;
      }
      const MatrixForm rho = cx.partial(u);
      try {
        const auto r = kuranishi(cx, rho, opt);
        ++runs;
        converged += r.converged;
        const double scale = r.rho_norm * r.rho_norm;
        worst_res = std::max(worst_res, r.residual.equation / scale);
        worst_agree = std::max(worst_agree, r.residual.difference / scale);
        worst_parts_20_02 = std::max(worst_parts_20_02, (r.residual.parts[0] + r.residual.parts[2]) / scale);
        for (const auto& t : r.stats) worst_left = std::max(worst_left, t.left_inverse_residual);
        if (d == 2) worst_quarter = std::max(worst_quarter, r.eta_norm / r.rho_norm);
      } catch (const Error& e) {
        err = e.what();
      }
    }
  o.pass = runs == 60 && converged == 60 && worst_res <= 1e-9 && worst_quarter <= 0.25 && worst_agree <= 1e-10;
  o.detail << runs << "/60 runs, " << converged << " converged; residual/||rho||^2 max " << fmt(worst_res)
           << " ((2,0)+(0,2) parts " << fmt(worst_parts_20_02) << ", rest is the (1,1) part)"
           << "; smallest decade ||eta||/||rho|| max " << fmt(worst_quarter) << "; residual forms agree to "
           << fmt(worst_agree) << "; left inverse " << fmt(worst_left);
  if (!err.empty()) o.detail << "; error: " << err;
}

// 8. Cone membership vs commutator
void criterion_8(Outcome& o) {
  const EndComplex cx(HermitianConnection::zero(2, 1));
  std::mt19937_64 rng(808);
  int disagree = 0, in = 0;
  for (int i = 0; i < 500; ++i) {
    const auto s = oracle::cone_sample(2, i, rng);
    const bool m = cone_membership(cx, oracle::constant_rho(s.X, s.Y, 1), 1e-9).in_cone;
    disagree += m != oracle::commutator_in_cone(s.X, s.Y, 1e-9);
    in += m;
  }
  o.pass = disagree == 0;
  o.detail << "500 samples, " << in << " in the cone, " << disagree << " disagreements";
}

// 9. Tangent structure
void criterion_9(Outcome& o) {
  const auto t = tangent_structure(EndComplex(HermitianConnection::zero(2, 1)));
  o.pass = t.basis.dimension() == 8 && t.action.relation_residual <= 1e-9 && t.action.invariance_residual <= 1e-9 &&
           t.metric_invariance <= 1e-9 && t.omega_skew <= 1e-9 && t.omega_min_singular > 1e-6;
  o.detail << "dim " << t.basis.dimension() << ", relations " << fmt(t.action.relation_residual) << ", metric invariance "
           << fmt(t.metric_invariance) << ", Omega skew " << fmt(t.omega_skew) << ", smallest singular value "
           << fmt(t.omega_min_singular) << ", |det| " << fmt(std::abs(t.omega_determinant));
}

// 10. Gradient flow to flat
void criterion_10(Outcome& o) {
  FlowOptions opt;
  opt.steps = 600;
  opt.target = 1e-7;
  int monotone = 0, reached = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = HermitianConnection::seeded_random(2, 1, 1, 1e-3, 100 + seed, true).potential();
    p += HermitianConnection::constant_commuting(2, 1, phases_pm(0.25)).potential();
    const auto tr = yang_mills_flow(HermitianConnection(p, true), opt);
    bool mono = true;
    for (std::size_t i = 1; i < tr.history.size(); ++i) mono = mono && tr.history[i].residual < tr.history[i - 1].residual;
    monotone += mono;
    reached += tr.history.back().residual <= 1e-6;
    worst = std::max(worst, tr.history.back().residual);
  }
  o.pass = monotone == 10 && reached == 10;
  o.detail << "10 seeds, monotone " << monotone << ", reached 1e-6 " << reached << ", worst final residual "
           << fmt(worst);
}

// 11. CLI determinism
void criterion_11(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / ("hkt_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  struct Run {
    std::string experiment, config;
  };
  const std::vector<Run> runs = {
      {"bg", R"({"rank": 2, "samples": 40})"},
      {"cone", R"({"rank": 2, "cutoff": 1, "samples": 100})"},
      {"identities", R"({"rank": 1, "cutoff": 2, "samples": 5, "structures": 2})"},
      {"flow", R"({"rank": 2, "cutoff": 1, "connection": {"kind": "constant-commuting",
          "phases": [[0.25,-0.25],[0.25,-0.25],[0.25,-0.25],[0.25,-0.25]]}})"},
      {"kuranishi", R"({"rank": 2, "cutoff": 2, "params": {"rho": {"kind": "exact-upper"}, "max_order": 2}})"},
      {"tangent", R"({"rank": 2, "cutoff": 1})"},
  };
  int identical = 0;
  for (const auto& r : runs) {
    const fs::path cfg = root / (r.experiment + ".json");
    std::ofstream(cfg) << r.config;
    std::string bytes[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = root / (r.experiment + std::to_string(k));
      const std::string cmd = std::string("HKT_THREADS=") + (k == 0 ? "1" : "3") + " \"" + HKT_CLI_PATH + "\" " +
                              r.experiment + " --config \"" + cfg.string() + "\" --seed 17 --out \"" + out.string() +
                              "\" > /dev/null 2>&1";
      const int st = std::system(cmd.c_str());
      (void)st;
      std::ifstream f(out / "report.json", std::ios::binary);
      std::stringstream ss;
      ss << f.rdbuf();
      bytes[k] = ss.str();
    }
    const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
    identical += same;
    if (!same) o.detail << r.experiment << " differs; ";
  }
  fs::remove_all(root);
  o.pass = identical == static_cast<int>(runs.size());
  o.detail << identical << "/" << runs.size() << " experiments byte-identical across two runs (1 and 3 threads)";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"quaternion algebra", criterion_1},
      {"Kodaira identities and Laplacian relations", criterion_2},
      {"Laplacian equalities and conjugation", criterion_3},
      {"sl(2) and Lefschetz on harmonic forms", criterion_4},
      {"pointwise curvature functional", criterion_5},
      {"partial partial_j lemma", criterion_6},
      {"deformation series", criterion_7},
      {"quadratic cone", criterion_8},
      {"tangent hyperkahler structure", criterion_9},
      {"gradient flow", criterion_10},
      {"CLI determinism", criterion_11},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail.str() << " [" << fmt(seconds_since(t0)) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria pass" << std::endl;
  return failed == 0 ? 0 : 1;
}
