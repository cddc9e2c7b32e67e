#include "hkt/deformation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "hkt/errors.hpp"

namespace hkt {

namespace {

const InducedStructure& structure_I() {
  static const InducedStructure I = induced(1, 0, 0);
  return I;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : num; }

std::mutex& solver_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

EndComplex::EndComplex(HermitianConnection conn) : conn_(std::move(conn)) {}

const SpectralSolver& EndComplex::solver(int p) const {
  if (p != 1 && p != 2) throw Error(ErrorKind::WrongType, "End complex solvers exist for (1,0) and (2,0) forms");
  std::lock_guard<std::mutex> lock(solver_mutex());
  auto& slot = p == 1 ? s1_ : s2_;
  if (!slot) slot = std::make_shared<SpectralSolver>(gamma_solver(conn_, p));
  return *slot;
}

MatrixForm EndComplex::partial(const MatrixForm& a) const { return partial_op(conn_, structure_I())(a); }

MatrixForm EndComplex::gamma(const MatrixForm& tau) const { return hkt::gamma(solver(tau.degree()), tau); }

MatrixForm EndComplex::harmonic_part(const MatrixForm& a) const { return solver(a.degree()).project_harmonic(a); }

double EndComplex::gamma_norm(int probes, std::uint64_t seed) const {
  if (gamma_norm_ && gamma_norm_->first == seed) return gamma_norm_->second;
  std::mt19937_64 rng(seed);
  const ExteriorOperator p10 = type_projector(structure_I(), 1, 0);
  const int bw = std::min(1, conn_.cutoff());
  double best = 0.0;
  for (int i = 0; i < probes; ++i) {
    const MatrixForm u = apply_fiber(p10, random_form(conn_.rank(), 1, conn_.cutoff(), bw, 1.0, rng));
    const MatrixForm tau = partial(u);
    const double tn = l2_norm(tau);
    if (tn == 0.0) continue;
    best = std::max(best, l2_norm(gamma(tau)) / tn);
  }
  gamma_norm_ = std::make_pair(seed, best);
  return best;
}

void EndComplex::require_closed_10(const MatrixForm& a, double tol) const {
  if (a.degree() != 1 || a.rank() != conn_.rank() || a.cutoff() != conn_.cutoff())
    throw Error(ErrorKind::WrongType, "expected an End(B)-valued 1-form on the connection's grid");
  if (type_p0_defect(a) > 1e-12) throw Error(ErrorKind::WrongType, "form is not of type (1,0)");
  const double r = l2_norm(partial(a));
  if (r > tol * std::max(l2_norm(a), 1.0))
    throw Error(ErrorKind::NotClosed, "partial of the form is " + std::to_string(r));
}

MatrixForm hat(const MatrixForm& a) { return a + real_T(a); }

// ---------------------------------------------------------------------------

YonedaClass yoneda(const EndComplex& cx, const MatrixForm& rho1, const MatrixForm& rho2) {
  cx.require_closed_10(rho1);
  cx.require_closed_10(rho2);
  const bool allow = cx.connection().allow_truncation();
  MatrixForm sym = wedge(rho1, rho2, allow) + wedge(rho2, rho1, allow);
  sym *= 0.5;
  YonedaClass out;
  out.symmetric_part_norm = l2_norm(sym);
  out.representative = cx.harmonic_part(sym);
  const auto& basis = cx.solver(2).harmonic_basis();
  out.coefficients = CVec::Zero(basis.dimension());
  MatrixForm rest = out.representative;
  for (int a = 0; a < basis.dimension(); ++a) {
    out.coefficients(a) = l2_inner(basis.forms[a], out.representative);
    rest -= out.coefficients(a) * basis.forms[a];
  }
  out.harmonic_residual = l2_norm(rest);
  return out;
}

ConeMembership cone_membership(const EndComplex& cx, const MatrixForm& rho, double tol) {
  ConeMembership out;
  out.tolerance = tol;
  out.obstruction_norm = l2_norm(yoneda(cx, rho, rho).representative);
  out.rho_norm = l2_norm(rho);
  out.in_cone = out.obstruction_norm <= tol * out.rho_norm * out.rho_norm;
  return out;
}

// ---------------------------------------------------------------------------

DeformationResidual deformation_residual(const HermitianConnection& conn, const MatrixForm& rho_hat,
                                         const MatrixForm& eta_hat) {
  const bool allow = conn.allow_truncation();
  const Op nabla = nabla_op(conn);
  const MatrixForm a = rho_hat + eta_hat;
  const MatrixForm eq = nabla(eta_hat) + wedge(a, a, allow);
  const HermitianConnection deformed(conn.potential() + a, allow);
  const MatrixForm curv = deformed.curvature() - conn.curvature() - nabla(rho_hat);
  DeformationResidual out;
  out.equation = l2_norm(eq);
  out.curvature = l2_norm(curv);
  out.difference = l2_norm(eq - curv);
  const int types[3][2] = {{2, 0}, {1, 1}, {0, 2}};
  for (int t = 0; t < 3; ++t)
    out.parts[t] = l2_norm(apply_fiber(type_projector(structure_I(), types[t][0], types[t][1]), eq));
  return out;
}

double DeformationSeries::relative_residual() const {
  return ratio(residual.equation, rho_norm * rho_norm);
}

nlohmann::json DeformationSeries::to_json() const {
  nlohmann::json terms_j = nlohmann::json::array();
  for (const auto& s : stats)
    terms_j.push_back({{"order", s.order},
                       {"norm", s.norm},
                       {"tau_norm", s.tau_norm},
                       {"closed_residual", s.closed_residual},
                       {"exact_residual", s.exact_residual},
                       {"left_inverse_residual", s.left_inverse_residual},
                       {"hat_residual", s.hat_residual},
                       {"hat_parts", {s.hat_parts[0], s.hat_parts[1], s.hat_parts[2]}},
                       {"bound", s.bound}});
  return {{"rho_norm", rho_norm},
          {"eta_norm", eta_norm},
          {"gamma_norm", gamma_norm},
          {"radius", radius},
          {"terms", terms_j},
          {"residual",
           {{"equation", residual.equation},
            {"curvature", residual.curvature},
            {"difference", residual.difference},
            {"parts", {residual.parts[0], residual.parts[1], residual.parts[2]}},
            {"relative", relative_residual()}}},
          {"converged", converged},
          {"truncated", truncated},
          {"verdict", verdict}};
}

DeformationSeries kuranishi(const EndComplex& cx, const MatrixForm& rho, const KuranishiOptions& opt) {
  const HermitianConnection& conn = cx.connection();
  cx.require_closed_10(rho);
  if (opt.require_hyperholomorphic) require_hyperholomorphic(conn);
  const bool allow = conn.allow_truncation();
  const int bw = rho.bandwidth();
  const bool over_budget = (opt.max_order + 1) * bw > conn.cutoff();
  if (over_budget && !allow)
    throw Error(ErrorKind::BandwidthOverflow, "series up to order " + std::to_string(opt.max_order) +
                                                  " needs cutoff " + std::to_string((opt.max_order + 1) * bw));
  DeformationSeries out;
  out.rho = rho;
  out.truncated = over_budget;
  out.rho_norm = l2_norm(rho);
  out.gamma_norm = cx.gamma_norm(opt.gamma_probes, opt.gamma_seed);
  out.radius = out.gamma_norm > 0.0 ? 0.16 / out.gamma_norm : 0.0;

  const Op nabla = nabla_op(conn);
  const ExteriorOperator p20 = type_projector(structure_I(), 2, 0);
  const ExteriorOperator p11 = type_projector(structure_I(), 1, 1);
  const ExteriorOperator p02 = type_projector(structure_I(), 0, 2);

  std::vector<MatrixForm> eta{MatrixForm(rho.rank(), 1, rho.cutoff()), rho};  // eta[0] unused
  std::vector<MatrixForm> eta_hat{MatrixForm(rho.rank(), 1, rho.cutoff()), hat(rho)};
  std::vector<double> norms{0.0, out.rho_norm};
  int growth = 0;
  out.verdict = "max-order";
  for (int n = 2; n <= opt.max_order; ++n) {
    MatrixForm tau(rho.rank(), 2, rho.cutoff());
    MatrixForm hat_sum(rho.rank(), 2, rho.cutoff());
    SeriesTerm st;
    st.order = n;
    for (int i = 1; i < n; ++i) {
      tau += wedge(eta[i], eta[n - i], allow);
      hat_sum += wedge(eta_hat[i], eta_hat[n - i], allow);
      st.bound += norms[i] * norms[n - i];
    }
    st.bound *= out.gamma_norm;
    st.tau_norm = l2_norm(tau);
    MatrixForm eta_n(rho.rank(), 1, rho.cutoff());
    if (st.tau_norm > 0.0) {
      st.closed_residual = l2_norm(cx.partial(tau)) / st.tau_norm;
      if (st.closed_residual > opt.closed_tol)
        throw Error(ErrorKind::ObstructionNonzero,
                    "tau_" + std::to_string(n) + " is not closed (" + std::to_string(st.closed_residual) + ")");
      st.exact_residual = l2_norm(cx.harmonic_part(tau)) / st.tau_norm;
      if (st.exact_residual > opt.exact_tol)
        throw Error(ErrorKind::ObstructionNonzero,
                    "tau_" + std::to_string(n) + " has harmonic part " + std::to_string(st.exact_residual));
      eta_n = -1.0 * cx.gamma(tau);
      st.left_inverse_residual = l2_norm(cx.partial(eta_n) + tau) / st.tau_norm;
    }
    const MatrixForm eh = hat(eta_n);
    const MatrixForm hat_eq = nabla(eh) + hat_sum;
    const double hs = l2_norm(hat_sum);
    st.hat_residual = ratio(l2_norm(hat_eq), hs);
    st.hat_parts[0] = ratio(l2_norm(apply_fiber(p20, hat_eq)), hs);
    st.hat_parts[1] = ratio(l2_norm(apply_fiber(p11, hat_eq)), hs);
    st.hat_parts[2] = ratio(l2_norm(apply_fiber(p02, hat_eq)), hs);
    st.norm = l2_norm(eta_n);
    growth = st.norm > norms.back() ? growth + 1 : 0;
    eta.push_back(eta_n);
    eta_hat.push_back(eh);
    norms.push_back(st.norm);
    out.terms.push_back(eta_n);
    out.stats.push_back(st);
    if (st.norm <= opt.tol * out.rho_norm) {
      out.converged = true;
      out.verdict = "converged";
      break;
    }
    if (growth >= 3)
      throw Error(ErrorKind::SeriesDiverging, "term norms grew for three orders up to " + std::to_string(n));
  }

  out.eta = MatrixForm(rho.rank(), 1, rho.cutoff());
  for (const auto& t : out.terms) out.eta += t;
  out.eta_norm = l2_norm(out.eta);
  out.rho_hat = hat(rho);
  out.eta_hat = hat(out.eta);
  // eta_hat ^ eta_hat can leave the cutoff even inside the series budget.
  const int residual_band = 2 * std::max(out.rho_hat.bandwidth(), out.eta_hat.bandwidth());
  if (residual_band > conn.cutoff()) out.truncated = true;
  out.residual = deformation_residual(residual_band > conn.cutoff() ? conn.with_truncation(true) : conn,
                                      out.rho_hat, out.eta_hat);
  out.deformed = HermitianConnection(conn.potential() + out.rho_hat + out.eta_hat, allow);
  return out;
}

YangMillsCheck deformed_is_yang_mills(const EndComplex& cx, const MatrixForm& rho, const KuranishiOptions& opt) {
  YangMillsCheck out;
  const double rn = l2_norm(rho);
  out.scale = rn * rn;
  if (rn > 0.0) {
    out.harmonic_residual = l2_norm(rho - cx.harmonic_part(rho)) / rn;
    if (out.harmonic_residual > 1e-9)
      throw Error(ErrorKind::HypothesisViolated,
                  "rho is not harmonic (residual " + std::to_string(out.harmonic_residual) + ")");
  }
  const DeformationSeries series = kuranishi(cx, rho, opt);
  const MatrixForm& theta = series.deformed.curvature();
  const auto& I = structure_I();
  out.integrability =
      l2_norm(apply_fiber(type_projector(I, 2, 0), theta) + apply_fiber(type_projector(I, 0, 2), theta));
  out.lambda = l2_norm(apply_fiber(lambda_L(I), theta));
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json TangentStructure::to_json() const {
  return {{"complex_dimension", basis.dimension()},
          {"relation_residual", action.relation_residual},
          {"invariance_residual", action.invariance_residual},
          {"group_residual", action.group_residual},
          {"gram_min_eigenvalue", gram_min_eigenvalue},
          {"gram_symmetry", gram_symmetry},
          {"metric_invariance", metric_invariance},
          {"omega_skew", omega_skew},
          {"ad_i_eigenvalue", {ad_i_eigenvalue.real(), ad_i_eigenvalue.imag()}},
          {"ad_i_residual", ad_i_residual},
          {"omega_min_singular", omega_min_singular},
          {"omega_determinant", {omega_determinant.real(), omega_determinant.imag()}}};
}

TangentStructure tangent_structure(const EndComplex& cx) {
  const HermitianConnection& conn = cx.connection();
  require_hyperholomorphic(conn);
  TangentStructure out;
  out.basis = cx.solver(1).harmonic_basis();
  out.action = su2_on_cohomology(conn, out.basis);
  const int m = out.basis.dimension();
  std::vector<MatrixForm> v;
  for (const auto& h : out.basis.forms) {
    v.push_back(h);
    v.push_back(kI * h);
  }
  const bool allow = conn.allow_truncation();
  const ExteriorOperator lc = lambda_c(make_frame(1));
  auto pairing = [&](const MatrixForm& a, const MatrixForm& b) {
    const MatrixForm t = trace_part(apply_fiber(lc, wedge(a, b, allow)));
    const Block* z = t.find({0, 0, 0, 0});
    return z ? (*z)(0, 0) : cplx(0.0);
  };
  out.omega = CMat::Zero(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) out.omega(a, b) = pairing(out.basis.forms[a], out.basis.forms[b]);
  out.omega_real = CMat::Zero(2 * m, 2 * m);
  out.gram = RMat::Zero(2 * m, 2 * m);
  for (int a = 0; a < 2 * m; ++a)
    for (int b = 0; b < 2 * m; ++b) {
      out.omega_real(a, b) = pairing(v[a], v[b]);
      out.gram(a, b) = std::real(l2_inner(v[a], v[b]));
    }
  out.gram_symmetry = (out.gram - out.gram.transpose()).norm();
  if (m > 0) {
    Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (out.gram + out.gram.transpose()));
    out.gram_min_eigenvalue = es.eigenvalues().minCoeff();
  }
  for (const RMat* X : {&out.action.I, &out.action.J, &out.action.K})
    out.metric_invariance = std::max(out.metric_invariance, (X->transpose() * out.gram * *X - out.gram).norm());
  out.omega_skew = (out.omega + out.omega.transpose()).norm();
  const CMat Ic = out.action.I.cast<cplx>();
  const CMat adI = Ic.transpose() * out.omega_real + out.omega_real * Ic;
  const double on = out.omega_real.squaredNorm();
  if (on > 0.0) {
    out.ad_i_eigenvalue = (out.omega_real.adjoint() * adI).trace() / on;
    out.ad_i_residual = (adI - out.ad_i_eigenvalue * out.omega_real).norm() / std::sqrt(on);
  }
  if (m > 0) {
    Eigen::JacobiSVD<CMat> svd(out.omega);
    out.omega_min_singular = svd.singularValues().minCoeff();
    out.omega_determinant = out.omega.determinant();
  }
  return out;
}

}  // namespace hkt
