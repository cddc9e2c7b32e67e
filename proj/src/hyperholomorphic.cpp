#include "hkt/hyperholomorphic.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "hkt/errors.hpp"
#include "hkt/hodge.hpp"

namespace hkt {

namespace {

constexpr int kDim = 4;

double relative(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double block_norm(const MatrixForm& a, const CMat& m) {
  double s = 0.0;
  for (const auto& [k, b] : a.modes()) s += (m * b).squaredNorm();
  return std::sqrt(s);
}

}  // namespace

CMat su2_fixed_projector(const QuaternionFrame& frame, int p) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, CMat> cache;
  const auto key = std::make_pair(frame.n, p);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const auto& ext = exterior(frame.dim());
  const int n = ext.size(p);
  RMat stacked(3 * n, n);
  stacked << ext.derivation(frame.I, p), ext.derivation(frame.J, p), ext.derivation(frame.K, p);
  Eigen::SelfAdjointEigenSolver<RMat> es(stacked.transpose() * stacked);
  RMat P = RMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    if (es.eigenvalues()(i) <= 1e-10) P += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
  const CMat out = P.cast<cplx>();
  std::lock_guard<std::mutex> lock(mu);
  cache[key] = out;
  return out;
}

double su2_noninvariance(const MatrixForm& a) {
  const double n = l2_norm(a);
  if (n == 0.0 || a.degree() < 0 || a.degree() > kDim) return 0.0;
  const CMat P = su2_fixed_projector(make_frame(1), a.degree());
  return block_norm(a, CMat::Identity(P.rows(), P.cols()) - P) / n;
}

// ---------------------------------------------------------------------------

nlohmann::json CurvatureReport::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& r : structures)
    s.push_back({{"label", r.label},
                 {"L", {r.a, r.b, r.c}},
                 {"integrability_residual", r.integrability},
                 {"lambda_norm", r.lambda_norm},
                 {"lambda_trace", r.lambda_trace}});
  return {{"tolerance", tolerance},
          {"structures", s},
          {"su2_noninvariance", noninvariance},
          {"curvature_norm", curvature_norm},
          {"degree", degree},
          {"slope", slope},
          {"verdicts",
           {{"hyperholomorphic", hyperholomorphic},
            {"invariant", invariant},
            {"integrable_for_all_listed", integrable_all},
            {"equivalence_consistent", equivalence_consistent},
            {"lambda_vanishes", lambda_vanishes},
            {"yang_mills_I", yang_mills[0]},
            {"yang_mills_J", yang_mills[1]},
            {"yang_mills_K", yang_mills[2]}}}};
}

CurvatureReport analyze(const HermitianConnection& conn, double tolerance, int samples, std::uint64_t seed) {
  const MatrixForm& theta = conn.curvature();
  CurvatureReport rep;
  rep.tolerance = tolerance;
  rep.curvature_norm = l2_norm(theta);
  std::vector<std::pair<std::string, InducedStructure>> Ls = {
      {"I", induced(1, 0, 0)}, {"J", induced(0, 1, 0)}, {"K", induced(0, 0, 1)}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (int s = 0; s < samples; ++s) {
    double a = g(rng), b = g(rng), c = g(rng);
    const double n = std::sqrt(a * a + b * b + c * c);
    Ls.push_back({"L" + std::to_string(s + 1), induced(a / n, b / n, c / n)});
  }
  for (const auto& [label, L] : Ls) {
    StructureResidual r;
    r.label = label;
    r.a = L.a;
    r.b = L.b;
    r.c = L.c;
    r.integrability = newlander_residual(theta, L);
    const MatrixForm lam = apply_fiber(lambda_L(L), theta);
    r.lambda_norm = l2_norm(lam);
    r.lambda_trace = l2_norm(trace_part(lam));
    rep.structures.push_back(r);
  }
  rep.noninvariance = su2_noninvariance(theta);
  const auto ds = degree_slope(conn, induced(1, 0, 0));
  rep.degree = ds.degree;
  rep.slope = ds.slope;
  rep.invariant = rep.noninvariance <= tolerance;
  rep.integrable_all = true;
  rep.lambda_vanishes = true;
  for (const auto& r : rep.structures) {
    rep.integrable_all = rep.integrable_all && r.integrability <= tolerance;
    rep.lambda_vanishes = rep.lambda_vanishes && r.lambda_norm <= tolerance;
  }
  for (int i = 0; i < 3; ++i) rep.yang_mills[i] = rep.structures[i].lambda_norm <= tolerance;
  rep.hyperholomorphic = rep.invariant;
  rep.equivalence_consistent = rep.invariant == rep.integrable_all;
  return rep;
}

DegreeSlope degree_slope(const HermitianConnection& conn, const InducedStructure& L) {
  const MatrixForm c1 = cplx(0.0, 1.0 / (2.0 * std::numbers::pi)) * trace_part(conn.curvature());
  const MatrixForm top = apply_fiber(lefschetz_L(L), c1);
  DegreeSlope out;
  if (const Block* b = top.find({0, 0, 0, 0})) out.degree = std::real((*b)(0, 0));
  out.slope = out.degree / conn.rank();
  return out;
}

ChernForms chern_class_forms(const HermitianConnection& conn) {
  const MatrixForm& theta = conn.curvature();
  ChernForms out;
  out.c1_form = cplx(0.0, 1.0 / (2.0 * std::numbers::pi)) * trace_part(theta);
  out.tr_theta_wedge_theta = trace_part(wedge(theta, theta, conn.allow_truncation()));
  const SpectralSolver top(laplacian(LaplacianKind::d, HermitianConnection::zero(1, conn.cutoff()), FormDomain::all(4)));
  out.combination = top.project_harmonic(out.tr_theta_wedge_theta);
  if (const Block* b = out.combination.find({0, 0, 0, 0})) out.combination_value = (*b)(0, 0);
  out.invariance_residual = su2_noninvariance(out.combination);
  return out;
}

nlohmann::json ProjectiveReport::to_json() const {
  return {{"traceless_norm", l2_norm(traceless)},
          {"projective_residual", projective_residual},
          {"end_bundle_residual", end_bundle_residual}};
}

ProjectiveReport traceless_and_projective(const HermitianConnection& conn) {
  const MatrixForm& theta = conn.curvature();
  const int r = conn.rank();
  ProjectiveReport out;
  out.traceless = theta - cplx(1.0 / r) * times_identity(trace_part(theta), r);
  out.projective_residual = su2_noninvariance(out.traceless);
  // alpha -> Theta alpha - alpha Theta on row-major vec(alpha): Theta (x) I - I (x) Theta^T
  MatrixForm ad(r * r, theta.degree(), theta.cutoff());
  const CMat id = CMat::Identity(r, r);
  for (const auto& [k, b] : theta.modes())
    for (int c = 0; c < theta.ncomp(); ++c) {
      const CMat t = theta.coefficient(c, k);
      CMat m(r * r, r * r);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) m.block(i * r, j * r, r, r) = t(i, j) * id;
      for (int i = 0; i < r; ++i) m.block(i * r, i * r, r, r) -= t.transpose();
      ad.set_coefficient(c, k, m);
    }
  out.end_bundle_residual = su2_noninvariance(ad);
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise forms

PointForm PointForm::zero(int dim, int degree, int rank) {
  PointForm f;
  f.dim = dim;
  f.degree = degree;
  f.rank = rank;
  const int n = (degree < 0 || degree > dim) ? 0 : exterior(dim).size(degree);
  f.comps.assign(n, CMat::Zero(rank, rank));
  return f;
}

double PointForm::norm() const {
  double s = 0.0;
  for (const auto& c : comps) s += c.squaredNorm();
  return std::sqrt(s);
}

PointForm PointForm::operator+(const PointForm& o) const {
  PointForm out = *this;
  for (std::size_t i = 0; i < comps.size(); ++i) out.comps[i] += o.comps[i];
  return out;
}

PointForm PointForm::operator-(const PointForm& o) const {
  PointForm out = *this;
  for (std::size_t i = 0; i < comps.size(); ++i) out.comps[i] -= o.comps[i];
  return out;
}

PointForm wedge(const PointForm& a, const PointForm& b) {
  if (a.dim != b.dim || a.rank != b.rank) throw Error(ErrorKind::ShapeMismatch, "pointwise wedge needs equal dim and rank");
  PointForm out = PointForm::zero(a.dim, a.degree + b.degree, a.rank);
  if (out.comps.empty()) return out;
  const auto& ext = exterior(a.dim);
  for (int s = 0; s < ext.size(a.degree); ++s) {
    const auto ms = ext.mask(a.degree, s);
    for (int t = 0; t < ext.size(b.degree); ++t) {
      const auto mt = ext.mask(b.degree, t);
      const int sg = ExteriorAlgebra::wedge_sign(ms, mt);
      if (sg == 0) continue;
      out.comps[ext.index(ms | mt)] += double(sg) * (a.comps[s] * b.comps[t]);
    }
  }
  return out;
}

PointForm scalar_point_form(const CVec& v, int dim, int degree, int rank) {
  PointForm out = PointForm::zero(dim, degree, rank);
  for (int s = 0; s < v.size(); ++s) out.comps[s] = v(s) * CMat::Identity(rank, rank);
  return out;
}

PointForm apply_fiber(const ExteriorOperator& op, const PointForm& a) {
  PointForm out = PointForm::zero(a.dim, a.degree + op.shift(), a.rank);
  const CMat& m = op.block(a.degree);
  for (int t = 0; t < m.rows(); ++t)
    for (int s = 0; s < m.cols(); ++s)
      if (m(t, s) != 0.0) out.comps[t] += m(t, s) * a.comps[s];
  return out;
}

PointForm bar_J(const PointForm& a, const QuaternionFrame& frame) {
  const RMat m = exterior(frame.dim()).multiplicative(frame.J, a.degree);
  PointForm out = PointForm::zero(a.dim, a.degree, a.rank);
  for (int t = 0; t < m.rows(); ++t)
    for (int s = 0; s < m.cols(); ++s)
      if (m(t, s) != 0.0) out.comps[t] -= m(t, s) * a.comps[s].adjoint();
  return out;
}

namespace {

CVec scalar_bar_J(const CVec& v, const QuaternionFrame& frame) {
  return exterior(frame.dim()).multiplicative(frame.J, 1).cast<cplx>() * v.conjugate();
}

}  // namespace

SymplecticCoframe symplectic_coframe(const QuaternionFrame& frame) {
  const int d = frame.dim();
  const auto& ext = exterior(d);
  const CVec omega = holomorphic_symplectic_form(frame);
  SymplecticCoframe out;
  out.frame = frame;
  for (int b = 0; b < frame.n; ++b) {
    bool found = false;
    for (int which = 0; which < 2 && !found; ++which) {
      // dz = dx_{2a} - i dx_{2a+1} within the quaternionic block
      const int a = 2 * b + which;
      CVec e = CVec::Zero(d);
      e(2 * a) = 1.0;
      e(2 * a + 1) = -kI;
      const CVec w = ext.wedge(e, 1, scalar_bar_J(e, frame), 1);
      const cplx rho = w.dot(omega) / w.squaredNorm();  // <omega, w> / |w|^2
      if (std::abs(rho.imag()) > 1e-12 || std::abs(rho.real()) < 1e-12) continue;
      // |c|^2 w = rho w fixes c up to the sign of rho, which the convention decides
      if (b == 0) out.omega_sign = rho.real() > 0 ? 1 : -1;
      if ((rho.real() > 0 ? 1 : -1) != out.omega_sign) continue;
      const CVec x = std::sqrt(std::abs(rho.real())) * e;
      out.x.push_back(x);
      out.xp.push_back(scalar_bar_J(x, frame));
      found = true;
    }
    if (!found) throw Error(ErrorKind::ShapeMismatch, "no symplectic coframe in block " + std::to_string(b));
  }
  const CMat p10 = type_projector(induced(frame, 1, 0, 0), 1, 0).block(1);
  CVec sum = CVec::Zero(ext.size(2));
  for (int i = 0; i < frame.n; ++i) {
    out.type_residual = std::max({out.type_residual, (out.x[i] - p10 * out.x[i]).norm(), (out.xp[i] - p10 * out.xp[i]).norm()});
    out.barj_residual = std::max(out.barj_residual, (scalar_bar_J(out.x[i], frame) - out.xp[i]).norm());
    sum += ext.wedge(out.x[i], 1, out.xp[i], 1);
  }
  out.omega_residual = (sum - double(out.omega_sign) * omega).norm();
  return out;
}

PointForm bg_project(const PointForm& theta, const QuaternionFrame& frame, const BgOptions& opt, int* rounds) {
  if (theta.degree != 2 || theta.dim != frame.dim())
    throw Error(ErrorKind::ShapeMismatch, "curvature value must be a 2-form on the frame's fiber");
  const CMat P11 = type_projector(induced(frame, 0, 1, 0), 1, 1).block(2);
  const int n = static_cast<int>(P11.rows());
  CMat Plam = CMat::Identity(n, n);
  for (const auto& L : {induced(frame, 1, 0, 0), induced(frame, 0, 1, 0), induced(frame, 0, 0, 1)}) {
    const CVec w = kahler_form(L);
    Plam -= w * w.adjoint() / w.squaredNorm();
  }
  auto apply = [&](const CMat& m, const PointForm& a) {
    PointForm out = PointForm::zero(a.dim, a.degree, a.rank);
    for (int t = 0; t < n; ++t)
      for (int s = 0; s < n; ++s)
        if (m(t, s) != 0.0) out.comps[t] += m(t, s) * a.comps[s];
    return out;
  };
  PointForm cur = theta;
  int k = 0;
  for (; k < opt.rounds; ++k) {
    PointForm next = apply(Plam, apply(P11, cur));
    for (auto& c : next.comps) c = (0.5 * (c - c.adjoint())).eval();
    const double change = (next - cur).norm();
    cur = std::move(next);
    if (change <= opt.fixed_point * std::max(cur.norm(), 1e-300)) {
      ++k;
      break;
    }
  }
  if (rounds) *rounds = k;
  return cur;
}

PointForm bg_random_input(int rank, const QuaternionFrame& frame, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const CMat P20 = type_projector(induced(frame, 1, 0, 0), 2, 0).block(2);
  for (;;) {
    PointForm f = PointForm::zero(frame.dim(), 2, rank);
    for (auto& c : f.comps)
      for (int i = 0; i < rank; ++i)
        for (int j = 0; j < rank; ++j) c(i, j) = cplx(g(rng), g(rng));
    BgOptions opt;
    PointForm p = bg_project(f, frame, opt);
    double part = 0.0;
    for (int t = 0; t < P20.rows(); ++t) {
      CMat acc = CMat::Zero(rank, rank);
      for (int s = 0; s < P20.cols(); ++s) acc += P20(t, s) * p.comps[s];
      part += acc.squaredNorm();
    }
    if (std::sqrt(part) > 1e-6 * p.norm()) return p;
  }
}

nlohmann::json BGSample::to_json() const {
  return {{"projection_distance", projection_distance},
          {"projection_rounds", projection_rounds},
          {"theta20_norm", theta20.norm()},
          {"basis_residual", basis_residual},
          {"offspan_fraction", offspan_fraction},
          {"hermitian_residual", hermitian_residual},
          {"transpose_residual", transpose_residual},
          {"offspan_pairing_residual", offspan_pairing_residual},
          {"trace_residual", trace_residual},
          {"reduction_residual", reduction_residual},
          {"functional", {functional.real(), functional.imag()}},
          {"index_expansion", {index_expansion.real(), index_expansion.imag()}},
          {"c0", {c0.real(), c0.imag()}}};
}

BGSample bg_functional(const PointForm& theta, const QuaternionFrame& frame, const BgOptions& opt) {
  static std::mutex mu;
  static std::map<int, SymplecticCoframe> coframes;
  SymplecticCoframe cf;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = coframes.find(frame.n);
    if (it == coframes.end()) it = coframes.emplace(frame.n, symplectic_coframe(frame)).first;
    cf = it->second;
  }
  const auto& ext = exterior(frame.dim());
  const int n = frame.n, r = theta.rank;
  BGSample out;
  out.theta = bg_project(theta, frame, opt, &out.projection_rounds);
  out.projection_distance = relative((theta - out.theta).norm(), theta.norm());
  if (out.projection_distance > opt.max_projection)
    throw Error(ErrorKind::ConstraintProjectionTooLarge,
                "constraint projection moved the input by " + std::to_string(out.projection_distance) +
                    " (allowed " + std::to_string(opt.max_projection) + ")");
  const double scale = std::max(1.0, out.theta.norm());
  out.theta20 = apply_fiber(type_projector(induced(frame, 1, 0, 0), 2, 0), out.theta);

  // columns: x_i ^ x_j' (n^2), then x_i ^ x_j and x_i' ^ x_j' for i < j
  const int m2 = ext.size(2);
  std::vector<CVec> cols;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cols.push_back(ext.wedge(cf.x[i], 1, cf.xp[j], 1));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      cols.push_back(ext.wedge(cf.x[i], 1, cf.x[j], 1));
      cols.push_back(ext.wedge(cf.xp[i], 1, cf.xp[j], 1));
    }
  CMat B(m2, static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) B.col(static_cast<int>(c)) = cols[c];
  CMat T(m2, r * r);
  for (int s = 0; s < m2; ++s)
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) T(s, a * r + b) = out.theta20.comps[s](a, b);
  const CMat C = (B.adjoint() * B).ldlt().solve(B.adjoint() * T);
  out.basis_residual = (T - B * C).norm() / scale;
  auto coeff = [&](int col) {
    CMat m(r, r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) m(a, b) = C(col, a * r + b);
    return m;
  };
  out.A.assign(n, std::vector<CMat>(n, CMat::Zero(r, r)));
  out.P = out.A;
  out.Q = out.A;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.A[i][j] = coeff(i * n + j);
  int col = n * n;
  const int first_off = col;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      out.P[i][j] = coeff(col++);
      out.Q[i][j] = coeff(col++);
    }
  const CMat off = B.rightCols(B.cols() - first_off) * C.bottomRows(C.rows() - first_off);
  out.offspan_fraction = relative(off.norm(), T.norm());

  CMat trace_sum = CMat::Zero(r, r);
  for (int i = 0; i < n; ++i) {
    trace_sum += out.A[i][i];
    for (int j = 0; j < n; ++j) {
      out.hermitian_residual = std::max(out.hermitian_residual, (out.A[i][j] - out.A[i][j].adjoint()).norm() / scale);
      out.transpose_residual = std::max(out.transpose_residual, (out.A[j][i] + out.A[i][j].adjoint()).norm() / scale);
      if (j > i)
        out.offspan_pairing_residual =
            std::max(out.offspan_pairing_residual, (out.Q[i][j] + out.P[i][j].adjoint()).norm() / scale);
    }
  }
  out.trace_residual = trace_sum.norm() / scale;

  const ExteriorOperator lc = lambda_c(frame);
  auto lc2 = [&](const PointForm& f) { return apply_fiber(lc, apply_fiber(lc, f)); };
  const PointForm full = lc2(wedge(out.theta, out.theta));
  const PointForm part = lc2(wedge(out.theta20, out.theta20));
  out.reduction_residual = (full - part).norm() / (scale * scale);
  out.functional = part.comps[0].trace();

  cplx e = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) e += (-out.A[i][j] * out.A[j][i] + out.A[i][i] * out.A[j][j]).trace();
  out.index_expansion = e;
  out.c0 = (lc.block(2) * cols[0])(0);
  return out;
}

// ---------------------------------------------------------------------------
// Flow

namespace {

MatrixForm flow_weighted(const MatrixForm& theta, const InducedStructure& L) {
  MatrixForm q = apply_fiber(lefschetz_L(L), apply_fiber(lambda_L(L), theta));
  q += apply_fiber(type_projector(L, 0, 2), theta);
  return q;
}

}  // namespace

double flow_energy(const HermitianConnection& conn, const InducedStructure& L) {
  const MatrixForm& theta = conn.curvature();
  const double a = l2_norm(apply_fiber(lambda_L(L), theta));
  const double b = l2_norm(apply_fiber(type_projector(L, 0, 2), theta));
  return a * a + b * b;
}

MatrixForm flow_gradient(const HermitianConnection& conn, const InducedStructure& L) {
  MatrixForm g = nabla_op(conn).apply_adjoint(flow_weighted(conn.curvature(), L));
  g *= cplx(2.0);
  MatrixForm out = g + real_T(g);
  out *= cplx(0.5);
  return out;
}

std::string FlowTrajectory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step,residual,step_size,energy,halvings\n";
  for (const auto& s : history)
    os << s.step << "," << s.residual << "," << s.step_size << "," << s.energy << "," << s.halvings << "\n";
  return os.str();
}

FlowTrajectory yang_mills_flow(const HermitianConnection& start, const FlowOptions& opt) {
  HermitianConnection conn = start.with_truncation(true);
  FlowTrajectory traj;
  double energy = flow_energy(conn, opt.L);
  traj.history.push_back({0, energy, std::sqrt(energy), 0.0, 0});
  double h = opt.rate;
  for (int step = 1; step <= opt.steps; ++step) {
    if (std::sqrt(energy) <= opt.target) break;
    const MatrixForm g = flow_gradient(conn, opt.L);
    if (l2_norm(g) == 0.0) break;
    int halvings = 0;
    for (;;) {
      HermitianConnection trial(conn.potential() - cplx(h) * g, true);
      const double e = flow_energy(trial, opt.L);
      if (e < energy) {
        conn = std::move(trial);
        energy = e;
        break;
      }
      if (++halvings > opt.max_halvings)
        throw Error(ErrorKind::StepSizeUnderflow, "no decrease after " + std::to_string(opt.max_halvings) +
                                                      " halvings at step " + std::to_string(step));
      h *= 0.5;
    }
    traj.total_halvings += halvings;
    traj.history.push_back({step, energy, std::sqrt(energy), h, halvings});
    h = std::min(opt.rate, 2.0 * h);
  }
  traj.final_connection = conn;
  return traj;
}

}  // namespace hkt
