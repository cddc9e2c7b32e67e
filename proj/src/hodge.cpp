#include "hkt/hodge.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "hkt/errors.hpp"

namespace hkt {

namespace {

constexpr int kDim = 4;

bool same_structure(const InducedStructure& a, const InducedStructure& b) {
  return (a.L - b.L).norm() <= 1e-12;
}

double rel_residual(const MatrixForm& lhs, const MatrixForm& rhs, const MatrixForm& input) {
  const double s = std::max({l2_norm(lhs), l2_norm(rhs), l2_norm(input), 1e-300});
  return l2_norm(lhs - rhs) / s;
}

std::vector<Freq> all_frequencies(int n) {
  std::vector<Freq> out;
  for (int a = -n; a <= n; ++a)
    for (int b = -n; b <= n; ++b)
      for (int c = -n; c <= n; ++c)
        for (int d = -n; d <= n; ++d) out.push_back({a, b, c, d});
  return out;
}

int freq_index(const Freq& k, int n) {
  const int s = 2 * n + 1;
  return (((k[0] + n) * s + (k[1] + n)) * s + (k[2] + n)) * s + (k[3] + n);
}

// Orthonormal basis of the range of a Hermitian projector block.
CMat range_basis(const CMat& P) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (P + P.adjoint()));
  std::vector<int> keep;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > 0.5) keep.push_back(i);
  CMat Q(P.rows(), static_cast<int>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) Q.col(static_cast<int>(j)) = es.eigenvectors().col(keep[j]);
  return Q;
}

Op base_operator(LaplacianKind kind, const HermitianConnection& conn, const InducedStructure& L) {
  switch (kind) {
    case LaplacianKind::partial: return partial_op(conn, L);
    case LaplacianKind::dbar: return dbar_op(conn, L);
    case LaplacianKind::d: return nabla_op(conn);
    case LaplacianKind::d_c: return dc_op(conn, L);
    case LaplacianKind::partial_j: return partial_j_op(conn);
    case LaplacianKind::delta: return delta_op(conn);
    case LaplacianKind::delta_bar: return delta_bar_op(conn);
  }
  throw Error(ErrorKind::ShapeMismatch, "unknown Laplacian kind");
}

bool needs_p0(LaplacianKind kind) {
  return kind == LaplacianKind::partial_j || kind == LaplacianKind::delta || kind == LaplacianKind::delta_bar;
}

}  // namespace

std::string laplacian_kind_name(LaplacianKind kind) {
  switch (kind) {
    case LaplacianKind::partial: return "Delta_partial";
    case LaplacianKind::dbar: return "Delta_dbar";
    case LaplacianKind::d: return "Delta_d";
    case LaplacianKind::d_c: return "Delta_dc";
    case LaplacianKind::partial_j: return "Delta_partial_j";
    case LaplacianKind::delta: return "Delta_delta";
    case LaplacianKind::delta_bar: return "Delta_delta_bar";
  }
  return "Delta";
}

FormDomain FormDomain::all(int degree) {
  FormDomain d;
  d.degree = degree;
  return d;
}

FormDomain FormDomain::of_type(int p, int q, const InducedStructure& L) {
  FormDomain d;
  d.degree = p + q;
  d.type = std::make_pair(p, q);
  d.L = L;
  return d;
}

ExteriorOperator FormDomain::projector() const {
  if (type) return type_projector(L, type->first, type->second);
  return identity_operator(kDim);
}

std::string FormDomain::name() const {
  std::ostringstream os;
  if (type)
    os << "(" << type->first << "," << type->second << ")";
  else
    os << "degree " << degree;
  return os.str();
}

Laplacian::Laplacian(LaplacianKind kind, HermitianConnection conn, FormDomain domain, InducedStructure L)
    : kind_(kind), conn_(std::move(conn)), domain_(std::move(domain)), L_(std::move(L)) {
  if (domain_.degree < 0 || domain_.degree > kDim)
    throw Error(ErrorKind::ShapeMismatch, "domain degree out of range");
  if (domain_.type && domain_.type->first + domain_.type->second != domain_.degree)
    throw Error(ErrorKind::ShapeMismatch, "domain type does not match its degree");
  if (needs_p0(kind_)) {
    const bool ok = domain_.type && domain_.type->second == 0 && same_structure(domain_.L, induced(1, 0, 0));
    if (!ok) throw Error(ErrorKind::WrongType, laplacian_kind_name(kind_) + " is defined on (p,0)-forms for I only");
  }
  proj_ = domain_.projector();
  op_ = laplacian_of(base_operator(kind_, conn_, L_));
}

std::string Laplacian::name() const {
  std::string s = laplacian_kind_name(kind_);
  if (kind_ == LaplacianKind::partial || kind_ == LaplacianKind::dbar || kind_ == LaplacianKind::d_c) {
    std::ostringstream os;
    os << "[L=(" << L_.a << "," << L_.b << "," << L_.c << ")]";
    s += os.str();
  }
  return s + " on " + domain_.name();
}

MatrixForm Laplacian::apply(const MatrixForm& x) const {
  if (x.degree() != domain_.degree) throw Error(ErrorKind::ShapeMismatch, "form degree differs from the domain");
  return apply_fiber(proj_, (*op_)(apply_fiber(proj_, x)));
}

double Laplacian::domain_defect(const MatrixForm& x) const {
  return l2_norm(x - apply_fiber(proj_, x)) / std::max(l2_norm(x), 1e-300);
}

Laplacian laplacian(LaplacianKind kind, const HermitianConnection& conn, const FormDomain& domain,
                    const InducedStructure& L) {
  return Laplacian(kind, conn, domain, L);
}

MatrixForm HarmonicBasis::project(const MatrixForm& x) const {
  MatrixForm out(x.rank(), x.degree(), x.cutoff());
  for (const auto& h : forms) out += l2_inner(x, h) * h;
  return out;
}

// ---------------------------------------------------------------------------
// Spectral solver

struct SpectralSolver::Impl {
  int rank = 1, cutoff = 0, degree = 0, ncomp = 1, width = 0;  // width = m * r^2
  CMat Q;                                                       // ncomp x m
  enum class Mode { blockwise, dense, cg } mode = Mode::blockwise;
  // blockwise: one decomposition per frequency, indexed by freq_index
  std::vector<RVec> evals;
  std::vector<CMat> evecs;
  // dense: frequencies in all_frequencies order, coordinates (k, col)
  RVec dense_evals;
  CMat dense_evecs;

  CVec coords(const Block& b) const {
    const int rr = rank * rank;
    CVec y(width);
    const CMat Y = Q.adjoint() * b;  // m x rr
    for (int c = 0; c < Q.cols(); ++c)
      for (int e = 0; e < rr; ++e) y(c * rr + e) = Y(c, e);
    return y;
  }
  Block block_of(const CVec& y) const {
    const int rr = rank * rank;
    CMat Y(Q.cols(), rr);
    for (int c = 0; c < Q.cols(); ++c)
      for (int e = 0; e < rr; ++e) Y(c, e) = y(c * rr + e);
    return Q * Y;
  }
  MatrixForm single_mode(const Freq& k, const CVec& y) const {
    MatrixForm f(rank, degree, cutoff);
    f.mode(k) = block_of(y);
    return f;
  }
  CVec global_coords(const MatrixForm& x) const {
    const auto freqs = all_frequencies(cutoff);
    CVec v = CVec::Zero(static_cast<long>(freqs.size()) * width);
    for (const auto& [k, b] : x.modes()) v.segment(static_cast<long>(freq_index(k, cutoff)) * width, width) = coords(b);
    return v;
  }
  MatrixForm from_global(const CVec& v) const {
    const auto freqs = all_frequencies(cutoff);
    MatrixForm f(rank, degree, cutoff);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const CVec seg = v.segment(static_cast<long>(i) * width, width);
      if (seg.norm() == 0.0) continue;
      f.mode(freqs[i]) = block_of(seg);
    }
    return f;
  }
};

SpectralSolver::SpectralSolver(Laplacian lap) : lap_(std::move(lap)) {
  auto impl = std::make_shared<Impl>();
  const auto& conn = lap_.connection();
  impl->rank = conn.rank();
  impl->cutoff = conn.cutoff();
  impl->degree = lap_.domain().degree;
  impl->ncomp = exterior(kDim).size(impl->degree);
  impl->Q = range_basis(lap_.projector().block(impl->degree));
  impl->width = static_cast<int>(impl->Q.cols()) * impl->rank * impl->rank;
  const auto freqs = all_frequencies(impl->cutoff);
  dim_ = static_cast<long>(freqs.size()) * impl->width;
  ti_ = conn.potential().bandwidth() == 0;
  const int rr = impl->rank * impl->rank;
  double lmax = 0.0;

  if (ti_) {
    impl->mode = Impl::Mode::blockwise;
    std::vector<CMat> blocks(freqs.size(), CMat::Zero(impl->width, impl->width));
    // One probe per local basis vector, placed at every frequency at once:
    // the operator does not mix frequencies.
    for (int col = 0; col < impl->width; ++col) {
      CVec e = CVec::Zero(impl->width);
      e(col) = 1.0;
      const Block b = impl->block_of(e);
      MatrixForm probe(impl->rank, impl->degree, impl->cutoff);
      for (const auto& k : freqs) probe.mode(k) = b;
      const MatrixForm out = lap_.apply(probe);
      for (const auto& [k, ob] : out.modes()) blocks[freq_index(k, impl->cutoff)].col(col) = impl->coords(ob);
    }
    impl->evals.resize(freqs.size());
    impl->evecs.resize(freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const CMat& B = blocks[i];
      const double bn = B.norm();
      if (bn > 0) herm_defect_ = std::max(herm_defect_, (B - B.adjoint()).norm() / bn);
      Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (B + B.adjoint()));
      impl->evals[i] = es.eigenvalues();
      impl->evecs[i] = es.eigenvectors();
      if (impl->width > 0) lmax = std::max(lmax, es.eigenvalues().maxCoeff());
    }
    (void)rr;
  } else if (dim_ <= kDenseLimit) {
    impl->mode = Impl::Mode::dense;
    CMat A = CMat::Zero(dim_, dim_);
    for (std::size_t i = 0; i < freqs.size(); ++i)
      for (int col = 0; col < impl->width; ++col) {
        CVec e = CVec::Zero(impl->width);
        e(col) = 1.0;
        const MatrixForm out = lap_.apply(impl->single_mode(freqs[i], e));
        A.col(static_cast<long>(i) * impl->width + col) = impl->global_coords(out);
      }
    const double an = A.norm();
    if (an > 0) herm_defect_ = (A - A.adjoint()).norm() / an;
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (A + A.adjoint()));
    impl->dense_evals = es.eigenvalues();
    impl->dense_evecs = es.eigenvectors();
    if (dim_ > 0) lmax = es.eigenvalues().maxCoeff();
  } else {
    impl->mode = Impl::Mode::cg;
    // power iteration for the scale
    std::mt19937_64 rng(12345);
    MatrixForm x = apply_fiber(lap_.projector(),
                               random_form(impl->rank, impl->degree, impl->cutoff, impl->cutoff, 1.0, rng));
    for (int it = 0; it < 20; ++it) {
      const double n = l2_norm(x);
      if (n == 0.0) break;
      x *= cplx(1.0 / n);
      MatrixForm y = lap_.apply(x);
      lmax = std::real(l2_inner(y, x));
      x = std::move(y);
    }
  }
  scale_ = std::max(lmax, 1.0);
  impl_ = impl;
}

const HarmonicBasis& SpectralSolver::harmonic_basis() const {
  if (basis_) return *basis_;
  const Impl& im = *impl_;
  if (im.mode == Impl::Mode::cg)
    throw Error(ErrorKind::SolverBudgetExceeded,
                "space of dimension " + std::to_string(dim_) + " exceeds the dense eigen-solver limit " +
                    std::to_string(kDenseLimit));
  auto hb = std::make_shared<HarmonicBasis>();
  hb->laplacian = lap_.name();
  hb->domain = lap_.domain();
  hb->threshold = threshold();
  hb->scale = scale_;
  const auto freqs = all_frequencies(im.cutoff);
  if (im.mode == Impl::Mode::blockwise) {
    for (std::size_t i = 0; i < freqs.size(); ++i)
      for (int j = 0; j < im.evals[i].size(); ++j)
        if (im.evals[i](j) <= threshold()) hb->forms.push_back(im.single_mode(freqs[i], im.evecs[i].col(j)));
  } else {
    for (int j = 0; j < im.dense_evals.size(); ++j)
      if (im.dense_evals(j) <= threshold()) hb->forms.push_back(im.from_global(im.dense_evecs.col(j)));
  }
  const_cast<SpectralSolver*>(this)->basis_ = hb;
  return *basis_;
}

MatrixForm SpectralSolver::project_harmonic(const MatrixForm& x) const {
  const Impl& im = *impl_;
  if (im.mode == Impl::Mode::cg) return harmonic_basis().project(x);
  const MatrixForm px = apply_fiber(lap_.projector(), x);
  if (im.mode == Impl::Mode::dense) {
    const CVec v = im.global_coords(px);
    CVec out = CVec::Zero(v.size());
    for (int j = 0; j < im.dense_evals.size(); ++j)
      if (im.dense_evals(j) <= threshold()) out += im.dense_evecs.col(j) * (im.dense_evecs.col(j).adjoint() * v)(0);
    return im.from_global(out);
  }
  MatrixForm out(x.rank(), x.degree(), x.cutoff());
  for (const auto& [k, b] : px.modes()) {
    const int i = freq_index(k, im.cutoff);
    const CVec y = im.coords(b);
    CVec z = CVec::Zero(y.size());
    for (int j = 0; j < im.evals[i].size(); ++j)
      if (im.evals[i](j) <= threshold()) z += im.evecs[i].col(j) * (im.evecs[i].col(j).adjoint() * y)(0);
    if (z.norm() > 0) out.mode(k) = im.block_of(z);
  }
  return out;
}

GreenResult SpectralSolver::solve(const MatrixForm& tau) const {
  if (tau.degree() != lap_.domain().degree || tau.rank() != lap_.connection().rank() ||
      tau.cutoff() != lap_.connection().cutoff())
    throw Error(ErrorKind::ShapeMismatch, "right-hand side does not match the Laplacian's space");
  if (lap_.domain_defect(tau) > 1e-9) throw Error(ErrorKind::WrongType, "right-hand side outside " + lap_.domain().name());
  const Impl& im = *impl_;
  GreenResult res;
  const MatrixForm b = apply_fiber(lap_.projector(), tau);
  const double thr = threshold();
  if (im.mode == Impl::Mode::blockwise) {
    res.method = "blockwise";
    MatrixForm out(tau.rank(), tau.degree(), tau.cutoff());
    double removed2 = 0.0;
    for (const auto& [k, blk] : b.modes()) {
      const int i = freq_index(k, im.cutoff);
      const CVec y = im.coords(blk);
      const CVec c = im.evecs[i].adjoint() * y;
      CVec z = CVec::Zero(c.size());
      for (int j = 0; j < c.size(); ++j) {
        if (im.evals[i](j) <= thr)
          removed2 += std::norm(c(j));
        else
          z(j) = c(j) / im.evals[i](j);
      }
      const CVec x = im.evecs[i] * z;
      if (x.norm() > 0) out.mode(k) = im.block_of(x);
    }
    res.solution = std::move(out);
    res.projected_norm = std::sqrt(removed2);
    return res;
  }
  if (im.mode == Impl::Mode::dense) {
    res.method = "dense";
    auto pseudo_inverse = [&](const CVec& v, double* removed2, CVec* kernel_part) {
      const CVec c = im.dense_evecs.adjoint() * v;
      CVec z = CVec::Zero(c.size()), h = CVec::Zero(c.size());
      for (int j = 0; j < c.size(); ++j) {
        if (im.dense_evals(j) <= thr)
          h(j) = c(j);
        else
          z(j) = c(j) / im.dense_evals(j);
      }
      if (removed2) *removed2 = h.squaredNorm();
      if (kernel_part) *kernel_part = im.dense_evecs * h;
      return CVec(im.dense_evecs * z);
    };
    const CVec bv = im.global_coords(b);
    double removed2 = 0.0;
    CVec kernel_part;
    CVec x = pseudo_inverse(bv, &removed2, &kernel_part);
    // One refinement step against the operator itself; the eigenvectors
    // alone leave a residual near cond * eps.
    const CVec target = bv - kernel_part;
    const CVec resid = target - im.global_coords(lap_.apply(im.from_global(x)));
    x += pseudo_inverse(resid, nullptr, nullptr);
    res.solution = im.from_global(x);
    res.projected_norm = std::sqrt(removed2);
    res.iterations = 1;
    return res;
  }
  // Conjugate gradients; the kernel is unknown here, so a right-hand side
  // with a harmonic part does not converge and is reported as divergence.
  res.method = "cg";
  MatrixForm x(tau.rank(), tau.degree(), tau.cutoff());
  MatrixForm r = b;
  MatrixForm p = r;
  const double bn = l2_norm(b);
  double rs = bn * bn;
  const long cap = 10 * dim_;
  long it = 0;
  while (std::sqrt(rs) > kCgRelTol * bn && it < cap) {
    const MatrixForm ap = lap_.apply(p);
    const double pap = std::real(l2_inner(ap, p));
    if (!(pap > 0)) break;
    const double alpha = rs / pap;
    x += cplx(alpha) * p;
    r -= cplx(alpha) * ap;
    const double rs_new = std::pow(l2_norm(r), 2);
    p = r + cplx(rs_new / rs) * p;
    rs = rs_new;
    ++it;
  }
  if (std::sqrt(rs) > kCgRelTol * bn && bn > 0)
    throw Error(ErrorKind::SolverDiverged, "CG stopped at relative residual " + std::to_string(std::sqrt(rs) / bn) +
                                               " after " + std::to_string(it) + " iterations");
  res.solution = std::move(x);
  res.iterations = static_cast<int>(it);
  return res;
}

std::vector<double> SpectralSolver::eigenvalues_at(const Freq& k) const {
  const Impl& im = *impl_;
  if (im.mode != Impl::Mode::blockwise) throw Error(ErrorKind::ShapeMismatch, "per-frequency spectrum needs a constant connection");
  if (norm_inf(k) > im.cutoff) throw Error(ErrorKind::BandwidthOverflow, "frequency beyond the cutoff");
  const RVec& e = im.evals[freq_index(k, im.cutoff)];
  return std::vector<double>(e.data(), e.data() + e.size());
}

HarmonicBasis harmonic_basis(const Laplacian& lap) { return SpectralSolver(lap).harmonic_basis(); }

MatrixForm green(const Laplacian& lap, const MatrixForm& tau) { return SpectralSolver(lap).green(tau); }

SpectralSolver gamma_solver(const HermitianConnection& conn, int degree) {
  return SpectralSolver(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(degree, 0)));
}

MatrixForm gamma(const SpectralSolver& solver, const MatrixForm& tau) {
  const auto& conn = solver.laplacian().connection();
  return partial_op(conn, induced(1, 0, 0)).apply_adjoint(solver.green(tau));
}

MatrixForm gamma(const HermitianConnection& conn, const MatrixForm& tau) {
  return gamma(gamma_solver(conn, tau.degree()), tau);
}

// ---------------------------------------------------------------------------
// Hypotheses

void require_hyperholomorphic(const HermitianConnection& conn, double tol) {
  const char* names[] = {"I", "J", "K"};
  const InducedStructure Ls[] = {induced(1, 0, 0), induced(0, 1, 0), induced(0, 0, 1)};
  for (int i = 0; i < 3; ++i) {
    const double r = newlander_test(conn, Ls[i]);
    if (r > tol)
      throw Error(ErrorKind::HypothesisViolated,
                  std::string("curvature is not (1,1) for ") + names[i] + " (residual " + std::to_string(r) + ")");
  }
}

namespace {

bool is_hyperholomorphic(const HermitianConnection& conn, double tol) {
  return newlander_test(conn, induced(1, 0, 0)) <= tol && newlander_test(conn, induced(0, 1, 0)) <= tol &&
         newlander_test(conn, induced(0, 0, 1)) <= tol;
}

int sample_bandwidth(const HermitianConnection& conn, int want) {
  const int limit = conn.cutoff() - 2 * conn.potential().bandwidth();
  if (limit < 0) {
    if (conn.allow_truncation()) return 0;
    throw Error(ErrorKind::BandwidthOverflow, "no band-safe test forms at this cutoff");
  }
  return std::min(want, limit);
}

std::string structure_name(const InducedStructure& L) {
  std::ostringstream os;
  os.precision(4);
  os << "(" << L.a << "," << L.b << "," << L.c << ")";
  return os.str();
}

}  // namespace

InducedStructure conjugated_structure(const InducedStructure& I, const InducedStructure& L) {
  return induced_from_matrix(make_frame(1), L.L * I.L * L.L.inverse());
}

double conjugation_residual(const HermitianConnection& conn, const InducedStructure& L, const MatrixForm& a) {
  const auto I = induced(1, 0, 0);
  const Op R = form_action_op(L.L), Rinv = form_action_op(L.L.inverse());
  const Op D1 = laplacian_of(partial_op(conn, I));
  const Op D2 = laplacian_of(partial_op(conn, conjugated_structure(I, L)));
  return rel_residual(R(D1(Rinv(a))), D2(a), a);
}

const std::vector<std::string>& identity_check_names() {
  static const std::vector<std::string> names = {
      "kodaira-lambda-partial", "kodaira-lambda-dbar",      "prop-3.1a-laplacian-sum",
      "prop-3.1b-laplacian-difference", "prop-3.1c-dc-laplacian", "prop-4.1-partial-j-square",
      "prop-4.2-lj-commutator", "prop-4.3-anticommutation", "cor-4.1-delta-commutators",
      "thm-4.1-laplacians",     "thm-8.1-conjugation",
  };
  return names;
}

bool IdentityReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const IdentityCheck& c) { return c.passed(); });
}

nlohmann::json IdentityReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& c : checks)
    j[c.name] = {{"residual", c.residual},
                 {"samples", c.samples},
                 {"tolerance", c.tolerance},
                 {"hypothesis", c.hypothesis},
                 {"hypothesis_status", c.hypothesis_ok ? "satisfied" : "violated"},
                 {"passed", c.passed()}};
  return j;
}

IdentityReport identity_suite(const HermitianConnection& conn, const std::vector<InducedStructure>& Ls,
                              int samples, std::uint64_t seed, const IdentitySuiteOptions& options) {
  const auto& names = identity_check_names();
  std::vector<std::string> wanted = options.checks.empty() ? names : options.checks;
  for (const auto& w : wanted)
    if (std::find(names.begin(), names.end(), w) == names.end())
      throw Error(ErrorKind::ConfigInvalid, "unknown identity check '" + w + "'");
  const std::vector<InducedStructure> structures = Ls.empty() ? std::vector<InducedStructure>{induced(1, 0, 0)} : Ls;
  const int bw = sample_bandwidth(conn, 1);
  const int r = conn.rank(), N = conn.cutoff();
  const auto I = induced(1, 0, 0), J = induced(0, 1, 0);
  const double htol = options.hypothesis_tolerance;
  const bool hyper = is_hyperholomorphic(conn, htol);

  IdentityReport report;
  for (std::size_t ci = 0; ci < names.size(); ++ci) {
    const std::string& name = names[ci];
    if (std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    std::mt19937_64 rng(seed * 1000003ull + ci);
    IdentityCheck chk;
    chk.name = name;
    chk.tolerance = options.tolerance;
    auto general = [&](int s) { return random_form(r, s % 5, N, bw, 1.0, rng); };
    auto p0 = [&](int s) { return apply_fiber(type_projector(I, s % 3, 0), random_form(r, s % 3, N, bw, 1.0, rng)); };
    auto fail_hypothesis = [&](const std::string& what) {
      if (!options.record_violations) throw Error(ErrorKind::HypothesisViolated, name + ": " + what);
      chk.hypothesis_ok = false;
    };

    if (name == "kodaira-lambda-partial" || name == "kodaira-lambda-dbar") {
      chk.hypothesis = "none";
      for (const auto& L : structures) {
        const Op part = partial_op(conn, L), dbar = dbar_op(conn, L), Lam = lambda_op(L);
        const Op lhs = name == "kodaira-lambda-partial" ? commutator(Lam, part) : commutator(Lam, dbar);
        const Op rhs = name == "kodaira-lambda-partial" ? kI * dbar.adjoint() : (-kI) * part.adjoint();
        for (int s = 0; s < samples; ++s) {
          const auto a = general(s);
          chk.residual = std::max(chk.residual, rel_residual(lhs(a), rhs(a), a));
          ++chk.samples;
        }
      }
    } else if (name.rfind("prop-3.1", 0) == 0) {
      chk.hypothesis = "integrable";
      for (const auto& L : structures) {
        const double nl = newlander_test(conn, L);
        if (nl > htol) {
          fail_hypothesis("connection not integrable for L=" + structure_name(L) + " (residual " + std::to_string(nl) + ")");
          continue;
        }
        const Op Dd = laplacian_of(nabla_op(conn));
        const Op Dp = laplacian_of(partial_op(conn, L)), Db = laplacian_of(dbar_op(conn, L));
        for (int s = 0; s < samples; ++s) {
          const auto a = general(s);
          double res = 0.0;
          if (name == "prop-3.1a-laplacian-sum") {
            res = rel_residual(Dp(a) + Db(a), Dd(a), a);
          } else if (name == "prop-3.1b-laplacian-difference") {
            const Op curv = commutator(lambda_op(L), curvature_action_op(conn));
            res = rel_residual(Dp(a) - Db(a), kI * curv(a), a);
          } else {
            res = rel_residual(laplacian_of(dc_op(conn, L))(a), Dd(a), a);
          }
          chk.residual = std::max(chk.residual, res);
          ++chk.samples;
        }
      }
    } else if (name == "thm-8.1-conjugation") {
      chk.hypothesis = "hyperholomorphic";
      if (!hyper) {
        fail_hypothesis("curvature is not (1,1) for all induced structures");
      } else {
        for (const auto& L : structures)
          for (int s = 0; s < samples; ++s) {
            const auto a = general(s);
            chk.residual = std::max(chk.residual, conjugation_residual(conn, L, a));
            ++chk.samples;
          }
      }
    } else {
      // statements on the (p,0)-complex for I
      chk.hypothesis = "hyperholomorphic";
      if (!hyper) {
        fail_hypothesis("curvature is not (1,1) for all induced structures");
      } else {
        const Op part = partial_op(conn, I), pj = partial_j_op(conn), de = delta_op(conn), db = delta_bar_op(conn);
        const Op compress = fiber_op(
            (type_projector(I, 0, 0) + type_projector(I, 1, 0) + type_projector(I, 2, 0)) * lefschetz_L(J));
        const Op Dp = laplacian_of(part), Dj = laplacian_of(pj), Dde = laplacian_of(de), Ddb = laplacian_of(db);
        const MatrixForm zero(r, 0, N);
        for (int s = 0; s < samples; ++s) {
          const auto a = p0(s);
          const int p = s % 3;
          double res = 0.0;
          if (name == "prop-4.1-partial-j-square") {
            // (partial_j)^2 = 0 and {partial_j, partial} = 0; both land in degree p+2
            if (p + 2 <= 2) {
              const auto z = MatrixForm(r, p + 2, N);
              res = std::max(rel_residual(pj(pj(a)), z, a), rel_residual(anticommutator(pj, part)(a), z, a));
            }
          } else if (name == "prop-4.2-lj-commutator") {
            res = rel_residual(commutator(lefschetz_op(J), part.adjoint())(a), (-1.0) * pj(a), a);
          } else if (name == "prop-4.3-anticommutation") {
            const auto z1 = MatrixForm(r, p, N);
            res = std::max({rel_residual(anticommutator(part.adjoint(), pj)(a), z1, a),
                            rel_residual(anticommutator(pj.adjoint(), part)(a), z1, a),
                            rel_residual(anticommutator(de.adjoint(), db)(a), z1, a)});
          } else if (name == "cor-4.1-delta-commutators") {
            res = std::max(rel_residual(commutator(compress, de.adjoint())(a), -kI * db(a), a),
                           rel_residual(commutator(compress, db.adjoint())(a), kI * de(a), a));
          } else if (name == "thm-4.1-laplacians") {
            const auto dp = Dp(a);
            res = std::max({rel_residual(Dj(a), dp, a), rel_residual(2.0 * Dde(a), dp, a),
                            rel_residual(2.0 * Ddb(a), dp, a)});
          }
          chk.residual = std::max(chk.residual, res);
          ++chk.samples;
        }
        (void)zero;
      }
    }
    report.checks.push_back(chk);
  }
  return report;
}

TransportCheck harmonic_transport(const HermitianConnection& conn, const InducedStructure& L, int p) {
  const auto I = induced(1, 0, 0);
  const auto IL = conjugated_structure(I, L);
  const SpectralSolver src(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(p, 0, I), I));
  const SpectralSolver dst(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(p, 0, IL), IL));
  const auto& hs = src.harmonic_basis();
  const auto& ht = dst.harmonic_basis();
  TransportCheck out;
  out.degree = p;
  out.source_dimension = hs.dimension();
  out.target_dimension = ht.dimension();
  const Op R = form_action_op(L.L);
  for (const auto& h : hs.forms) {
    const auto m = R(h);
    out.projection_residual =
        std::max(out.projection_residual, l2_norm(m - ht.project(m)) / std::max(l2_norm(m), 1e-300));
  }
  return out;
}

// ---------------------------------------------------------------------------
// partial partial_j lemma

namespace {

MatrixForm ddj_candidate(const HermitianConnection& conn, const SpectralSolver& solver, const MatrixForm& omega, int sign) {
  const auto I = induced(1, 0, 0);
  const MatrixForm g2 = solver.green(solver.green(omega));
  const MatrixForm eta = partial_op(conn, I).apply_adjoint(g2);
  return cplx(sign) * partial_j_op(conn).apply_adjoint(eta);
}

MatrixForm ddj_apply(const HermitianConnection& conn, const MatrixForm& kappa) {
  return partial_op(conn, induced(1, 0, 0))(partial_j_op(conn)(kappa));
}

}  // namespace

int ddj_sign() {
  static std::once_flag once;
  static int sign = 1;
  std::call_once(once, [] {
    const auto conn = HermitianConnection::zero(1, 2);
    std::mt19937_64 rng(4242);
    const MatrixForm k0 = random_form(1, 0, 2, 1, 1.0, rng);
    const MatrixForm omega = ddj_apply(conn, k0);
    const SpectralSolver solver(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(2, 0)));
    const double rp = l2_norm(ddj_apply(conn, ddj_candidate(conn, solver, omega, 1)) - omega);
    const double rm = l2_norm(ddj_apply(conn, ddj_candidate(conn, solver, omega, -1)) - omega);
    sign = rp <= rm ? 1 : -1;
  });
  return sign;
}

DdjResult ddj_solve(const HermitianConnection& conn, const MatrixForm& omega) {
  const int p = omega.degree();
  DdjResult res;
  res.sign = ddj_sign();
  const double on = l2_norm(omega);
  if (on == 0.0) {
    res.kappa = MatrixForm(omega.rank(), p - 2, omega.cutoff());
    return res;
  }
  if (p < 0 || p > 2) throw Error(ErrorKind::WrongType, "partial partial_j lemma needs a (p,0)-form, p <= 2");
  if (type_p0_defect(omega) > 1e-9) throw Error(ErrorKind::WrongType, "input is not of type (p,0)");
  const auto I = induced(1, 0, 0);
  const double c1 = l2_norm(partial_op(conn, I)(omega)) / on;
  const double c2 = l2_norm(partial_j_op(conn)(omega)) / on;
  if (c1 > 1e-9 || c2 > 1e-9)
    throw Error(ErrorKind::NotClosed, "partial / partial_j residuals " + std::to_string(c1) + ", " + std::to_string(c2));
  const SpectralSolver solver(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(p, 0)));
  const double h = l2_norm(solver.project_harmonic(omega)) / on;
  if (h > 1e-9 || p < 2) throw Error(ErrorKind::NotExact, "harmonic part " + std::to_string(h) + " of the input");
  res.kappa = ddj_candidate(conn, solver, omega, res.sign);
  res.residual = l2_norm(ddj_apply(conn, res.kappa) - omega) / on;
  return res;
}

// ---------------------------------------------------------------------------
// Actions on cohomology

namespace {

// Matrix of f between harmonic spaces: M(a,b) = <f(h_b), g_a>.
CMat matrix_between(const HarmonicBasis& from, const HarmonicBasis& to, const Op& f, double& outside) {
  CMat M = CMat::Zero(to.dimension(), from.dimension());
  for (int b = 0; b < from.dimension(); ++b) {
    const MatrixForm y = f(from.forms[b]);
    MatrixForm rest = y;
    for (int a = 0; a < to.dimension(); ++a) {
      M(a, b) = l2_inner(y, to.forms[a]);
      rest -= M(a, b) * to.forms[a];
    }
    outside = std::max(outside, l2_norm(rest) / std::max(1.0, l2_norm(y)));
  }
  return M;
}

std::vector<double> hermitian_eigs(const CMat& M) {
  if (M.size() == 0) return {};
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (M + M.adjoint()));
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  return v;
}

}  // namespace

Sl2Action sl2_action(const HermitianConnection& conn) {
  std::vector<HarmonicBasis> H;
  for (int i = 0; i <= 2; ++i)
    H.push_back(SpectralSolver(laplacian(LaplacianKind::partial, conn, FormDomain::of_type(i, 0))).harmonic_basis());
  Sl2Action out;
  const Op Lc = lc_op(), Lam = lambda_c_op();
  for (int i = 0; i <= 2; ++i) out.dims.push_back(H[i].dimension());
  for (int i = 0; i <= 2; ++i) {
    out.Lc.push_back(i + 2 <= 2 ? matrix_between(H[i], H[i + 2], Lc, out.harmonicity_residual)
                                : CMat::Zero(0, out.dims[i]));
    out.Lambda_c.push_back(i - 2 >= 0 ? matrix_between(H[i], H[i - 2], Lam, out.harmonicity_residual)
                                      : CMat::Zero(0, out.dims[i]));
  }
  for (int i = 0; i <= 2; ++i) {
    const int m = out.dims[i];
    CMat up = CMat::Zero(m, m), down = CMat::Zero(m, m);  // Lambda_c Lc and Lc Lambda_c on H^i
    if (i + 2 <= 2) up = out.Lambda_c[i + 2] * out.Lc[i];
    if (i - 2 >= 0) down = out.Lc[i - 2] * out.Lambda_c[i];
    const CMat Hi = 0.5 * (up - down);
    out.H.push_back(Hi);
    out.weights.push_back(hermitian_eigs(Hi));
    out.bracket_weights.push_back(hermitian_eigs(down - up));
    const double expect = 2.0 - 2.0 * i;
    if (m > 0) out.scalar_defect = std::max(out.scalar_defect, (Hi - expect * CMat::Identity(m, m)).norm());
  }
  if (out.Lc[0].size() > 0) {
    Eigen::JacobiSVD<CMat> svd(out.Lc[0]);
    out.lc_min_singular = svd.singularValues().minCoeff();
  }
  out.lc_injective_low = out.dims[0] == out.dims[2] && out.lc_min_singular > 1e-6;
  return out;
}

RMat real_matrix(const HarmonicBasis& basis, const std::function<MatrixForm(const MatrixForm&)>& f, double* outside) {
  const int m = basis.dimension();
  std::vector<MatrixForm> e;
  for (const auto& h : basis.forms) {
    e.push_back(h);
    e.push_back(kI * h);
  }
  RMat M = RMat::Zero(2 * m, 2 * m);
  for (int b = 0; b < 2 * m; ++b) {
    const MatrixForm y = f(e[b]);
    MatrixForm rest = y;
    for (int a = 0; a < 2 * m; ++a) {
      M(a, b) = std::real(l2_inner(y, e[a]));
      rest -= cplx(M(a, b)) * e[a];
    }
    if (outside) *outside = std::max(*outside, l2_norm(rest) / std::max(1.0, l2_norm(y)));
  }
  return M;
}

QuaternionAction su2_on_cohomology(const HermitianConnection& conn, const HarmonicBasis& basis, std::uint64_t seed,
                                   int group_samples) {
  require_hyperholomorphic(conn);
  QuaternionAction q;
  q.complex_dimension = basis.dimension();
  const Op Iop = form_action_op(make_frame(1).I);
  q.I = real_matrix(basis, [&](const MatrixForm& x) { return Iop(x); }, &q.invariance_residual);
  q.J = real_matrix(basis, [](const MatrixForm& x) { return bar_J(x); }, &q.invariance_residual);
  q.K = q.I * q.J;
  const int n = static_cast<int>(q.I.rows());
  const RMat id = RMat::Identity(n, n);
  q.relation_residual = std::max({(q.I * q.I + id).norm(), (q.J * q.J + id).norm(), (q.K * q.K + id).norm(),
                                  (q.J * q.I + q.K).norm()});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (int s = 0; s < group_samples; ++s) {
    double v[4] = {g(rng), g(rng), g(rng), g(rng)};
    const double nv = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
    const RMat X = (v[0] * id + v[1] * q.I + v[2] * q.J + v[3] * q.K) / nv;
    q.group_residual = std::max(q.group_residual, (X.transpose() * X - id).norm());
  }
  return q;
}

namespace {

int eigen_multiplicity(const RMat& M, cplx lambda) {
  if (M.size() == 0) return 0;
  const CMat A = M.cast<cplx>() - lambda * CMat::Identity(M.rows(), M.cols());
  Eigen::JacobiSVD<CMat> svd(A);
  const double tol = 1e-8 * std::max(1.0, M.norm());
  int k = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) k += svd.singularValues()(i) <= tol;
  return k;
}

}  // namespace

bool PqTable::consistent() const {
  if (rows.size() != totals.size()) return false;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    int s = 0;
    for (const auto& [label, dim] : rows[n]) {
      if (dim < 0) return false;
      s += dim;
    }
    if (s != totals[n]) return false;
  }
  return true;
}

std::string PqTable::to_csv() const {
  std::ostringstream os;
  os << "degree,type,dimension\n";
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (const auto& [label, dim] : rows[n]) os << n << ",\"" << label << "\"," << dim << "\n";
    os << n << ",total," << totals[n] << "\n";
  }
  return os.str();
}

PqTable pq_cohomology(const HermitianConnection& conn) {
  require_hyperholomorphic(conn);
  PqTable t;
  for (int n = 0; n <= 2; ++n) {
    const auto hb =
        SpectralSolver(laplacian(LaplacianKind::delta, conn, FormDomain::of_type(n, 0))).harmonic_basis();
    const int total = 2 * hb.dimension();
    std::map<std::string, int> row;
    if (n == 0) {
      row["(0,0)"] = total;
    } else {
      const RMat Jr = real_matrix(hb, [](const MatrixForm& x) { return bar_J(x); });
      if (n == 1) {
        row["(1,0)"] = eigen_multiplicity(Jr, kI);
        row["(0,1)"] = eigen_multiplicity(Jr, -kI);
      } else {
        row["(1,1)"] = eigen_multiplicity(Jr, 1.0);
        row["(2,0)+(0,2)"] = eigen_multiplicity(Jr, -1.0);
      }
    }
    t.rows.push_back(row);
    t.totals.push_back(total);
  }
  return t;
}

}  // namespace hkt
