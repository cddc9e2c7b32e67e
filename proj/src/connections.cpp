#include "hkt/connections.hpp"

#include <random>
#include <sstream>

#include "hkt/errors.hpp"

namespace hkt {

namespace {

MatrixForm zero_like(int rank, int degree, int cutoff) { return MatrixForm(rank, degree, cutoff); }

MatrixForm curvature_of(const MatrixForm& A, bool allow) {
  MatrixForm theta = d(A);
  theta += mul_left(A, A, allow);
  return theta.prune();
}

}  // namespace

HermitianConnection::HermitianConnection(MatrixForm potential, bool allow_truncation)
    : potential_(std::move(potential)), allow_truncation_(allow_truncation) {
  if (potential_.degree() != 1) throw Error(ErrorKind::ShapeMismatch, "connection potential must be a 1-form");
  const double defect = l2_norm(real_T(potential_) - potential_);
  if (defect > 1e-12 * std::max(1.0, l2_norm(potential_)))
    throw Error(ErrorKind::WrongType, "potential is not skew-Hermitian (T(A) != A)");
  if (allow_truncation_ || 2 * potential_.bandwidth() <= potential_.cutoff())
    curvature_ = curvature_of(potential_, allow_truncation_);
}

HermitianConnection HermitianConnection::zero(int rank, int cutoff) {
  return HermitianConnection(MatrixForm(rank, 1, cutoff));
}

HermitianConnection HermitianConnection::constant_commuting(int rank, int cutoff, const std::vector<RVec>& phases) {
  if (phases.size() != 4) throw Error(ErrorKind::ShapeMismatch, "need one phase vector per direction");
  MatrixForm A(rank, 1, cutoff);
  for (int mu = 0; mu < 4; ++mu) {
    if (phases[mu].size() != rank) throw Error(ErrorKind::ShapeMismatch, "phase vector length != rank");
    CMat m = CMat::Zero(rank, rank);
    for (int j = 0; j < rank; ++j) m(j, j) = kI * phases[mu](j);
    A.set_coefficient(mu, {0, 0, 0, 0}, m);
  }
  return HermitianConnection(A);
}

HermitianConnection HermitianConnection::constant_commuting(int rank, int cutoff, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<RVec> phases(4, RVec(rank));
  for (auto& v : phases)
    for (int j = 0; j < rank; ++j) v(j) = u(rng);
  return constant_commuting(rank, cutoff, phases);
}

HermitianConnection HermitianConnection::constant_noncommuting(int rank, int cutoff, const CMat& X, const CMat& Y) {
  MatrixForm A(rank, 1, cutoff);
  A.set_coefficient(0, {0, 0, 0, 0}, X);
  A.set_coefficient(1, {0, 0, 0, 0}, Y);
  return HermitianConnection(A);
}

HermitianConnection HermitianConnection::constant_noncommuting(int rank, int cutoff) {
  if (rank < 2) throw Error(ErrorKind::ShapeMismatch, "noncommuting constant potential needs rank >= 2");
  CMat X = CMat::Zero(rank, rank), Y = CMat::Zero(rank, rank);
  // i sigma_x / 2 and i sigma_y / 2 in the leading 2x2 block
  X(0, 1) = X(1, 0) = 0.5 * kI;
  Y(0, 1) = 0.5;
  Y(1, 0) = -0.5;
  return constant_noncommuting(rank, cutoff, X, Y);
}

HermitianConnection HermitianConnection::seeded_random(int rank, int cutoff, int bandwidth, double amplitude,
                                                       std::uint64_t seed, bool allow_truncation) {
  std::mt19937_64 rng(seed);
  MatrixForm a = random_form(rank, 1, cutoff, bandwidth, amplitude, rng);
  MatrixForm A = a + real_T(a);
  A *= 0.5;
  return HermitianConnection(A, allow_truncation);
}

const MatrixForm& HermitianConnection::curvature() const {
  if (!curvature_)
    throw Error(ErrorKind::BandwidthOverflow, "curvature needs 2*bandwidth(A) <= cutoff (or truncation)");
  return *curvature_;
}

double HermitianConnection::bianchi_residual() const {
  const MatrixForm& theta = curvature();
  MatrixForm b = d(theta);
  b += mul_left(potential_, theta, allow_truncation_);
  b -= mul_right(theta, potential_, allow_truncation_);
  return l2_norm(b);
}

HermitianConnection HermitianConnection::with_truncation(bool allow) const {
  return HermitianConnection(potential_, allow);
}

MatrixForm curvature(const HermitianConnection& conn) { return conn.curvature(); }

nlohmann::json to_json(const HermitianConnection& conn) {
  return {{"rank", conn.rank()}, {"cutoff", conn.cutoff()}, {"potential", to_json(conn.potential())}};
}

HermitianConnection connection_from_json(const nlohmann::json& j, bool allow_truncation) {
  MatrixForm A = matrix_form_from_json(j.at("potential"));
  if (A.rank() != j.at("rank").get<int>() || A.cutoff() != j.at("cutoff").get<int>())
    throw Error(ErrorKind::ShapeMismatch, "connection header disagrees with potential");
  return HermitianConnection(A, allow_truncation);
}

Op operator*(const Op& a, const Op& b) {
  return Op(a.label() + "." + b.label(), a.shift() + b.shift(),
            [a, b](const MatrixForm& x) { return a(b(x)); },
            [a, b](const MatrixForm& y) { return b.apply_adjoint(a.apply_adjoint(y)); });
}

Op operator+(const Op& a, const Op& b) {
  if (a.shift() != b.shift()) throw Error(ErrorKind::ShapeMismatch, "sum of operators with different degree shift");
  return Op("(" + a.label() + "+" + b.label() + ")", a.shift(),
            [a, b](const MatrixForm& x) { return a(x) + b(x); },
            [a, b](const MatrixForm& y) { return a.apply_adjoint(y) + b.apply_adjoint(y); });
}

Op operator-(const Op& a, const Op& b) {
  if (a.shift() != b.shift()) throw Error(ErrorKind::ShapeMismatch, "difference of operators with different degree shift");
  return Op("(" + a.label() + "-" + b.label() + ")", a.shift(),
            [a, b](const MatrixForm& x) { return a(x) - b(x); },
            [a, b](const MatrixForm& y) { return a.apply_adjoint(y) - b.apply_adjoint(y); });
}

Op operator*(cplx s, const Op& a) {
  std::ostringstream os;
  os << s;
  return Op(os.str() + a.label(), a.shift(), [a, s](const MatrixForm& x) { return s * a(x); },
            [a, s](const MatrixForm& y) { return std::conj(s) * a.apply_adjoint(y); });
}

Op commutator(const Op& a, const Op& b) { return (a * b - b * a).relabel("[" + a.label() + "," + b.label() + "]"); }

Op anticommutator(const Op& a, const Op& b) {
  return (a * b + b * a).relabel("{" + a.label() + "," + b.label() + "}");
}

Op laplacian_of(const Op& a) { return anticommutator(a, a.adjoint()).relabel("Delta_" + a.label()); }

Op nabla_op(const HermitianConnection& conn) {
  const MatrixForm A = conn.potential();
  const bool allow = conn.allow_truncation();
  auto fwd = [A, allow](const MatrixForm& a) {
    const int p = a.degree();
    if (p < 0 || p >= 4) return zero_like(a.rank(), p + 1, a.cutoff());
    MatrixForm out = d(a);
    out += mul_left(A, a, allow);
    if (p % 2)
      out += mul_right(a, A, allow);
    else
      out -= mul_right(a, A, allow);
    return out;
  };
  auto adj = [A](const MatrixForm& b) {
    const int p = b.degree() - 1;
    if (p < 0 || p >= 4) return zero_like(b.rank(), p, b.cutoff());
    MatrixForm out = d_adjoint(b);
    out += mul_left_adjoint(A, b);
    if (p % 2)
      out += mul_right_adjoint(A, b);
    else
      out -= mul_right_adjoint(A, b);
    return out;
  };
  return Op("nabla", 1, fwd, adj);
}

Op fiber_op(const ExteriorOperator& op) {
  const ExteriorOperator adj = op.adjoint();
  auto run = [](const ExteriorOperator& e, const MatrixForm& a) {
    if (!e.defined_on(a.degree())) return zero_like(a.rank(), a.degree() + e.shift(), a.cutoff());
    return apply_fiber(e, a);
  };
  return Op(op.label(), op.shift(), [op, run](const MatrixForm& a) { return run(op, a); },
            [adj, run](const MatrixForm& b) { return run(adj, b); });
}

Op curvature_action_op(const HermitianConnection& conn) {
  const MatrixForm theta = conn.curvature();
  const bool allow = conn.allow_truncation();
  auto fwd = [theta, allow](const MatrixForm& a) {
    if (a.degree() < 0 || a.degree() + 2 > 4) return zero_like(a.rank(), a.degree() + 2, a.cutoff());
    return mul_left(theta, a, allow) - mul_right(a, theta, allow);
  };
  auto adj = [theta](const MatrixForm& b) {
    if (b.degree() - 2 < 0 || b.degree() > 4) return zero_like(b.rank(), b.degree() - 2, b.cutoff());
    return mul_left_adjoint(theta, b) - mul_right_adjoint(theta, b);
  };
  return Op("[Theta,.]", 2, fwd, adj);
}

Op bar_j_op() {
  return Op("barJ", 0, [](const MatrixForm& a) { return bar_J(a); },
            [](const MatrixForm& b) { return bar_J_inverse(b); });
}

Op form_action_op(const RMat& m) {
  return fiber_op(multiplicative_action(m).with_label("mult"));
}

Op partial_op(const HermitianConnection& conn, const InducedStructure& L) {
  const Op nab = nabla_op(conn);
  const Op ad = fiber_op(ad_operator(L));
  return (cplx(0.5) * (nab - kI * commutator(ad, nab))).relabel("partial_L");
}

Op dbar_op(const HermitianConnection& conn, const InducedStructure& L) {
  const Op nab = nabla_op(conn);
  const Op ad = fiber_op(ad_operator(L));
  return (cplx(0.5) * (nab + kI * commutator(ad, nab))).relabel("dbar_L");
}

Op partial_j_op(const HermitianConnection& conn) {
  const Op jb = bar_j_op();
  const Op jb_inv = jb.adjoint().relabel("barJ^-1");
  return (jb * partial_op(conn, induced(1, 0, 0)) * jb_inv).relabel("partial_j");
}

Op delta_op(const HermitianConnection& conn) {
  return (cplx(0.5) * (partial_op(conn, induced(1, 0, 0)) + kI * partial_j_op(conn))).relabel("delta");
}

Op delta_bar_op(const HermitianConnection& conn) {
  return (cplx(0.5) * (partial_op(conn, induced(1, 0, 0)) - kI * partial_j_op(conn))).relabel("delta_bar");
}

Op lefschetz_op(const InducedStructure& L) { return fiber_op(lefschetz_L(L)); }
Op lambda_op(const InducedStructure& L) { return fiber_op(lambda_L(L)); }
Op lc_op() { return fiber_op(lefschetz_c(make_frame(1))); }
Op lambda_c_op() { return fiber_op(lambda_c(make_frame(1))); }

Op dc_op(const HermitianConnection& conn, const InducedStructure& L) {
  const Op act = form_action_op(L.L);
  return (act.adjoint() * nabla_op(conn) * act).relabel("d_c");
}

std::string kind_name(const OperatorKind& kind) {
  static const char* names[] = {"nabla", "partial", "dbar", "partial_j", "delta", "delta_bar",
                                "L_op", "Lambda_op", "L_c", "Lambda_c", "d_c"};
  std::string s = names[static_cast<int>(kind.tag)];
  if (kind.adjoint) s += "^*";
  return s;
}

Op make_operator(const OperatorKind& kind, const HermitianConnection& conn) {
  auto need_L = [&]() -> const InducedStructure& {
    if (!kind.L) throw Error(ErrorKind::ShapeMismatch, kind_name(kind) + " needs an induced structure");
    return *kind.L;
  };
  std::optional<Op> op;
  switch (kind.tag) {
    case OpTag::nabla: op = nabla_op(conn); break;
    case OpTag::partial: op = partial_op(conn, need_L()); break;
    case OpTag::dbar: op = dbar_op(conn, need_L()); break;
    case OpTag::partial_j: op = partial_j_op(conn); break;
    case OpTag::delta: op = delta_op(conn); break;
    case OpTag::delta_bar: op = delta_bar_op(conn); break;
    case OpTag::L_op: op = lefschetz_op(need_L()); break;
    case OpTag::Lambda_op: op = lambda_op(need_L()); break;
    case OpTag::L_c: op = lc_op(); break;
    case OpTag::Lambda_c: op = lambda_c_op(); break;
    case OpTag::d_c: op = dc_op(conn, need_L()); break;
  }
  return kind.adjoint ? op->adjoint() : *op;
}

MatrixForm apply(const OperatorKind& kind, const HermitianConnection& conn, const MatrixForm& a) {
  return make_operator(kind, conn)(a);
}

double newlander_test(const HermitianConnection& conn, const InducedStructure& L, double eps) {
  return newlander_residual(conn.curvature(), L, eps);
}

double newlander_residual(const MatrixForm& theta, const InducedStructure& L, double eps) {
  if (theta.degree() != 2) throw Error(ErrorKind::ShapeMismatch, "curvature must be a 2-form");
  const ExteriorOperator off = type_projector(L, 2, 0) + type_projector(L, 0, 2);
  return l2_norm(apply_fiber(off, theta)) / std::max(l2_norm(theta), eps);
}

}  // namespace hkt
