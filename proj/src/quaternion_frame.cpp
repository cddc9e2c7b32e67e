#include "hkt/quaternion_frame.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>

#include "hkt/errors.hpp"

namespace hkt {

namespace {

// Sign convention for the Kahler forms, omega_L(u, v) = s <L u, v>. The value
// is fixed by the Kodaira identity [Lambda, d'] = i dbar^* on the test suite.
constexpr double kKahlerSign = -1.0;

std::vector<int> elements(std::uint32_t m) {
  std::vector<int> out;
  for (int i = 0; m; ++i, m >>= 1)
    if (m & 1u) out.push_back(i);
  return out;
}

bool lex_less(std::uint32_t a, std::uint32_t b) {
  auto ea = elements(a), eb = elements(b);
  return ea < eb;
}

}  // namespace

ExteriorAlgebra::ExteriorAlgebra(int dim) : dim_(dim) {
  masks_.assign(dim + 1, {});
  index_.assign(1u << dim, -1);
  for (std::uint32_t m = 0; m < (1u << dim); ++m) masks_[std::popcount(m)].push_back(m);
  for (auto& v : masks_) {
    std::sort(v.begin(), v.end(), lex_less);
    for (int i = 0; i < static_cast<int>(v.size()); ++i) index_[v[i]] = i;
  }
  wedge_.assign(dim, std::vector<RMat>(dim + 1));
  for (int mu = 0; mu < dim; ++mu) {
    for (int p = 0; p <= dim; ++p) {
      int q = std::min(p + 1, dim);
      RMat e = RMat::Zero(p < dim ? size(p + 1) : 0, size(p));
      if (p < dim) {
        for (int s = 0; s < size(p); ++s) {
          std::uint32_t m = masks_[p][s];
          int sg = wedge_sign(1u << mu, m);
          if (sg != 0) e(index_[m | (1u << mu)], s) = sg;
        }
      }
      (void)q;
      wedge_[mu][p] = e;
    }
  }
}

int ExteriorAlgebra::size(int p) const {
  if (p < 0 || p > dim_) return 0;
  return static_cast<int>(masks_[p].size());
}

int ExteriorAlgebra::wedge_sign(std::uint32_t a, std::uint32_t b) {
  if (a & b) return 0;
  // count pairs (x in a, y in b) with x > y
  int inversions = 0;
  for (std::uint32_t bb = b; bb; bb &= bb - 1) {
    int y = std::countr_zero(bb);
    inversions += std::popcount(a >> (y + 1));
  }
  return (inversions & 1) ? -1 : 1;
}

RMat ExteriorAlgebra::derivation(const RMat& m, int p) const {
  RMat out = RMat::Zero(size(p), size(p));
  if (p == 0) return out;
  for (int mu = 0; mu < dim_; ++mu)
    for (int nu = 0; nu < dim_; ++nu)
      if (m(nu, mu) != 0.0) out += m(nu, mu) * wedge_[nu][p - 1] * interior(mu, p);
  return out;
}

CMat ExteriorAlgebra::derivation(const CMat& m, int p) const {
  CMat out = CMat::Zero(size(p), size(p));
  if (p == 0) return out;
  for (int mu = 0; mu < dim_; ++mu)
    for (int nu = 0; nu < dim_; ++nu)
      if (m(nu, mu) != 0.0)
        out += m(nu, mu) * (wedge_[nu][p - 1] * interior(mu, p)).cast<cplx>();
  return out;
}

RMat ExteriorAlgebra::multiplicative(const RMat& m, int p) const {
  const int n = size(p);
  RMat out = RMat::Zero(n, n);
  if (p == 0) {
    out(0, 0) = 1.0;
    return out;
  }
  for (int s = 0; s < n; ++s) {
    auto cols = elements(masks_[p][s]);
    for (int t = 0; t < n; ++t) {
      auto rows = elements(masks_[p][t]);
      RMat sub(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sub(i, j) = m(rows[i], cols[j]);
      out(t, s) = sub.determinant();
    }
  }
  return out;
}

CMat ExteriorAlgebra::wedge_with(const CVec& phi, int q, int p) const {
  const int rows = size(p + q), cols = size(p);
  CMat out = CMat::Zero(rows, cols);
  if (rows == 0) return out;
  for (int u = 0; u < size(q); ++u) {
    if (phi(u) == cplx(0.0)) continue;
    std::uint32_t mu = masks_[q][u];
    for (int s = 0; s < cols; ++s) {
      std::uint32_t ms = masks_[p][s];
      int sg = wedge_sign(mu, ms);
      if (sg != 0) out(index_[mu | ms], s) += static_cast<double>(sg) * phi(u);
    }
  }
  return out;
}

CVec ExteriorAlgebra::wedge(const CVec& a, int p, const CVec& b, int q) const {
  return wedge_with(a, p, q) * b;
}

RMat ExteriorAlgebra::hodge_star(int p) const {
  const int n = size(p);
  RMat out = RMat::Zero(size(dim_ - p), n);
  const std::uint32_t full = (1u << dim_) - 1u;
  for (int s = 0; s < n; ++s) {
    std::uint32_t m = masks_[p][s];
    std::uint32_t c = full & ~m;
    // dx_S ^ *dx_S = vol, so *dx_S = sign(S, S^c) dx_{S^c}
    out(index_[c], s) = wedge_sign(m, c);
  }
  return out;
}

const ExteriorAlgebra& exterior(int dim) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<ExteriorAlgebra>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[dim];
  if (!slot) slot = std::make_unique<ExteriorAlgebra>(dim);
  return *slot;
}

QuaternionFrame make_frame(int quaternionic_dim) {
  QuaternionFrame f;
  f.n = quaternionic_dim;
  const int d = 4 * quaternionic_dim;
  f.I = RMat::Zero(d, d);
  f.J = RMat::Zero(d, d);
  f.K = RMat::Zero(d, d);
  // columns are the images of the basis vectors 1, i, j, k
  const int Ic[4][4] = {{0, 1, 0, 0}, {-1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, -1, 0}};
  const int Jc[4][4] = {{0, 0, 1, 0}, {0, 0, 0, -1}, {-1, 0, 0, 0}, {0, 1, 0, 0}};
  const int Kc[4][4] = {{0, 0, 0, 1}, {0, 0, 1, 0}, {0, -1, 0, 0}, {-1, 0, 0, 0}};
  for (int blk = 0; blk < quaternionic_dim; ++blk) {
    const int o = 4 * blk;
    for (int col = 0; col < 4; ++col)
      for (int row = 0; row < 4; ++row) {
        f.I(o + row, o + col) = Ic[col][row];
        f.J(o + row, o + col) = Jc[col][row];
        f.K(o + row, o + col) = Kc[col][row];
      }
  }
  return f;
}

InducedStructure induced(const QuaternionFrame& frame, double a, double b, double c) {
  const double n2 = a * a + b * b + c * c;
  if (std::abs(n2 - 1.0) > 1e-9)
    throw Error(ErrorKind::NotUnitTriple, "a^2+b^2+c^2 = " + std::to_string(n2));
  InducedStructure s;
  s.a = a;
  s.b = b;
  s.c = c;
  s.L = a * frame.I + b * frame.J + c * frame.K;
  return s;
}

InducedStructure induced(double a, double b, double c) { return induced(make_frame(1), a, b, c); }

ExteriorOperator::ExteriorOperator(std::string label, int dim, int shift)
    : label_(std::move(label)), dim_(dim), shift_(shift), blocks_(dim + 1) {
  const auto& ext = exterior(dim);
  for (int p = 0; p <= dim; ++p) blocks_[p] = CMat::Zero(ext.size(p + shift), ext.size(p));
}

bool ExteriorOperator::defined_on(int p) const {
  return p >= 0 && p <= dim_ && p + shift_ >= 0 && p + shift_ <= dim_;
}

ExteriorOperator ExteriorOperator::adjoint() const {
  ExteriorOperator out(label_ + "^*", dim_, -shift_);
  for (int p = 0; p <= dim_; ++p)
    if (defined_on(p)) out.blocks_[p + shift_] = blocks_[p].adjoint();
  return out;
}

ExteriorOperator ExteriorOperator::operator*(const ExteriorOperator& rhs) const {
  ExteriorOperator out(label_ + "*" + rhs.label_, dim_, shift_ + rhs.shift_);
  for (int p = 0; p <= dim_; ++p)
    if (rhs.defined_on(p) && defined_on(p + rhs.shift_))
      out.blocks_[p] = blocks_[p + rhs.shift_] * rhs.blocks_[p];
  return out;
}

ExteriorOperator ExteriorOperator::operator+(const ExteriorOperator& rhs) const {
  ExteriorOperator out = *this;
  out.label_ = label_ + "+" + rhs.label_;
  for (int p = 0; p <= dim_; ++p) out.blocks_[p] += rhs.blocks_[p];
  return out;
}

ExteriorOperator ExteriorOperator::operator-(const ExteriorOperator& rhs) const {
  ExteriorOperator out = *this;
  out.label_ = label_ + "-" + rhs.label_;
  for (int p = 0; p <= dim_; ++p) out.blocks_[p] -= rhs.blocks_[p];
  return out;
}

ExteriorOperator ExteriorOperator::scaled(cplx s) const {
  ExteriorOperator out = *this;
  for (auto& b : out.blocks_) b *= s;
  return out;
}

ExteriorOperator ExteriorOperator::with_label(std::string label) const {
  ExteriorOperator out = *this;
  out.label_ = std::move(label);
  return out;
}

ExteriorOperator identity_operator(int dim) {
  ExteriorOperator out("Id", dim, 0);
  for (int p = 0; p <= dim; ++p) out.block(p) = CMat::Identity(out.block(p).rows(), out.block(p).cols());
  return out;
}

ExteriorOperator ad_operator(const InducedStructure& L) {
  const int d = L.dim();
  const auto& ext = exterior(d);
  ExteriorOperator out("ad L", d, 0);
  for (int p = 0; p <= d; ++p) out.block(p) = ext.derivation(L.L, p).cast<cplx>();
  return out;
}

ExteriorOperator multiplicative_action(const RMat& m) {
  const int d = static_cast<int>(m.rows());
  const auto& ext = exterior(d);
  ExteriorOperator out("mult", d, 0);
  for (int p = 0; p <= d; ++p) out.block(p) = ext.multiplicative(m, p).cast<cplx>();
  return out;
}

ExteriorOperator type_projector(const InducedStructure& L, int p, int q) {
  const int d = L.dim();
  const int half = d / 2;
  const int deg = p + q;
  ExteriorOperator out("Pi^{" + std::to_string(p) + "," + std::to_string(q) + "}", d, 0);
  if (p < 0 || q < 0 || p > half || q > half || deg > d) return out;
  const auto& ext = exterior(d);
  const CMat ad = ext.derivation(L.L, deg).cast<cplx>();
  const int n = ext.size(deg);
  CMat proj = CMat::Identity(n, n);
  for (int s = std::max(0, deg - half); s <= std::min(deg, half); ++s) {
    const int t = deg - s;
    if (s == p) continue;
    const cplx target = kI * static_cast<double>(p - q);
    const cplx other = kI * static_cast<double>(s - t);
    proj = proj * (ad - other * CMat::Identity(n, n)) / (target - other);
  }
  out.block(deg) = proj;
  return out;
}

ExteriorOperator lefschetz(const CVec& two_form, int dim, const std::string& label) {
  const auto& ext = exterior(dim);
  ExteriorOperator out(label, dim, 2);
  for (int p = 0; p + 2 <= dim; ++p) out.block(p) = ext.wedge_with(two_form, 2, p);
  return out;
}

ExteriorOperator contraction(const CVec& two_form, int dim, const std::string& label) {
  return lefschetz(two_form, dim, label).adjoint().with_label(label);
}

CVec kahler_form(const InducedStructure& L) {
  const int d = L.dim();
  const auto& ext = exterior(d);
  CVec w = CVec::Zero(ext.size(2));
  for (int s = 0; s < ext.size(2); ++s) {
    std::uint32_t m = ext.mask(2, s);
    int a = std::countr_zero(m);
    int b = std::countr_zero(m & (m - 1));
    // <L e_a, e_b> = L(b, a)
    w(s) = kKahlerSign * L.L(b, a);
  }
  return w;
}

CVec holomorphic_symplectic_form(const QuaternionFrame& frame) {
  // With the left-multiplication coframe convention the (2,0) combination for
  // I is omega_J - i omega_K.
  const CVec wj = kahler_form(induced(frame, 0, 1, 0));
  const CVec wk = kahler_form(induced(frame, 0, 0, 1));
  return wj - kI * wk;
}

ExteriorOperator lefschetz_L(const InducedStructure& L) {
  return lefschetz(kahler_form(L), L.dim(), "L_L");
}

ExteriorOperator lambda_L(const InducedStructure& L) {
  return contraction(kahler_form(L), L.dim(), "Lambda_L");
}

ExteriorOperator lefschetz_c(const QuaternionFrame& frame) {
  return lefschetz(holomorphic_symplectic_form(frame), frame.dim(), "L_c");
}

ExteriorOperator lambda_c(const QuaternionFrame& frame) {
  return contraction(holomorphic_symplectic_form(frame), frame.dim(), "Lambda_c");
}

RMat unit_quaternion_matrix(const QuaternionFrame& frame, double d, double a, double b, double c) {
  const int n = frame.dim();
  return d * RMat::Identity(n, n) + a * frame.I + b * frame.J + c * frame.K;
}

RMat su2_invariant_projector(const QuaternionFrame& frame, std::uint64_t seed) {
  const auto& ext = exterior(frame.dim());
  std::vector<std::array<double, 4>> group;
  // binary tetrahedral group: +-1, +-i, +-j, +-k and (+-1 +-i +-j +-k)/2
  for (int axis = 0; axis < 4; ++axis)
    for (int sgn : {1, -1}) {
      std::array<double, 4> q{0, 0, 0, 0};
      q[axis] = sgn;
      group.push_back(q);
    }
  for (int bits = 0; bits < 16; ++bits) {
    std::array<double, 4> q;
    for (int i = 0; i < 4; ++i) q[i] = ((bits >> i) & 1) ? -0.5 : 0.5;
    group.push_back(q);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::array<double, 4> q;
    double nrm = 0;
    for (auto& x : q) {
      x = gauss(rng);
      nrm += x * x;
    }
    nrm = std::sqrt(nrm);
    for (auto& x : q) x /= nrm;
    group.push_back(q);
  }
  const int n = ext.size(2);
  RMat avg = RMat::Zero(n, n);
  for (const auto& q : group)
    avg += ext.multiplicative(unit_quaternion_matrix(frame, q[0], q[1], q[2], q[3]), 2);
  avg /= static_cast<double>(group.size());
  // Fixed vectors have eigenvalue 1; the group average pushes everything
  // else to modulus at most 100/124.
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (avg + avg.transpose()));
  RMat proj = RMat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    if (es.eigenvalues()(i) > 0.9) proj += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
  return proj;
}

InducedStructure induced_from_matrix(const QuaternionFrame& frame, const RMat& m) {
  const double n = frame.dim();
  // <X, Y> = tr(X^T Y) / dim makes I, J, K orthonormal
  const double a = (frame.I.transpose() * m).trace() / n;
  const double b = (frame.J.transpose() * m).trace() / n;
  const double c = (frame.K.transpose() * m).trace() / n;
  const double nrm = std::sqrt(a * a + b * b + c * c);
  return induced(frame, a / nrm, b / nrm, c / nrm);
}

InducedStructure rotation_between(const InducedStructure& L, const InducedStructure& L2) {
  const Eigen::Vector3d u(L.a, L.b, L.c), v(L2.a, L2.b, L2.c);
  const auto frame = make_frame(L.dim() / 4);
  if ((u - v).norm() <= 1e-12) return L;
  if ((u + v).norm() <= 1e-12) {
    Eigen::Vector3d w;
    if (std::abs(1.0 - u(0) * u(0)) <= 1e-12) {
      // L = +-I: every orthogonal unit vector has a = 0; minimise b next.
      w = Eigen::Vector3d(0.0, -1.0, 0.0);
    } else {
      w = -Eigen::Vector3d::UnitX() + u(0) * u;
      w.normalize();
    }
    for (int i = 0; i < 3; ++i)
      if (std::abs(w(i)) < 1e-12) w(i) = 0.0;
    w.normalize();
    return induced(frame, w(0), w(1), w(2));
  }
  Eigen::Vector3d r = (u + v).normalized();
  return induced(frame, r(0), r(1), r(2));
}

}  // namespace hkt
