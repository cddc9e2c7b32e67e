#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace hkt {

using cplx = std::complex<double>;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

// Exterior algebra of the dual of R^dim in the orthonormal monomial basis
// dx_S, S a sorted subset. Subsets are bitmasks; degree-p monomials are
// ordered lexicographically by their element lists.
class ExteriorAlgebra {
 public:
  explicit ExteriorAlgebra(int dim);

  int dim() const { return dim_; }
  int size(int p) const;
  std::uint32_t mask(int p, int index) const { return masks_[p][index]; }
  int index(std::uint32_t mask) const { return index_[mask]; }

  // Sign of dx_a ^ dx_b relative to dx_{a|b}; 0 when a and b overlap.
  static int wedge_sign(std::uint32_t a, std::uint32_t b);

  // dx_mu ^ . from degree p to degree p+1.
  const RMat& wedge_basis(int mu, int p) const { return wedge_[mu][p]; }
  // Interior product with the dual vector e_mu, degree p to p-1.
  RMat interior(int mu, int p) const { return wedge_[mu][p - 1].transpose(); }

  // Leibniz extension of a coframe endomorphism to degree p.
  RMat derivation(const RMat& m, int p) const;
  CMat derivation(const CMat& m, int p) const;
  // Multiplicative extension: dx_S -> m dx_s1 ^ ... ^ m dx_sp.
  RMat multiplicative(const RMat& m, int p) const;

  // Matrix of phi ^ . from degree p to degree p+q, phi a degree-q vector.
  CMat wedge_with(const CVec& phi, int q, int p) const;
  // Wedge product of two coefficient vectors.
  CVec wedge(const CVec& a, int p, const CVec& b, int q) const;

  // Hodge star for the orientation dx_1 ^ ... ^ dx_dim.
  RMat hodge_star(int p) const;

 private:
  int dim_;
  std::vector<std::vector<std::uint32_t>> masks_;
  std::vector<int> index_;
  std::vector<std::vector<RMat>> wedge_;
};

const ExteriorAlgebra& exterior(int dim);

// I, J, K on the coframe of H^n = R^{4n}; left quaternion multiplication in
// each quaternionic block (x1 + x2 i + x3 j + x4 k).
struct QuaternionFrame {
  int n = 1;
  RMat I, J, K;
  int dim() const { return 4 * n; }
};

QuaternionFrame make_frame(int quaternionic_dim = 1);

struct InducedStructure {
  double a = 1.0, b = 0.0, c = 0.0;
  RMat L;
  int dim() const { return static_cast<int>(L.rows()); }
};

InducedStructure induced(const QuaternionFrame& frame, double a, double b, double c);
InducedStructure induced(double a, double b, double c);

// Degree-indexed family of fiber maps Lambda^p -> Lambda^{p+shift}.
class ExteriorOperator {
 public:
  ExteriorOperator() = default;
  ExteriorOperator(std::string label, int dim, int shift);

  const std::string& label() const { return label_; }
  int dim() const { return dim_; }
  int shift() const { return shift_; }
  // Block for source degree p; zero-sized if the target degree is out of range.
  const CMat& block(int p) const { return blocks_[p]; }
  CMat& block(int p) { return blocks_[p]; }
  bool defined_on(int p) const;

  CVec apply(int p, const CVec& v) const { return blocks_[p] * v; }
  ExteriorOperator adjoint() const;
  ExteriorOperator operator*(const ExteriorOperator& rhs) const;
  ExteriorOperator operator+(const ExteriorOperator& rhs) const;
  ExteriorOperator operator-(const ExteriorOperator& rhs) const;
  ExteriorOperator scaled(cplx s) const;
  ExteriorOperator with_label(std::string label) const;

 private:
  std::string label_;
  int dim_ = 4;
  int shift_ = 0;
  std::vector<CMat> blocks_;
};

ExteriorOperator identity_operator(int dim);
ExteriorOperator ad_operator(const InducedStructure& L);
ExteriorOperator multiplicative_action(const RMat& m);
// Projector onto the (p,q) eigenspace of ad L (eigenvalue (p-q)i) on degree p+q.
ExteriorOperator type_projector(const InducedStructure& L, int p, int q);
// Fiber wedge with a 2-form and its pointwise adjoint.
ExteriorOperator lefschetz(const CVec& two_form, int dim, const std::string& label);
ExteriorOperator contraction(const CVec& two_form, int dim, const std::string& label);

// Kahler form of an induced structure, as a degree-2 coefficient vector.
CVec kahler_form(const InducedStructure& L);
// The (2,0)-form for I built from the J and K Kahler forms.
CVec holomorphic_symplectic_form(const QuaternionFrame& frame);
ExteriorOperator lefschetz_L(const InducedStructure& L);
ExteriorOperator lambda_L(const InducedStructure& L);
// Lc = Omega ^ . and its adjoint.
ExteriorOperator lefschetz_c(const QuaternionFrame& frame);
ExteriorOperator lambda_c(const QuaternionFrame& frame);

// Orthogonal projector on Lambda^2 onto the forms fixed by the isotropy group.
RMat su2_invariant_projector(const QuaternionFrame& frame, std::uint64_t seed = 20240517);

// Unit quaternion d + a i + b j + c k acting on the coframe.
RMat unit_quaternion_matrix(const QuaternionFrame& frame, double d, double a, double b, double c);

// R with R L R^{-1} = L2 (midpoint of the great circle; tie-break at antipodes).
InducedStructure rotation_between(const InducedStructure& L, const InducedStructure& L2);
// Coefficients (a,b,c) of an induced structure from its coframe matrix.
InducedStructure induced_from_matrix(const QuaternionFrame& frame, const RMat& m);

}  // namespace hkt
