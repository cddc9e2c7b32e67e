#pragma once

#include <array>
#include <map>
#include <random>
#include <string>

#include "hkt/quaternion_frame.hpp"
#include "json.hpp"

namespace hkt {

using Freq = std::array<int, 4>;

inline Freq operator+(const Freq& a, const Freq& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]}; }
inline Freq operator-(const Freq& a, const Freq& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]}; }
inline Freq operator-(const Freq& a) { return {-a[0], -a[1], -a[2], -a[3]}; }
int norm_inf(const Freq& k);

// Coefficients at one frequency: one row per degree-p monomial, each row a
// row-major r x r matrix.
using Block = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// End(B)-valued p-form on T^4 = R^4 / (2 pi Z)^4 with finitely many Fourier
// modes e^{i k.x}, |k|_inf <= cutoff. Volume is normalised to 1.
// Degrees outside 0..4 are allowed and denote the zero space; operators
// that leave the exterior algebra return such forms.
class MatrixForm {
 public:
  MatrixForm() = default;
  MatrixForm(int rank, int degree, int cutoff);

  int rank() const { return rank_; }
  int degree() const { return degree_; }
  int cutoff() const { return cutoff_; }
  int ncomp() const;
  bool empty() const { return modes_.empty(); }

  const std::map<Freq, Block>& modes() const { return modes_; }
  // Mutable block at k (zero-initialised); throws BandwidthOverflow past the cutoff.
  Block& mode(const Freq& k);
  const Block* find(const Freq& k) const;

  CMat coefficient(int comp, const Freq& k) const;
  void set_coefficient(int comp, const Freq& k, const CMat& m);
  void add_coefficient(int comp, const Freq& k, const CMat& m);

  int bandwidth() const;
  double max_abs() const;
  // Drops whole frequency blocks below rel * (largest coefficient).
  MatrixForm& prune(double rel = 1e-14);

  MatrixForm& operator+=(const MatrixForm& o);
  MatrixForm& operator-=(const MatrixForm& o);
  MatrixForm& operator*=(cplx s);
  MatrixForm with_cutoff(int cutoff) const;

  bool same_shape(const MatrixForm& o) const {
    return rank_ == o.rank_ && degree_ == o.degree_ && cutoff_ == o.cutoff_;
  }

 private:
  int rank_ = 1;
  int degree_ = 0;
  int cutoff_ = 0;
  std::map<Freq, Block> modes_;
};

MatrixForm operator+(MatrixForm a, const MatrixForm& b);
MatrixForm operator-(MatrixForm a, const MatrixForm& b);
MatrixForm operator*(cplx s, MatrixForm a);
MatrixForm operator-(MatrixForm a);

// Graded wedge with matrix multiplication of coefficients (exact convolution).
MatrixForm wedge(const MatrixForm& a, const MatrixForm& b, bool allow_truncation = false);
// Flat exterior derivative.
MatrixForm d(const MatrixForm& a);
MatrixForm d_adjoint(const MatrixForm& a);

cplx l2_inner(const MatrixForm& a, const MatrixForm& b);
double l2_norm(const MatrixForm& a);

// F ^ a and a ^ F with truncation to a's cutoff, plus their exact adjoints.
MatrixForm mul_left(const MatrixForm& f, const MatrixForm& a, bool allow_truncation);
MatrixForm mul_left_adjoint(const MatrixForm& f, const MatrixForm& b);
MatrixForm mul_right(const MatrixForm& a, const MatrixForm& f, bool allow_truncation);
MatrixForm mul_right_adjoint(const MatrixForm& f, const MatrixForm& b);

// Pointwise action of a constant fiber operator on the form part.
MatrixForm apply_fiber(const ExteriorOperator& op, const MatrixForm& a);
// Pointwise matrix multiplication of every coefficient by a constant endomorphism.
MatrixForm left_multiply(const CMat& x, const MatrixForm& a);

// Real structure of End(B)-valued forms: coefficient at k -> -(coefficient at -k)^dagger.
MatrixForm real_T(const MatrixForm& a);
// Extension of real_T to p-forms, equal to p * real_T (see README).
MatrixForm tilde_T(const MatrixForm& a);
// J composed with the real structure, on (p,0)-forms for I.
MatrixForm bar_J(const MatrixForm& a);
MatrixForm bar_J_inverse(const MatrixForm& a);
// Residual of the (p,0) condition relative to the norm of a.
double type_p0_defect(const MatrixForm& a);

// Trace over the End(B) factor, as a rank-1 form.
MatrixForm trace_part(const MatrixForm& a);
// Scalar form times the identity endomorphism of the given rank.
MatrixForm times_identity(const MatrixForm& scalar, int rank);

// Seeded complex-Gaussian coefficients on the box |k|_inf <= bandwidth.
MatrixForm random_form(int rank, int degree, int cutoff, int bandwidth, double amplitude, std::mt19937_64& rng);
// Same, restricted to modes with k_2 = k_4 = 0.
MatrixForm random_form_plane(int rank, int degree, int cutoff, int bandwidth, double amplitude, std::mt19937_64& rng);
MatrixForm constant_form(int rank, int degree, int cutoff, const std::vector<CMat>& comps);

nlohmann::json to_json(const MatrixForm& a);
MatrixForm matrix_form_from_json(const nlohmann::json& j);

}  // namespace hkt
