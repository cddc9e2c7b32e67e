#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "hkt/quaternion_frame.hpp"
#include "hkt/spectral_fields.hpp"

namespace hkt {

// Connection d + A on the trivial rank-r bundle over T^4. A is a degree-1
// form with skew-Hermitian coefficients (real_T(A) = A).
class HermitianConnection {
 public:
  HermitianConnection(MatrixForm potential, bool allow_truncation = false);

  static HermitianConnection zero(int rank, int cutoff);
  // Constant diagonal skew-Hermitian potential: flat, with holonomy.
  static HermitianConnection constant_commuting(int rank, int cutoff, const std::vector<RVec>& phases);
  static HermitianConnection constant_commuting(int rank, int cutoff, std::uint64_t seed);
  // A = X dx1 + Y dx2 with constant skew-Hermitian X, Y.
  static HermitianConnection constant_noncommuting(int rank, int cutoff, const CMat& X, const CMat& Y);
  static HermitianConnection constant_noncommuting(int rank, int cutoff);
  static HermitianConnection seeded_random(int rank, int cutoff, int bandwidth, double amplitude,
                                           std::uint64_t seed, bool allow_truncation = false);

  int rank() const { return potential_.rank(); }
  int cutoff() const { return potential_.cutoff(); }
  const MatrixForm& potential() const { return potential_; }
  bool allow_truncation() const { return allow_truncation_; }
  // Theta = dA + A ^ A. Throws BandwidthOverflow unless band-safe or truncation is allowed.
  const MatrixForm& curvature() const;
  double bianchi_residual() const;

  HermitianConnection with_truncation(bool allow) const;

 private:
  MatrixForm potential_;
  bool allow_truncation_ = false;
  std::optional<MatrixForm> curvature_;
};

MatrixForm curvature(const HermitianConnection& conn);

nlohmann::json to_json(const HermitianConnection& conn);
HermitianConnection connection_from_json(const nlohmann::json& j, bool allow_truncation = false);

// Linear operator on MatrixForm together with its exact adjoint for l2_inner.
// Antiunitary factors (bar_J) may appear inside as long as the composite is
// linear; their "adjoint" slot holds the inverse.
class Op {
 public:
  using Fn = std::function<MatrixForm(const MatrixForm&)>;

  Op(std::string label, int shift, Fn fwd, Fn adj)
      : label_(std::move(label)),
        shift_(shift),
        fwd_(std::make_shared<const Fn>(std::move(fwd))),
        adj_(std::make_shared<const Fn>(std::move(adj))) {}

  const std::string& label() const { return label_; }
  int shift() const { return shift_; }
  MatrixForm operator()(const MatrixForm& a) const { return (*fwd_)(a); }
  MatrixForm apply_adjoint(const MatrixForm& b) const { return (*adj_)(b); }
  Op adjoint() const { return Op(label_ + "^*", -shift_, adj_, fwd_); }
  Op relabel(std::string label) const { return Op(std::move(label), shift_, fwd_, adj_); }

 private:
  // Closures are shared so that composites copy in O(1); nested operators
  // would otherwise be duplicated in both directions at every level.
  Op(std::string label, int shift, std::shared_ptr<const Fn> fwd, std::shared_ptr<const Fn> adj)
      : label_(std::move(label)), shift_(shift), fwd_(std::move(fwd)), adj_(std::move(adj)) {}

  std::string label_;
  int shift_;
  std::shared_ptr<const Fn> fwd_, adj_;
};

// a after b
Op operator*(const Op& a, const Op& b);
Op operator+(const Op& a, const Op& b);
Op operator-(const Op& a, const Op& b);
Op operator*(cplx s, const Op& a);
Op commutator(const Op& a, const Op& b);
Op anticommutator(const Op& a, const Op& b);
// a a^* + a^* a
Op laplacian_of(const Op& a);

// Building blocks.
Op nabla_op(const HermitianConnection& conn);
Op fiber_op(const ExteriorOperator& op);
// alpha -> Theta ^ alpha - alpha ^ Theta
Op curvature_action_op(const HermitianConnection& conn);
Op bar_j_op();

enum class OpTag {
  nabla,
  partial,
  dbar,
  partial_j,
  delta,
  delta_bar,
  L_op,
  Lambda_op,
  L_c,
  Lambda_c,
  d_c,
};

struct OperatorKind {
  OpTag tag = OpTag::nabla;
  bool adjoint = false;
  std::optional<InducedStructure> L;  // for partial, dbar, L_op, Lambda_op, d_c

  static OperatorKind of(OpTag t) { return {t, false, std::nullopt}; }
  static OperatorKind of(OpTag t, const InducedStructure& L) { return {t, false, L}; }
  OperatorKind adj() const { return {tag, !adjoint, L}; }
};

std::string kind_name(const OperatorKind& kind);

Op make_operator(const OperatorKind& kind, const HermitianConnection& conn);
MatrixForm apply(const OperatorKind& kind, const HermitianConnection& conn, const MatrixForm& a);

// Named shorthands.
Op partial_op(const HermitianConnection& conn, const InducedStructure& L);
Op dbar_op(const HermitianConnection& conn, const InducedStructure& L);
Op partial_j_op(const HermitianConnection& conn);
Op delta_op(const HermitianConnection& conn);
Op delta_bar_op(const HermitianConnection& conn);
Op lefschetz_op(const InducedStructure& L);
Op lambda_op(const InducedStructure& L);
Op lc_op();
Op lambda_c_op();
Op dc_op(const HermitianConnection& conn, const InducedStructure& L);
// Multiplicative action of a coframe matrix on forms.
Op form_action_op(const RMat& m);

// ||(Pi^{2,0}_L + Pi^{0,2}_L) Theta|| / max(||Theta||, eps)
double newlander_test(const HermitianConnection& conn, const InducedStructure& L, double eps = 1e-300);
// Same measure for a given curvature form.
double newlander_residual(const MatrixForm& theta, const InducedStructure& L, double eps = 1e-300);

}  // namespace hkt
