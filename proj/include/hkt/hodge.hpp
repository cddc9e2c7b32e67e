#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hkt/connections.hpp"

namespace hkt {

enum class LaplacianKind { partial, dbar, d, d_c, partial_j, delta, delta_bar };

std::string laplacian_kind_name(LaplacianKind kind);

// Forms of one degree, optionally of one (p,q) type for an induced structure.
struct FormDomain {
  int degree = 0;
  std::optional<std::pair<int, int>> type;
  InducedStructure L = induced(1, 0, 0);

  static FormDomain all(int degree);
  static FormDomain of_type(int p, int q, const InducedStructure& L = induced(1, 0, 0));
  // Identity on the degree, or the type projector.
  ExteriorOperator projector() const;
  std::string name() const;
};

// A Laplacian a a^* + a^* a compressed to a domain: x -> P Delta P x.
class Laplacian {
 public:
  Laplacian(LaplacianKind kind, HermitianConnection conn, FormDomain domain,
            InducedStructure L = induced(1, 0, 0));

  LaplacianKind kind() const { return kind_; }
  const HermitianConnection& connection() const { return conn_; }
  const FormDomain& domain() const { return domain_; }
  const InducedStructure& structure() const { return L_; }
  const ExteriorOperator& projector() const { return proj_; }
  std::string name() const;

  MatrixForm apply(const MatrixForm& x) const;
  // Relative size of the part of x outside the domain.
  double domain_defect(const MatrixForm& x) const;

 private:
  LaplacianKind kind_;
  HermitianConnection conn_;
  FormDomain domain_;
  InducedStructure L_;
  ExteriorOperator proj_;
  std::optional<Op> op_;
};

Laplacian laplacian(LaplacianKind kind, const HermitianConnection& conn, const FormDomain& domain,
                    const InducedStructure& L = induced(1, 0, 0));

struct HarmonicBasis {
  std::string laplacian;
  FormDomain domain;
  std::vector<MatrixForm> forms;  // orthonormal
  double threshold = 0.0;         // eigenvalues at or below count as kernel
  double scale = 0.0;             // largest eigenvalue estimate

  int dimension() const { return static_cast<int>(forms.size()); }
  MatrixForm project(const MatrixForm& x) const;
};

struct GreenResult {
  MatrixForm solution;
  double projected_norm = 0.0;  // norm of the kernel part removed from the right-hand side
  int iterations = 0;           // CG iterations, refinement steps for dense solves
  std::string method;           // "blockwise", "dense" or "cg"
};

// Solver limits.
inline constexpr int kDenseLimit = 5000;
inline constexpr double kHarmonicRel = 1e-8;
inline constexpr double kCgRelTol = 1e-12;

// Eigen-decomposition of a Laplacian. Constant connections are translation
// invariant, so each frequency block is diagonalised separately; otherwise the
// whole space is materialised (dense) or handled by conjugate gradients.
class SpectralSolver {
 public:
  explicit SpectralSolver(Laplacian lap);

  const Laplacian& laplacian() const { return lap_; }
  bool translation_invariant() const { return ti_; }
  // Size of the materialised coordinate space.
  long dimension() const { return dim_; }
  double scale() const { return scale_; }
  double threshold() const { return kHarmonicRel * scale_; }
  // Self-adjointness defect of the assembled blocks (relative).
  double hermitian_defect() const { return herm_defect_; }

  // Throws SolverBudgetExceeded when the space is too large to diagonalise.
  const HarmonicBasis& harmonic_basis() const;
  MatrixForm project_harmonic(const MatrixForm& x) const;
  GreenResult solve(const MatrixForm& tau) const;
  MatrixForm green(const MatrixForm& tau) const { return solve(tau).solution; }
  // Eigenvalues of the block at frequency k (translation-invariant mode only).
  std::vector<double> eigenvalues_at(const Freq& k) const;

 private:
  struct Impl;
  Laplacian lap_;
  bool ti_ = false;
  long dim_ = 0;
  double scale_ = 0.0;
  double herm_defect_ = 0.0;
  std::shared_ptr<const Impl> impl_;
  std::shared_ptr<HarmonicBasis> basis_;
};

HarmonicBasis harmonic_basis(const Laplacian& lap);
MatrixForm green(const Laplacian& lap, const MatrixForm& tau);

// Gamma = partial^* G for Delta_partial on (p,0)-forms of tau's degree.
MatrixForm gamma(const HermitianConnection& conn, const MatrixForm& tau);
MatrixForm gamma(const SpectralSolver& solver, const MatrixForm& tau);
SpectralSolver gamma_solver(const HermitianConnection& conn, int degree);

// Identity suite.
struct IdentityCheck {
  std::string name;
  double residual = 0.0;  // max relative residual over the samples
  int samples = 0;
  std::string hypothesis;  // "none", "integrable", "hyperholomorphic"
  bool hypothesis_ok = true;
  double tolerance = 1e-10;
  bool passed() const { return hypothesis_ok && residual <= tolerance; }
};

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  bool all_passed() const;
  nlohmann::json to_json() const;
};

struct IdentitySuiteOptions {
  std::vector<std::string> checks;  // empty: all
  double tolerance = 1e-10;
  double hypothesis_tolerance = 1e-10;
  // Report unmet hypotheses in the check entries instead of throwing.
  bool record_violations = false;
};

// Names, in catalog order.
const std::vector<std::string>& identity_check_names();

// Throws HypothesisViolated when a requested check's hypothesis fails, unless
// options.record_violations is set.
IdentityReport identity_suite(const HermitianConnection& conn, const std::vector<InducedStructure>& Ls,
                              int samples, std::uint64_t seed, const IdentitySuiteOptions& options = {});

// ||R Delta_{partial_I} R^{-1} a - Delta_{partial_{I^L}} a|| relative, R the
// multiplicative action of L.
double conjugation_residual(const HermitianConnection& conn, const InducedStructure& L, const MatrixForm& a);
InducedStructure conjugated_structure(const InducedStructure& I, const InducedStructure& L);

struct TransportCheck {
  int degree = 0;
  int source_dimension = 0;
  int target_dimension = 0;
  double projection_residual = 0.0;  // max over the mapped basis
  bool ok(double tol = 1e-9) const {
    return source_dimension == target_dimension && projection_residual <= tol;
  }
};

// Maps the Delta_{partial_I} harmonic (p,0)_I basis by L and compares with the
// Delta_{partial_{I^L}} harmonic (p,0)_{I^L} space.
TransportCheck harmonic_transport(const HermitianConnection& conn, const InducedStructure& L, int p);

// partial partial_j lemma: kappa with partial partial_j kappa = omega.
struct DdjResult {
  MatrixForm kappa;
  double residual = 0.0;  // ||partial partial_j kappa - omega|| / ||omega||
  int sign = 1;           // sign of the composite used
};
DdjResult ddj_solve(const HermitianConnection& conn, const MatrixForm& omega);
// Sign fixed from a manufactured solution on first use.
int ddj_sign();

// sl(2) on harmonic (i,0)-forms, i = 0..2.
struct Sl2Action {
  std::vector<int> dims;
  std::vector<CMat> Lc;        // Lc[i]: H^i -> H^{i+2}
  std::vector<CMat> Lambda_c;  // Lambda_c[i]: H^i -> H^{i-2}
  std::vector<CMat> H;         // H = (Lambda_c Lc - Lc Lambda_c) / 2 on H^i
  std::vector<std::vector<double>> weights;  // eigenvalues of H[i]
  std::vector<std::vector<double>> bracket_weights;  // eigenvalues of [Lc, Lambda_c] on H^i
  double harmonicity_residual = 0.0;  // Lc, Lambda_c images outside the harmonic spaces
  double scalar_defect = 0.0;          // max ||H[i] - (2 - 2i) Id||
  double lc_min_singular = 0.0;        // smallest singular value of Lc: H^0 -> H^2
  bool lc_injective_low = true;        // Lc injective on H^i for i <= 1
};
Sl2Action sl2_action(const HermitianConnection& conn);

// Real matrices of I, barJ, barK on the realified harmonic (p,0) space.
struct QuaternionAction {
  int complex_dimension = 0;
  RMat I, J, K;
  double invariance_residual = 0.0;  // images outside the harmonic space
  double relation_residual = 0.0;    // I^2 = J^2 = K^2 = -1, IJ = -JI = K
  double group_residual = 0.0;       // unit quaternion combinations are orthogonal
};
QuaternionAction su2_on_cohomology(const HermitianConnection& conn, const HarmonicBasis& basis,
                                   std::uint64_t seed = 7, int group_samples = 16);
// Realified coordinates: basis {h_a, i h_a}, real inner product Re<.,.>.
RMat real_matrix(const HarmonicBasis& basis, const std::function<MatrixForm(const MatrixForm&)>& f,
                 double* outside = nullptr);

struct PqTable {
  // rows[n] maps a type label, e.g. "(1,0)", to the complex dimension of its
  // piece in H^n tensored with C over R.
  std::vector<std::map<std::string, int>> rows;
  std::vector<int> totals;  // real dimension of H^n
  bool consistent() const;
  std::string to_csv() const;
};
PqTable pq_cohomology(const HermitianConnection& conn);

// Throws HypothesisViolated unless the curvature is (1,1) for I, J and K.
void require_hyperholomorphic(const HermitianConnection& conn, double tol = 1e-10);

}  // namespace hkt
