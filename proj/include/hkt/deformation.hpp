#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hkt/hodge.hpp"

namespace hkt {

// The (p,0) part (for I) of the End(B)-valued Dolbeault complex of a
// connection, with lazily built Delta_partial solvers for p = 1, 2.
class EndComplex {
 public:
  explicit EndComplex(HermitianConnection conn);

  const HermitianConnection& connection() const { return conn_; }
  const SpectralSolver& solver(int p) const;
  MatrixForm partial(const MatrixForm& a) const;
  // partial^* G on (p,0)-forms.
  MatrixForm gamma(const MatrixForm& tau) const;
  MatrixForm harmonic_part(const MatrixForm& a) const;
  // Largest ||Gamma tau|| / ||tau|| over seeded partial-exact (2,0) probes.
  double gamma_norm(int probes = 32, std::uint64_t seed = 4242) const;

  // Throws WrongType unless a is a (1,0)-form, NotClosed unless
  // ||partial a|| <= tol * max(||a||, 1).
  void require_closed_10(const MatrixForm& a, double tol = 1e-9) const;

 private:
  HermitianConnection conn_;
  mutable std::shared_ptr<SpectralSolver> s1_, s2_;
  mutable std::optional<std::pair<std::uint64_t, double>> gamma_norm_;
};

// rho_hat = rho + real_T(rho).
MatrixForm hat(const MatrixForm& a);

struct YonedaClass {
  MatrixForm representative;  // harmonic (2,0) form
  CVec coefficients;          // in the solver's orthonormal harmonic basis
  double harmonic_residual = 0.0;  // representative minus its expansion
  double symmetric_part_norm = 0.0;  // ||(rho1 ^ rho2 + rho2 ^ rho1) / 2||
};

// Harmonic projection of (rho1 ^ rho2 + rho2 ^ rho1) / 2.
YonedaClass yoneda(const EndComplex& cx, const MatrixForm& rho1, const MatrixForm& rho2);

struct ConeMembership {
  bool in_cone = true;
  double obstruction_norm = 0.0;  // ||iota(rho, rho)||
  double rho_norm = 0.0;
  double tolerance = 1e-9;
};

// in_cone iff ||iota(rho, rho)|| <= tol ||rho||^2.
ConeMembership cone_membership(const EndComplex& cx, const MatrixForm& rho, double tol = 1e-9);

struct KuranishiOptions {
  int max_order = 12;
  double tol = 1e-12;           // stop once ||eta_n|| <= tol ||rho||
  double closed_tol = 1e-9;     // ||partial tau_n|| <= closed_tol ||tau_n||
  double exact_tol = 1e-9;      // ||harmonic part of tau_n|| <= exact_tol ||tau_n||
  bool require_hyperholomorphic = true;
  int gamma_probes = 32;
  std::uint64_t gamma_seed = 4242;
};

struct SeriesTerm {
  int order = 0;
  double norm = 0.0;              // ||eta_n||
  double tau_norm = 0.0;          // ||tau_n||
  double closed_residual = 0.0;   // ||partial tau_n|| / ||tau_n||
  double exact_residual = 0.0;    // ||harmonic part of tau_n|| / ||tau_n||
  double left_inverse_residual = 0.0;  // ||partial Gamma tau_n - tau_n|| / ||tau_n||
  double hat_residual = 0.0;      // ||nabla eta_hat_n + sum eta_hat_i ^ eta_hat_j|| / ||sum||
  double hat_parts[3] = {0, 0, 0};  // its (2,0), (1,1), (0,2) parts, same scale
  double bound = 0.0;             // gammaNorm * sum ||eta_i|| ||eta_j||
};

struct DeformationResidual {
  double equation = 0.0;   // ||nabla eta_hat + (rho_hat + eta_hat)^2||
  double curvature = 0.0;  // ||curvature(nabla + rho_hat + eta_hat) - Theta - nabla rho_hat||
  double difference = 0.0;  // ||difference of the two forms||
  double parts[3] = {0, 0, 0};  // (2,0), (1,1), (0,2) parts of the equation form
};

DeformationResidual deformation_residual(const HermitianConnection& conn, const MatrixForm& rho_hat,
                                         const MatrixForm& eta_hat);

struct DeformationSeries {
  MatrixForm rho;
  std::vector<MatrixForm> terms;  // eta_2, eta_3, ...
  std::vector<SeriesTerm> stats;
  MatrixForm eta;                 // partial sum of the terms
  MatrixForm rho_hat, eta_hat;
  DeformationResidual residual;
  double rho_norm = 0.0;
  double eta_norm = 0.0;
  double gamma_norm = 0.0;
  double radius = 0.0;            // 0.16 / gammaNorm: majorant bound for ||eta|| <= ||rho|| / 4
  bool converged = false;         // a term fell below tol ||rho|| before max_order
  bool truncated = false;         // products in the series or the residual may have left the cutoff
  std::string verdict;            // "converged" or "max-order"
  HermitianConnection deformed = HermitianConnection::zero(1, 0);

  double relative_residual() const;  // residual.equation / ||rho||^2
  nlohmann::json to_json() const;
};

// eta_n = -Gamma(sum_{i+j=n} eta_i ^ eta_j), eta_1 = rho.
// Throws WrongType, NotClosed, HypothesisViolated (background not
// hyperholomorphic), ObstructionNonzero (some tau_n not exact),
// SeriesDiverging (norms grow three orders in a row), BandwidthOverflow
// ((max_order + 1) bandwidth(rho) > cutoff without truncation).
DeformationSeries kuranishi(const EndComplex& cx, const MatrixForm& rho, const KuranishiOptions& opt = {});

struct YangMillsCheck {
  double harmonic_residual = 0.0;  // ||rho - harmonic part|| / ||rho||
  double integrability = 0.0;      // ||(2,0) + (0,2) part of Theta'||
  double lambda = 0.0;             // ||Lambda_I Theta'||
  double scale = 0.0;              // ||rho||^2
  double scaled_integrability() const { return scale > 0 ? integrability / scale : integrability; }
  double scaled_lambda() const { return scale > 0 ? lambda / scale : lambda; }
};

// Runs kuranishi on a harmonic rho and measures Theta' of nabla + rho_hat + eta_hat.
YangMillsCheck deformed_is_yang_mills(const EndComplex& cx, const MatrixForm& rho, const KuranishiOptions& opt = {});

struct TangentStructure {
  HarmonicBasis basis;   // harmonic (1,0) End(B)-forms
  QuaternionAction action;  // I, barJ, barK on the realified basis {h_a, i h_a}
  RMat gram;             // Re <v_a, v_b>
  CMat omega;            // integral of Tr Lambda_c(h_a ^ h_b), complex basis
  CMat omega_real;       // the same on the realified basis
  double gram_min_eigenvalue = 0.0;
  double gram_symmetry = 0.0;
  double metric_invariance = 0.0;  // max ||X^T G X - G|| over I, J, K
  double omega_skew = 0.0;         // ||omega + omega^T||
  cplx ad_i_eigenvalue = 0.0;      // (ad I) Omega = lambda Omega on the realified basis
  double ad_i_residual = 0.0;
  double omega_min_singular = 0.0;
  cplx omega_determinant = 0.0;
  nlohmann::json to_json() const;
};

// Throws HypothesisViolated unless the connection is hyperholomorphic.
TangentStructure tangent_structure(const EndComplex& cx);

}  // namespace hkt
