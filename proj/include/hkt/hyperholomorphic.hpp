#pragma once

#include <random>
#include <string>
#include <vector>

#include "hkt/connections.hpp"

namespace hkt {

// Relative size of the part of a form not fixed by the unit quaternions
// acting multiplicatively on the coframe (the common kernel of ad I, ad J,
// ad K on its degree). 0 for the zero form.
double su2_noninvariance(const MatrixForm& a);
// Orthogonal projector onto the SU(2)-fixed forms of degree p in dimension 4n.
CMat su2_fixed_projector(const QuaternionFrame& frame, int p);

struct StructureResidual {
  std::string label;
  double a = 0, b = 0, c = 0;
  double integrability = 0.0;  // (2,0)+(0,2) part of Theta, relative
  double lambda_norm = 0.0;    // ||Lambda_L Theta||
  double lambda_trace = 0.0;   // ||Tr Lambda_L Theta||
};

struct CurvatureReport {
  double tolerance = 1e-10;
  std::vector<StructureResidual> structures;  // I, J, K, then sampled L
  double noninvariance = 0.0;
  double curvature_norm = 0.0;
  double degree = 0.0;
  double slope = 0.0;
  bool invariant = false;         // noninvariance <= tolerance
  bool integrable_all = false;    // every listed L integrable
  bool hyperholomorphic = false;  // the invariance verdict
  bool equivalence_consistent = false;  // invariant == integrable_all
  bool lambda_vanishes = false;   // ||Lambda_L Theta|| <= tolerance for every listed L
  bool yang_mills[3] = {false, false, false};  // Lambda_L Theta = 0 for I, J, K
  nlohmann::json to_json() const;
};

CurvatureReport analyze(const HermitianConnection& conn, double tolerance = 1e-10, int samples = 20,
                        std::uint64_t seed = 2024);

struct DegreeSlope {
  double degree = 0.0;
  double slope = 0.0;
};
// deg = integral of (i / 2 pi) Tr Theta ^ omega_L over the unit-volume torus.
DegreeSlope degree_slope(const HermitianConnection& conn, const InducedStructure& L);

struct ChernForms {
  MatrixForm c1_form;               // (i / 2 pi) Tr Theta
  MatrixForm tr_theta_wedge_theta;  // Tr(Theta ^ Theta)
  MatrixForm combination;           // Delta_d-harmonic part of Tr(Theta ^ Theta)
  cplx combination_value = 0.0;     // its dx1234 coefficient
  double invariance_residual = 0.0;
};
// Throws BandwidthOverflow when Theta ^ Theta leaves the cutoff and truncation is off.
ChernForms chern_class_forms(const HermitianConnection& conn);

struct ProjectiveReport {
  MatrixForm traceless;  // Theta - (1/r) Tr(Theta) Id
  double projective_residual = 0.0;
  double end_bundle_residual = 0.0;  // for alpha -> Theta alpha - alpha Theta as an End(End B)-valued form
  nlohmann::json to_json() const;
};
ProjectiveReport traceless_and_projective(const HermitianConnection& conn);

// ---------------------------------------------------------------------------
// Pointwise curvature inequality on the fiber H^n.

// End(B)-valued form at one point: comps[s] is the coefficient of monomial s.
struct PointForm {
  int dim = 8;
  int degree = 2;
  int rank = 1;
  std::vector<CMat> comps;

  static PointForm zero(int dim, int degree, int rank);
  double norm() const;
  PointForm operator+(const PointForm& o) const;
  PointForm operator-(const PointForm& o) const;
};

PointForm wedge(const PointForm& a, const PointForm& b);
// Scalar form times the identity.
PointForm scalar_point_form(const CVec& v, int dim, int degree, int rank);
PointForm apply_fiber(const ExteriorOperator& op, const PointForm& a);
// Pointwise barJ: J acting multiplicatively after the real structure A -> -A^*.
PointForm bar_J(const PointForm& a, const QuaternionFrame& frame);

// Constant (1,0)-forms x_i, x_i' for I with barJ(x_i) = x_i' and
// sum x_i ^ x_i' = omega_sign * Omega, Omega = omega_J - i omega_K. No
// rescaling changes the sign; under the fixed conventions it is -1.
struct SymplecticCoframe {
  QuaternionFrame frame;
  std::vector<CVec> x, xp;
  int omega_sign = 1;
  double type_residual = 0.0;    // x_i, x_i' outside Lambda^{1,0}
  double barj_residual = 0.0;    // barJ x_i - x_i'
  double omega_residual = 0.0;   // sum x_i ^ x_i' - omega_sign * Omega
};
SymplecticCoframe symplectic_coframe(const QuaternionFrame& frame);

struct BgOptions {
  int rounds = 50;
  double fixed_point = 1e-12;
  double max_projection = 1e-6;  // allowed relative move of the input
};

// Alternating projection onto {(1,1) for J} and {Lambda_I = Lambda_J = Lambda_K = 0}
// and {skew-Hermitian coefficients}.
PointForm bg_project(const PointForm& theta, const QuaternionFrame& frame, const BgOptions& opt = {},
                     int* rounds = nullptr);
// Random point of the constraint set with nonzero (2,0) part.
PointForm bg_random_input(int rank, const QuaternionFrame& frame, std::mt19937_64& rng);

struct BGSample {
  PointForm theta;  // after projection
  PointForm theta20;
  double projection_distance = 0.0;  // relative
  int projection_rounds = 0;
  // Theta20 = sum_ij A_ij x_i ^ x_j' + sum_{i<j} (P_ij x_i ^ x_j + Q_ij x_i' ^ x_j')
  std::vector<std::vector<CMat>> A, P, Q;
  double basis_residual = 0.0;    // Theta20 minus its expansion (a basis, so rounding only)
  double offspan_fraction = 0.0;  // ||P, Q part|| / ||Theta20||
  // Residuals below are scaled by max(1, ||theta||).
  double hermitian_residual = 0.0;   // max ||A_ij - A_ij^*||
  double transpose_residual = 0.0;   // max ||A_ji + A_ij^*||, the barJ-invariance relation
  double offspan_pairing_residual = 0.0;  // max ||Q_ij + P_ij^*||
  double trace_residual = 0.0;       // ||sum A_ii||
  double reduction_residual = 0.0;   // Lambda_c^2(Theta^Theta) - Lambda_c^2(Theta20^Theta20), scaled by max(1,||theta||)^2
  cplx functional = 0.0;             // Tr Lambda_c^2(Theta20 ^ Theta20)
  cplx index_expansion = 0.0;        // Tr(sum_{i!=j} -A_ij A_ji + A_ii A_jj)
  cplx c0 = 0.0;                     // Lambda_c(x_i ^ x_i')
  nlohmann::json to_json() const;
};
// Throws ConstraintProjectionTooLarge when the projection moves the input by
// more than opt.max_projection (relative).
BGSample bg_functional(const PointForm& theta, const QuaternionFrame& frame, const BgOptions& opt = {});

// ---------------------------------------------------------------------------
// Gradient flow for E(A) = ||Lambda_L Theta||^2 + ||Pi^{0,2}_L Theta||^2.

struct FlowOptions {
  int steps = 200;
  double rate = 0.1;
  InducedStructure L = induced(1, 0, 0);
  double target = 1e-12;  // stop once the residual sqrt(E) is below
  int max_halvings = 40;
};

struct FlowStep {
  int step = 0;
  double energy = 0.0;
  double residual = 0.0;
  double step_size = 0.0;
  int halvings = 0;
};

struct FlowTrajectory {
  std::vector<FlowStep> history;  // history[0] is the start
  HermitianConnection final_connection = HermitianConnection::zero(1, 0);
  bool truncated = true;
  int total_halvings = 0;
  std::string to_csv() const;
};

double flow_energy(const HermitianConnection& conn, const InducedStructure& L);
// Exact gradient of flow_energy in the skew-Hermitian potentials.
MatrixForm flow_gradient(const HermitianConnection& conn, const InducedStructure& L);
// Throws StepSizeUnderflow when max_halvings halvings fail to decrease E.
FlowTrajectory yang_mills_flow(const HermitianConnection& start, const FlowOptions& opt = {});

}  // namespace hkt
