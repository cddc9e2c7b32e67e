#include <cmath>
#include <random>

#include "deformation_oracle.hpp"
#include "doctest.h"
#include "hkt/deformation.hpp"
#include "hkt/errors.hpp"

using namespace hkt;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::ConfigInvalid;
}

// Strictly upper triangular rank-3 section of bandwidth 1. Its partial has
// nilpotent products, so the recursion stops after eta_2.
MatrixForm upper_section(int cutoff, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatrixForm s = random_form(3, 0, cutoff, 1, amp, rng);
  MatrixForm u(3, 0, cutoff);
  for (const auto& [k, b] : s.modes()) {
    Block c = b;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) c(0, 3 * i + j) = 0.0;
    u.mode(k) = c;
  }
  return u;
}

CMat diag(std::initializer_list<cplx> d) {
  CMat m = CMat::Zero(static_cast<int>(d.size()), static_cast<int>(d.size()));
  int i = 0;
  for (cplx v : d) {
    m(i, i) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("constant coframe forms are (1,0)") {
  const CMat X = CMat::Identity(2, 2);
  CHECK(type_p0_defect(oracle::constant_rho(X, 2.0 * X, 1)) < 1e-15);
}

TEST_CASE("yoneda pairing on constant forms") {
  const EndComplex cx(HermitianConnection::zero(2, 1));
  SUBCASE("commuting coefficients give zero") {
    const MatrixForm rho = oracle::constant_rho(diag({1.0, -2.0}), diag({cplx(0, 1), 3.0}), 1);
    const auto y = yoneda(cx, rho, rho);
    CHECK(l2_norm(y.representative) == doctest::Approx(0.0));
    CHECK(y.coefficients.norm() == doctest::Approx(0.0));
  }
  SUBCASE("noncommuting coefficients give [X,Y] dz1 ^ dz2") {
    CMat X = CMat::Zero(2, 2), Y = CMat::Zero(2, 2);
    X(0, 1) = 1.0;
    Y(1, 0) = 1.0;
    const MatrixForm rho = oracle::constant_rho(X, Y, 1);
    const auto y = yoneda(cx, rho, rho);
    // dz1 ^ dz2 = dx13 - i dx14 - i dx23 - dx24
    const CMat c = X * Y - Y * X;
    const cplx i(0.0, 1.0);
    const int m13 = exterior(4).index(0b0101), m14 = exterior(4).index(0b1001);
    const int m23 = exterior(4).index(0b0110), m24 = exterior(4).index(0b1010);
    const Freq z{0, 0, 0, 0};
    CHECK((y.representative.coefficient(m13, z) - c).norm() < 1e-14);
    CHECK((y.representative.coefficient(m14, z) + i * c).norm() < 1e-14);
    CHECK((y.representative.coefficient(m23, z) + i * c).norm() < 1e-14);
    CHECK((y.representative.coefficient(m24, z) + c).norm() < 1e-14);
    CHECK(y.coefficients.norm() == doctest::Approx(2.0 * c.norm()));
    CHECK(y.harmonic_residual < 1e-14);
  }
}

TEST_CASE("yoneda pairing is symmetric and bilinear") {
  const EndComplex cx(HermitianConnection::zero(2, 2));
  std::mt19937_64 rng(11);
  for (int t = 0; t < 5; ++t) {
    auto closed = [&] {
      MatrixForm s = random_form(2, 0, 2, 1, 1.0, rng);
      return cx.partial(s) + oracle::constant_rho(oracle::gaussian_matrix(2, rng), oracle::gaussian_matrix(2, rng), 2);
    };
    const MatrixForm a = closed(), b = closed(), c = closed();
    const auto ab = yoneda(cx, a, b), ba = yoneda(cx, b, a);
    CHECK(l2_norm(ab.representative - ba.representative) <= 1e-12 * l2_norm(ab.representative) + 1e-14);
    const auto sum = yoneda(cx, a + 2.0 * b, c);
    const auto ac = yoneda(cx, a, c), bc = yoneda(cx, b, c);
    CHECK(l2_norm(sum.representative - ac.representative - 2.0 * bc.representative) <=
          1e-12 * l2_norm(sum.representative) + 1e-14);
  }
}

TEST_CASE("yoneda preconditions") {
  const EndComplex cx(HermitianConnection::zero(2, 1));
  std::mt19937_64 rng(3);
  const MatrixForm general = random_form(2, 1, 1, 1, 1.0, rng);
  CHECK(kind_of([&] { yoneda(cx, general, general); }) == ErrorKind::WrongType);
  const MatrixForm p10 = apply_fiber(type_projector(induced(1, 0, 0), 1, 0), general);
  CHECK(kind_of([&] { yoneda(cx, p10, p10); }) == ErrorKind::NotClosed);
}

TEST_CASE("cone membership matches the commutator oracle") {
  const EndComplex cx(HermitianConnection::zero(2, 1));
  std::mt19937_64 rng(77);
  int in = 0, out = 0;
  for (int i = 0; i < 120; ++i) {
    const auto s = oracle::cone_sample(2, i, rng);
    const auto m = cone_membership(cx, oracle::constant_rho(s.X, s.Y, 1), 1e-9);
    CHECK(m.in_cone == oracle::commutator_in_cone(s.X, s.Y, 1e-9));
    (m.in_cone ? in : out)++;
  }
  CHECK(in > 20);
  CHECK(out > 20);
  CHECK(cone_membership(cx, MatrixForm(2, 1, 1)).in_cone);
}

TEST_CASE("hat adds the real-structure conjugate") {
  std::mt19937_64 rng(5);
  const MatrixForm a = random_form(2, 1, 1, 1, 1.0, rng);
  CHECK(l2_norm(hat(a) - a - real_T(a)) < 1e-14 * l2_norm(a));
  CHECK(l2_norm(real_T(hat(a)) - hat(a)) < 1e-14);
}

TEST_CASE("deformation residual: the two forms agree") {
  const HermitianConnection conn = HermitianConnection::zero(2, 4);
  const auto zero = deformation_residual(conn, MatrixForm(2, 1, 4), MatrixForm(2, 1, 4));
  CHECK(zero.equation == 0.0);
  CHECK(zero.curvature == 0.0);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const MatrixForm r = hat(random_form(2, 1, 4, 1, 0.3, rng));
    const MatrixForm e = hat(random_form(2, 1, 4, 1, 0.1, rng));
    const auto res = deformation_residual(conn, r, e);
    CHECK(res.equation > 0.0);
    CHECK(res.difference <= 1e-12 * res.equation);
    CHECK(std::abs(res.equation - res.curvature) <= 1e-12 * res.equation);
  }
}

TEST_CASE("kuranishi: commuting constant rho is a cone point with zero correction") {
  const EndComplex cx(HermitianConnection::zero(2, 2));
  const MatrixForm rho = oracle::constant_rho(diag({cplx(0.1, 0.0), -0.1}), diag({cplx(0, 0.2), cplx(0.05, 0.0)}), 2);
  const auto s = kuranishi(cx, rho);
  CHECK(s.converged);
  CHECK(s.eta_norm == 0.0);
  CHECK(s.residual.equation == doctest::Approx(0.0));
  CHECK(s.residual.curvature == doctest::Approx(0.0));
  const auto ym = deformed_is_yang_mills(cx, rho);
  CHECK(ym.integrability < 1e-14);
  CHECK(ym.lambda < 1e-14);
}

TEST_CASE("kuranishi: zero input") {
  const EndComplex cx(HermitianConnection::zero(2, 1));
  const auto s = kuranishi(cx, MatrixForm(2, 1, 1));
  CHECK(s.converged);
  CHECK(s.eta_norm == 0.0);
  CHECK(s.residual.equation == 0.0);
  const auto ym = deformed_is_yang_mills(cx, MatrixForm(2, 1, 1));
  CHECK(ym.integrability == 0.0);
  CHECK(ym.lambda == 0.0);
}

TEST_CASE("kuranishi: exact nilpotent input") {
  const EndComplex cx(HermitianConnection::zero(3, 4));
  KuranishiOptions opt;
  opt.max_order = 3;
  for (std::uint64_t seed : {1u, 2u}) {
    const MatrixForm rho = cx.partial(upper_section(4, 1e-3, seed));
    const auto s = kuranishi(cx, rho, opt);
    REQUIRE(s.stats.size() == 2);
    CHECK(s.converged);
    CHECK(s.stats[1].tau_norm == 0.0);
    const auto& t2 = s.stats[0];
    CHECK(t2.tau_norm > 0.0);
    CHECK(t2.exact_residual < 1e-12);
    CHECK(t2.left_inverse_residual < 1e-10);
    CHECK(t2.norm <= t2.bound * (1.0 + 1e-12));
    CHECK(s.rho_norm < s.radius);
    CHECK(s.eta_norm <= 0.25 * s.rho_norm);
    CHECK(s.residual.difference <= 1e-10 * s.rho_norm * s.rho_norm);
    // The Gamma recursion solves the (2,0) and (0,2) parts of the hatted
    // equation; the (1,1) part stays of order ||rho||^2.
    CHECK(t2.hat_parts[0] < 1e-10);
    CHECK(t2.hat_parts[2] < 1e-10);
    CHECK(s.residual.parts[0] <= 1e-10 * s.rho_norm * s.rho_norm);
    CHECK(s.residual.parts[2] <= 1e-10 * s.rho_norm * s.rho_norm);
    CHECK(s.residual.parts[1] > 0.1 * s.rho_norm * s.rho_norm);
    CHECK(s.to_json().dump() == kuranishi(cx, rho, opt).to_json().dump());
  }
}

TEST_CASE("kuranishi: gamma norm bound on general exact input") {
  const HermitianConnection conn = HermitianConnection::zero(2, 4);
  const EndComplex cx(conn);
  KuranishiOptions opt;
  opt.max_order = 3;
  std::mt19937_64 rng(21);
  const MatrixForm rho = cx.partial(random_form(2, 0, 4, 1, 1e-3, rng));
  const auto s = kuranishi(cx, rho, opt);
  CHECK(s.gamma_norm > 0.0);
  CHECK(s.truncated);
  for (const auto& t : s.stats) {
    CHECK(t.exact_residual < 1e-9);
    CHECK(t.left_inverse_residual < 1e-10);
    CHECK(t.norm <= t.bound * (1.0 + 1e-12));
  }
}

TEST_CASE("kuranishi errors") {
  SUBCASE("obstruction for noncommuting constant rho") {
    const EndComplex cx(HermitianConnection::zero(2, 1));
    CMat X = CMat::Zero(2, 2), Y = CMat::Zero(2, 2);
    X(0, 1) = 0.1;
    Y(1, 0) = 0.1;
    CHECK(kind_of([&] { kuranishi(cx, oracle::constant_rho(X, Y, 1)); }) == ErrorKind::ObstructionNonzero);
  }
  SUBCASE("background not hyperholomorphic") {
    const EndComplex cx(HermitianConnection::constant_noncommuting(2, 1));
    CHECK(kind_of([&] { kuranishi(cx, MatrixForm(2, 1, 1)); }) == ErrorKind::HypothesisViolated);
  }
  SUBCASE("bandwidth budget") {
    const EndComplex cx(HermitianConnection::zero(3, 2));
    const MatrixForm rho = cx.partial(upper_section(2, 1e-3, 4));
    CHECK(kind_of([&] { kuranishi(cx, rho); }) == ErrorKind::BandwidthOverflow);
    const EndComplex loose(HermitianConnection::zero(3, 2).with_truncation(true));
    const auto s = kuranishi(loose, rho);
    CHECK(s.truncated);
  }
  SUBCASE("wrong type and not closed") {
    const EndComplex cx(HermitianConnection::zero(2, 2));
    std::mt19937_64 rng(2);
    const MatrixForm a = random_form(2, 1, 2, 1, 1.0, rng);
    CHECK(kind_of([&] { kuranishi(cx, a); }) == ErrorKind::WrongType);
    const MatrixForm p10 = apply_fiber(type_projector(induced(1, 0, 0), 1, 0), a);
    CHECK(kind_of([&] { kuranishi(cx, p10); }) == ErrorKind::NotClosed);
  }
  SUBCASE("yang-mills check needs harmonic input") {
    const EndComplex cx(HermitianConnection::zero(3, 4));
    const MatrixForm rho = cx.partial(upper_section(4, 1e-3, 5));
    KuranishiOptions opt;
    opt.max_order = 3;
    CHECK(kind_of([&] { deformed_is_yang_mills(cx, rho, opt); }) == ErrorKind::HypothesisViolated);
  }
}

TEST_CASE("tangent structure, rank 1") {
  const auto t = tangent_structure(EndComplex(HermitianConnection::zero(1, 1)));
  REQUIRE(t.basis.dimension() == 2);
  // Lambda_c(dz1 ^ dz2) has modulus 4 and |dz_a|^2 = 2, so on an orthonormal
  // basis |Omega(h1, h2)| = 2 and |det Omega| = 4.
  CHECK(std::abs(t.omega(0, 0)) < 1e-14);
  CHECK(std::abs(t.omega(1, 1)) < 1e-14);
  CHECK(std::abs(t.omega(0, 1)) == doctest::Approx(2.0));
  CHECK(std::abs(t.omega_determinant) == doctest::Approx(4.0));
  CHECK((t.gram - RMat::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("tangent structure, rank 2") {
  const auto t = tangent_structure(EndComplex(HermitianConnection::zero(2, 1)));
  CHECK(t.basis.dimension() == 8);
  CHECK(t.action.relation_residual < 1e-9);
  CHECK(t.action.invariance_residual < 1e-9);
  CHECK(t.metric_invariance < 1e-9);
  CHECK(t.gram_symmetry < 1e-12);
  CHECK(t.gram_min_eigenvalue > 0.5);
  CHECK(t.omega_skew < 1e-12);
  CHECK(t.omega_min_singular > 1.0);
  CHECK(std::abs(t.omega_determinant) == doctest::Approx(256.0));
  // Omega is of type (2,0) for I: ad I scales it by 2i up to the orientation of I.
  CHECK(std::abs(t.ad_i_eigenvalue.real()) < 1e-12);
  CHECK(std::abs(std::abs(t.ad_i_eigenvalue.imag()) - 2.0) < 1e-12);
  CHECK(t.ad_i_residual < 1e-12);
  const auto j = t.to_json();
  CHECK(j["complex_dimension"] == 8);
}

TEST_CASE("tangent structure rejects non-hyperholomorphic backgrounds") {
  CHECK(kind_of([] { tangent_structure(EndComplex(HermitianConnection::constant_noncommuting(2, 1))); }) ==
        ErrorKind::HypothesisViolated);
}
