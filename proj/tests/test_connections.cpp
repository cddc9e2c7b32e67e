#include <cmath>
#include <random>

#include "doctest.h"
#include "hkt/connections.hpp"
#include "hkt/errors.hpp"

using namespace hkt;

namespace {

const Freq k0{0, 0, 0, 0};

double rel(const MatrixForm& a, const MatrixForm& b) {
  const double s = std::max({l2_norm(a), l2_norm(b), 1e-300});
  return l2_norm(a - b) / s;
}

double small(const MatrixForm& a, const MatrixForm& scale) {
  return l2_norm(a) / std::max(l2_norm(scale), 1e-300);
}

int comp(std::initializer_list<int> idx) {
  std::uint32_t m = 0;
  for (int i : idx) m |= 1u << (i - 1);
  return exterior(4).index(m);
}

InducedStructure random_induced(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  double a = g(rng), b = g(rng), c = g(rng);
  const double n = std::sqrt(a * a + b * b + c * c);
  return induced(a / n, b / n, c / n);
}

MatrixForm p0_form(int r, int p, int cutoff, int bw, std::mt19937_64& rng) {
  return apply_fiber(type_projector(induced(1, 0, 0), p, 0), random_form(r, p, cutoff, bw, 1.0, rng));
}

std::vector<HermitianConnection> flat_family() {
  return {HermitianConnection::zero(1, 2), HermitianConnection::constant_commuting(2, 2, 7ull)};
}

}  // namespace

TEST_CASE("curvature of the named constructors") {
  CHECK(l2_norm(HermitianConnection::zero(2, 2).curvature()) == 0.0);
  CHECK(l2_norm(HermitianConnection::constant_commuting(3, 2, 11ull).curvature()) <= 1e-15);

  const auto nc = HermitianConnection::constant_noncommuting(2, 2);
  const CMat X = nc.potential().coefficient(0, k0), Y = nc.potential().coefficient(1, k0);
  const MatrixForm& th = nc.curvature();
  CHECK((th.coefficient(comp({1, 2}), k0) - (X * Y - Y * X)).norm() <= 1e-15);
  CHECK((X * Y - Y * X).norm() > 0.1);

  const auto rnd = HermitianConnection::seeded_random(2, 3, 1, 0.3, 5);
  CHECK(rnd.bianchi_residual() <= 1e-13 * std::max(1.0, l2_norm(rnd.curvature())));
  CHECK(l2_norm(real_T(rnd.curvature()) - rnd.curvature()) <= 1e-13);
}

TEST_CASE("curvature availability and potential checks") {
  const auto wide = HermitianConnection::seeded_random(1, 2, 2, 0.3, 9);
  CHECK_THROWS_AS(wide.curvature(), Error);
  CHECK_NOTHROW(wide.with_truncation(true).curvature());

  MatrixForm bad(2, 1, 2);
  bad.set_coefficient(0, k0, CMat::Identity(2, 2));  // Hermitian, not skew
  try {
    HermitianConnection c(bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WrongType);
  }
  CHECK_THROWS_AS(HermitianConnection(MatrixForm(1, 2, 2)), Error);
}

TEST_CASE("partial on scalars matches the Wirtinger derivative") {
  // dz1 = dx1 - i dx2, d/dz1 = (d1 + i d2)/2 and likewise for (x3, x4)
  const auto c = HermitianConnection::zero(1, 2);
  const auto part = partial_op(c, induced(1, 0, 0));
  const auto dbar = dbar_op(c, induced(1, 0, 0));
  const Freq k{1, -2, 2, 1};
  MatrixForm f(1, 0, 2);
  f.set_coefficient(0, k, CMat::Constant(1, 1, 1.0));
  const auto pf = part(f);
  const cplx fz1 = 0.5 * (kI * double(k[0]) - double(k[1]));
  const cplx fz2 = 0.5 * (kI * double(k[2]) - double(k[3]));
  CHECK(std::abs(pf.coefficient(comp({1}), k)(0, 0) - fz1) <= 1e-15);
  CHECK(std::abs(pf.coefficient(comp({2}), k)(0, 0) - (-kI) * fz1) <= 1e-15);
  CHECK(std::abs(pf.coefficient(comp({3}), k)(0, 0) - fz2) <= 1e-15);
  CHECK(std::abs(pf.coefficient(comp({4}), k)(0, 0) - (-kI) * fz2) <= 1e-15);
  CHECK(rel(part(f) + dbar(f), d(f)) <= 1e-15);
}

TEST_CASE("every operator kind has an exact adjoint") {
  std::mt19937_64 rng(21);
  const std::vector<HermitianConnection> conns = {
      HermitianConnection::constant_commuting(2, 2, 3ull),
      HermitianConnection::constant_noncommuting(2, 2),
      // bandwidth 2 at cutoff 2: products with the test forms are truncated
      HermitianConnection::seeded_random(2, 2, 2, 0.4, 13, true),
  };
  const auto L = random_induced(rng);
  const std::vector<OperatorKind> general = {
      OperatorKind::of(OpTag::nabla),          OperatorKind::of(OpTag::partial, L),
      OperatorKind::of(OpTag::dbar, L),        OperatorKind::of(OpTag::L_op, L),
      OperatorKind::of(OpTag::Lambda_op, L),   OperatorKind::of(OpTag::L_c),
      OperatorKind::of(OpTag::Lambda_c),       OperatorKind::of(OpTag::d_c, L),
  };
  const std::vector<OperatorKind> on_p0 = {OperatorKind::of(OpTag::partial_j), OperatorKind::of(OpTag::delta),
                                           OperatorKind::of(OpTag::delta_bar)};
  for (const auto& c : conns) {
    for (const auto& kind : general) {
      const Op op = make_operator(kind, c);
      for (int p = 0; p <= 4; ++p) {
        const int q = p + op.shift();
        if (q < 0 || q > 4) continue;
        const auto a = random_form(2, p, 2, 1, 1.0, rng);
        const auto b = random_form(2, q, 2, 1, 1.0, rng);
        const cplx lhs = l2_inner(op(a), b), rhs = l2_inner(a, op.apply_adjoint(b));
        INFO(kind_name(kind), " p=", p);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
      }
    }
    for (const auto& kind : on_p0) {
      const Op op = make_operator(kind, c);
      for (int p = 0; p <= 1; ++p) {
        const auto a = p0_form(2, p, 2, 1, rng);
        const auto b = p0_form(2, p + 1, 2, 1, rng);
        const cplx lhs = l2_inner(op(a), b), rhs = l2_inner(a, op.apply_adjoint(b));
        INFO(kind_name(kind), " p=", p);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
      }
    }
  }
  CHECK(kind_name(OperatorKind::of(OpTag::delta).adj()) == "delta^*");
  CHECK_THROWS_AS(make_operator(OperatorKind::of(OpTag::partial), conns[0]), Error);
}

TEST_CASE("Kodaira identities on flat bundles") {
  std::mt19937_64 rng(31);
  const auto I = induced(1, 0, 0);
  for (const auto& c : flat_family()) {
    const auto part = partial_op(c, I), dbar = dbar_op(c, I), Lam = lambda_op(I);
    for (int p = 0; p <= 4; ++p) {
      const auto a = random_form(c.rank(), p, 2, 1, 1.0, rng);
      CHECK(rel(commutator(Lam, part)(a), kI * dbar.apply_adjoint(a)) <= 1e-12);
      CHECK(rel(commutator(Lam, dbar)(a), -kI * part.apply_adjoint(a)) <= 1e-12);
    }
  }
}

TEST_CASE("Laplacian splitting for a connection integrable for I") {
  std::mt19937_64 rng(41);
  const auto I = induced(1, 0, 0);
  const auto c = HermitianConnection::constant_noncommuting(2, 2);
  CHECK(newlander_test(c, I) <= 1e-15);
  const auto nab = laplacian_of(nabla_op(c));
  const auto dp = laplacian_of(partial_op(c, I)), db = laplacian_of(dbar_op(c, I));
  const auto dc = laplacian_of(dc_op(c, I));
  const auto curv = commutator(lambda_op(I), curvature_action_op(c));
  for (int p = 0; p <= 4; ++p) {
    const auto a = random_form(2, p, 2, 1, 1.0, rng);
    const auto Dd = nab(a);
    CHECK(rel(dp(a) + db(a), Dd) <= 1e-12);
    CHECK(rel(dp(a) - db(a), kI * curv(a)) <= 1e-12);
    CHECK(rel(dc(a), Dd) <= 1e-12);
  }
}

TEST_CASE("partial_j algebra on flat bundles") {
  std::mt19937_64 rng(51);
  const auto I = induced(1, 0, 0), J = induced(0, 1, 0);
  const auto compress = fiber_op(
      (type_projector(I, 0, 0) + type_projector(I, 1, 0) + type_projector(I, 2, 0)) * lefschetz_L(J));
  for (const auto& c : flat_family()) {
    const int r = c.rank();
    const auto part = partial_op(c, I), pj = partial_j_op(c), de = delta_op(c), db = delta_bar_op(c);
    for (int p = 0; p <= 2; ++p) {
      const auto a = p0_form(r, p, 2, 1, rng);
      INFO("p=", p, " rank=", r);
      if (p == 0) {
        CHECK(small(pj(pj(a)), a) <= 1e-12);
        CHECK(small(anticommutator(pj, part)(a), a) <= 1e-12);
      }
      CHECK(small(anticommutator(part.adjoint(), pj)(a), a) <= 1e-12);
      CHECK(small(anticommutator(pj.adjoint(), part)(a), a) <= 1e-12);
      CHECK(small(anticommutator(de.adjoint(), db)(a), a) <= 1e-12);
      // signs as they hold under the fixed convention (flipped relative to the usual statement)
      CHECK(small(commutator(lefschetz_op(J), part.adjoint())(a) + pj(a), a) <= 1e-12);
      CHECK(small(commutator(compress, de.adjoint())(a) + kI * db(a), a) <= 1e-12);
      CHECK(small(commutator(compress, db.adjoint())(a) - kI * de(a), a) <= 1e-12);
      const auto Dp = laplacian_of(part)(a);
      CHECK(small(laplacian_of(pj)(a) - Dp, a) <= 1e-12);
      CHECK(small(2.0 * laplacian_of(de)(a) - Dp, a) <= 1e-12);
      CHECK(small(2.0 * laplacian_of(db)(a) - Dp, a) <= 1e-12);
    }
    CHECK_THROWS_AS(pj(random_form(r, 1, 2, 1, 1.0, rng)), Error);
  }
}

TEST_CASE("conjugation by an induced structure") {
  std::mt19937_64 rng(61);
  const auto frame = make_frame(1);
  const auto I = induced(1, 0, 0);
  for (const auto& c : flat_family()) {
    for (int t = 0; t < 3; ++t) {
      const auto L = random_induced(rng);
      const RMat Linv = L.L.inverse();
      const auto IL = induced_from_matrix(frame, L.L * I.L * Linv);
      const auto R = form_action_op(L.L), Rinv = form_action_op(Linv);
      const auto D1 = laplacian_of(partial_op(c, I)), D2 = laplacian_of(partial_op(c, IL));
      for (int p = 0; p <= 4; ++p) {
        const auto a = random_form(c.rank(), p, 2, 1, 1.0, rng);
        CHECK(rel(R(D1(Rinv(a))), D2(a)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("integrability residuals") {
  std::mt19937_64 rng(71);
  CHECK(newlander_test(HermitianConnection::zero(1, 2), induced(0, 1, 0)) == 0.0);
  const auto nc = HermitianConnection::constant_noncommuting(2, 2);
  CHECK(newlander_test(nc, induced(1, 0, 0)) <= 1e-15);
  CHECK(newlander_test(nc, induced(0, 1, 0)) > 0.5);
  CHECK(newlander_test(nc, induced(0, 0, 1)) > 0.5);

  // constant curvature with ASD form part: (1,1) for every induced structure
  const CMat X = HermitianConnection::constant_noncommuting(2, 2).potential().coefficient(0, k0);
  const CMat Y = HermitianConnection::constant_noncommuting(2, 2).potential().coefficient(1, k0);
  MatrixForm asd(2, 2, 2), sd(2, 2, 2);
  asd.set_coefficient(comp({1, 2}), k0, X);
  asd.set_coefficient(comp({3, 4}), k0, -X);
  asd.set_coefficient(comp({1, 3}), k0, Y);
  asd.set_coefficient(comp({2, 4}), k0, Y);
  sd.set_coefficient(comp({1, 2}), k0, X);
  sd.set_coefficient(comp({3, 4}), k0, X);
  for (int t = 0; t < 20; ++t) {
    const auto L = random_induced(rng);
    CHECK(newlander_residual(asd, L) <= 1e-14);
  }
  int positive = 0;
  for (int t = 0; t < 20; ++t) positive += newlander_residual(sd, random_induced(rng)) > 1e-3;
  CHECK(positive == 20);
  CHECK_THROWS_AS(newlander_residual(MatrixForm(1, 1, 2), induced(1, 0, 0)), Error);
}

TEST_CASE("connection JSON round trip") {
  const auto c = HermitianConnection::seeded_random(2, 2, 1, 0.5, 17);
  const auto back = connection_from_json(to_json(c));
  CHECK(l2_norm(back.potential() - c.potential()) == 0.0);
  CHECK(back.rank() == 2);
  CHECK(back.cutoff() == 2);
  auto j = to_json(c);
  j["rank"] = 3;
  CHECK_THROWS_AS(connection_from_json(j), Error);
}
