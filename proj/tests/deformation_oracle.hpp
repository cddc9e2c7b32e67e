#pragma once

#include <random>

#include "hkt/spectral_fields.hpp"

namespace hkt::oracle {

// rho = X dz1 + Y dz2 as a constant form, dz1 = dx1 - i dx2, dz2 = dx3 - i dx4.
inline MatrixForm constant_rho(const CMat& X, const CMat& Y, int cutoff) {
  const cplx i(0.0, 1.0);
  return constant_form(static_cast<int>(X.rows()), 1, cutoff, {X, -i * X, Y, -i * Y});
}

// |dz1 ^ dz2|^2 = 4 and |dz_a|^2 = 2, so ||iota(rho, rho)|| <= tol ||rho||^2
// reads ||[X, Y]|| <= tol (||X||^2 + ||Y||^2).
inline bool commutator_in_cone(const CMat& X, const CMat& Y, double tol) {
  return (X * Y - Y * X).norm() <= tol * (X.squaredNorm() + Y.squaredNorm());
}

inline CMat gaussian_matrix(int r, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMat m(r, r);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) m(a, b) = cplx(g(rng), g(rng));
  return m;
}

// Samples from the flat constant family: commuting pairs (simultaneously
// diagonalizable), generic pairs, and commuting pairs perturbed by eps.
struct ConeSample {
  CMat X, Y;
};
inline ConeSample cone_sample(int r, int i, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CMat Q = gaussian_matrix(r, rng);
  const CMat Qi = Q.inverse();
  CMat DX = CMat::Zero(r, r), DY = CMat::Zero(r, r);
  for (int a = 0; a < r; ++a) {
    DX(a, a) = cplx(u(rng) - 0.5, u(rng) - 0.5);
    DY(a, a) = cplx(u(rng) - 0.5, u(rng) - 0.5);
  }
  ConeSample s{Q * DX * Qi, Q * DY * Qi};
  switch (i % 3) {
    case 0: break;
    case 1: s.Y = gaussian_matrix(r, rng); break;
    default: s.Y += std::pow(10.0, -14.0 + 10.0 * u(rng)) * gaussian_matrix(r, rng); break;
  }
  return s;
}

}  // namespace hkt::oracle
