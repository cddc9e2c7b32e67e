#include "hkt/spectral_fields.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>

#include "hkt/errors.hpp"

namespace hkt {

namespace {

using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr int kDim = 4;

struct ProductEntry {
  int u, s, t, sign;
};

// Nonzero products dx_U ^ dx_S for |U| = q, |S| = p.
const std::vector<ProductEntry>& product_table(int q, int p) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<ProductEntry>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(q, p);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto& ext = exterior(kDim);
  std::vector<ProductEntry> table;
  if (p + q <= kDim) {
    for (int u = 0; u < ext.size(q); ++u)
      for (int s = 0; s < ext.size(p); ++s) {
        const auto mu_ = ext.mask(q, u), ms = ext.mask(p, s);
        const int sg = ExteriorAlgebra::wedge_sign(mu_, ms);
        if (sg != 0) table.push_back({u, s, ext.index(mu_ | ms), sg});
      }
  }
  return cache.emplace(key, std::move(table)).first->second;
}

// Dense per-frequency scratch for the product kernels; converted to a sparse
// MatrixForm once at the end.
class DenseAccumulator {
 public:
  // pairs: number of mode pairs the caller will visit; small counts write
  // straight into the sparse map.
  DenseAccumulator(int rank, int degree, int cutoff, std::size_t pairs)
      : out_(rank, degree, cutoff), side_(2 * cutoff + 1), stride_(out_.ncomp() * rank * rank) {
    const std::size_t cells = static_cast<std::size_t>(side_) * side_ * side_ * side_;
    dense_ = pairs * 4 >= cells;
    if (!dense_) return;
    buf_.assign(cells * stride_, cplx(0.0));
    touched_.assign(cells, 0);
  }
  cplx* block(const Freq& k) {
    if (!dense_) return out_.mode(k).data();
    const int n = out_.cutoff();
    const std::size_t c = (((std::size_t(k[0] + n) * side_ + (k[1] + n)) * side_ + (k[2] + n)) * side_ + (k[3] + n));
    touched_[c] = 1;
    return buf_.data() + c * stride_;
  }
  MatrixForm finish() {
    if (!dense_) return std::move(out_);
    const int n = out_.cutoff();
    std::size_t c = 0;
    for (int a = -n; a <= n; ++a)
      for (int b = -n; b <= n; ++b)
        for (int e = -n; e <= n; ++e)
          for (int f = -n; f <= n; ++f, ++c) {
            if (!touched_[c]) continue;
            Block& blk = out_.mode({a, b, e, f});
            std::copy(buf_.data() + c * stride_, buf_.data() + (c + 1) * stride_, blk.data());
          }
    return std::move(out_);
  }

 private:
  MatrixForm out_;
  bool dense_ = false;
  int side_;
  std::size_t stride_;
  std::vector<cplx> buf_;
  std::vector<char> touched_;
};

// o += sign * op(x) * op(y) for row-major r x r blocks; op is identity or adjoint.
template <bool AdjX, bool AdjY>
inline void gemm_acc(cplx* o, const cplx* x, const cplx* y, int r, double sign) {
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      cplx acc(0.0);
      for (int l = 0; l < r; ++l) {
        const cplx xv = AdjX ? std::conj(x[l * r + i]) : x[i * r + l];
        const cplx yv = AdjY ? std::conj(y[j * r + l]) : y[l * r + j];
        acc += xv * yv;
      }
      o[i * r + j] += sign * acc;
    }
}

CMat d_matrix(const Freq& k, int p) {
  const auto& ext = exterior(kDim);
  CMat m = CMat::Zero(ext.size(p + 1), ext.size(p));
  if (p >= kDim) return m;
  for (int mu = 0; mu < kDim; ++mu)
    if (k[mu] != 0) m += (kI * static_cast<double>(k[mu])) * ext.wedge_basis(mu, p).cast<cplx>();
  return m;
}

void require_same_shape(const MatrixForm& a, const MatrixForm& b, const char* what) {
  if (!a.same_shape(b))
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": rank/degree/cutoff differ");
}

const CMat& j_multiplicative(int p) {
  static std::once_flag once;
  static std::vector<CMat> blocks;
  std::call_once(once, [] {
    const auto frame = make_frame(1);
    const auto& ext = exterior(kDim);
    for (int q = 0; q <= kDim; ++q) blocks.push_back(ext.multiplicative(frame.J, q).cast<cplx>());
  });
  return blocks[p];
}

const CMat& non_p0_projector(int p) {
  static std::once_flag once;
  static std::vector<CMat> blocks;
  std::call_once(once, [] {
    const auto I = induced(1, 0, 0);
    for (int q = 0; q <= kDim; ++q) {
      const CMat pi = type_projector(I, q, 0).block(q);
      blocks.push_back(CMat::Identity(pi.rows(), pi.cols()) - pi);
    }
  });
  return blocks[p];
}

}  // namespace

int norm_inf(const Freq& k) {
  return std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2]), std::abs(k[3])});
}

MatrixForm::MatrixForm(int rank, int degree, int cutoff) : rank_(rank), degree_(degree), cutoff_(cutoff) {
  if (rank < 1 || cutoff < 0) throw Error(ErrorKind::ShapeMismatch, "invalid MatrixForm shape");
}

int MatrixForm::ncomp() const { return exterior(kDim).size(degree_); }

Block& MatrixForm::mode(const Freq& k) {
  if (norm_inf(k) > cutoff_)
    throw Error(ErrorKind::BandwidthOverflow, "frequency beyond working cutoff " + std::to_string(cutoff_));
  auto it = modes_.find(k);
  if (it == modes_.end()) it = modes_.emplace(k, Block::Zero(ncomp(), rank_ * rank_)).first;
  return it->second;
}

const Block* MatrixForm::find(const Freq& k) const {
  auto it = modes_.find(k);
  return it == modes_.end() ? nullptr : &it->second;
}

CMat MatrixForm::coefficient(int comp, const Freq& k) const {
  const Block* b = find(k);
  if (!b) return CMat::Zero(rank_, rank_);
  return ConstMap(b->data() + comp * rank_ * rank_, rank_, rank_);
}

void MatrixForm::set_coefficient(int comp, const Freq& k, const CMat& m) {
  Block& b = mode(k);
  MutMap(b.data() + comp * rank_ * rank_, rank_, rank_) = m;
}

void MatrixForm::add_coefficient(int comp, const Freq& k, const CMat& m) {
  Block& b = mode(k);
  MutMap(b.data() + comp * rank_ * rank_, rank_, rank_) += m;
}

int MatrixForm::bandwidth() const {
  int bw = 0;
  for (const auto& [k, b] : modes_)
    if (b.cwiseAbs().maxCoeff() > 0.0) bw = std::max(bw, norm_inf(k));
  return bw;
}

double MatrixForm::max_abs() const {
  double m = 0.0;
  for (const auto& [k, b] : modes_)
    if (b.size()) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

MatrixForm& MatrixForm::prune(double rel) {
  const double thr = rel * max_abs();
  for (auto it = modes_.begin(); it != modes_.end();) {
    if (it->second.size() == 0 || it->second.cwiseAbs().maxCoeff() <= thr)
      it = modes_.erase(it);
    else
      ++it;
  }
  return *this;
}

MatrixForm& MatrixForm::operator+=(const MatrixForm& o) {
  require_same_shape(*this, o, "add");
  for (const auto& [k, b] : o.modes_) mode(k) += b;
  return *this;
}

MatrixForm& MatrixForm::operator-=(const MatrixForm& o) {
  require_same_shape(*this, o, "subtract");
  for (const auto& [k, b] : o.modes_) mode(k) -= b;
  return *this;
}

MatrixForm& MatrixForm::operator*=(cplx s) {
  for (auto& [k, b] : modes_) b *= s;
  return *this;
}

MatrixForm MatrixForm::with_cutoff(int cutoff) const {
  MatrixForm out(rank_, degree_, cutoff);
  for (const auto& [k, b] : modes_) {
    if (norm_inf(k) > cutoff) {
      if (b.cwiseAbs().maxCoeff() > 0.0)
        throw Error(ErrorKind::BandwidthOverflow, "with_cutoff would drop nonzero modes");
      continue;
    }
    out.modes_.emplace(k, b);
  }
  return out;
}

MatrixForm operator+(MatrixForm a, const MatrixForm& b) { return a += b; }
MatrixForm operator-(MatrixForm a, const MatrixForm& b) { return a -= b; }
MatrixForm operator*(cplx s, MatrixForm a) { return a *= s; }
MatrixForm operator-(MatrixForm a) { return a *= cplx(-1.0); }

MatrixForm mul_left(const MatrixForm& f, const MatrixForm& a, bool allow_truncation) {
  if (f.rank() != a.rank()) throw Error(ErrorKind::ShapeMismatch, "rank mismatch in product");
  const int q = f.degree(), p = a.degree();
  if (p + q > kDim) throw Error(ErrorKind::ShapeMismatch, "degree exceeds 4 in product");
  const int r = a.rank(), rr = r * r, n = a.cutoff();
  DenseAccumulator out(r, p + q, n, f.modes().size() * a.modes().size());
  const auto& table = product_table(q, p);
  for (const auto& [k1, fb] : f.modes()) {
    for (const auto& [k2, ab] : a.modes()) {
      const Freq k = k1 + k2;
      if (norm_inf(k) > n) {
        if (!allow_truncation)
          throw Error(ErrorKind::BandwidthOverflow, "product needs frequency beyond cutoff " + std::to_string(n));
        continue;
      }
      cplx* ob = out.block(k);
      for (const auto& e : table)
        gemm_acc<false, false>(ob + e.t * rr, fb.data() + e.u * rr, ab.data() + e.s * rr, r, e.sign);
    }
  }
  return out.finish();
}

MatrixForm mul_left_adjoint(const MatrixForm& f, const MatrixForm& b) {
  const int q = f.degree(), p = b.degree() - q;
  if (p < 0) throw Error(ErrorKind::ShapeMismatch, "adjoint product degree below zero");
  const int r = b.rank(), rr = r * r, n = b.cutoff();
  DenseAccumulator out(r, p, n, f.modes().size() * b.modes().size());
  const auto& table = product_table(q, p);
  for (const auto& [k1, fb] : f.modes()) {
    for (const auto& [k, bb] : b.modes()) {
      const Freq k2 = k - k1;
      if (norm_inf(k2) > n) continue;
      cplx* ob = out.block(k2);
      for (const auto& e : table)
        gemm_acc<true, false>(ob + e.s * rr, fb.data() + e.u * rr, bb.data() + e.t * rr, r, e.sign);
    }
  }
  return out.finish();
}

MatrixForm mul_right(const MatrixForm& a, const MatrixForm& f, bool allow_truncation) {
  if (f.rank() != a.rank()) throw Error(ErrorKind::ShapeMismatch, "rank mismatch in product");
  const int q = f.degree(), p = a.degree();
  if (p + q > kDim) throw Error(ErrorKind::ShapeMismatch, "degree exceeds 4 in product");
  const int r = a.rank(), rr = r * r, n = a.cutoff();
  DenseAccumulator out(r, p + q, n, a.modes().size() * f.modes().size());
  const auto& table = product_table(p, q);
  for (const auto& [k1, ab] : a.modes()) {
    for (const auto& [k2, fb] : f.modes()) {
      const Freq k = k1 + k2;
      if (norm_inf(k) > n) {
        if (!allow_truncation)
          throw Error(ErrorKind::BandwidthOverflow, "product needs frequency beyond cutoff " + std::to_string(n));
        continue;
      }
      cplx* ob = out.block(k);
      for (const auto& e : table)
        gemm_acc<false, false>(ob + e.t * rr, ab.data() + e.u * rr, fb.data() + e.s * rr, r, e.sign);
    }
  }
  return out.finish();
}

MatrixForm mul_right_adjoint(const MatrixForm& f, const MatrixForm& b) {
  const int q = f.degree(), p = b.degree() - q;
  if (p < 0) throw Error(ErrorKind::ShapeMismatch, "adjoint product degree below zero");
  const int r = b.rank(), rr = r * r, n = b.cutoff();
  DenseAccumulator out(r, p, n, f.modes().size() * b.modes().size());
  const auto& table = product_table(p, q);
  for (const auto& [k2, fb] : f.modes()) {
    for (const auto& [k, bb] : b.modes()) {
      const Freq k1 = k - k2;
      if (norm_inf(k1) > n) continue;
      cplx* ob = out.block(k1);
      for (const auto& e : table)
        gemm_acc<false, true>(ob + e.u * rr, bb.data() + e.t * rr, fb.data() + e.s * rr, r, e.sign);
    }
  }
  return out.finish();
}

MatrixForm wedge(const MatrixForm& a, const MatrixForm& b, bool allow_truncation) {
  if (a.rank() != b.rank() || a.cutoff() != b.cutoff())
    throw Error(ErrorKind::ShapeMismatch, "wedge needs equal rank and cutoff");
  if (a.degree() + b.degree() > kDim) throw Error(ErrorKind::ShapeMismatch, "wedge degree exceeds 4");
  if (!allow_truncation && a.bandwidth() + b.bandwidth() > a.cutoff())
    throw Error(ErrorKind::BandwidthOverflow,
                "bandwidths " + std::to_string(a.bandwidth()) + "+" + std::to_string(b.bandwidth()) +
                    " exceed cutoff " + std::to_string(a.cutoff()));
  MatrixForm out = mul_left(a, b, allow_truncation);
  return out.prune();
}

MatrixForm d(const MatrixForm& a) {
  if (a.degree() >= kDim) throw Error(ErrorKind::ShapeMismatch, "d of a top-degree form");
  MatrixForm out(a.rank(), a.degree() + 1, a.cutoff());
  for (const auto& [k, b] : a.modes()) {
    if (k == Freq{0, 0, 0, 0}) continue;
    out.mode(k) = d_matrix(k, a.degree()) * b;
  }
  return out;
}

MatrixForm d_adjoint(const MatrixForm& a) {
  if (a.degree() == 0) throw Error(ErrorKind::ShapeMismatch, "d^* of a 0-form");
  MatrixForm out(a.rank(), a.degree() - 1, a.cutoff());
  for (const auto& [k, b] : a.modes()) {
    if (k == Freq{0, 0, 0, 0}) continue;
    out.mode(k) = d_matrix(k, a.degree() - 1).adjoint() * b;
  }
  return out;
}

cplx l2_inner(const MatrixForm& a, const MatrixForm& b) {
  require_same_shape(a, b, "l2_inner");
  cplx s = 0.0;
  for (const auto& [k, ab] : a.modes()) {
    const Block* bb = b.find(k);
    if (!bb) continue;
    s += (ab.array() * bb->array().conjugate()).sum();
  }
  return s;
}

double l2_norm(const MatrixForm& a) {
  double s = 0.0;
  for (const auto& [k, b] : a.modes()) s += b.squaredNorm();
  return std::sqrt(s);
}

MatrixForm apply_fiber(const ExteriorOperator& op, const MatrixForm& a) {
  if (!op.defined_on(a.degree()))
    throw Error(ErrorKind::ShapeMismatch, "fiber operator " + op.label() + " undefined on degree " +
                                              std::to_string(a.degree()));
  const CMat& m = op.block(a.degree());
  MatrixForm out(a.rank(), a.degree() + op.shift(), a.cutoff());
  for (const auto& [k, b] : a.modes()) out.mode(k) = m * b;
  return out;
}

MatrixForm left_multiply(const CMat& x, const MatrixForm& a) {
  const int r = a.rank(), rr = r * r;
  MatrixForm out(r, a.degree(), a.cutoff());
  for (const auto& [k, b] : a.modes()) {
    Block& ob = out.mode(k);
    for (int c = 0; c < a.ncomp(); ++c) MutMap(ob.data() + c * rr, r, r) = x * ConstMap(b.data() + c * rr, r, r);
  }
  return out;
}

MatrixForm real_T(const MatrixForm& a) {
  const int r = a.rank(), rr = r * r;
  MatrixForm out(r, a.degree(), a.cutoff());
  for (const auto& [k, b] : a.modes()) {
    Block& ob = out.mode(-k);
    for (int c = 0; c < a.ncomp(); ++c)
      MutMap(ob.data() + c * rr, r, r) = -ConstMap(b.data() + c * rr, r, r).adjoint();
  }
  return out;
}

MatrixForm tilde_T(const MatrixForm& a) {
  if (a.degree() == 0) throw Error(ErrorKind::DegreeZero, "tilde_T is defined from degree 1");
  MatrixForm out = real_T(a);
  out *= cplx(static_cast<double>(a.degree()));
  return out;
}

double type_p0_defect(const MatrixForm& a) {
  const double n = l2_norm(a);
  if (n == 0.0) return 0.0;
  const CMat& q = non_p0_projector(a.degree());
  double s = 0.0;
  for (const auto& [k, b] : a.modes()) s += (q * b).squaredNorm();
  return std::sqrt(s) / n;
}

MatrixForm bar_J(const MatrixForm& a) {
  if (a.degree() < 0 || a.degree() > kDim) return a;
  // relative for large forms, absolute near zero so rounding residue passes
  const double norm = l2_norm(a);
  const double defect = type_p0_defect(a);
  if (defect * norm > 1e-12 * std::max(norm, 1.0))
    throw Error(ErrorKind::WrongType, "bar_J needs a (p,0)-form; off-type fraction " + std::to_string(defect));
  const MatrixForm t = real_T(a);
  const CMat& jm = j_multiplicative(a.degree());
  MatrixForm out(a.rank(), a.degree(), a.cutoff());
  for (const auto& [k, b] : t.modes()) out.mode(k) = jm * b;
  return out;
}

MatrixForm bar_J_inverse(const MatrixForm& a) {
  MatrixForm out = bar_J(a);
  if (a.degree() % 2) out *= cplx(-1.0);
  return out;
}

MatrixForm trace_part(const MatrixForm& a) {
  const int r = a.rank(), rr = r * r;
  MatrixForm out(1, a.degree(), a.cutoff());
  for (const auto& [k, b] : a.modes()) {
    Block& ob = out.mode(k);
    for (int c = 0; c < a.ncomp(); ++c) ob(c, 0) = ConstMap(b.data() + c * rr, r, r).trace();
  }
  return out;
}

MatrixForm times_identity(const MatrixForm& scalar, int rank) {
  MatrixForm out(rank, scalar.degree(), scalar.cutoff());
  for (const auto& [k, b] : scalar.modes())
    for (int c = 0; c < scalar.ncomp(); ++c)
      out.set_coefficient(c, k, b(c, 0) * CMat::Identity(rank, rank));
  return out;
}

namespace {

MatrixForm random_on(int rank, int degree, int cutoff, int bandwidth, double amplitude, std::mt19937_64& rng,
                     bool plane) {
  if (bandwidth > cutoff) throw Error(ErrorKind::BandwidthOverflow, "random form bandwidth beyond cutoff");
  MatrixForm out(rank, degree, cutoff);
  std::normal_distribution<double> g(0.0, 1.0);
  const int nc = out.ncomp();
  for (int a = -bandwidth; a <= bandwidth; ++a)
    for (int b = -bandwidth; b <= bandwidth; ++b)
      for (int c = -bandwidth; c <= bandwidth; ++c)
        for (int e = -bandwidth; e <= bandwidth; ++e) {
          if (plane && (b != 0 || e != 0)) continue;
          Block& blk = out.mode({a, b, c, e});
          for (int i = 0; i < nc; ++i)
            for (int j = 0; j < rank * rank; ++j) {
              const double re = g(rng), im = g(rng);
              blk(i, j) = amplitude * cplx(re, im);
            }
        }
  return out;
}

}  // namespace

MatrixForm random_form(int rank, int degree, int cutoff, int bandwidth, double amplitude, std::mt19937_64& rng) {
  return random_on(rank, degree, cutoff, bandwidth, amplitude, rng, false);
}

MatrixForm random_form_plane(int rank, int degree, int cutoff, int bandwidth, double amplitude,
                             std::mt19937_64& rng) {
  return random_on(rank, degree, cutoff, bandwidth, amplitude, rng, true);
}

MatrixForm constant_form(int rank, int degree, int cutoff, const std::vector<CMat>& comps) {
  MatrixForm out(rank, degree, cutoff);
  if (static_cast<int>(comps.size()) != out.ncomp())
    throw Error(ErrorKind::ShapeMismatch, "constant_form component count");
  for (int c = 0; c < out.ncomp(); ++c) out.set_coefficient(c, {0, 0, 0, 0}, comps[c]);
  return out;
}

nlohmann::json to_json(const MatrixForm& a) {
  const auto& ext = exterior(kDim);
  nlohmann::json entries = nlohmann::json::array();
  const int r = a.rank();
  for (const auto& [k, b] : a.modes()) {
    for (int c = 0; c < a.ncomp(); ++c) {
      nlohmann::json comp = nlohmann::json::array();
      for (std::uint32_t m = ext.mask(a.degree(), c), i = 1; m; m >>= 1, ++i)
        if (m & 1u) comp.push_back(i);
      nlohmann::json mat = nlohmann::json::array();
      for (int e = 0; e < r * r; ++e) mat.push_back({b(c, e).real(), b(c, e).imag()});
      entries.push_back({{"component", comp}, {"k", {k[0], k[1], k[2], k[3]}}, {"matrix", mat}});
    }
  }
  return {{"rank", a.rank()}, {"degree", a.degree()}, {"cutoff", a.cutoff()}, {"entries", entries}};
}

MatrixForm matrix_form_from_json(const nlohmann::json& j) {
  const auto& ext = exterior(kDim);
  MatrixForm out(j.at("rank").get<int>(), j.at("degree").get<int>(), j.at("cutoff").get<int>());
  const int r = out.rank();
  for (const auto& e : j.at("entries")) {
    std::uint32_t m = 0;
    for (const auto& i : e.at("component")) m |= 1u << (i.get<int>() - 1);
    if (std::popcount(m) != out.degree()) throw Error(ErrorKind::ShapeMismatch, "component degree mismatch");
    const auto kk = e.at("k");
    const Freq k{kk.at(0).get<int>(), kk.at(1).get<int>(), kk.at(2).get<int>(), kk.at(3).get<int>()};
    const auto& mat = e.at("matrix");
    if (static_cast<int>(mat.size()) != r * r) throw Error(ErrorKind::ShapeMismatch, "matrix entry count");
    Block& b = out.mode(k);
    const int c = ext.index(m);
    for (int i = 0; i < r * r; ++i) b(c, i) = cplx(mat[i].at(0).get<double>(), mat[i].at(1).get<double>());
  }
  return out;
}

}  // namespace hkt
