#include "ptmpo/ptmpo.hpp"

#include <lapacke.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <vector>

#include "ptmpo/numerics.hpp"

namespace ptmpo {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> as_matrix(const Tensor4& t, int rows,
                                           int cols) {
  return Eigen::Map<const RowMajorMatrix>(t.data.data(), rows, cols);
}

// Wall-clock accumulators per build phase, reported on stderr when
// PTMPO_PROFILE is set. Negligible overhead (a few clock reads per site).
struct BuildProfile {
  double expand = 0, absorb = 0, fw_svd = 0, bw_svd = 0, bw_rest = 0;
  double rs_gemm = 0, rs_qr = 0, rs_svd = 0, rs_geqrf = 0, rs_ungqr = 0;
  double qr_mpp = 0; long qr_count = 0;
  long rs_calls = 0, rs_retries = 0;
  double gs_gram = 0, gs_eig = 0, gs_refac = 0, gs_defl = 0, gs_tail = 0;
  long gs_k1 = 0, gs_rank = 0, gs_n = 0, gs_m = 0, gs_calls = 0;
  bool enabled = std::getenv("PTMPO_PROFILE") != nullptr;
  static double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
  void report() const {
    if (!enabled) return;
    std::fprintf(stderr,
                 "[profile] expand %.1fs absorb %.1fs fw_svd %.1fs "
                 "bw_svd %.1fs bw_rest %.1fs | rs gemm %.1fs qr %.1fs "
                 "svd %.1fs (geqrf %.1fs ungqr %.1fs) calls %ld "
                 "retries %ld\n",
                 expand, absorb, fw_svd, bw_svd, bw_rest, rs_gemm, rs_qr,
                 rs_svd, rs_geqrf, rs_ungqr, rs_calls, rs_retries);
    std::fprintf(stderr, "[profile] qr avg m*p^2 %.2fM over %ld calls\n",
                 qr_count ? qr_mpp / qr_count / 1e6 : 0.0, qr_count);
    if (gs_calls)
      std::fprintf(stderr,
                   "[profile] gram %.1fs eig %.1fs refac %.1fs defl %.1fs "
                   "tail %.1fs | avg m %.0f n %.0f k1 %.0f rank %.0f over "
                   "%ld calls\n",
                   gs_gram, gs_eig, gs_refac, gs_defl, gs_tail,
                   double(gs_m) / gs_calls, double(gs_n) / gs_calls,
                   double(gs_k1) / gs_calls, double(gs_rank) / gs_calls,
                   gs_calls);
  }
};
BuildProfile g_profile;

// SVD factors of the column-major view B of a tensor buffer. The row-major
// tensor unfolding A satisfies A = B^T, so the sweeps translate U/V below
// without ever materializing a transposed copy.
struct BondSVD {
  int rank = 0;
  RealVector sigma;
  DenseOperator ub;      // left factor of B
  DenseOperator vb_dag;  // right factor of B
};

BondSVD from_truncated(const DenseOperator& b, double eps) {
  TruncatedSVD s = truncated_svd(b, eps);
  return {s.rank, std::move(s.sigma), std::move(s.u), std::move(s.v_dag)};
}

// In-place QR orthonormalization of the columns of y. Returns false if
// LAPACK fails (callers fall back to the exact SVD).
bool orthonormalize(DenseOperator& y) {
  const lapack_int m = static_cast<lapack_int>(y.rows());
  const lapack_int p = static_cast<lapack_int>(y.cols());
  ComplexVector tau(p);
  double t = g_profile.enabled ? BuildProfile::now() : 0.0;
  if (g_profile.enabled) { g_profile.qr_mpp += double(m)*p*p; ++g_profile.qr_count; }
  lapack_int info = LAPACKE_zgeqrf(
      LAPACK_COL_MAJOR, m, p, reinterpret_cast<lapack_complex_double*>(y.data()),
      m, reinterpret_cast<lapack_complex_double*>(tau.data()));
  if (g_profile.enabled) {
    g_profile.rs_geqrf += BuildProfile::now() - t;
    t = BuildProfile::now();
  }
  if (info != 0) return false;
  info = LAPACKE_zungqr(
      LAPACK_COL_MAJOR, m, p, p,
      reinterpret_cast<lapack_complex_double*>(y.data()), m,
      reinterpret_cast<lapack_complex_double*>(tau.data()));
  if (g_profile.enabled) g_profile.rs_ungqr += BuildProfile::now() - t;
  return info == 0;
}

// Rebalances the columns of y so that directions spanning its column space
// at very different magnitudes all stay well above roundoff: y is replaced
// by y U^{-1} = P L from its partial-pivoted LU factorization, which spans
// the same space but with the unit-lower-triangular conditioning of L.
// Roughly 4x cheaper than a full QR orthonormalization; falls back to QR
// when a pivot (nearly) vanishes.
bool lu_stabilize(DenseOperator& y) {
  const lapack_int m = static_cast<lapack_int>(y.rows());
  const lapack_int p = static_cast<lapack_int>(y.cols());
  DenseOperator w = y;
  std::vector<lapack_int> ipiv(p);
  const double t = g_profile.enabled ? BuildProfile::now() : 0.0;
  const lapack_int info = LAPACKE_zgetrf(
      LAPACK_COL_MAJOR, m, p,
      reinterpret_cast<lapack_complex_double*>(w.data()), m, ipiv.data());
  if (info != 0) return orthonormalize(y);
  const RealVector dmag = w.topRows(p).diagonal().cwiseAbs();
  if (dmag.minCoeff() < 1e-300 * dmag.maxCoeff()) return orthonormalize(y);
  w.topRows(p).triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(
      y);
  if (g_profile.enabled) g_profile.rs_qr += BuildProfile::now() - t;
  return true;
}

// Randomized truncated SVD of a tall matrix (rows >= cols): find an
// orthonormal basis Y of the dominant column space by one power iteration
// over a Gaussian test matrix, orthonormalizing between applications so
// directions as small as eps*sigma0 survive the sigma^3 dynamic range, then
// factor the small projected matrix Y^dag B exactly. All returned factors
// are machine-orthonormal and the singular values carry full double
// precision, so truncation decisions are reliable at any threshold. Returns
// false when the dominant space was not fully captured (smallest computed
// singular value still above the cutoff) so the caller can retry with a
// larger sample size.
bool rand_svd_tall(const DenseOperator& b, double eps, int p, BondSVD& out) {
  const int rows = static_cast<int>(b.rows());
  const int cols = static_cast<int>(b.cols());
  std::mt19937_64 rng(0x243F6A8885A308D3ull ^
                      (static_cast<uint64_t>(rows) << 40) ^
                      (static_cast<uint64_t>(cols) << 20) ^
                      static_cast<uint64_t>(p));
  std::normal_distribution<double> gauss;
  DenseOperator omega(cols, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < cols; ++i)
      omega(i, j) = Complex(gauss(rng), gauss(rng));

  const bool prof = g_profile.enabled;
  double tg = prof ? BuildProfile::now() : 0.0;
  DenseOperator y = b * omega;
  if (prof) { g_profile.rs_gemm += BuildProfile::now() - tg; }
  if (!lu_stabilize(y)) throw NumericalError("rand_svd: stabilization failed");
  if (prof) { tg = BuildProfile::now(); }
  DenseOperator z = b.adjoint() * y;
  if (prof) { g_profile.rs_gemm += BuildProfile::now() - tg; }
  if (!lu_stabilize(z)) throw NumericalError("rand_svd: stabilization failed");
  if (prof) { tg = BuildProfile::now(); }
  y = b * z;
  if (prof) { g_profile.rs_gemm += BuildProfile::now() - tg; tg = BuildProfile::now(); }
  if (!orthonormalize(y)) throw NumericalError("rand_svd: QR failed");
  if (prof) { g_profile.rs_qr += BuildProfile::now() - tg; tg = BuildProfile::now(); }

  DenseOperator c = y.adjoint() * b;  // p x cols projection of B
  if (prof) { g_profile.rs_gemm += BuildProfile::now() - tg; tg = BuildProfile::now(); }
  RealVector sigma(p);
  DenseOperator uc(p, p), vt(p, cols);
  const lapack_int info = LAPACKE_zgesdd(
      LAPACK_COL_MAJOR, 'S', p, cols,
      reinterpret_cast<lapack_complex_double*>(c.data()), p, sigma.data(),
      reinterpret_cast<lapack_complex_double*>(uc.data()), p,
      reinterpret_cast<lapack_complex_double*>(vt.data()), p);
  if (info != 0) throw NumericalError("rand_svd: SVD did not converge");
  if (prof) g_profile.rs_svd += BuildProfile::now() - tg;

  const double cutoff = eps * sigma(0);
  int rank = 0;
  for (int j = 0; j < p; ++j)
    if (sigma(j) >= cutoff && sigma(j) > 0.0) ++rank;
  rank = std::max(rank, 1);
  // Everything kept and p short of the full dimension: the sample may have
  // missed further directions above the cutoff.
  if (rank == p && p < std::min(rows, cols)) return false;

  out.rank = rank;
  out.sigma = sigma.head(rank);
  out.ub.noalias() = y * uc.leftCols(rank);
  out.vb_dag = vt.topRows(rank);
  return true;
}

using SingleMatrix =
    Eigen::Matrix<std::complex<float>, Eigen::Dynamic, Eigen::Dynamic>;

bool orthonormalize_s(SingleMatrix& y) {
  const lapack_int m = static_cast<lapack_int>(y.rows());
  const lapack_int p = static_cast<lapack_int>(y.cols());
  std::vector<std::complex<float>> tau(p);
  lapack_int info = LAPACKE_cgeqrf(
      LAPACK_COL_MAJOR, m, p, reinterpret_cast<lapack_complex_float*>(y.data()),
      m, reinterpret_cast<lapack_complex_float*>(tau.data()));
  if (info != 0) return false;
  info = LAPACKE_cungqr(LAPACK_COL_MAJOR, m, p, p,
                        reinterpret_cast<lapack_complex_float*>(y.data()), m,
                        reinterpret_cast<lapack_complex_float*>(tau.data()));
  return info == 0;
}

// Single-precision version of lu_stabilize (see above).
bool lu_stabilize_s(SingleMatrix& y) {
  const lapack_int m = static_cast<lapack_int>(y.rows());
  const lapack_int p = static_cast<lapack_int>(y.cols());
  SingleMatrix w = y;
  std::vector<lapack_int> ipiv(p);
  const lapack_int info = LAPACKE_cgetrf(
      LAPACK_COL_MAJOR, m, p, reinterpret_cast<lapack_complex_float*>(w.data()),
      m, ipiv.data());
  if (info != 0) return orthonormalize_s(y);
  const Eigen::VectorXf dmag = w.topRows(p).diagonal().cwiseAbs();
  if (dmag.minCoeff() < 1e-30f * dmag.maxCoeff()) return orthonormalize_s(y);
  w.topRows(p).triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(
      y);
  return true;
}

// Single-precision randomized truncated SVD with an absolute singular-value
// cutoff, used on deflated residuals whose spectrum spans at most ~7 decades
// (the single-precision range once LU stabilization prevents any squaring of
// the dynamic range). Keeps every direction with sigma >= cutoff_abs, which
// may be none. Returns false when the sample may have missed directions above
// the cutoff (same certification as the double-precision version). Factors
// are returned widened to double; their orthonormality is only single-level
// (~1e-7), fine for factors that are never inverted.
bool rand_svd_residual_s(const SingleMatrix& b, double cutoff_abs, int p,
                         BondSVD& out) {
  const int rows = static_cast<int>(b.rows());
  const int cols = static_cast<int>(b.cols());
  std::mt19937_64 rng(0x9E3779B97F4A7C15ull ^
                      (static_cast<uint64_t>(rows) << 40) ^
                      (static_cast<uint64_t>(cols) << 20) ^
                      static_cast<uint64_t>(p));
  std::normal_distribution<float> gauss;
  SingleMatrix omega(cols, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < cols; ++i)
      omega(i, j) = std::complex<float>(gauss(rng), gauss(rng));

  SingleMatrix y = b * omega;
  if (!lu_stabilize_s(y)) throw NumericalError("rand_svd: stabilization failed");
  SingleMatrix z = b.adjoint() * y;
  if (!lu_stabilize_s(z)) throw NumericalError("rand_svd: stabilization failed");
  y = b * z;
  if (!orthonormalize_s(y)) throw NumericalError("rand_svd: QR failed");

  SingleMatrix c = y.adjoint() * b;  // p x cols projection of B
  Eigen::VectorXf sigma(p);
  SingleMatrix uc(p, p), vt(p, cols);
  const lapack_int info = LAPACKE_cgesdd(
      LAPACK_COL_MAJOR, 'S', p, cols,
      reinterpret_cast<lapack_complex_float*>(c.data()), p, sigma.data(),
      reinterpret_cast<lapack_complex_float*>(uc.data()), p,
      reinterpret_cast<lapack_complex_float*>(vt.data()), p);
  if (info != 0) throw NumericalError("rand_svd: SVD did not converge");

  int rank = 0;
  for (int j = 0; j < p; ++j)
    if (static_cast<double>(sigma(j)) >= cutoff_abs && sigma(j) > 0.0f) ++rank;
  if (rank == p && p < std::min(rows, cols)) return false;

  out.rank = rank;
  if (rank > 0) {
    out.sigma = sigma.head(rank).cast<double>();
    const SingleMatrix ub = y * uc.leftCols(rank);
    out.ub = ub.cast<Complex>();
    out.vb_dag = SingleMatrix(vt.topRows(rank)).cast<Complex>();
  }
  return true;
}

// Two-level truncated SVD of a tall matrix, tuned for the forward sweep
// where the kept rank is a large fraction of the smaller dimension (so the
// Gram spectrum is needed wholesale and randomized sampling alone is
// expensive). Level 1 locates the subspace with sigma >= split via a cheap
// single-precision Gram eigensolve; since B P1 = (B V1) V1^dag holds exactly
// for any orthonormal V1, an exact double-precision QR+SVD re-factorization
// of the thin product B V1 then yields machine-accurate factors for that
// block -- single precision only chooses the subspace, it never enters the
// returned numbers. Level 2 runs the single-precision randomized SVD on the
// deflated residual B - B P1 (norm ~ split), which resolves the remaining
// range down to eps*sigma0; all of that block's weight sits at or below
// ~split, so single-precision errors there stay ~1e-7*split, below the
// cutoff. The split is chosen so both halves stay clear of their precision
// floors: the Gram squaring floor sqrt(eps_single) ~ 2e-4 above, the
// single-precision resolution eps/split ~ 3e-7 below.
bool gram_svd_fw(const DenseOperator& b, double eps, int rank_hint,
                 BondSVD& out) {
  const int m = static_cast<int>(b.rows());
  const int n = static_cast<int>(b.cols());
  const bool prof = g_profile.enabled;
  double tp = prof ? BuildProfile::now() : 0.0;
  auto tick = [&](double& acc) {
    if (prof) {
      const double t = BuildProfile::now();
      acc += t - tp;
      tp = t;
    }
  };

  const SingleMatrix bs = b.cast<std::complex<float>>();
  SingleMatrix gs(n, n);
  gs.noalias() = bs.adjoint() * bs;
  tick(g_profile.gs_gram);
  Eigen::VectorXf lam(n);
  lapack_int info = LAPACKE_cheevd(
      LAPACK_COL_MAJOR, 'V', 'L', n,
      reinterpret_cast<lapack_complex_float*>(gs.data()), n, lam.data());
  if (info != 0) throw NumericalError("gram_svd: eigensolve failed");
  // cheevd returns ascending eigenvalues; eigvec j has sigma ~ sqrt(lam(j)).
  const double sigma0_est = std::sqrt(std::max(lam(n - 1), 0.0f));
  if (sigma0_est == 0.0) throw NumericalError("gram_svd: zero spectrum");
  const double split = std::max(3e-4, eps) * sigma0_est;
  int k1 = 0;
  while (k1 < n && std::sqrt(std::max(lam(n - 1 - k1), 0.0f)) >= split) ++k1;
  k1 = std::max(k1, 1);
  tick(g_profile.gs_eig);

  // Orthonormalize the selected eigenvectors in double so P1 is an exact
  // projector; any single-precision subspace error leaks into the residual
  // and is recaptured by level 2.
  DenseOperator v1(n, k1);
  for (int j = 0; j < k1; ++j)
    v1.col(j) = gs.col(n - 1 - j).cast<Complex>();
  if (!orthonormalize(v1)) throw NumericalError("gram_svd: QR failed");

  DenseOperator t(m, k1);
  t.noalias() = b * v1;
  const bool two_level = eps < 3e-4 && k1 < n;
  DenseOperator c2;
  if (two_level) {
    c2 = b;
    c2.noalias() -= t * v1.adjoint();
  }
  tick(g_profile.gs_defl);

  // Exact thin factorization of B V1 = Qt R = Qt (Ur S1 Wr^dag).
  ComplexVector tau(k1);
  info = LAPACKE_zgeqrf(LAPACK_COL_MAJOR, m, k1,
                        reinterpret_cast<lapack_complex_double*>(t.data()), m,
                        reinterpret_cast<lapack_complex_double*>(tau.data()));
  if (info != 0) throw NumericalError("gram_svd: QR failed");
  DenseOperator r = DenseOperator::Zero(k1, k1);
  r.triangularView<Eigen::Upper>() = t.topRows(k1);
  RealVector sigma1(k1);
  DenseOperator ur(k1, k1), wrt(k1, k1);
  info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', k1, k1,
                        reinterpret_cast<lapack_complex_double*>(r.data()), k1,
                        sigma1.data(),
                        reinterpret_cast<lapack_complex_double*>(ur.data()),
                        k1,
                        reinterpret_cast<lapack_complex_double*>(wrt.data()),
                        k1);
  if (info != 0) throw NumericalError("gram_svd: SVD did not converge");
  info = LAPACKE_zungqr(LAPACK_COL_MAJOR, m, k1, k1,
                        reinterpret_cast<lapack_complex_double*>(t.data()), m,
                        reinterpret_cast<lapack_complex_double*>(tau.data()));
  if (info != 0) throw NumericalError("gram_svd: QR failed");

  const double sigma0 = sigma1(0);
  const double cutoff = eps * sigma0;
  int r1 = 0;
  for (int j = 0; j < k1; ++j)
    if (sigma1(j) >= cutoff && sigma1(j) > 0.0) ++r1;
  r1 = std::max(r1, 1);
  tick(g_profile.gs_refac);

  BondSVD tail;
  tail.rank = 0;
  if (two_level) {
    const SingleMatrix c2s = c2.cast<std::complex<float>>();
    const int kmin = std::min(m, n);
    int p = std::min(kmin, std::max(rank_hint - k1, 8) + 16);
    while (!rand_svd_residual_s(c2s, cutoff, p, tail)) {
      p = std::min(kmin, 2 * p);
      ++g_profile.rs_retries;
    }
  }
  tick(g_profile.gs_tail);
  if (prof) {
    g_profile.gs_m += m;
    g_profile.gs_n += n;
    g_profile.gs_k1 += k1;
    g_profile.gs_rank += r1 + tail.rank;
    ++g_profile.gs_calls;
  }

  out.rank = r1 + tail.rank;
  out.sigma.resize(out.rank);
  out.sigma.head(r1) = sigma1.head(r1);
  out.ub.resize(m, out.rank);
  out.ub.leftCols(r1).noalias() = t.leftCols(k1) * ur.leftCols(r1);
  out.vb_dag.resize(out.rank, n);
  out.vb_dag.topRows(r1).noalias() = wrt.topRows(r1) * v1.adjoint();
  if (tail.rank > 0) {
    out.sigma.tail(tail.rank) = tail.sigma;
    out.ub.rightCols(tail.rank) = tail.ub;
    out.vb_dag.bottomRows(tail.rank) = tail.vb_dag;
  }
  return true;
}

// Truncated SVD dispatch for the sweep hot path. rank_hint is the expected
// number of kept directions (e.g. the rank of the neighbouring bond); the
// randomized solver samples rank_hint plus a safety margin and doubles the
// sample until the tail is certified below the cutoff. eps = 0 must keep
// exact null directions and always takes the deterministic LAPACK SVD, as
// do matrices too small for sampling to pay off.
BondSVD bond_svd(const Complex* data, int rows, int cols, double eps,
                 int rank_hint = 0) {
  const Eigen::Map<const DenseOperator> bmap(data, rows, cols);
  const int k = std::min(rows, cols);
  if (eps < 1e-12 || k < 32) return from_truncated(bmap, eps);
  if (bmap.cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateCompressionError(
        "truncated_svd: all-zero matrix has no meaningful subspace");

  const bool tall = rows >= cols;
  // Work on the tall orientation; for a wide input factor B^dag and swap.
  const DenseOperator b = tall ? DenseOperator(bmap) : DenseOperator(bmap.adjoint());
  if (rank_hint < 1) rank_hint = 32;
  int p = std::min(k, rank_hint + 16);
  BondSVD out;
  try {
    ++g_profile.rs_calls;
    while (!rand_svd_tall(b, eps, p, out)) {
      p = std::min(k, 2 * p);
      ++g_profile.rs_retries;
    }
  } catch (const NumericalError&) {
    return from_truncated(bmap, eps);
  }
  if (!tall) {
    DenseOperator ub = out.vb_dag.adjoint();
    out.vb_dag = out.ub.adjoint();
    out.ub = std::move(ub);
  }
  return out;
}

// Forward-sweep variant of bond_svd. Forward truncations keep a large
// fraction of the smaller dimension (the backward sweep does the final
// tightening), which favours the Gram-based two-level solver over pure
// randomized sampling. The residual level needs eps within single-precision
// reach of the split, so thresholds below 1e-10 fall back to the
// double-precision randomized path.
BondSVD bond_svd_fw(const Complex* data, int rows, int cols, double eps,
                    int rank_hint = 0) {
  if (eps < 1e-10) return bond_svd(data, rows, cols, eps, rank_hint);
  const Eigen::Map<const DenseOperator> bmap(data, rows, cols);
  const int k = std::min(rows, cols);
  if (k < 32) return from_truncated(bmap, eps);
  if (bmap.cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateCompressionError(
        "truncated_svd: all-zero matrix has no meaningful subspace");

  const bool tall = rows >= cols;
  const DenseOperator b =
      tall ? DenseOperator(bmap) : DenseOperator(bmap.adjoint());
  if (rank_hint < 1) rank_hint = 32;
  BondSVD out;
  try {
    ++g_profile.rs_calls;
    gram_svd_fw(b, eps, rank_hint, out);
  } catch (const NumericalError&) {
    return from_truncated(bmap, eps);
  }
  if (!tall) {
    DenseOperator ub = out.vb_dag.adjoint();
    out.vb_dag = out.ub.adjoint();
    out.ub = std::move(ub);
  }
  return out;
}

}  // namespace

int PTMPO::max_bond() const {
  int m = 1;
  for (const auto& t : tensors) m = std::max(m, t.chi_out);
  return m;
}

void PTMPO::check_invariants() const {
  if (static_cast<int>(tensors.size()) != n_steps)
    throw NumericalError("PTMPO: tensor count mismatch");
  if (tensors.front().chi_in != 1 || tensors.back().chi_out != 1)
    throw NumericalError("PTMPO: boundary bonds must have dimension 1");
  for (int l = 1; l < n_steps; ++l)
    if (tensors[l].chi_in != tensors[l - 1].chi_out)
      throw NumericalError("PTMPO: adjacent bond dimensions do not match");
  for (int l = 1; l <= n_steps; ++l) {
    if (static_cast<int>(closures.trace[l - 1].size()) !=
        tensors[l - 1].chi_out)
      throw NumericalError("PTMPO: trace closure length mismatch");
    for (const auto& t : closures.observables)
      if (t.vec[l - 1].size() != closures.trace[l - 1].size())
        throw NumericalError("PTMPO: observable closure length mismatch");
  }
}

PTMPO trivial_pt(int n_steps, int d_sys, double dt) {
  if (n_steps < 1) throw ValidationError("trivial_pt: n_steps must be >= 1");
  if (d_sys < 1) throw ValidationError("trivial_pt: d_sys must be >= 1");
  if (dt <= 0.0) throw ValidationError("trivial_pt: dt must be positive");
  PTMPO pt;
  pt.n_steps = n_steps;
  pt.d_sys = d_sys;
  pt.dt = dt;
  const int d2 = d_sys * d_sys;
  Tensor4 q(1, d2, 1);
  for (int a = 0; a < d2; ++a) q.at(0, a, a, 0) = 1.0;
  pt.tensors.assign(n_steps, q);
  pt.closures = ClosureSet::trivial(n_steps);
  return pt;
}

namespace {

// Combines one mode into the PT-MPO. With eps_fw set, the forward
// compression sweep is fused into the site loop: each expanded site is
// truncated as soon as it is produced, so at most one uncompressed site is
// alive at a time (the fully expanded chain would be mode_dim^4 times
// larger than the compressed one).
void combine_mode_impl(PTMPO& pt, const ModeSpec& mode, int mode_index,
                       const double* eps_fw) {
  mode.validate(pt.d_sys);
  const int d2 = pt.d_sys * pt.d_sys;
  const int d4 = d2 * d2;
  const int m2 = mode.mode_dim * mode.mode_dim;
  const int n = pt.n_steps;

  const DenseOperator b = mode_propagator(mode, pt.d_sys, 0.5 * pt.dt);

  // E_tmp[(at,bl,a); (ap,att,bp)] = sum_bm B(at m2+bl, a m2+bm)
  //                                        B(ap m2+bm, att m2+bp)
  DenseOperator p1(d2 * m2 * d2, m2), p2(m2, d2 * d2 * m2);
  for (int at = 0; at < d2; ++at)
    for (int bl = 0; bl < m2; ++bl)
      for (int a = 0; a < d2; ++a)
        for (int bm = 0; bm < m2; ++bm)
          p1((at * m2 + bl) * d2 + a, bm) = b(at * m2 + bl, a * m2 + bm);
  for (int bm = 0; bm < m2; ++bm)
    for (int ap = 0; ap < d2; ++ap)
      for (int att = 0; att < d2; ++att)
        for (int bp = 0; bp < m2; ++bp)
          p2(bm, (ap * d2 + att) * m2 + bp) = b(ap * m2 + bm, att * m2 + bp);
  const DenseOperator e_tmp = p1 * p2;

  const ComplexVector w = vectorize(mode.initial_state);
  const ComplexVector tr = trace_covector(mode.mode_dim);

  // Per-site contraction kernels over the outer system indices:
  // rows combine (a_out=(at,att)) with the expanded mode indices, columns
  // are the old outer pair (a,ap).
  auto e_entry = [&](int at, int att, int bl, int bp, int a, int ap) {
    return e_tmp((at * m2 + bl) * d2 + a, (ap * d2 + att) * m2 + bp);
  };

  DenseOperator e_bulk, e_bulk2, e_first, e_last, e_single;
  if (n > 1) {
    e_bulk.resize(d4 * m2 * m2, d4);
    // Regrouping of the same kernel used by the fused bulk update below:
    // rows pair the outer index with the kept mode index bl, columns pair
    // the absorbed mode index bp with the old outer pair.
    e_bulk2.resize(d4 * m2, m2 * d4);
    for (int at = 0; at < d2; ++at)
      for (int att = 0; att < d2; ++att)
        for (int bl = 0; bl < m2; ++bl)
          for (int bp = 0; bp < m2; ++bp)
            for (int a = 0; a < d2; ++a)
              for (int ap = 0; ap < d2; ++ap) {
                const Complex v = e_entry(at, att, bl, bp, a, ap);
                e_bulk(((at * d2 + att) * m2 + bl) * m2 + bp, a * d2 + ap) =
                    v;
                e_bulk2((at * d2 + att) * m2 + bl,
                        bp * d4 + a * d2 + ap) = v;
              }
    e_first = DenseOperator::Zero(d4 * m2, d4);
    e_last = DenseOperator::Zero(d4 * m2, d4);
    for (int at = 0; at < d2; ++at)
      for (int att = 0; att < d2; ++att)
        for (int bl = 0; bl < m2; ++bl)
          for (int bp = 0; bp < m2; ++bp)
            for (int a = 0; a < d2; ++a)
              for (int ap = 0; ap < d2; ++ap) {
                const Complex v = e_entry(at, att, bl, bp, a, ap);
                e_first((at * d2 + att) * m2 + bl, a * d2 + ap) += v * w(bp);
                e_last((at * d2 + att) * m2 + bp, a * d2 + ap) += v * tr(bl);
              }
  } else {
    e_single = DenseOperator::Zero(d4, d4);
    for (int at = 0; at < d2; ++at)
      for (int att = 0; att < d2; ++att)
        for (int bl = 0; bl < m2; ++bl)
          for (int bp = 0; bp < m2; ++bp)
            for (int a = 0; a < d2; ++a)
              for (int ap = 0; ap < d2; ++ap)
                e_single(at * d2 + att, a * d2 + ap) +=
                    tr(bl) * e_entry(at, att, bl, bp, a, ap) * w(bp);
  }

  expand_with_mode(pt.closures, mode, mode_index);

  DenseOperator t_inv;  // pending transform from the last truncated bond
  for (int l = 1; l <= n; ++l) {
    const double t0 = g_profile.enabled ? BuildProfile::now() : 0.0;
    const Tensor4& q = pt.tensors[l - 1];
    const int chi_l = q.chi_out, chi_r = q.chi_in;
    const bool fused_bulk =
        eps_fw != nullptr && l > 1 && l < n && t_inv.size() > 0;

    Tensor4 out;
    if (fused_bulk) {
      // Bulk update with the pending bond transform contracted first, over
      // the old (un-expanded) bond: this shrinks both the permutes and the
      // absorption product by a factor of m2 compared to expanding and
      // absorbing separately.
      const int rank = static_cast<int>(t_inv.cols());
      // t_inv rows run over (old bond, absorbed mode index bp); regroup so
      // the old bond is the contraction dimension of a single product.
      DenseOperator trs(chi_r, m2 * rank);
      for (int rp = 0; rp < rank; ++rp)
        for (int dr = 0; dr < chi_r; ++dr)
          for (int bp = 0; bp < m2; ++bp)
            trs(dr, bp * rank + rp) = t_inv(dr * m2 + bp, rp);
      const Eigen::Map<const DenseOperator> mq(q.data.data(), chi_r,
                                               chi_l * d4);
      const DenseOperator y = mq.transpose() * trs;  // (chi_l*d4, m2*rank)
      DenseOperator z(m2 * d4, chi_l * rank);
      for (int d = 0; d < chi_l; ++d)
        for (int bp = 0; bp < m2; ++bp)
          for (int a = 0; a < d4; ++a)
            for (int rp = 0; rp < rank; ++rp)
              z(bp * d4 + a, d * rank + rp) = y(d * d4 + a, bp * rank + rp);
      const DenseOperator pmat = e_bulk2 * z;  // (d4*m2, chi_l*rank)
      out = Tensor4(chi_l * m2, d2, rank);
      for (int d = 0; d < chi_l; ++d)
        for (int bl = 0; bl < m2; ++bl)
          for (int a = 0; a < d4; ++a)
            for (int rp = 0; rp < rank; ++rp)
              out.data[(((d * m2 + bl) * d4) + a) * rank + rp] =
                  pmat(a * m2 + bl, d * rank + rp);
    } else {
      DenseOperator qmat(d4, chi_l * chi_r);
      for (int d = 0; d < chi_l; ++d)
        for (int a = 0; a < d4; ++a)
          for (int dr = 0; dr < chi_r; ++dr)
            qmat(a, d * chi_r + dr) = q.at(d, a / d2, a % d2, dr);
      if (n == 1) {
        DenseOperator r = e_single * qmat;
      out = Tensor4(chi_l, d2, chi_r);
      for (int a = 0; a < d4; ++a)
        for (int d = 0; d < chi_l; ++d)
          for (int dr = 0; dr < chi_r; ++dr)
            out.at(d, a / d2, a % d2, dr) = r(a, d * chi_r + dr);
    } else if (l == 1) {
      DenseOperator r = e_first * qmat;
      out = Tensor4(chi_l * m2, d2, chi_r);
      for (int a = 0; a < d4; ++a)
        for (int bl = 0; bl < m2; ++bl)
          for (int d = 0; d < chi_l; ++d)
            for (int dr = 0; dr < chi_r; ++dr)
              out.at(d * m2 + bl, a / d2, a % d2, dr) =
                  r(a * m2 + bl, d * chi_r + dr);
    } else if (l == n) {
      DenseOperator r = e_last * qmat;
      out = Tensor4(chi_l, d2, chi_r * m2);
      for (int a = 0; a < d4; ++a)
        for (int bp = 0; bp < m2; ++bp)
          for (int d = 0; d < chi_l; ++d)
            for (int dr = 0; dr < chi_r; ++dr)
              out.at(d, a / d2, a % d2, dr * m2 + bp) =
                  r(a * m2 + bp, d * chi_r + dr);
    } else {
      DenseOperator r = e_bulk * qmat;
      out = Tensor4(chi_l * m2, d2, chi_r * m2);
      for (int a = 0; a < d4; ++a)
        for (int bl = 0; bl < m2; ++bl)
          for (int bp = 0; bp < m2; ++bp)
            for (int d = 0; d < chi_l; ++d)
              for (int dr = 0; dr < chi_r; ++dr)
                out.at(d * m2 + bl, a / d2, a % d2, dr * m2 + bp) =
                    r((a * m2 + bl) * m2 + bp, d * chi_r + dr);
      }
    }
    if (g_profile.enabled) g_profile.expand += BuildProfile::now() - t0;
    if (eps_fw != nullptr) {
      const double t1 = g_profile.enabled ? BuildProfile::now() : 0.0;
      // Absorb the transform left over from truncating the previous bond
      // (the fused bulk path has already contracted it in).
      if (!fused_bulk && t_inv.size() > 0) {
        const int rank = static_cast<int>(t_inv.cols());
        Tensor4 nu(out.chi_out, out.d2, rank);
        Eigen::Map<DenseOperator>(nu.data.data(), rank, out.chi_out * d4) =
            t_inv.transpose() *
            Eigen::Map<const DenseOperator>(out.data.data(), out.chi_in,
                                            out.chi_out * d4);
        out = std::move(nu);
      }
      const double t2 = g_profile.enabled ? BuildProfile::now() : 0.0;
      if (g_profile.enabled) g_profile.absorb += t2 - t1;
      if (l < n) {
        BondSVD svd;
        try {
          const int hint = t_inv.size() > 0 ? static_cast<int>(t_inv.cols())
                                            : out.chi_out;
          svd = bond_svd_fw(out.data.data(), d4 * out.chi_in, out.chi_out,
                            *eps_fw, hint);
        } catch (const DegenerateCompressionError& e) {
          throw DegenerateCompressionError("forward sweep, step " +
                                           std::to_string(l) + ": " +
                                           e.what());
        }
        Tensor4 vt(svd.rank, out.d2, out.chi_in);
        Eigen::Map<DenseOperator>(vt.data.data(), d4 * out.chi_in,
                                  svd.rank) = svd.ub;
        t_inv = svd.vb_dag.transpose() * svd.sigma.asDiagonal();
        apply_bond_transform(pt.closures, l, t_inv);
        out = std::move(vt);
        if (g_profile.enabled) g_profile.fw_svd += BuildProfile::now() - t2;
      }
    }
    pt.tensors[l - 1] = std::move(out);
  }

  pt.check_invariants();
}

}  // namespace

void combine_mode(PTMPO& pt, const ModeSpec& mode, int mode_index) {
  combine_mode_impl(pt, mode, mode_index, nullptr);
}

// Both sweeps work on the column-major view B of each row-major unfolding A
// (A = B^T shares the buffer): for A = U S V^dag and B = Ub S Vb^dag the
// factors relate as U = conj(Vb), V^dag = Ub^T. All products below are
// phrased on the column-major side so they run as plain GEMMs.
void sweep_forward(PTMPO& pt, double eps) {
  const int d4 = pt.tensors.front().d2 * pt.tensors.front().d2;
  int hint = 0;
  for (int l = 1; l <= pt.n_steps - 1; ++l) {
    Tensor4& t = pt.tensors[l - 1];
    // A = (chi_out x d4*chi_in): B = Map(d4*chi_in, chi_out).
    BondSVD svd;
    try {
      svd = bond_svd_fw(t.data.data(), d4 * t.chi_in, t.chi_out, eps, hint);
    } catch (const DegenerateCompressionError& e) {
      throw DegenerateCompressionError("forward sweep, step " +
                                       std::to_string(l) + ": " + e.what());
    }
    hint = svd.rank;
    // Q_l <- V^dag = Ub^T: its column-major view equals Ub.
    Tensor4 vt(svd.rank, t.d2, t.chi_in);
    Eigen::Map<DenseOperator>(vt.data.data(), d4 * t.chi_in, svd.rank) =
        svd.ub;

    // T^{-1} = U sigma = Vb^T sigma, absorbed into Q_{l+1}'s right bond:
    // column-major view of the result is T^{-1T} x (column-major view).
    const DenseOperator t_inv =
        svd.vb_dag.transpose() * svd.sigma.asDiagonal();
    Tensor4& u = pt.tensors[l];
    Tensor4 nu(u.chi_out, u.d2, svd.rank);
    Eigen::Map<DenseOperator>(nu.data.data(), svd.rank, u.chi_out * d4) =
        t_inv.transpose() *
        Eigen::Map<const DenseOperator>(u.data.data(), u.chi_in,
                                        u.chi_out * d4);
    pt.tensors[l - 1] = std::move(vt);
    pt.tensors[l] = std::move(nu);

    apply_bond_transform(pt.closures, l, t_inv);
  }
  pt.check_invariants();
}

void sweep_backward(PTMPO& pt, double eps) {
  const int d4 = pt.tensors.front().d2 * pt.tensors.front().d2;
  int hint = 0;
  for (int l = pt.n_steps; l >= 2; --l) {
    const double t0 = g_profile.enabled ? BuildProfile::now() : 0.0;
    Tensor4& t = pt.tensors[l - 1];
    // A = (chi_out*d4 x chi_in): B = Map(chi_in, chi_out*d4).
    BondSVD svd;
    try {
      svd = bond_svd(t.data.data(), t.chi_in, t.chi_out * d4, eps, hint);
    } catch (const DegenerateCompressionError& e) {
      throw DegenerateCompressionError("backward sweep, step " +
                                       std::to_string(l) + ": " + e.what());
    }
    hint = svd.rank;
    const double t1 = g_profile.enabled ? BuildProfile::now() : 0.0;
    if (g_profile.enabled) g_profile.bw_svd += t1 - t0;

    // The kept site tensor is Vb^dag; the factor absorbed into the previous
    // site is A = Ub sigma, and the closures need the transpose-pseudoinverse
    // of A, i.e. the solution of A^T t_inv = I, which for an orthonormal Ub
    // is conj(Ub) sigma^{-1}.
    const DenseOperator absorb = svd.ub * svd.sigma.asDiagonal();
    const DenseOperator t_inv =
        svd.ub.conjugate() * svd.sigma.cwiseInverse().asDiagonal();

    Tensor4 ut(t.chi_out, t.d2, svd.rank);
    Eigen::Map<DenseOperator>(ut.data.data(), svd.rank, t.chi_out * d4) =
        svd.vb_dag;

    // Q_{l-1} is right-multiplied by the absorbed factor on the
    // column-major side.
    Tensor4& p = pt.tensors[l - 2];
    Tensor4 np(svd.rank, p.d2, p.chi_in);
    Eigen::Map<DenseOperator>(np.data.data(), d4 * p.chi_in, svd.rank) =
        Eigen::Map<const DenseOperator>(p.data.data(), d4 * p.chi_in,
                                        p.chi_out) *
        absorb;
    pt.tensors[l - 1] = std::move(ut);
    pt.tensors[l - 2] = std::move(np);

    apply_bond_transform(pt.closures, l - 1, t_inv);
    if (g_profile.enabled) g_profile.bw_rest += BuildProfile::now() - t1;
  }
  pt.check_invariants();
}

PTMPO build_ace(const std::vector<ModeSpec>& modes, int n_steps, int d_sys,
                double dt, double eps,
                const std::vector<ObservableSpec>& observables) {
  return build_ace(modes, n_steps, d_sys, dt, BuildOptions{eps, eps},
                   observables);
}

PTMPO build_ace(const std::vector<ModeSpec>& modes, int n_steps, int d_sys,
                double dt, const BuildOptions& opts,
                const std::vector<ObservableSpec>& observables) {
  PTMPO pt = trivial_pt(n_steps, d_sys, dt);
  for (const auto& obs : observables) pt.closures.add_observable(obs);
  for (size_t k = 0; k < modes.size(); ++k) {
    try {
      combine_mode_impl(pt, modes[k], static_cast<int>(k), &opts.eps_fw);
      sweep_backward(pt, opts.eps_bw);
    } catch (const std::runtime_error& e) {
      throw NumericalError("build_ace: mode " + std::to_string(k) + ": " +
                           e.what());
    }
    pt.peak_bond_per_mode.push_back(pt.max_bond());
  }
  g_profile.report();
  return pt;
}

namespace {

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_complex(std::ostream& os, const Complex* p, size_t count) {
  os.write(reinterpret_cast<const char*>(p), count * sizeof(Complex));
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
void read_complex(std::istream& is, Complex* p, size_t count) {
  is.read(reinterpret_cast<char*>(p), count * sizeof(Complex));
}

}  // namespace

void save_ptmpo(const PTMPO& pt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("save_ptmpo: cannot open " + path);
  os.write("PTM1", 4);
  write_u64(os, pt.n_steps);
  write_u64(os, pt.d_sys);
  write_f64(os, pt.dt);
  for (const auto& t : pt.tensors) {
    write_u64(os, t.chi_out);
    write_u64(os, t.chi_in);
    write_complex(os, t.data.data(), t.data.size());
  }
  for (const auto& q : pt.closures.trace) {
    write_u64(os, q.size());
    write_complex(os, q.data(), q.size());
  }
  write_u64(os, pt.closures.observables.size());
  for (const auto& o : pt.closures.observables) {
    write_u64(os, o.spec.name.size());
    os.write(o.spec.name.data(), o.spec.name.size());
    write_complex(os, o.spec.system_part.data(), o.spec.system_part.size());
    write_u64(os, o.spec.fermionic_string ? 1 : 0);
    write_complex(os, &o.initial_env_value, 1);
    for (const auto& v : o.vec) {
      write_u64(os, v.size());
      write_complex(os, v.data(), v.size());
    }
  }
  write_u64(os, pt.peak_bond_per_mode.size());
  for (int b : pt.peak_bond_per_mode) write_u64(os, b);
  if (!os) throw ConfigError("save_ptmpo: write failed for " + path);
}

PTMPO load_ptmpo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("load_ptmpo: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PTM1", 4) != 0)
    throw ValidationError("load_ptmpo: bad magic");
  PTMPO pt;
  pt.n_steps = static_cast<int>(read_u64(is));
  pt.d_sys = static_cast<int>(read_u64(is));
  pt.dt = read_f64(is);
  if (pt.n_steps < 1 || pt.d_sys < 1 || !(pt.dt > 0))
    throw ValidationError("load_ptmpo: invalid header");
  const int d2 = pt.d_sys * pt.d_sys;
  pt.tensors.resize(pt.n_steps);
  for (auto& t : pt.tensors) {
    t.chi_out = static_cast<int>(read_u64(is));
    t.chi_in = static_cast<int>(read_u64(is));
    t.d2 = d2;
    if (t.chi_out < 1 || t.chi_in < 1)
      throw ValidationError("load_ptmpo: invalid bond dimension");
    t.data.resize(size_t(t.chi_out) * d2 * d2 * t.chi_in);
    read_complex(is, t.data.data(), t.data.size());
  }
  pt.closures.n_steps = pt.n_steps;
  pt.closures.trace.resize(pt.n_steps);
  for (auto& q : pt.closures.trace) {
    q.resize(read_u64(is));
    read_complex(is, q.data(), q.size());
  }
  const uint64_t n_obs = read_u64(is);
  for (uint64_t i = 0; i < n_obs; ++i) {
    ClosureSet::Tracked o;
    std::string name(read_u64(is), '\0');
    is.read(name.data(), name.size());
    o.spec.name = name;
    o.spec.system_part.resize(pt.d_sys, pt.d_sys);
    read_complex(is, o.spec.system_part.data(), o.spec.system_part.size());
    o.spec.fermionic_string = read_u64(is) != 0;
    read_complex(is, &o.initial_env_value, 1);
    o.vec.resize(pt.n_steps);
    for (auto& v : o.vec) {
      v.resize(read_u64(is));
      read_complex(is, v.data(), v.size());
    }
    pt.closures.observables.push_back(std::move(o));
  }
  const uint64_t n_peak = read_u64(is);
  for (uint64_t i = 0; i < n_peak; ++i)
    pt.peak_bond_per_mode.push_back(static_cast<int>(read_u64(is)));
  if (!is) throw ValidationError("load_ptmpo: truncated file");
  for (const auto& t : pt.tensors)
    for (const Complex& c : t.data)
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw ValidationError("load_ptmpo: non-finite tensor entry");
  pt.check_invariants();
  return pt;
}

}  // namespace ptmpo
