#include "ptmpo/numerics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <lapacke.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <vector>

namespace ptmpo {

TruncatedSVD truncated_svd(const DenseOperator& a, double eps_rel) {
  if (a.rows() < 1 || a.cols() < 1)
    throw DimensionError("truncated_svd: empty matrix");
  if (eps_rel < 0.0 || eps_rel >= 1.0)
    throw ValidationError("truncated_svd: eps_rel must be in [0,1)");
  if (a.cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateCompressionError(
        "truncated_svd: all-zero matrix has no meaningful subspace");

  const lapack_int m = static_cast<lapack_int>(a.rows());
  const lapack_int n = static_cast<lapack_int>(a.cols());
  const lapack_int k = std::min(m, n);

  DenseOperator work = a;  // column-major, overwritten by zgesdd
  RealVector sigma(k);
  DenseOperator u(m, k), vt(k, n);
  lapack_int info = LAPACKE_zgesdd(
      LAPACK_COL_MAJOR, 'S', m, n,
      reinterpret_cast<lapack_complex_double*>(work.data()), m, sigma.data(),
      reinterpret_cast<lapack_complex_double*>(u.data()), m,
      reinterpret_cast<lapack_complex_double*>(vt.data()), k);
  if (info != 0) {
    // zgesdd occasionally fails to converge; zgesvd is slower but sturdier.
    work = a;
    std::vector<double> superb(std::max<lapack_int>(1, k - 1));
    info = LAPACKE_zgesvd(
        LAPACK_COL_MAJOR, 'S', 'S', m, n,
        reinterpret_cast<lapack_complex_double*>(work.data()), m, sigma.data(),
        reinterpret_cast<lapack_complex_double*>(u.data()), m,
        reinterpret_cast<lapack_complex_double*>(vt.data()), k, superb.data());
    if (info != 0) throw NumericalError("truncated_svd: SVD did not converge");
  }

  const double cutoff = eps_rel * sigma(0);
  int rank = 0;
  for (int j = 0; j < k; ++j)
    if (sigma(j) >= cutoff && sigma(j) > 0.0) ++rank;
  rank = std::max(rank, 1);  // bonds must never be empty

  TruncatedSVD out;
  out.rank = rank;
  out.u = u.leftCols(rank);
  out.sigma = sigma.head(rank);
  out.v_dag = vt.topRows(rank);
  return out;
}

void ensure_fast_blas(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  const char* core = nullptr;
  if (__builtin_cpu_supports("avx512f"))
    core = "SKYLAKEX";
  else if (__builtin_cpu_supports("avx2"))
    core = "HASWELL";
  if (core == nullptr || argv == nullptr) return;
  setenv("OPENBLAS_CORETYPE", core, 1);
  execv("/proc/self/exe", argv);
  // exec only returns on failure; continue with the conservative kernels.
}

DenseOperator matrix_exp(const DenseOperator& m) {
  if (m.rows() != m.cols())
    throw DimensionError("matrix_exp: matrix must be square");
  return m.exp();
}

}  // namespace ptmpo
