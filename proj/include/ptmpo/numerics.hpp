#pragma once

#include "ptmpo/dense.hpp"

namespace ptmpo {

// Result of a relative-threshold truncated SVD, a = u * diag(sigma) * v_dag.
// Columns of u and rows of v_dag are orthonormal; sigma is sorted descending.
struct TruncatedSVD {
  DenseOperator u;      // rows x rank
  RealVector sigma;     // rank
  DenseOperator v_dag;  // rank x cols
  int rank = 0;
};

// Keeps singular values sigma_j >= eps_rel * sigma_0 (at least one).
// Throws DegenerateCompressionError on an all-zero matrix.
TruncatedSVD truncated_svd(const DenseOperator& a, double eps_rel);

// Matrix exponential e^m (scaling-and-squaring Pade).
DenseOperator matrix_exp(const DenseOperator& m);

// OpenBLAS picks its kernels from the CPUID model at library load, and on
// virtual machines with a generic model string it falls back to slow
// pre-AVX code paths. If OPENBLAS_CORETYPE is unset and the CPU supports
// AVX2/AVX-512, set it and re-exec the current binary so the choice takes
// effect; otherwise this is a no-op. Call first thing in main().
void ensure_fast_blas(char** argv);

}  // namespace ptmpo
