#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace ptmpo {

using Complex = std::complex<double>;
using DenseOperator = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateCompressionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline DenseOperator dagger(const DenseOperator& a) { return a.adjoint(); }

inline DenseOperator kron(const DenseOperator& a, const DenseOperator& b) {
  DenseOperator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline bool is_hermitian(const DenseOperator& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline bool all_finite(const DenseOperator& a) { return a.allFinite(); }

// Pauli matrices and spin-1/2 ladder operators in the basis (|0>, |1>).
inline DenseOperator pauli_x() {
  DenseOperator m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline DenseOperator pauli_y() {
  DenseOperator m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}
inline DenseOperator pauli_z() {
  DenseOperator m(2, 2);
  m << -1, 0, 0, 1;  // |0> is the lower state: sigma_z = 2 n - 1
  return m;
}
inline DenseOperator sigma_plus() {
  DenseOperator m = DenseOperator::Zero(2, 2);
  m(1, 0) = 1;  // |1><0|
  return m;
}
inline DenseOperator sigma_minus() {
  DenseOperator m = DenseOperator::Zero(2, 2);
  m(0, 1) = 1;
  return m;
}

// Truncated bosonic ladder on n_max+1 levels.
inline DenseOperator boson_annihilation(int dim) {
  DenseOperator a = DenseOperator::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}
inline DenseOperator boson_number(int dim) {
  DenseOperator n = DenseOperator::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = k;
  return n;
}

}  // namespace ptmpo
