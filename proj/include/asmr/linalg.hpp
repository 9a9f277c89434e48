#pragma once

#include <cstddef>
#include <vector>

namespace asmr {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    void fill(double v) { data.assign(data.size(), v); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Every kernel below has one arithmetic definition: each output element is a
// serial loop evaluated entirely by one thread. The OpenMP path only changes
// which thread owns an element, so serial and parallel results are
// bit-identical for any thread count. set_parallel_kernels(false) selects the
// plain-loop reference path (used by tests and the benchmark).
void set_parallel_kernels(bool on);
bool parallel_kernels();

// C = A * B^T          A: m x k, B: n x k  -> C: m x n
void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);
// C = A * B            A: m x k, B: k x n  -> C: m x n
void gemm_nn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);
// C = A^T * B          A: m x p, B: m x n  -> C: p x n
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);

// Z[i,:] += b for every row i
void add_row_vector(Matrix& Z, const Vec& b);
// A = max(Z, 0) elementwise
void relu(const Matrix& Z, Matrix& A);
// dZ = dA where Z > 0, else 0
void relu_backward(const Matrix& Z, const Matrix& dA, Matrix& dZ);
// F[i,:] = Z[i,:] / |Z[i,:]|; throws NumericError on a zero row. norms gets |Z[i,:]|.
void rows_l2_normalize(const Matrix& Z, Matrix& F, Vec& norms);
// dZ[i,:] = (dF[i,:] - <F[i,:], dF[i,:]> F[i,:]) / norms[i]
void rows_l2_normalize_backward(const Matrix& F, const Vec& norms, const Matrix& dF, Matrix& dZ);
// db[j] (+)= sum_i dZ[i,j]
void col_sums(const Matrix& dZ, Vec& db, bool accumulate = false);

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

// Sum after sorting ascending: the result depends only on the multiset of
// terms, not on their arrival order. Used where value-level permutation
// invariance must hold exactly. Consumes the scratch vector.
double sorted_sum(std::vector<double>&& terms);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

}  // namespace asmr
