#include "asmr/linalg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>

#include "asmr/errors.hpp"

namespace asmr {

namespace {

std::atomic<bool> g_parallel{true};

void require(bool ok, const char* what) {
    if (!ok) throw NumericError(std::string("linalg: ") + what);
}

}  // namespace

void set_parallel_kernels(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_kernels() { return g_parallel.load(std::memory_order_relaxed); }

void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    require(A.cols == B.cols, "gemm_nt inner dimension mismatch");
    require(C.rows == A.rows && C.cols == B.rows, "gemm_nt output shape mismatch");
    const std::int64_t m = static_cast<std::int64_t>(A.rows);
    const std::int64_t n = static_cast<std::int64_t>(B.rows);
    const std::int64_t k = static_cast<std::int64_t>(A.cols);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* a = A.row(static_cast<std::size_t>(i));
        double* c = C.row(static_cast<std::size_t>(i));
        for (std::int64_t j = 0; j < n; ++j) {
            const double* b = B.row(static_cast<std::size_t>(j));
            double acc = 0.0;
            for (std::int64_t t = 0; t < k; ++t) acc += a[t] * b[t];
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

void gemm_nn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    require(A.cols == B.rows, "gemm_nn inner dimension mismatch");
    require(C.rows == A.rows && C.cols == B.cols, "gemm_nn output shape mismatch");
    const std::int64_t m = static_cast<std::int64_t>(A.rows);
    const std::int64_t n = static_cast<std::int64_t>(B.cols);
    const std::int64_t k = static_cast<std::int64_t>(A.cols);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* a = A.row(static_cast<std::size_t>(i));
        double* c = C.row(static_cast<std::size_t>(i));
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < k; ++t) acc += a[t] * B.data[static_cast<std::size_t>(t) * B.cols + static_cast<std::size_t>(j)];
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    require(A.rows == B.rows, "gemm_tn inner dimension mismatch");
    require(C.rows == A.cols && C.cols == B.cols, "gemm_tn output shape mismatch");
    const std::int64_t p = static_cast<std::int64_t>(A.cols);
    const std::int64_t n = static_cast<std::int64_t>(B.cols);
    const std::int64_t m = static_cast<std::int64_t>(A.rows);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && p > 1)
    for (std::int64_t i = 0; i < p; ++i) {
        double* c = C.row(static_cast<std::size_t>(i));
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < m; ++t)
                acc += A.data[static_cast<std::size_t>(t) * A.cols + static_cast<std::size_t>(i)] *
                       B.data[static_cast<std::size_t>(t) * B.cols + static_cast<std::size_t>(j)];
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

void add_row_vector(Matrix& Z, const Vec& b) {
    require(Z.cols == b.size(), "add_row_vector width mismatch");
    const std::int64_t m = static_cast<std::int64_t>(Z.rows);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        double* z = Z.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < Z.cols; ++j) z[j] += b[j];
    }
}

void relu(const Matrix& Z, Matrix& A) {
    require(Z.same_shape(A), "relu shape mismatch");
    const std::int64_t m = static_cast<std::int64_t>(Z.rows);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* z = Z.row(static_cast<std::size_t>(i));
        double* a = A.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < Z.cols; ++j) a[j] = z[j] > 0.0 ? z[j] : 0.0;
    }
}

void relu_backward(const Matrix& Z, const Matrix& dA, Matrix& dZ) {
    require(Z.same_shape(dA) && Z.same_shape(dZ), "relu_backward shape mismatch");
    const std::int64_t m = static_cast<std::int64_t>(Z.rows);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* z = Z.row(static_cast<std::size_t>(i));
        const double* up = dA.row(static_cast<std::size_t>(i));
        double* out = dZ.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < Z.cols; ++j) out[j] = z[j] > 0.0 ? up[j] : 0.0;
    }
}

void rows_l2_normalize(const Matrix& Z, Matrix& F, Vec& norms) {
    require(Z.same_shape(F), "normalize shape mismatch");
    norms.assign(Z.rows, 0.0);
    const std::int64_t m = static_cast<std::int64_t>(Z.rows);
    const bool par = parallel_kernels();
    std::atomic<bool> zero_row{false};
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* z = Z.row(static_cast<std::size_t>(i));
        double* f = F.row(static_cast<std::size_t>(i));
        double sq = 0.0;
        for (std::size_t j = 0; j < Z.cols; ++j) sq += z[j] * z[j];
        const double n = std::sqrt(sq);
        if (n == 0.0) {
            zero_row.store(true, std::memory_order_relaxed);
            continue;
        }
        norms[static_cast<std::size_t>(i)] = n;
        for (std::size_t j = 0; j < Z.cols; ++j) f[j] = z[j] / n;
    }
    if (zero_row.load())
        throw NumericError("l2 normalization of a zero vector: degenerate encoder state");
}

void rows_l2_normalize_backward(const Matrix& F, const Vec& norms, const Matrix& dF, Matrix& dZ) {
    require(F.same_shape(dF) && F.same_shape(dZ), "normalize_backward shape mismatch");
    require(norms.size() == F.rows, "normalize_backward norms size mismatch");
    const std::int64_t m = static_cast<std::int64_t>(F.rows);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* f = F.row(static_cast<std::size_t>(i));
        const double* up = dF.row(static_cast<std::size_t>(i));
        double* out = dZ.row(static_cast<std::size_t>(i));
        double proj = 0.0;
        for (std::size_t j = 0; j < F.cols; ++j) proj += f[j] * up[j];
        const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < F.cols; ++j) out[j] = (up[j] - proj * f[j]) * inv;
    }
}

void col_sums(const Matrix& dZ, Vec& db, bool accumulate) {
    require(db.size() == dZ.cols, "col_sums width mismatch");
    const std::int64_t n = static_cast<std::int64_t>(dZ.cols);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && n > 1)
    for (std::int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dZ.rows; ++i) acc += dZ.data[i * dZ.cols + static_cast<std::size_t>(j)];
        db[static_cast<std::size_t>(j)] = accumulate ? db[static_cast<std::size_t>(j)] + acc : acc;
    }
}

double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dot length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(const Vec& a) {
    double sq = 0.0;
    for (double v : a) sq += v * v;
    return std::sqrt(sq);
}

void axpy(double alpha, const Vec& x, Vec& y) {
    require(x.size() == y.size(), "axpy length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double sorted_sum(std::vector<double>&& terms) {
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double v : terms) acc += v;
    return acc;
}

bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.data); }

}  // namespace asmr
