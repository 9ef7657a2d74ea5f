#pragma once

#include "lrsl/linalg/matrix.hpp"

#include <vector>

namespace lrsl::linalg {

/// Thin SVD w = u * diag(sigma) * v^T with k = min(m, n).
///
/// sigma is sorted descending. For every column pair the entry of u_i with the
/// largest magnitude (lowest row on ties) is non-negative; v_i carries the sign.
struct SvdFactorization {
    Matrix u;                  // m x k
    std::vector<double> sigma; // k
    Matrix v;                  // n x k

    std::size_t rank_capacity() const noexcept { return sigma.size(); }
};

struct SvdOptions {
    int max_sweeps = 60;
    double tolerance = 1e-12;
};

/// One-sided Jacobi SVD. Deterministic: identical inputs give bit-identical output.
/// Throws ConvergenceError if the sweep cap is reached.
SvdFactorization svd(const Matrix& w, const SvdOptions& options = {});

/// Column block [lo, hi) of a factorization.
struct SvdSlice {
    Matrix u;                  // m x (hi - lo)
    Matrix v;                  // n x (hi - lo)
    std::vector<double> sigma; // hi - lo
};

SvdSlice truncate(const SvdFactorization& f, std::size_t lo, std::size_t hi);

/// u * diag(sigma) * v^T.
Matrix recompose(const Matrix& u, std::span<const double> sigma, const Matrix& v);
Matrix recompose(const SvdSlice& slice);
Matrix recompose(const SvdFactorization& f);

} // namespace lrsl::linalg
