#include "lrsl/linalg/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lrsl::linalg {

namespace {

double dot(std::span<const double> x, std::span<const double> y) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

// Gram-Schmidt completion of rows [first, k) of `basis` (rows are basis
// vectors). Each new row is the canonical vector with the largest residual
// against the rows before it, orthogonalised twice.
void complete_basis(Matrix& basis, std::size_t first) {
    const std::size_t k = basis.rows();
    const std::size_t dim = basis.cols();
    auto residual_of = [&](std::size_t candidate, std::size_t upto) {
        std::vector<double> e(dim, 0.0);
        e[candidate] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < upto; ++i) {
                auto bi = basis.row(i);
                const double proj = dot(bi, e);
                for (std::size_t t = 0; t < dim; ++t) {
                    e[t] -= proj * bi[t];
                }
            }
        }
        return e;
    };
    for (std::size_t j = first; j < k; ++j) {
        std::size_t best = 0;
        double best_norm = -1.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const auto e = residual_of(c, j);
            const double norm = std::sqrt(dot(e, e));
            if (norm > best_norm) {
                best_norm = norm;
                best = c;
            }
        }
        const auto e = residual_of(best, j);
        auto bj = basis.row(j);
        for (std::size_t t = 0; t < dim; ++t) {
            bj[t] = e[t] / best_norm;
        }
    }
}

struct TallSvd {
    Matrix left_rows;  // k x m, row i is the i-th left singular vector
    Matrix right_rows; // k x n
    std::vector<double> sigma;
};

// One-sided Jacobi on a tall (m >= n) matrix. Works on columns stored as rows.
TallSvd jacobi_tall(const Matrix& a, const SvdOptions& options) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix cols = a.transpose();      // n x m
    Matrix rot = Matrix::identity(n); // row j = j-th column of V

    bool converged = false;
    double residual = 0.0;
    for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
        converged = true;
        residual = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto gp = cols.row(p);
                auto gq = cols.row(q);
                const double alpha = dot(gp, gp);
                const double beta = dot(gq, gq);
                const double gamma = dot(gp, gq);
                const double scale = std::sqrt(alpha * beta);
                if (gamma == 0.0 || std::abs(gamma) <= options.tolerance * scale) {
                    continue;
                }
                residual = std::max(residual, scale > 0.0 ? std::abs(gamma) / scale : std::abs(gamma));
                converged = false;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = gp[i];
                    const double y = gq[i];
                    gp[i] = c * x - s * y;
                    gq[i] = s * x + c * y;
                }
                auto vp = rot.row(p);
                auto vq = rot.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "svd: one-sided Jacobi did not converge after " << options.max_sweeps
            << " sweeps (max relative off-diagonal " << residual << ")";
        throw ConvergenceError(msg.str(), residual);
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = std::sqrt(dot(cols.row(j), cols.row(j)));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    TallSvd out{Matrix(n, m), Matrix(n, n), std::vector<double>(n)};
    const double sigma_max = n > 0 ? norms[order[0]] : 0.0;
    const double cutoff = sigma_max * static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon();
    std::size_t numerical_rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = norms[src];
        std::copy(rot.row(src).begin(), rot.row(src).end(), out.right_rows.row(j).begin());
        if (norms[src] > cutoff && norms[src] > 0.0) {
            auto dst = out.left_rows.row(j);
            auto g = cols.row(src);
            for (std::size_t i = 0; i < m; ++i) {
                dst[i] = g[i] / norms[src];
            }
            numerical_rank = j + 1;
        }
    }
    complete_basis(out.left_rows, numerical_rank);
    return out;
}

} // namespace

SvdFactorization svd(const Matrix& w, const SvdOptions& options) {
    if (!w.all_finite()) {
        throw std::invalid_argument("svd: input " + w.shape_string() + " has non-finite entries");
    }
    const bool wide = w.rows() < w.cols();
    TallSvd tall = jacobi_tall(wide ? w.transpose() : w, options);

    SvdFactorization f;
    f.sigma = std::move(tall.sigma);
    if (wide) {
        f.u = tall.right_rows.transpose();
        f.v = tall.left_rows.transpose();
    } else {
        f.u = tall.left_rows.transpose();
        f.v = tall.right_rows.transpose();
    }

    for (std::size_t j = 0; j < f.sigma.size(); ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < f.u.rows(); ++i) {
            if (std::abs(f.u(i, j)) > best) {
                best = std::abs(f.u(i, j));
                arg = i;
            }
        }
        if (f.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < f.u.rows(); ++i) {
                f.u(i, j) = -f.u(i, j);
            }
            for (std::size_t i = 0; i < f.v.rows(); ++i) {
                f.v(i, j) = -f.v(i, j);
            }
        }
    }
    return f;
}

SvdSlice truncate(const SvdFactorization& f, std::size_t lo, std::size_t hi) {
    const std::size_t k = f.sigma.size();
    if (lo >= hi || hi > k) {
        throw std::out_of_range("truncate: need 0 <= lo < hi <= " + std::to_string(k) + ", got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    return SvdSlice{f.u.columns(lo, hi), f.v.columns(lo, hi),
                    std::vector<double>(f.sigma.begin() + static_cast<std::ptrdiff_t>(lo),
                                        f.sigma.begin() + static_cast<std::ptrdiff_t>(hi))};
}

Matrix recompose(const Matrix& u, std::span<const double> sigma, const Matrix& v) {
    if (u.cols() != sigma.size() || v.cols() != sigma.size()) {
        throw DimensionError("recompose: u " + u.shape_string() + ", v " + v.shape_string() + " and " +
                             std::to_string(sigma.size()) + " singular values disagree");
    }
    Matrix scaled = u;
    for (std::size_t i = 0; i < scaled.rows(); ++i) {
        for (std::size_t j = 0; j < sigma.size(); ++j) {
            scaled(i, j) *= sigma[j];
        }
    }
    return matmul_nt(scaled, v);
}

Matrix recompose(const SvdSlice& slice) { return recompose(slice.u, slice.sigma, slice.v); }

Matrix recompose(const SvdFactorization& f) { return recompose(f.u, f.sigma, f.v); }

} // namespace lrsl::linalg
