#include "lrsl/analysis/projection.hpp"

#include "lrsl/linalg/svd.hpp"

#include <algorithm>
#include <stdexcept>

namespace lrsl::analysis {

std::string_view to_string(BasisSource s) noexcept {
    switch (s) {
    case BasisSource::w:
        return "W";
    case BasisSource::random:
        return "random";
    case BasisSource::delta_lora:
        return "delta_lora";
    case BasisSource::delta_pissa:
        return "delta_pissa";
    case BasisSource::delta_milora:
        return "delta_milora";
    case BasisSource::delta_random_components:
        return "delta_random_components";
    case BasisSource::delta_full:
        return "delta_full";
    }
    return "unknown";
}

std::optional<BasisSource> parse_basis_source(std::string_view name) noexcept {
    for (auto s : {BasisSource::w, BasisSource::random, BasisSource::delta_lora, BasisSource::delta_pissa,
                   BasisSource::delta_milora, BasisSource::delta_random_components, BasisSource::delta_full}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

BasisSource delta_source_for(const std::optional<adapters::Scheme>& scheme) noexcept {
    if (!scheme) {
        return BasisSource::delta_full;
    }
    switch (*scheme) {
    case adapters::Scheme::lora:
        return BasisSource::delta_lora;
    case adapters::Scheme::pissa:
        return BasisSource::delta_pissa;
    case adapters::Scheme::milora:
        return BasisSource::delta_milora;
    case adapters::Scheme::random_components:
        return BasisSource::delta_random_components;
    }
    return BasisSource::delta_full;
}

double amplification_ratio(double proj_delta_norm, double proj_w_norm) {
    if (!(proj_w_norm > 0.0)) {
        throw std::domain_error("amplification_ratio: projected weight norm must be positive");
    }
    return proj_delta_norm / proj_w_norm;
}

double projected_norm(const Matrix& u, const Matrix& m, const Matrix& v) {
    return linalg::frobenius_norm(linalg::matmul(linalg::matmul_tn(u, m), v));
}

ProjectionReport projection_analysis(const Matrix& w_base, const Matrix& w_finetuned, std::size_t r,
                                     BasisSource source, std::uint64_t seed) {
    linalg::require_same_shape(w_base, w_finetuned, "projection_analysis");
    const std::size_t k = std::min(w_base.rows(), w_base.cols());
    if (r == 0 || r > k) {
        throw RankTooLargeError("rank-too-large: projection_analysis needs 1 <= r <= " + std::to_string(k) +
                                ", got " + std::to_string(r));
    }
    ProjectionReport rep;
    rep.basis_source = source;
    rep.r = r;
    rep.w_norm = linalg::frobenius_norm(w_base);
    const Matrix delta = w_finetuned - w_base;
    const double delta_norm = linalg::frobenius_norm(delta);
    rep.zero_update = delta_norm <= kZeroUpdateTolerance * rep.w_norm;

    const bool from_delta = source != BasisSource::w && source != BasisSource::random;
    if (from_delta && rep.zero_update) {
        return rep;
    }
    const Matrix& basis_of = source == BasisSource::w ? w_base : delta;
    const auto slice = source == BasisSource::random
                           ? linalg::truncate(linalg::svd(Matrix::gaussian(w_base.rows(), w_base.cols(), 1.0, seed)), 0, r)
                           : linalg::truncate(linalg::svd(basis_of), 0, r);
    rep.proj_w_norm = projected_norm(slice.u, w_base, slice.v);
    if (!rep.zero_update) {
        rep.proj_delta_norm = projected_norm(slice.u, delta, slice.v);
        if (rep.proj_w_norm > 0.0) {
            rep.amplification = amplification_ratio(*rep.proj_delta_norm, rep.proj_w_norm);
        }
    }
    return rep;
}

} // namespace lrsl::analysis
