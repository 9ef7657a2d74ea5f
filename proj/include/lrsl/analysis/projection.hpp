#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/analysis/similarity.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace lrsl::analysis {

/// Where the projection basis U, V comes from: W itself, a seeded random
/// matrix of W's shape, or delta W of a finetuning run (labelled by scheme,
/// or "full" for dense finetuning).
enum class BasisSource { w, random, delta_lora, delta_pissa, delta_milora, delta_random_components, delta_full };

std::string_view to_string(BasisSource s) noexcept;
std::optional<BasisSource> parse_basis_source(std::string_view name) noexcept;
BasisSource delta_source_for(const std::optional<adapters::Scheme>& scheme) noexcept;

struct ProjectionReport {
    BasisSource basis_source = BasisSource::w;
    std::size_t r = 0;
    double w_norm = 0.0;      // ||W||_F
    double proj_w_norm = 0.0; // ||U^T W V||_F
    std::optional<double> proj_delta_norm; // ||U^T dW V||_F, absent when dW = 0
    std::optional<double> amplification;   // proj_delta_norm / proj_w_norm
    /// dW = 0; a delta basis is then undefined and proj_w_norm is 0.
    bool zero_update = false;
};

/// ratio of the projected update norm to the projected weight norm.
/// Throws std::domain_error when the denominator is not positive.
double amplification_ratio(double proj_delta_norm, double proj_w_norm);

/// ||U^T M V||_F with U, V the column blocks of left/right bases.
double projected_norm(const Matrix& u, const Matrix& m, const Matrix& v);

/// U, V are the top-r singular vectors of the basis source; W is w_base and
/// dW = w_finetuned - w_base. Throws DimensionError on shape mismatch and
/// RankTooLargeError for r outside 1..min(m, n).
ProjectionReport projection_analysis(const Matrix& w_base, const Matrix& w_finetuned, std::size_t r,
                                     BasisSource source, std::uint64_t seed = 0);

} // namespace lrsl::analysis
