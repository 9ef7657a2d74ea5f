#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/linalg/svd.hpp"
#include "lrsl/nn/transformer.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace lrsl::adapters {

/// Which singular components move into the trainable pair.
enum class SplitMode { minor, principal, random };

std::string_view to_string(SplitMode m) noexcept;
std::optional<SplitMode> parse_split_mode(std::string_view name) noexcept;

/// W = w_p + b * a, where b * a is the sum over `selected_indices` of
/// sigma_i u_i v_i^T and b = U_sel sqrt(S_sel), a = sqrt(S_sel) V_sel^T.
struct SpectralSplit {
    Matrix w_p;
    Matrix b; // m x r
    Matrix a; // r x n
    std::size_t rank = 0;
    SplitMode mode = SplitMode::minor;
    std::vector<std::size_t> selected_indices; // ascending
    std::vector<double> selected_sigma;        // aligned with selected_indices
    linalg::SvdFactorization factorization;
};

/// Indices of the r components for `mode` out of k. Random mode runs a
/// seeded Fisher-Yates shuffle of 0..k-1, keeps the first r and sorts them.
std::vector<std::size_t> select_components(std::size_t k, std::size_t r, SplitMode mode, std::uint64_t seed);

/// Throws RankTooLargeError when r > min(m, n) and propagates ConvergenceError.
SpectralSplit spectral_split(const Matrix& w, std::size_t r, SplitMode mode, std::uint64_t seed = 0);

SplitMode split_mode_for(Scheme scheme);

/// Deterministic per-layer seed derived from the adapter seed and layer name.
std::uint64_t layer_seed(std::uint64_t base_seed, std::string_view layer_name) noexcept;

/// lora: frozen = W, b = 0, a ~ N(0, 1/n). Spectral schemes: frozen = w_p and
/// (b, a) from spectral_split with the scheme's mode.
AdaptedLinear init_adapter(std::string name, const Matrix& weight, const AdapterConfig& cfg,
                           std::uint64_t seed);

struct AdaptationSummary {
    std::size_t adapted_layers = 0;
    std::size_t trainable = 0;
    std::size_t total = 0;
    double trainable_fraction() const {
        return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
    }
};

/// Replaces every block projection whose label is in cfg.placement by an
/// AdaptedLinear and freezes everything else.
AdaptationSummary apply_adapters(nn::Model& model, const AdapterConfig& cfg);

/// Same layer structure as apply_adapters with zero-filled factors and no SVD;
/// used when tensor values come from a checkpoint.
void attach_adapter_slots(nn::Model& model, const AdapterConfig& cfg);

/// r * (m + n) summed over the layers cfg would adapt.
std::size_t expected_trainable_count(const nn::Model& model, const AdapterConfig& cfg);

} // namespace lrsl::adapters
