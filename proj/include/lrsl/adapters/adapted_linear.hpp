#pragma once

#include "lrsl/nn/placement.hpp"
#include "lrsl/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>

namespace lrsl::adapters {

using linalg::Matrix;
using nn::Tensor;

enum class Scheme { lora, pissa, milora, random_components };

std::string_view to_string(Scheme s) noexcept;
std::optional<Scheme> parse_scheme(std::string_view name) noexcept;

struct AdapterConfig {
    Scheme scheme = Scheme::milora;
    std::size_t rank = 4;
    double alpha = 4.0;
    double dropout = 0.0;
    std::set<nn::Placement> placement = default_placement();
    std::uint64_t seed = 0;

    double scaling() const { return alpha / static_cast<double>(rank); }
    /// Throws ConfigError. Spectral schemes require alpha == rank.
    void validate() const;

    static std::set<nn::Placement> default_placement();
};

/// Linear layer y = x W^T + (alpha / r) * dropout(x) A^T B^T with W frozen.
class AdaptedLinear {
public:
    AdaptedLinear(std::string name, Matrix frozen, Matrix b, Matrix a, double scaling, double dropout);

    const std::string& name() const noexcept { return name_; }
    const Tensor& frozen() const noexcept { return frozen_; }
    Tensor& frozen() noexcept { return frozen_; }
    const Tensor& a() const noexcept { return a_; }
    Tensor& a() noexcept { return a_; }
    const Tensor& b() const noexcept { return b_; }
    Tensor& b() noexcept { return b_; }
    double scaling() const noexcept { return scaling_; }
    double dropout() const noexcept { return dropout_; }

    std::size_t out_features() const { return frozen_.rows(); }
    std::size_t in_features() const { return frozen_.cols(); }
    std::size_t rank() const { return a_.rows(); }
    std::size_t trainable_count() const { return a_.value().size() + b_.value().size(); }

    /// In training mode with dropout > 0 a mask is drawn from `rng` for the
    /// adapter branch input; the frozen path never sees dropout.
    Tensor forward(const Tensor& x, bool training = false, std::mt19937_64* rng = nullptr) const;

    /// frozen + scaling * b * a.
    Matrix effective_weight() const;

private:
    std::string name_;
    Tensor frozen_;
    Tensor a_;
    Tensor b_;
    double scaling_;
    double dropout_;
};

/// Folds the adapter product into a dense weight.
Matrix merge(const AdaptedLinear& layer);

} // namespace lrsl::adapters
