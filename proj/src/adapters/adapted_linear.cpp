#include "lrsl/adapters/adapted_linear.hpp"

#include "lrsl/nn/ops.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace lrsl::adapters {

namespace {
constexpr std::array<std::pair<Scheme, std::string_view>, 4> kSchemes{{
    {Scheme::lora, "lora"},
    {Scheme::pissa, "pissa"},
    {Scheme::milora, "milora"},
    {Scheme::random_components, "random_components"},
}};
}

std::string_view to_string(Scheme s) noexcept {
    for (const auto& [value, name] : kSchemes) {
        if (value == s) {
            return name;
        }
    }
    return "unknown";
}

std::optional<Scheme> parse_scheme(std::string_view name) noexcept {
    for (const auto& [value, label] : kSchemes) {
        if (label == name) {
            return value;
        }
    }
    return std::nullopt;
}

std::set<nn::Placement> AdapterConfig::default_placement() {
    using nn::Placement;
    return {Placement::query, Placement::key, Placement::value, Placement::mlp_up, Placement::mlp_down};
}

void AdapterConfig::validate() const {
    if (rank == 0) {
        throw ConfigError("adapter rank must be positive");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("adapter alpha must be a positive finite number");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("adapter dropout must lie in [0, 1)");
    }
    if (scheme != Scheme::lora && alpha != static_cast<double>(rank)) {
        throw ConfigError(std::string("scheme ") + std::string(to_string(scheme)) +
                          " requires alpha == rank (got alpha " + std::to_string(alpha) + ", rank " +
                          std::to_string(rank) + ")");
    }
    for (auto p : placement) {
        if (!nn::is_block_projection(p)) {
            throw ConfigError("adapters can only target block projections, not '" + std::string(nn::to_string(p)) +
                              "'");
        }
    }
}

AdaptedLinear::AdaptedLinear(std::string name, Matrix frozen, Matrix b, Matrix a, double scaling, double dropout)
    : name_(std::move(name)),
      frozen_(Tensor::constant(std::move(frozen))),
      a_(Tensor::parameter(std::move(a))),
      b_(Tensor::parameter(std::move(b))),
      scaling_(scaling),
      dropout_(dropout) {
    if (b_.rows() != frozen_.rows() || a_.cols() != frozen_.cols() || b_.cols() != a_.rows()) {
        throw DimensionError("AdaptedLinear '" + name_ + "': frozen " + frozen_.value().shape_string() + ", b " +
                             b_.value().shape_string() + ", a " + a_.value().shape_string() + " are inconsistent");
    }
}

Tensor AdaptedLinear::forward(const Tensor& x, bool training, std::mt19937_64* rng) const {
    if (x.cols() != in_features()) {
        throw DimensionError("AdaptedLinear '" + name_ + "': input has " + std::to_string(x.cols()) +
                             " features, layer expects " + std::to_string(in_features()));
    }
    Tensor base = nn::matmul_nt(x, frozen_);
    Tensor branch_in = x;
    if (training && dropout_ > 0.0) {
        if (rng == nullptr) {
            throw std::invalid_argument("AdaptedLinear '" + name_ + "': dropout in training mode needs an rng");
        }
        std::bernoulli_distribution keep(1.0 - dropout_);
        const double inv_keep = 1.0 / (1.0 - dropout_);
        Matrix mask(x.rows(), x.cols());
        for (double& m : mask.data()) {
            m = keep(*rng) ? inv_keep : 0.0;
        }
        branch_in = nn::mul(x, Tensor::constant(std::move(mask)));
    }
    Tensor branch = nn::matmul_nt(nn::matmul_nt(branch_in, a_), b_);
    return nn::add(base, nn::scale(branch, scaling_));
}

Matrix AdaptedLinear::effective_weight() const {
    return frozen_.value() + linalg::matmul(b_.value(), a_.value()) * scaling_;
}

Matrix merge(const AdaptedLinear& layer) { return layer.effective_weight(); }

} // namespace lrsl::adapters
