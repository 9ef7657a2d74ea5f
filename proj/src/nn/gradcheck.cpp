#include "lrsl/nn/gradcheck.hpp"

#include "lrsl/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lrsl::nn {

GradCheckResult gradient_check(std::span<const NamedTensor> params, const std::function<Tensor()>& loss_fn,
                               std::size_t coords_per_param, double h, std::uint64_t seed) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("gradient_check: step h must be positive");
    }
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
    backward(loss_fn());

    std::mt19937_64 rng(seed);
    GradCheckResult result;
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) {
            continue;
        }
        Tensor t = p.tensor;
        const Matrix analytic = t.grad();
        const std::size_t n = t.value().size();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(coords_per_param);
        }
        for (std::size_t c : coords) {
            double& slot = t.mutable_value().data()[c];
            const double saved = slot;
            slot = saved + h;
            const double plus = loss_fn().item();
            slot = saved - h;
            const double minus = loss_fn().item();
            slot = saved;
            const double fd = (plus - minus) / (2.0 * h);
            const double ad = analytic.data()[c];
            const double err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-12});
            if (result.worst_parameter.empty() || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_parameter = p.name;
            }
            ++result.coords_checked;
        }
    }
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
    return result;
}

GradCheckResult gradient_check(const Model& model, std::span<const int> tokens, std::span<const int> targets,
                               std::size_t coords_per_param, double h, std::uint64_t seed) {
    const auto params = model.trainable_parameters();
    return gradient_check(
        params, [&] { return cross_entropy(model.forward(tokens), targets); }, coords_per_param, h, seed);
}

} // namespace lrsl::nn
