#include "lrsl/trainer/optimizer.hpp"

#include "lrsl/errors.hpp"

#include <cmath>

namespace lrsl::trainer {

void adamw_update(Matrix& param, const Matrix& grad, Matrix& first_moment, Matrix& second_moment, std::size_t step,
                  double lr, const AdamWOptions& options) {
    linalg::require_same_shape(param, grad, "adamw_update(grad)");
    linalg::require_same_shape(param, first_moment, "adamw_update(first moment)");
    linalg::require_same_shape(param, second_moment, "adamw_update(second moment)");
    if (step == 0) {
        throw std::invalid_argument("adamw_update: step counts from 1");
    }
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
    auto p = param.data();
    auto g = grad.data();
    auto m = first_moment.data();
    auto v = second_moment.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
        v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + options.eps) + options.weight_decay * p[i]);
    }
}

AdamW::AdamW(std::vector<nn::NamedTensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.rows(), p.tensor.cols());
        v_.emplace_back(p.tensor.rows(), p.tensor.cols());
    }
}

void AdamW::step(double lr) {
    std::vector<Matrix> grads;
    grads.reserve(params_.size());
    for (const auto& p : params_) {
        grads.push_back(p.tensor.grad());
        if (!grads.back().all_finite()) {
            throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adamw_update(params_[i].tensor.mutable_value(), grads[i], m_[i], v_[i], steps_, lr, options_);
    }
}

} // namespace lrsl::trainer
