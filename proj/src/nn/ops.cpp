#include "lrsl/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace lrsl::nn {

using detail::Node;

namespace {

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_row_vector(const Tensor& x, const Tensor& v, const char* what) {
    if (v.rows() != 1 || v.cols() != x.cols()) {
        throw DimensionError(std::string(what) + ": expected 1x" + std::to_string(x.cols()) + " row vector, got " +
                             v.value().shape_string());
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    return Tensor::from_op(linalg::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        if (wants(self, 0)) {
            self.parents[0]->accumulate(linalg::matmul_nt(self.grad, bv));
        }
        if (wants(self, 1)) {
            self.parents[1]->accumulate(linalg::matmul_tn(av, self.grad));
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    return Tensor::from_op(linalg::matmul_nt(a.value(), b.value()), {a, b}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        if (wants(self, 0)) {
            self.parents[0]->accumulate(linalg::matmul(self.grad, bv));
        }
        if (wants(self, 1)) {
            self.parents[1]->accumulate(linalg::matmul_tn(self.grad, av));
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    linalg::require_same_shape(a.value(), b.value(), "add");
    return Tensor::from_op(a.value() + b.value(), {a, b}, [](Node& self) {
        self.parents[0]->accumulate(self.grad);
        self.parents[1]->accumulate(self.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return Tensor::from_op(linalg::hadamard(a.value(), b.value()), {a, b}, [](Node& self) {
        if (wants(self, 0)) {
            self.parents[0]->accumulate(linalg::hadamard(self.grad, self.parents[1]->value));
        }
        if (wants(self, 1)) {
            self.parents[1]->accumulate(linalg::hadamard(self.grad, self.parents[0]->value));
        }
    });
}

Tensor scale(const Tensor& x, double s) {
    return Tensor::from_op(x.value() * s, {x}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
    require_row_vector(x, bias, "add_row");
    Matrix out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        auto b = bias.value().row(0);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += b[j];
        }
    }
    return Tensor::from_op(std::move(out), {x, bias}, [](Node& self) {
        if (wants(self, 0)) {
            self.parents[0]->accumulate(self.grad);
        }
        if (wants(self, 1)) {
            Matrix g(1, self.grad.cols());
            for (std::size_t i = 0; i < self.grad.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    g(0, j) += self.grad(i, j);
                }
            }
            self.parents[1]->accumulate(g);
        }
    });
}

Tensor mul_row(const Tensor& x, const Tensor& gain) {
    require_row_vector(x, gain, "mul_row");
    Matrix out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        auto g = gain.value().row(0);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] *= g[j];
        }
    }
    return Tensor::from_op(std::move(out), {x, gain}, [](Node& self) {
        const Matrix& xv = self.parents[0]->value;
        const Matrix& gv = self.parents[1]->value;
        if (wants(self, 0)) {
            Matrix dx = self.grad;
            for (std::size_t i = 0; i < dx.rows(); ++i) {
                for (std::size_t j = 0; j < dx.cols(); ++j) {
                    dx(i, j) *= gv(0, j);
                }
            }
            self.parents[0]->accumulate(dx);
        }
        if (wants(self, 1)) {
            Matrix dg(1, gv.cols());
            for (std::size_t i = 0; i < xv.rows(); ++i) {
                for (std::size_t j = 0; j < xv.cols(); ++j) {
                    dg(0, j) += self.grad(i, j) * xv(i, j);
                }
            }
            self.parents[1]->accumulate(dg);
        }
    });
}

Tensor normalize_rows(const Tensor& x, double eps) {
    const Matrix& xv = x.value();
    const std::size_t n = xv.cols();
    Matrix y(xv.rows(), n);
    std::vector<double> inv_std(xv.rows());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        auto r = xv.row(i);
        double mean = 0.0;
        for (double v : r) {
            mean += v;
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : r) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            y(i, j) = (r[j] - mean) * inv_std[i];
        }
    }
    return Tensor::from_op(std::move(y), {x}, [inv_std = std::move(inv_std)](Node& self) {
        const Matrix& yv = self.value;
        const std::size_t n = yv.cols();
        Matrix dx(yv.rows(), n);
        for (std::size_t i = 0; i < yv.rows(); ++i) {
            double mean_dy = 0.0;
            double mean_dy_y = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                mean_dy += self.grad(i, j);
                mean_dy_y += self.grad(i, j) * yv(i, j);
            }
            mean_dy /= static_cast<double>(n);
            mean_dy_y /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
                dx(i, j) = inv_std[i] * (self.grad(i, j) - mean_dy - yv(i, j) * mean_dy_y);
            }
        }
        self.parents[0]->accumulate(dx);
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    return add_row(mul_row(normalize_rows(x, eps), gain), bias);
}

Tensor gelu(const Tensor& x) {
    constexpr double c = 0.7978845608028654; // sqrt(2 / pi)
    constexpr double k = 0.044715;
    Matrix y = x.value();
    for (double& v : y.data()) {
        const double u = c * (v + k * v * v * v);
        v = 0.5 * v * (1.0 + std::tanh(u));
    }
    return Tensor::from_op(std::move(y), {x}, [](Node& self) {
        const Matrix& xv = self.parents[0]->value;
        Matrix dx = self.grad;
        auto dd = dx.data();
        auto xd = xv.data();
        for (std::size_t i = 0; i < dd.size(); ++i) {
            const double v = xd[i];
            const double t = std::tanh(c * (v + k * v * v * v));
            const double dydx = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
            dd[i] *= dydx;
        }
        self.parents[0]->accumulate(dx);
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    const Matrix& tv = table.value();
    Matrix out(ids.size(), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                                    std::to_string(tv.rows()) + " rows");
        }
        std::copy(tv.row(static_cast<std::size_t>(ids[i])).begin(), tv.row(static_cast<std::size_t>(ids[i])).end(),
                  out.row(i).begin());
    }
    return Tensor::from_op(std::move(out), {table}, [ids = std::vector<int>(ids.begin(), ids.end())](Node& self) {
        Matrix g(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto dst = g.row(static_cast<std::size_t>(ids[i]));
            auto src = self.grad.row(i);
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += src[j];
            }
        }
        self.parents[0]->accumulate(g);
    });
}

Tensor slice_rows(const Tensor& x, std::size_t n) {
    if (n > x.rows()) {
        throw DimensionError("slice_rows: " + std::to_string(n) + " rows requested from " + x.value().shape_string());
    }
    Matrix out(n, x.cols());
    std::copy_n(x.value().data().begin(), n * x.cols(), out.data().begin());
    return Tensor::from_op(std::move(out), {x}, [](Node& self) {
        Matrix g(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        std::copy(self.grad.data().begin(), self.grad.data().end(), g.data().begin());
        self.parents[0]->accumulate(g);
    });
}

Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
    return Tensor::from_op(x.value().columns(lo, hi), {x}, [lo](Node& self) {
        Matrix g(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        for (std::size_t i = 0; i < self.grad.rows(); ++i) {
            for (std::size_t j = 0; j < self.grad.cols(); ++j) {
                g(i, lo + j) = self.grad(i, j);
            }
        }
        self.parents[0]->accumulate(g);
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row count mismatch");
        }
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy(p.value().row(i).begin(), p.value().row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += p.cols();
    }
    return Tensor::from_op(std::move(out), parts, [](Node& self) {
        std::size_t offset = 0;
        for (auto& parent : self.parents) {
            const std::size_t w = parent->value.cols();
            if (parent->requires_grad) {
                parent->accumulate(Matrix(self.grad.columns(offset, offset + w)));
            }
            offset += w;
        }
    });
}

Tensor causal_softmax(const Tensor& scores) {
    const Matrix& sv = scores.value();
    if (sv.rows() > sv.cols()) {
        throw DimensionError("causal_softmax: more query rows than key columns in " + sv.shape_string());
    }
    Matrix p(sv.rows(), sv.cols());
    for (std::size_t i = 0; i < sv.rows(); ++i) {
        double mx = sv(i, 0);
        for (std::size_t j = 1; j <= i; ++j) {
            mx = std::max(mx, sv(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            p(i, j) = std::exp(sv(i, j) - mx);
            total += p(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) {
            p(i, j) /= total;
        }
    }
    return Tensor::from_op(std::move(p), {scores}, [](Node& self) {
        const Matrix& pv = self.value;
        Matrix dz(pv.rows(), pv.cols());
        for (std::size_t i = 0; i < pv.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                dot += pv(i, j) * self.grad(i, j);
            }
            for (std::size_t j = 0; j <= i; ++j) {
                dz(i, j) = pv(i, j) * (self.grad(i, j) - dot);
            }
        }
        self.parents[0]->accumulate(dz);
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.value().data()) {
        total += v;
    }
    return Tensor::from_op(Matrix(1, 1, total), {x}, [](Node& self) {
        const Matrix& xv = self.parents[0]->value;
        self.parents[0]->accumulate(Matrix(xv.rows(), xv.cols(), self.grad(0, 0)));
    });
}

Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double total = 0.0;
        for (double v : r) {
            total += std::exp(v - mx);
        }
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(i, j) = r[j] - lse;
        }
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const bool> mask) {
    const Matrix& lv = logits.value();
    if (targets.size() != lv.rows() || mask.size() != lv.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(lv.rows()) + " logit rows but " +
                             std::to_string(targets.size()) + " targets / " + std::to_string(mask.size()) +
                             " mask entries");
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (mask[i] && (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= lv.cols())) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) + " at position " +
                                    std::to_string(i) + " outside vocabulary of " + std::to_string(lv.cols()));
        }
    }
    const auto count = static_cast<double>(std::count(mask.begin(), mask.end(), true));
    const Matrix logp = log_softmax_rows(lv);
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (mask[i]) {
            loss -= logp(i, static_cast<std::size_t>(targets[i]));
        }
    }
    if (count > 0) {
        loss /= count;
    }
    return Tensor::from_op(
        Matrix(1, 1, loss), {logits},
        [logp, count, t = std::vector<int>(targets.begin(), targets.end()),
         m = std::vector<bool>(mask.begin(), mask.end())](Node& self) {
            Matrix dz(logp.rows(), logp.cols());
            if (count == 0) {
                self.parents[0]->accumulate(dz);
                return;
            }
            const double g = self.grad(0, 0) / count;
            for (std::size_t i = 0; i < logp.rows(); ++i) {
                if (!m[i]) {
                    continue;
                }
                for (std::size_t j = 0; j < logp.cols(); ++j) {
                    dz(i, j) = g * std::exp(logp(i, j));
                }
                dz(i, static_cast<std::size_t>(t[i])) -= g;
            }
            self.parents[0]->accumulate(dz);
        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    const auto mask = std::make_unique<bool[]>(targets.size());
    std::fill_n(mask.get(), targets.size(), true);
    return cross_entropy(logits, targets, std::span<const bool>(mask.get(), targets.size()));
}

} // namespace lrsl::nn
