#include "lrsl/trainer/config.hpp"

#include "lrsl/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lrsl::trainer {

void TrainConfig::validate() const {
    std::string problems;
    auto need = [&](bool ok, const char* msg) {
        if (!ok) {
            problems += problems.empty() ? "" : "; ";
            problems += msg;
        }
    };
    need(std::isfinite(lr) && lr > 0.0, "lr must be positive");
    need(warmup_steps <= total_steps, "warmup_steps must not exceed total_steps");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be non-negative");
    need(adam_beta1 > 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in (0, 1)");
    need(adam_beta2 > 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in (0, 1)");
    need(std::isfinite(adam_eps) && adam_eps > 0.0, "adam_eps must be positive");
    need(max_seq_len >= 1, "max_seq_len must be >= 1");
    if (!problems.empty()) {
        throw ConfigError("invalid train config: " + problems);
    }
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps) {
        throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(cfg.total_steps) + "]");
    }
    if (step <= cfg.warmup_steps) {
        if (cfg.warmup_steps == 0) {
            return cfg.lr;
        }
        return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    return cfg.lr * static_cast<double>(cfg.total_steps - step) /
           static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

} // namespace lrsl::trainer
