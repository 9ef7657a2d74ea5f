#pragma once

#include <cstddef>
#include <cstdint>

namespace lrsl::trainer {

struct TrainConfig {
    double lr = 3e-4;
    std::size_t warmup_steps = 100;
    std::size_t total_steps = 1000;
    std::size_t batch_size = 16;
    double weight_decay = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t max_seq_len = 16;

    /// Throws ConfigError listing every violated constraint.
    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Linear warmup from 0 to cfg.lr over warmup_steps, then linear decay to 0
/// at total_steps. Throws std::out_of_range for step > total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

} // namespace lrsl::trainer
