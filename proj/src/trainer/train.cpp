#include "lrsl/trainer/train.hpp"

#include "lrsl/adapters/spectral.hpp"
#include "lrsl/errors.hpp"
#include "lrsl/nn/ops.hpp"
#include "lrsl/trainer/optimizer.hpp"
#include "lrsl/util/csv.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace lrsl::trainer {

namespace {

// Keeps the dropout stream independent of the batch sampling stream.
constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

} // namespace

nn::Tensor example_loss(const nn::Model& model, const TrainingPair& pair, const nn::ForwardOptions& options) {
    const std::size_t n = pair.targets.size();
    const auto mask = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = pair.supervised[i] != 0;
    }
    const nn::Tensor logits = model.forward(pair.inputs, options);
    return nn::cross_entropy(logits, pair.targets, std::span<const bool>(mask.get(), n));
}

double mean_loss(const nn::Model& model, std::span<const Example> examples) {
    if (examples.empty()) {
        throw std::invalid_argument("mean_loss: empty dataset");
    }
    double acc = 0.0;
    for (const auto& ex : examples) {
        acc += example_loss(model, to_training_pair(ex)).item();
    }
    return acc / static_cast<double>(examples.size());
}

TrainResult train(nn::Model& model, std::span<const Example> train_set, const TrainConfig& cfg,
                  const StepCallback& on_step) {
    cfg.validate();
    if (cfg.max_seq_len > model.config().max_seq_len) {
        throw ConfigError("train: max_seq_len " + std::to_string(cfg.max_seq_len) + " exceeds the model's " +
                          std::to_string(model.config().max_seq_len));
    }
    if (train_set.empty() && cfg.total_steps > 0) {
        throw std::invalid_argument("train: empty training set");
    }
    std::vector<TrainingPair> pairs;
    pairs.reserve(train_set.size());
    for (const auto& ex : train_set) {
        pairs.push_back(to_training_pair(ex));
        if (pairs.back().inputs.size() > cfg.max_seq_len) {
            throw ConfigError("train: example of length " + std::to_string(pairs.back().inputs.size()) +
                              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
        }
    }

    TrainResult result;
    result.trainable = model.trainable_count();
    result.total = model.parameter_count();
    result.log.reserve(cfg.total_steps);

    model.zero_grad();
    AdamW optimizer(model.trainable_parameters(),
                    AdamWOptions{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
    std::mt19937_64 sampler(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ kDropoutStream);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.empty() ? 0 : pairs.size() - 1);
    const nn::ForwardOptions options{true, &dropout_rng};
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        double loss = 0.0;
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const nn::Tensor l = example_loss(model, pairs[pick(sampler)], options);
            loss += l.item() * inv_batch;
            nn::backward(nn::scale(l, inv_batch));
        }
        if (!std::isfinite(loss)) {
            throw NonFiniteError("train: loss became non-finite at step " + std::to_string(step));
        }
        const double lr = lr_at(step, cfg);
        optimizer.step(lr);
        model.zero_grad();
        result.log.push_back({step, loss, lr});
        if (on_step) {
            on_step(result.log.back());
        }
    }
    return result;
}

TrainResult finetune(nn::Model& model, const std::optional<adapters::AdapterConfig>& adapter_cfg,
                     std::span<const Example> train_set, const TrainConfig& cfg, const StepCallback& on_step) {
    if (adapter_cfg) {
        adapters::apply_adapters(model, *adapter_cfg);
    } else {
        model.set_trainable(true);
    }
    return train(model, train_set, cfg, on_step);
}

std::string metrics_csv(const std::vector<MetricsRow>& log) {
    std::vector<util::CsvRow> rows;
    rows.reserve(log.size());
    for (const auto& r : log) {
        rows.push_back({std::to_string(r.step), util::format_real(r.loss), util::format_real(r.lr)});
    }
    return util::to_csv({"step", "loss", "lr"}, rows);
}

} // namespace lrsl::trainer
