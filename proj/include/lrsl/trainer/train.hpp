#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/trainer/config.hpp"
#include "lrsl/trainer/tasks.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace lrsl::trainer {

struct MetricsRow {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct TrainResult {
    std::vector<MetricsRow> log;
    std::size_t trainable = 0;
    std::size_t total = 0;

    double trainable_fraction() const {
        return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
    }
};

/// Mean masked next-token loss of one example as a graph node.
nn::Tensor example_loss(const nn::Model& model, const TrainingPair& pair, const nn::ForwardOptions& options = {});

/// Mean masked loss over a set of examples, eval mode.
double mean_loss(const nn::Model& model, std::span<const Example> examples);

/// Called after every optimizer step with the row just logged.
using StepCallback = std::function<void(const MetricsRow&)>;

/// Runs cfg.total_steps AdamW steps on the model's currently trainable
/// tensors. Each step draws cfg.batch_size examples uniformly (with
/// replacement) from `train_set`. Throws NonFiniteError naming the step if
/// the loss stops being finite.
TrainResult train(nn::Model& model, std::span<const Example> train_set, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

/// Prepares the model for finetuning (adapters from `adapter_cfg`, or every
/// tensor trainable when it is empty) and trains it.
TrainResult finetune(nn::Model& model, const std::optional<adapters::AdapterConfig>& adapter_cfg,
                     std::span<const Example> train_set, const TrainConfig& cfg, const StepCallback& on_step = {});

/// CSV with header "step,loss,lr".
std::string metrics_csv(const std::vector<MetricsRow>& log);

} // namespace lrsl::trainer
