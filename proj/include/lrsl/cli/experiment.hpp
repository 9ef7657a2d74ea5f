#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/analysis/forgetting.hpp"
#include "lrsl/nn/transformer.hpp"
#include "lrsl/trainer/config_io.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace lrsl::cli {

struct PhaseConfig {
    trainer::TaskSpec task;
    trainer::TrainConfig train;
};

struct SchemeEntry {
    std::string name; // output directory name, defaults to the scheme label
    adapters::AdapterConfig adapter;
};

struct AnalysisFlags {
    bool similarity = true;
    bool projection = true;
    bool forgetting = true;
    std::size_t rank = 0; // 0: use each scheme's adapter rank
};

/// Pipeline: pretrain every tensor on `pretrain`, then finetune a copy of
/// the pretrained model with each scheme on `finetune`.
struct ExperimentConfig {
    nn::TransformerConfig model;
    PhaseConfig pretrain;
    PhaseConfig finetune;
    std::vector<SchemeEntry> schemes;
    AnalysisFlags analyses;
    std::filesystem::path output_dir;
};

/// Raised with every violation found in a configuration, one per line.
class ConfigViolations : public ConfigError {
public:
    explicit ConfigViolations(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Strict parse plus cross-field checks. Throws ConfigViolations.
ExperimentConfig parse_experiment_config(const trainer::Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
trainer::Json to_json(const ExperimentConfig& cfg);

/// Replaces every seed in the configuration by `seed`.
void override_seeds(ExperimentConfig& cfg, std::uint64_t seed);

struct SchemeOutcome {
    std::string name;
    adapters::AdapterConfig adapter;
    std::size_t trainable = 0;
    std::size_t total = 0;
    double final_loss = 0.0;
    double finetune_em = 0.0;
    double pretrain_em = 0.0;
    std::optional<analysis::ForgettingResult> forgetting;
    std::optional<bool> zero_update;
};

struct ExperimentResult {
    double pretrain_final_loss = 0.0;
    double pretrain_em = 0.0;
    std::vector<SchemeOutcome> schemes;
};

/// Writes under cfg.output_dir:
///   pretrain/{final.ckpt, metrics.csv}
///   <scheme>/{final.ckpt, adapters.ckpt, metrics.csv, similarity*.csv, projection.csv}
///   forgetting.csv, results.csv
/// Schemes run one after another unless `parallel` is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool parallel, std::ostream& log);

} // namespace lrsl::cli
