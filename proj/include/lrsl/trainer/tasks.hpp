#pragma once

#include "lrsl/nn/transformer.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace lrsl::trainer {

using linalg::Matrix;

enum class TaskKind { copy, reverse, modular_add };

std::string_view to_string(TaskKind k) noexcept;
std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept;

/// Token layout for every kind: symbols 0..vocab-3, then the operator token
/// (vocab-2) and the separator (vocab-1).
///   copy / reverse: prompt x1..xL SEP, answer x1..xL or xL..x1.
///   modular_add:    prompt x OP y SEP, answer (x + y) mod (vocab - 2); seq_len is unused.
struct TaskSpec {
    TaskKind kind = TaskKind::copy;
    std::size_t vocab_size = 10;
    std::size_t seq_len = 4;
    std::size_t num_train = 512;
    std::size_t num_eval = 128;
    std::uint64_t seed = 0;

    std::size_t symbol_count() const { return vocab_size >= 2 ? vocab_size - 2 : 0; }
    int operator_token() const { return static_cast<int>(vocab_size) - 2; }
    int separator_token() const { return static_cast<int>(vocab_size) - 1; }
    /// Prompt plus answer length.
    std::size_t example_length() const;

    /// Throws ConfigError, e.g. when the task has fewer distinct examples
    /// than num_train + num_eval.
    void validate() const;
    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Example {
    std::vector<int> prompt;
    std::vector<int> answer;
    friend bool operator==(const Example&, const Example&) = default;
};

/// Next-token view of an example: inputs = full[0..n-2], targets = full[1..n-1],
/// supervised[i] is set only where targets[i] belongs to the answer.
struct TrainingPair {
    std::vector<int> inputs;
    std::vector<int> targets;
    std::vector<std::uint8_t> supervised;
};

TrainingPair to_training_pair(const Example& ex);

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> eval;
};

/// Distinct examples drawn without replacement from the task's full
/// example space with a seeded shuffle; train and eval are disjoint.
Dataset generate_task(const TaskSpec& spec);

/// Answer the task defines for a prompt (the reference used by the generator).
std::vector<int> reference_answer(const TaskSpec& spec, std::span<const int> prompt);

} // namespace lrsl::trainer
