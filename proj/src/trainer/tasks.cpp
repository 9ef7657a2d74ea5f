#include "lrsl/trainer/tasks.hpp"

#include "lrsl/errors.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <unordered_set>

namespace lrsl::trainer {

namespace {

constexpr std::uint64_t kEnumerateLimit = 1u << 20;

// Number of distinct prompts, saturating at uint64 max.
std::uint64_t space_size(const TaskSpec& spec) {
    const std::uint64_t s = spec.symbol_count();
    if (spec.kind == TaskKind::modular_add) {
        return s * s;
    }
    std::uint64_t n = 1;
    for (std::size_t i = 0; i < spec.seq_len; ++i) {
        if (s != 0 && n > std::numeric_limits<std::uint64_t>::max() / s) {
            return std::numeric_limits<std::uint64_t>::max();
        }
        n *= s;
    }
    return n;
}

// Prompt with index `code` in mixed radix over the symbol alphabet.
Example decode(const TaskSpec& spec, std::uint64_t code) {
    const std::uint64_t s = spec.symbol_count();
    Example ex;
    if (spec.kind == TaskKind::modular_add) {
        ex.prompt = {static_cast<int>(code / s), spec.operator_token(), static_cast<int>(code % s),
                     spec.separator_token()};
    } else {
        ex.prompt.resize(spec.seq_len + 1);
        for (std::size_t i = spec.seq_len; i-- > 0;) {
            ex.prompt[i] = static_cast<int>(code % s);
            code /= s;
        }
        ex.prompt[spec.seq_len] = spec.separator_token();
    }
    ex.answer = reference_answer(spec, ex.prompt);
    return ex;
}

} // namespace

std::string_view to_string(TaskKind k) noexcept {
    switch (k) {
    case TaskKind::copy:
        return "copy";
    case TaskKind::reverse:
        return "reverse";
    case TaskKind::modular_add:
        return "modular_add";
    }
    return "unknown";
}

std::optional<TaskKind> parse_task_kind(std::string_view name) noexcept {
    for (auto k : {TaskKind::copy, TaskKind::reverse, TaskKind::modular_add}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::size_t TaskSpec::example_length() const {
    return kind == TaskKind::modular_add ? 5 : 2 * seq_len + 1;
}

void TaskSpec::validate() const {
    std::string problems;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) {
            problems += problems.empty() ? "" : "; ";
            problems += msg;
        }
    };
    need(vocab_size >= 3, "vocab_size must be >= 3 (at least one symbol plus operator and separator)");
    need(kind == TaskKind::modular_add || seq_len >= 1, "seq_len must be >= 1");
    need(num_train >= 1, "num_train must be >= 1");
    if (problems.empty()) {
        const std::uint64_t space = space_size(*this);
        const std::uint64_t wanted = static_cast<std::uint64_t>(num_train) + num_eval;
        need(wanted <= space, "num_train + num_eval = " + std::to_string(wanted) + " exceeds the " +
                                  std::to_string(space) + " distinct examples of this task");
    }
    if (!problems.empty()) {
        throw ConfigError("invalid task spec: " + problems);
    }
}

std::vector<int> reference_answer(const TaskSpec& spec, std::span<const int> prompt) {
    switch (spec.kind) {
    case TaskKind::copy:
        return {prompt.begin(), prompt.end() - 1};
    case TaskKind::reverse:
        return {prompt.rbegin() + 1, prompt.rend()};
    case TaskKind::modular_add: {
        const int p = static_cast<int>(spec.symbol_count());
        return {(prompt[0] + prompt[2]) % p};
    }
    }
    return {};
}

TrainingPair to_training_pair(const Example& ex) {
    std::vector<int> full = ex.prompt;
    full.insert(full.end(), ex.answer.begin(), ex.answer.end());
    TrainingPair pair;
    const std::size_t n = full.size() - 1;
    pair.inputs.assign(full.begin(), full.end() - 1);
    pair.targets.assign(full.begin() + 1, full.end());
    pair.supervised.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        pair.supervised[i] = (i + 1 >= ex.prompt.size()) ? 1 : 0;
    }
    return pair;
}

Dataset generate_task(const TaskSpec& spec) {
    spec.validate();
    const std::uint64_t space = space_size(spec);
    const std::size_t wanted = spec.num_train + spec.num_eval;
    std::mt19937_64 rng(spec.seed);

    std::vector<std::uint64_t> codes;
    codes.reserve(wanted);
    if (space <= kEnumerateLimit) {
        std::vector<std::uint64_t> all(space);
        for (std::uint64_t i = 0; i < space; ++i) {
            all[i] = i;
        }
        // Partial Fisher-Yates: the first `wanted` slots are a uniform sample.
        for (std::size_t i = 0; i < wanted; ++i) {
            std::uniform_int_distribution<std::uint64_t> pick(i, space - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        codes.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(wanted));
    } else {
        std::unordered_set<std::uint64_t> seen;
        std::uniform_int_distribution<std::uint64_t> pick(0, space - 1);
        while (codes.size() < wanted) {
            const std::uint64_t c = pick(rng);
            if (seen.insert(c).second) {
                codes.push_back(c);
            }
        }
    }

    Dataset ds;
    ds.train.reserve(spec.num_train);
    ds.eval.reserve(spec.num_eval);
    for (std::size_t i = 0; i < wanted; ++i) {
        (i < spec.num_train ? ds.train : ds.eval).push_back(decode(spec, codes[i]));
    }
    return ds;
}

} // namespace lrsl::trainer
