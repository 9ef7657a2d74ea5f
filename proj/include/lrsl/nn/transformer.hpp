#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/nn/placement.hpp"
#include "lrsl/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lrsl::nn {

struct TransformerConfig {
    std::size_t vocab_size = 16;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 64;
    std::size_t max_seq_len = 16;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
    friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

class TokenRangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class SequenceTooLongError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A projection that is either dense or carries a low-rank adapter.
struct Linear {
    std::string name;
    Placement placement;
    Tensor weight; // undefined while adapted
    std::optional<adapters::AdaptedLinear> adapted;

    Tensor forward(const Tensor& x, bool training, std::mt19937_64* rng) const;
    /// Dense weight the layer currently computes with.
    Matrix effective_weight() const;
    std::size_t out_features() const;
    std::size_t in_features() const;
};

struct NamedTensor {
    std::string name;
    Placement placement;
    Tensor tensor;
};

struct ForwardOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

/// Pre-norm decoder-only transformer with a gated GELU MLP and learned
/// absolute position embeddings.
class Model {
public:
    /// Parameters drawn from N(0, 0.02^2) (norm gains 1, biases 0) using config.seed.
    explicit Model(TransformerConfig config);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// Deep copy: no tensor is shared with the original.
    Model clone() const;

    const TransformerConfig& config() const noexcept { return config_; }

    /// Logits (seq_len x vocab) as a graph node.
    Tensor forward(std::span<const int> tokens, const ForwardOptions& options = {}) const;
    /// Eval-mode logits without keeping a graph.
    Matrix logits(std::span<const int> tokens) const;

    /// Every tensor in a stable order. Adapted projections contribute
    /// "<name>.weight" (frozen), "<name>.lora_a" and "<name>.lora_b".
    std::vector<NamedTensor> parameters() const;
    std::vector<NamedTensor> trainable_parameters() const;
    std::size_t parameter_count() const;
    std::size_t trainable_count() const;

    std::vector<Linear*> linears();
    std::vector<const Linear*> linears() const;
    Linear* find_linear(std::string_view name);
    const Linear* find_linear(std::string_view name) const;
    std::size_t adapted_count() const;

    void set_trainable(bool on);
    void zero_grad();

    /// Adapter configuration the adapted projections were built from, if any.
    const std::optional<adapters::AdapterConfig>& adapter_config() const noexcept { return adapter_config_; }
    void set_adapter_config(std::optional<adapters::AdapterConfig> cfg) { adapter_config_ = std::move(cfg); }

    /// Replace every adapter by its merged dense weight.
    void merge_adapters();

private:
    struct Block {
        Tensor ln1_gain, ln1_bias;
        Linear query, key, value, output;
        Tensor ln2_gain, ln2_bias;
        Linear gate, up, down;
    };

    Model() = default;
    Tensor attention(const Block& block, const Tensor& h, const ForwardOptions& options) const;

    TransformerConfig config_;
    Tensor tok_embed_;
    Tensor pos_embed_;
    std::vector<Block> blocks_;
    Tensor final_gain_, final_bias_;
    Linear head_;
    std::optional<adapters::AdapterConfig> adapter_config_;
};

} // namespace lrsl::nn
