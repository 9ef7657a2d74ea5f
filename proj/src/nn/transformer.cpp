#include "lrsl/nn/transformer.hpp"

#include "lrsl/nn/ops.hpp"

#include <cmath>
#include <numeric>

namespace lrsl::nn {

namespace {

constexpr double kInitStd = 0.02;

Tensor copy_leaf(const Tensor& t) {
    return t.requires_grad() ? Tensor::parameter(t.value()) : Tensor::constant(t.value());
}

Linear make_linear(std::string name, Placement placement, std::size_t out, std::size_t in, std::mt19937_64& rng) {
    return Linear{std::move(name), placement, Tensor::parameter(Matrix::gaussian(out, in, kInitStd, rng)), std::nullopt};
}

Linear clone_linear(const Linear& src) {
    Linear dst{src.name, src.placement, {}, std::nullopt};
    if (src.adapted) {
        const auto& ad = *src.adapted;
        dst.adapted.emplace(ad.name(), ad.frozen().value(), ad.b().value(), ad.a().value(), ad.scaling(),
                            ad.dropout());
        dst.adapted->a().set_requires_grad(ad.a().requires_grad());
        dst.adapted->b().set_requires_grad(ad.b().requires_grad());
    } else {
        dst.weight = copy_leaf(src.weight);
    }
    return dst;
}

void append_linear(std::vector<NamedTensor>& out, const Linear& lin) {
    if (lin.adapted) {
        out.push_back({lin.name + ".weight", lin.placement, lin.adapted->frozen()});
        out.push_back({lin.name + ".lora_a", lin.placement, lin.adapted->a()});
        out.push_back({lin.name + ".lora_b", lin.placement, lin.adapted->b()});
    } else {
        out.push_back({lin.name + ".weight", lin.placement, lin.weight});
    }
}

} // namespace

void TransformerConfig::validate() const {
    std::string problems;
    auto need = [&](bool ok, const char* msg) {
        if (!ok) {
            problems += problems.empty() ? "" : "; ";
            problems += msg;
        }
    };
    need(vocab_size >= 1, "vocab_size must be >= 1");
    need(d_model >= 1, "d_model must be >= 1");
    need(n_heads >= 1, "n_heads must be >= 1");
    need(n_layers >= 1, "n_layers must be >= 1");
    need(d_ff >= 1, "d_ff must be >= 1");
    need(max_seq_len >= 1, "max_seq_len must be >= 1");
    need(n_heads == 0 || d_model % n_heads == 0, "n_heads must divide d_model");
    if (!problems.empty()) {
        throw ConfigError("invalid transformer config: " + problems);
    }
}

Tensor Linear::forward(const Tensor& x, bool training, std::mt19937_64* rng) const {
    if (adapted) {
        return adapted->forward(x, training, rng);
    }
    return matmul_nt(x, weight);
}

Matrix Linear::effective_weight() const { return adapted ? adapted->effective_weight() : weight.value(); }

std::size_t Linear::out_features() const { return adapted ? adapted->out_features() : weight.rows(); }

std::size_t Linear::in_features() const { return adapted ? adapted->in_features() : weight.cols(); }

Model::Model(TransformerConfig config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t d = config_.d_model;
    tok_embed_ = Tensor::parameter(Matrix::gaussian(config_.vocab_size, d, kInitStd, rng));
    pos_embed_ = Tensor::parameter(Matrix::gaussian(config_.max_seq_len, d, kInitStd, rng));
    blocks_.reserve(config_.n_layers);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        Block b{
            Tensor::parameter(Matrix(1, d, 1.0)),
            Tensor::parameter(Matrix(1, d, 0.0)),
            make_linear(p + "attn.query", Placement::query, d, d, rng),
            make_linear(p + "attn.key", Placement::key, d, d, rng),
            make_linear(p + "attn.value", Placement::value, d, d, rng),
            make_linear(p + "attn.output", Placement::output, d, d, rng),
            Tensor::parameter(Matrix(1, d, 1.0)),
            Tensor::parameter(Matrix(1, d, 0.0)),
            make_linear(p + "mlp.gate", Placement::gate, config_.d_ff, d, rng),
            make_linear(p + "mlp.up", Placement::mlp_up, config_.d_ff, d, rng),
            make_linear(p + "mlp.down", Placement::mlp_down, d, config_.d_ff, rng),
        };
        blocks_.push_back(std::move(b));
    }
    final_gain_ = Tensor::parameter(Matrix(1, d, 1.0));
    final_bias_ = Tensor::parameter(Matrix(1, d, 0.0));
    head_ = make_linear("head", Placement::head, config_.vocab_size, d, rng);
}

Model Model::clone() const {
    Model m;
    m.config_ = config_;
    m.tok_embed_ = copy_leaf(tok_embed_);
    m.pos_embed_ = copy_leaf(pos_embed_);
    for (const auto& b : blocks_) {
        m.blocks_.push_back(Block{copy_leaf(b.ln1_gain), copy_leaf(b.ln1_bias), clone_linear(b.query),
                                  clone_linear(b.key), clone_linear(b.value), clone_linear(b.output),
                                  copy_leaf(b.ln2_gain), copy_leaf(b.ln2_bias), clone_linear(b.gate),
                                  clone_linear(b.up), clone_linear(b.down)});
    }
    m.final_gain_ = copy_leaf(final_gain_);
    m.final_bias_ = copy_leaf(final_bias_);
    m.head_ = clone_linear(head_);
    m.adapter_config_ = adapter_config_;
    return m;
}

Tensor Model::attention(const Block& block, const Tensor& h, const ForwardOptions& options) const {
    const std::size_t heads = config_.n_heads;
    const std::size_t dh = config_.d_model / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = block.query.forward(h, options.training, options.rng);
    Tensor k = block.key.forward(h, options.training, options.rng);
    Tensor v = block.value.forward(h, options.training, options.rng);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        Tensor qh = slice_cols(q, i * dh, (i + 1) * dh);
        Tensor kh = slice_cols(k, i * dh, (i + 1) * dh);
        Tensor vh = slice_cols(v, i * dh, (i + 1) * dh);
        Tensor p = causal_softmax(scale(matmul_nt(qh, kh), inv_sqrt));
        outs.push_back(matmul(p, vh));
    }
    Tensor merged = heads == 1 ? outs.front() : concat_cols(outs);
    return block.output.forward(merged, options.training, options.rng);
}

Tensor Model::forward(std::span<const int> tokens, const ForwardOptions& options) const {
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (tokens.size() > config_.max_seq_len) {
        throw SequenceTooLongError("forward: sequence of " + std::to_string(tokens.size()) +
                                   " tokens exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config_.vocab_size) {
            throw TokenRangeError("forward: token " + std::to_string(tokens[i]) + " at position " +
                                  std::to_string(i) + " outside vocabulary of " + std::to_string(config_.vocab_size));
        }
    }
    std::vector<int> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), 0);

    Tensor x = add(embedding(tok_embed_, tokens), embedding(pos_embed_, positions));
    for (const auto& block : blocks_) {
        Tensor h = layer_norm(x, block.ln1_gain, block.ln1_bias);
        x = add(x, attention(block, h, options));
        Tensor h2 = layer_norm(x, block.ln2_gain, block.ln2_bias);
        Tensor gated = mul(gelu(block.gate.forward(h2, options.training, options.rng)),
                           block.up.forward(h2, options.training, options.rng));
        x = add(x, block.down.forward(gated, options.training, options.rng));
    }
    Tensor out = layer_norm(x, final_gain_, final_bias_);
    return head_.forward(out, options.training, options.rng);
}

Matrix Model::logits(std::span<const int> tokens) const { return forward(tokens).value(); }

std::vector<NamedTensor> Model::parameters() const {
    std::vector<NamedTensor> out;
    out.push_back({"tok_embed", Placement::embed, tok_embed_});
    out.push_back({"pos_embed", Placement::embed, pos_embed_});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const auto& b = blocks_[l];
        const std::string p = "blocks." + std::to_string(l) + ".";
        out.push_back({p + "ln1.gain", Placement::norm, b.ln1_gain});
        out.push_back({p + "ln1.bias", Placement::norm, b.ln1_bias});
        append_linear(out, b.query);
        append_linear(out, b.key);
        append_linear(out, b.value);
        append_linear(out, b.output);
        out.push_back({p + "ln2.gain", Placement::norm, b.ln2_gain});
        out.push_back({p + "ln2.bias", Placement::norm, b.ln2_bias});
        append_linear(out, b.gate);
        append_linear(out, b.up);
        append_linear(out, b.down);
    }
    out.push_back({"final_norm.gain", Placement::norm, final_gain_});
    out.push_back({"final_norm.bias", Placement::norm, final_bias_});
    append_linear(out, head_);
    return out;
}

std::vector<NamedTensor> Model::trainable_parameters() const {
    std::vector<NamedTensor> out;
    for (auto& p : parameters()) {
        if (p.tensor.requires_grad()) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
        n += p.tensor.value().size();
    }
    return n;
}

std::size_t Model::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : trainable_parameters()) {
        n += p.tensor.value().size();
    }
    return n;
}

std::vector<Linear*> Model::linears() {
    std::vector<Linear*> out;
    for (auto& b : blocks_) {
        for (Linear* lin : {&b.query, &b.key, &b.value, &b.output, &b.gate, &b.up, &b.down}) {
            out.push_back(lin);
        }
    }
    out.push_back(&head_);
    return out;
}

std::vector<const Linear*> Model::linears() const {
    std::vector<const Linear*> out;
    for (auto* lin : const_cast<Model*>(this)->linears()) {
        out.push_back(lin);
    }
    return out;
}

Linear* Model::find_linear(std::string_view name) {
    for (auto* lin : linears()) {
        if (lin->name == name) {
            return lin;
        }
    }
    return nullptr;
}

const Linear* Model::find_linear(std::string_view name) const {
    return const_cast<Model*>(this)->find_linear(name);
}

std::size_t Model::adapted_count() const {
    std::size_t n = 0;
    for (const auto* lin : linears()) {
        n += lin->adapted ? 1 : 0;
    }
    return n;
}

void Model::set_trainable(bool on) {
    for (auto& p : parameters()) {
        if (p.name.ends_with(".weight")) {
            const auto* lin = find_linear(std::string_view(p.name).substr(0, p.name.size() - 7));
            if (lin != nullptr && lin->adapted) {
                continue;
            }
        }
        p.tensor.set_requires_grad(on);
    }
}

void Model::zero_grad() {
    for (auto& p : parameters()) {
        p.tensor.zero_grad();
    }
}

void Model::merge_adapters() {
    for (auto* lin : linears()) {
        if (lin->adapted) {
            const bool trainable = lin->adapted->a().requires_grad();
            lin->weight = trainable ? Tensor::parameter(lin->adapted->effective_weight())
                                    : Tensor::constant(lin->adapted->effective_weight());
            lin->adapted.reset();
        }
    }
    adapter_config_.reset();
}

} // namespace lrsl::nn
