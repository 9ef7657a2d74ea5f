#include "lrsl/trainer/config_io.hpp"

#include <algorithm>

namespace lrsl::trainer {

StrictObject::StrictObject(const Json& object, std::string path, std::vector<std::string>& errors)
    : path_(std::move(path)), errors_(errors) {
    if (!object.is_object()) {
        errors_.push_back(path_ + ": expected an object");
        return;
    }
    object_ = &object;
}

const Json* StrictObject::find(const char* key) {
    if (object_ == nullptr) {
        return nullptr;
    }
    seen_.emplace_back(key);
    const auto it = object_->find(key);
    return it == object_->end() ? nullptr : &*it;
}

void StrictObject::fail(const std::string& key, const std::string& message) {
    errors_.push_back(path_ + "." + key + ": " + message);
}

void StrictObject::read(const char* key, std::size_t& out) {
    if (const Json* v = find(key)) {
        if (v->is_number_unsigned()) {
            out = v->get<std::size_t>();
        } else if (v->is_number_integer()) {
            // Values built in code are signed even when non-negative.
            if (v->get<std::int64_t>() >= 0) {
                out = static_cast<std::size_t>(v->get<std::int64_t>());
            } else {
                fail(key, "must be non-negative");
            }
        } else {
            fail(key, "expected a non-negative integer");
        }
    }
}

void StrictObject::read_seed(const char* key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
        if (v->is_number_unsigned()) {
            out = v->get<std::uint64_t>();
        } else if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
            out = static_cast<std::uint64_t>(v->get<std::int64_t>());
        } else {
            fail(key, "expected a non-negative integer seed");
        }
    }
}

void StrictObject::read(const char* key, double& out) {
    if (const Json* v = find(key)) {
        if (v->is_number()) {
            out = v->get<double>();
        } else {
            fail(key, "expected a number");
        }
    }
}

void StrictObject::read(const char* key, bool& out) {
    if (const Json* v = find(key)) {
        if (v->is_boolean()) {
            out = v->get<bool>();
        } else {
            fail(key, "expected true or false");
        }
    }
}

void StrictObject::read(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
        if (v->is_string()) {
            out = v->get<std::string>();
        } else {
            fail(key, "expected a string");
        }
    }
}

void StrictObject::finish() {
    if (object_ == nullptr) {
        return;
    }
    for (const auto& [key, value] : object_->items()) {
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
            errors_.push_back(path_ + ": unknown key '" + key + "'");
        }
    }
}

Json to_json(const nn::TransformerConfig& cfg) {
    return Json{{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model},   {"n_heads", cfg.n_heads},
                {"n_layers", cfg.n_layers},     {"d_ff", cfg.d_ff},         {"max_seq_len", cfg.max_seq_len},
                {"seed", cfg.seed}};
}

Json to_json(const adapters::AdapterConfig& cfg) {
    Json placement = Json::array();
    for (auto p : cfg.placement) {
        placement.push_back(std::string(nn::to_string(p)));
    }
    return Json{{"scheme", std::string(adapters::to_string(cfg.scheme))},
                {"rank", cfg.rank},
                {"alpha", cfg.alpha},
                {"dropout", cfg.dropout},
                {"placement", placement},
                {"seed", cfg.seed}};
}

Json to_json(const TrainConfig& cfg) {
    return Json{{"lr", cfg.lr},
                {"warmup_steps", cfg.warmup_steps},
                {"total_steps", cfg.total_steps},
                {"batch_size", cfg.batch_size},
                {"weight_decay", cfg.weight_decay},
                {"adam_beta1", cfg.adam_beta1},
                {"adam_beta2", cfg.adam_beta2},
                {"adam_eps", cfg.adam_eps},
                {"seed", cfg.seed},
                {"max_seq_len", cfg.max_seq_len}};
}

Json to_json(const TaskSpec& spec) {
    return Json{{"kind", std::string(to_string(spec.kind))},
                {"vocab_size", spec.vocab_size},
                {"seq_len", spec.seq_len},
                {"num_train", spec.num_train},
                {"num_eval", spec.num_eval},
                {"seed", spec.seed}};
}

nn::TransformerConfig parse_transformer_config(const Json& j, const std::string& path,
                                               std::vector<std::string>& errors) {
    nn::TransformerConfig cfg;
    StrictObject obj(j, path, errors);
    obj.read("vocab_size", cfg.vocab_size);
    obj.read("d_model", cfg.d_model);
    obj.read("n_heads", cfg.n_heads);
    obj.read("n_layers", cfg.n_layers);
    obj.read("d_ff", cfg.d_ff);
    obj.read("max_seq_len", cfg.max_seq_len);
    obj.read_seed("seed", cfg.seed);
    obj.finish();
    return cfg;
}

adapters::AdapterConfig parse_adapter_config(const Json& j, const std::string& path,
                                             std::vector<std::string>& errors) {
    adapters::AdapterConfig cfg;
    StrictObject obj(j, path, errors);
    std::string scheme;
    obj.read("scheme", scheme);
    if (obj.ok() && !scheme.empty()) {
        if (auto s = adapters::parse_scheme(scheme)) {
            cfg.scheme = *s;
        } else {
            obj.fail("scheme", "unknown scheme '" + scheme + "' (expected lora, pissa, milora or random_components)");
        }
    }
    obj.read("rank", cfg.rank);
    // LoRA's conventional alpha is twice the rank; spectral schemes use alpha = rank.
    cfg.alpha = static_cast<double>(cfg.scheme == adapters::Scheme::lora ? 2 * cfg.rank : cfg.rank);
    obj.read("alpha", cfg.alpha);
    obj.read("dropout", cfg.dropout);
    if (const Json* p = obj.find("placement")) {
        if (!p->is_array()) {
            obj.fail("placement", "expected an array of placement labels");
        } else {
            cfg.placement.clear();
            for (const auto& item : *p) {
                const auto label = item.is_string() ? nn::parse_placement(item.get<std::string>()) : std::nullopt;
                if (label) {
                    cfg.placement.insert(*label);
                } else {
                    obj.fail("placement", "unknown placement label " + item.dump());
                }
            }
        }
    }
    obj.read_seed("seed", cfg.seed);
    obj.finish();
    return cfg;
}

TrainConfig parse_train_config(const Json& j, const std::string& path, std::vector<std::string>& errors) {
    TrainConfig cfg;
    StrictObject obj(j, path, errors);
    obj.read("lr", cfg.lr);
    obj.read("warmup_steps", cfg.warmup_steps);
    obj.read("total_steps", cfg.total_steps);
    obj.read("batch_size", cfg.batch_size);
    obj.read("weight_decay", cfg.weight_decay);
    obj.read("adam_beta1", cfg.adam_beta1);
    obj.read("adam_beta2", cfg.adam_beta2);
    obj.read("adam_eps", cfg.adam_eps);
    obj.read_seed("seed", cfg.seed);
    obj.read("max_seq_len", cfg.max_seq_len);
    obj.finish();
    return cfg;
}

TaskSpec parse_task_spec(const Json& j, const std::string& path, std::vector<std::string>& errors) {
    TaskSpec spec;
    StrictObject obj(j, path, errors);
    std::string kind;
    obj.read("kind", kind);
    if (obj.ok() && !kind.empty()) {
        if (auto k = parse_task_kind(kind)) {
            spec.kind = *k;
        } else {
            obj.fail("kind", "unknown task kind '" + kind + "' (expected copy, reverse or modular_add)");
        }
    }
    obj.read("vocab_size", spec.vocab_size);
    obj.read("seq_len", spec.seq_len);
    obj.read("num_train", spec.num_train);
    obj.read("num_eval", spec.num_eval);
    obj.read_seed("seed", spec.seed);
    obj.finish();
    return spec;
}

} // namespace lrsl::trainer
