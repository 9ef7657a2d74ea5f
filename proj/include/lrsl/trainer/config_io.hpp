#pragma once

#include "lrsl/adapters/adapted_linear.hpp"
#include "lrsl/nn/transformer.hpp"
#include "lrsl/trainer/config.hpp"
#include "lrsl/trainer/tasks.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace lrsl::trainer {

using Json = nlohmann::json;

/// Reads fields of one JSON object, keeping defaults for absent keys and
/// collecting a message per violation (wrong type, unknown key, bad value)
/// instead of stopping at the first.
class StrictObject {
public:
    StrictObject(const Json& object, std::string path, std::vector<std::string>& errors);

    bool ok() const noexcept { return object_ != nullptr; }
    const Json* find(const char* key);
    void read(const char* key, std::size_t& out);
    void read_seed(const char* key, std::uint64_t& out);
    void read(const char* key, double& out);
    void read(const char* key, bool& out);
    void read(const char* key, std::string& out);
    void fail(const std::string& key, const std::string& message);
    /// Reports every key that was never looked up.
    void finish();
    const std::string& path() const noexcept { return path_; }

private:
    const Json* object_ = nullptr;
    std::string path_;
    std::vector<std::string>& errors_;
    std::vector<std::string> seen_;
};

Json to_json(const nn::TransformerConfig& cfg);
Json to_json(const adapters::AdapterConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const TaskSpec& spec);

// Each parser appends messages to `errors` and returns a best-effort value;
// the result is meaningful only when no message was added.
nn::TransformerConfig parse_transformer_config(const Json& j, const std::string& path, std::vector<std::string>& errors);
adapters::AdapterConfig parse_adapter_config(const Json& j, const std::string& path, std::vector<std::string>& errors);
TrainConfig parse_train_config(const Json& j, const std::string& path, std::vector<std::string>& errors);
TaskSpec parse_task_spec(const Json& j, const std::string& path, std::vector<std::string>& errors);

/// Runs cfg.validate() and records its message under `path` instead of throwing.
template <class Config>
void collect_validation(const Config& cfg, const std::string& path, std::vector<std::string>& errors) {
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        errors.push_back(path + ": " + e.what());
    }
}

} // namespace lrsl::trainer
