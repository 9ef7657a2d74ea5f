#include "lrsl/nn/placement.hpp"

#include <array>
#include <utility>

namespace lrsl::nn {

namespace {
constexpr std::array<std::pair<Placement, std::string_view>, 10> kLabels{{
    {Placement::query, "query"},
    {Placement::key, "key"},
    {Placement::value, "value"},
    {Placement::output, "output"},
    {Placement::gate, "gate"},
    {Placement::mlp_up, "mlp_up"},
    {Placement::mlp_down, "mlp_down"},
    {Placement::embed, "embed"},
    {Placement::head, "head"},
    {Placement::norm, "norm"},
}};
}

std::string_view to_string(Placement p) noexcept {
    for (const auto& [value, label] : kLabels) {
        if (value == p) {
            return label;
        }
    }
    return "unknown";
}

std::optional<Placement> parse_placement(std::string_view label) noexcept {
    for (const auto& [value, name] : kLabels) {
        if (name == label) {
            return value;
        }
    }
    return std::nullopt;
}

bool is_block_projection(Placement p) noexcept {
    switch (p) {
    case Placement::query:
    case Placement::key:
    case Placement::value:
    case Placement::output:
    case Placement::gate:
    case Placement::mlp_up:
    case Placement::mlp_down:
        return true;
    default:
        return false;
    }
}

} // namespace lrsl::nn
