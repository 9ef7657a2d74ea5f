#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace lrsl::nn {

/// Role of a weight inside the transformer; adapters are targeted by these labels.
enum class Placement { query, key, value, output, gate, mlp_up, mlp_down, embed, head, norm };

std::string_view to_string(Placement p) noexcept;
std::optional<Placement> parse_placement(std::string_view label) noexcept;

/// True for the seven projections inside a decoder block.
bool is_block_projection(Placement p) noexcept;

} // namespace lrsl::nn
