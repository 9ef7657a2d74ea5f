#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace lrsl::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int { ok = 0, runtime_failure = 1, invalid_input = 2, data_integrity = 3 };

/// Entry point shared by the executable and the tests. args[0] is the
/// program name. Subcommands: decompose, init, train, analyze, merge.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Value of LRSL_SEED, if set. Throws ConfigError when it is not a decimal integer.
std::optional<std::uint64_t> seed_from_environment();

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

} // namespace lrsl::cli
