#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cmde::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

struct RunOptions {
  std::string out_dir = "out";
  std::optional<std::size_t> threads;  // empty: all available cores
  std::optional<std::uint64_t> seed;   // replaces the config seed
};

// Runs one command on an already parsed config document. Every run writes
// resolved_config.json into the output directory; failures also write
// error.json there and print the same document on stderr.
int run(std::string_view command, const nlohmann::ordered_json& config, const RunOptions& options);

// Full command-line entry point:
//   <command> --config <path> [--out <dir>] [--threads N] [--seed S]
int main(int argc, char** argv);

}  // namespace cmde::cli
