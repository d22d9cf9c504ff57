#pragma once

// Subcommand dispatcher behind the `erg` binary. Every successful run writes
// its outputs plus manifest.json (resolved options, seed, SHA-256 digests)
// into the --out directory.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace erg::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

/// Lowercase hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

}  // namespace erg::cli
