#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stabkit::cli {

enum ExitCode : int { kAllDecided = 0, kError = 1, kSomeUnknown = 2 };

/// Parses `args` (without the program name) and runs the subcommand.
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

/// Output directory used when --out is not given.
std::filesystem::path default_out_dir();

}  // namespace stabkit::cli
