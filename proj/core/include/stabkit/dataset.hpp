#pragma once

#include "stabkit/network.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stabkit {

/// Reads one point per row of comma-separated floats. A first line that
/// does not parse as numbers is treated as a header. When `expected_dim`
/// is given every row must have exactly that many columns.
std::vector<Vector> load_points(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_dim = std::nullopt);

void save_points(const std::vector<Vector>& points, const std::filesystem::path& path,
                 const std::string& column_prefix = "x");

}  // namespace stabkit
