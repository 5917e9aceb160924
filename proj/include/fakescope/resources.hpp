#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fakescope {

/// Bundled data files (prompt catalog, canned texts, exemplars), keyed by their
/// path relative to the data/ directory, e.g. "prompts/system.txt".
std::optional<std::string_view> embedded_resource(std::string_view name);

std::vector<std::string> embedded_resource_names();

}  // namespace fakescope
