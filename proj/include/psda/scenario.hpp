#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "psda/survey.hpp"

namespace psda {

/// A mission configuration loaded from a TOML scenario file.
///
/// Every table is optional; missing keys keep the MissionConfig defaults. The world
/// is generated from world.seed unless explicit targets are listed, and unknown keys
/// are rejected so that typos do not silently fall back to defaults.
struct Scenario {
  std::string name = "default";
  MissionConfig mission;
};

/// Throws Error(kConfig) on syntax errors, unknown keys or invalid values.
Scenario parse_scenario(std::string_view toml_text, std::string_view source = "<string>");
/// As parse_scenario; an unreadable file is also kConfig.
Scenario load_scenario(const std::filesystem::path& path);

/// Built-in scenarios by name ("default", "challenging").
Scenario builtin_scenario(std::string_view name);

}  // namespace psda
