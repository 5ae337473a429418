#pragma once

#include "posl/engine.hpp"

#include <filesystem>
#include <string>

namespace posl {

/// Parses a JSON run config. Missing keys keep their defaults; unknown keys and bad values
/// raise DataValidation naming the field, e.g. "learners[1].family: unknown value 'x'".
EngineConfig parse_engine_config(const std::string& text);
EngineConfig load_engine_config(const std::filesystem::path& path);

/// Canonical JSON (sorted keys, two-space indent); parse_engine_config inverts it.
std::string dump_engine_config(const EngineConfig& config);

}  // namespace posl
