#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "scg/trainer.hpp"

namespace scg {

// Flat "key = value" text, one pair per line. Blank lines and lines starting
// with '#' are skipped. Unknown, duplicate or malformed keys raise
// ConfigError naming the line; keys not given keep their defaults. The
// result is validated.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);

// Every key in a fixed order; parse_train_config reads it back unchanged.
std::string serialize_train_config(const TrainConfig& config);

}  // namespace scg
