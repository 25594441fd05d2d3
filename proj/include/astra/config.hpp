#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "astra/selftrain.hpp"

namespace astra::config {

// Config files are flat JSON objects keyed by dotted names
// ("student.lr": 0.1). Unknown keys are rejected. `keys` records what the
// file (or --set) touched explicitly.
struct Loaded {
  selftrain::TrainConfig train;
  std::set<std::string> keys;
};

Loaded load_file(const std::filesystem::path& path);

// Apply one dotted key. Value is parsed as JSON when possible, otherwise
// taken as a string ("--set student.lr=0.05").
void apply_override(Loaded& loaded, const std::string& key,
                    const std::string& value);

// Canonical flat dump of every knob, for the config snapshot in the run
// output directory.
std::string to_json_string(const selftrain::TrainConfig& cfg);

}  // namespace astra::config
