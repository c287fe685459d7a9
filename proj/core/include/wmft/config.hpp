#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wmft/pipeline.hpp"

namespace wmft {

// Run configuration files. Grammar, one statement per line:
//
//   # comment            (also ';')
//   [section]
//   key = value
//
// Sections are env, model, loss, optim, plan, replay and run. Unknown
// sections, unknown keys and repeated keys are rejected with ConfigError
// naming the line. Keys that are not set keep their defaults.

struct ConfigKey {
  std::string section;
  std::string name;
  std::string help;
};

// Every accepted key in canonical order.
const std::vector<ConfigKey>& config_keys();

RunConfig parse_config(std::string_view text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

// "section.key=value" or "key=value"; a bare key must be unique across
// sections. The result is not validated; call RunConfig::validate.
void apply_override(RunConfig& cfg, std::string_view assignment);

// Canonical form: every key of every section in canonical order, reals in
// shortest round-trip notation. parse_config(echo_config(c)) == c.
std::string echo_config(const RunConfig& cfg);

}  // namespace wmft
