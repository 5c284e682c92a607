// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace testgenie::cli {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment lookup.
EnvLookup process_env();

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on operational failure and 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const EnvLookup& env = process_env());

/// Settings layered as defaults < config file < TESTGENIE_* environment < flags.
/// Exposed for tests; `file_values` are the parsed config file entries.
std::map<std::string, std::string> resolve_settings(const std::map<std::string, std::string>& file_values,
                                                    const EnvLookup& env,
                                                    const std::map<std::string, std::string>& flag_values);

/// `key = value` entries of a TOML-style config file (top-level keys only).
std::map<std::string, std::string> read_config_file(const std::string& path);

} // namespace testgenie::cli
