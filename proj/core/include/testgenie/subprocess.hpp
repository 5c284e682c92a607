// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace testgenie {

struct ProcessSpec {
    std::vector<std::string> argv;
    std::filesystem::path cwd;
    /// The complete child environment; nothing is inherited.
    std::map<std::string, std::string> env;
    std::chrono::milliseconds timeout{120000};
};

struct ProcessResult {
    int exit_code = -1;
    int term_signal = 0;
    bool timed_out = false;
    std::string out;
    std::string err;
    double elapsed_seconds = 0.0;
};

/// The program could not be started (not found, not executable, bad cwd).
class SpawnError : public Error {
public:
    using Error::Error;
};

/// Resolves argv[0] against PATH from `spec.env` (falling back to this
/// process's PATH), then runs it in its own process group. On timeout the
/// whole group is killed.
ProcessResult run_process(const ProcessSpec& spec);

} // namespace testgenie
