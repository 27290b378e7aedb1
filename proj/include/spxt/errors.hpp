#pragma once

#include <stdexcept>
#include <string>

namespace spxt {

// Exception families map one-to-one onto the CLI exit codes.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum ExitCode : int {
    kExitOk = 0,
    kExitIo = 1,
    kExitConfig = 2,
    kExitMismatch = 3,
    kExitSolver = 4,
};

}  // namespace spxt
