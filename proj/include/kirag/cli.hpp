#pragma once

#include <string>
#include <vector>

namespace kirag {

/// Entry point for the kirag binary; args excludes the program name.
/// Exit codes: 0 success, 1 runtime failure (single-line "error: ..." on
/// stderr), 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace kirag
