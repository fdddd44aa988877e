#pragma once

#include <string>
#include <vector>

namespace drivesql::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one subcommand. Returns 0 on success, 1 on validation errors, 2 on I/O errors.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace drivesql::cli
