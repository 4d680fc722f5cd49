#pragma once

#include <string>
#include <vector>

namespace ldae::cli {

// Runs one subcommand. Exit codes: 0 ok, 2 IO/config, 3 missing prerequisite,
// 4 divergence, 5 missing baseline.
int run(const std::vector<std::string>& args);

}  // namespace ldae::cli
