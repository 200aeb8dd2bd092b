#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "patchkit/dataset.hpp"

namespace patchkit::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kConfigError = 2, kAdapterFailure = 3 };

// Full command line, argv[0] included. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// SHA-256 over record ids, 8-bit pixels and box coordinates, as hex.
std::string dataset_hash(const Dataset& dataset);

}  // namespace patchkit::cli
