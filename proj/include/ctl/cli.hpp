#pragma once

#include <string>
#include <vector>

namespace ctl::cli {

// Runs one subcommand (generate | split | synth | features | train | ablate |
// eval | topk | attention | baseline). Returns the process exit code: 0 on
// success, 2 on usage errors, 1 on module errors.
int run(const std::vector<std::string>& args);

}  // namespace ctl::cli
