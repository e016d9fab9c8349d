#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kraken::cli {

/// Runs one `kraken-sim` invocation; args excludes the program name.
/// Returns the process exit code (0 iff no error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count for batch runs: KRAKEN_SIM_THREADS if set and positive,
/// else hardware concurrency.
unsigned batch_threads();

}  // namespace kraken::cli
