#pragma once

#include <iosfwd>

namespace abscribe {

// Entry point of the `abscribe` command. Returns the process exit code:
// 0 on success, 1 on validation errors, 2 on backend errors.
//
// ABSCRIBE_DETERMINISTIC_SEED and ABSCRIBE_FIXED_TIME (RFC 3339) make ids
// and timestamps reproducible across runs.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abscribe
