#pragma once

#include <cstdint>

// Invariant checks over random instances; prints one line per check and
// returns the process exit code.
int run_selftest(std::uint64_t seed, int workers);
