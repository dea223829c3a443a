#pragma once

#include <string>

namespace sglab {

// Exit codes: verdict-bearing subcommands use kExitVerdictFailed when the run
// completed but the checked property did not hold, so scripts can tell a
// failed experiment from a crashed one.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerdictFailed = 2;

// FNV-1a 64-bit over the canonical config dump, first 8 hex digits; run
// directories are named <hash8>-s<seed> so identical configs land in the
// same place and reruns are byte-identical.
std::string config_hash8(const std::string& canonical);

int cli_main(int argc, const char* const* argv);

} // namespace sglab
