#pragma once

#include <iosfwd>

namespace abc {

// Exit codes of the `abc` binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Entry point of `abc <command> <config.json> [--workers=N] [--dotted.key=value ...]`
// with commands validate-kernels, train, sample, toy, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abc
