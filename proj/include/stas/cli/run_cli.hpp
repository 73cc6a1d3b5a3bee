#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stas::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitRuntimeError = 3;

// Entry point behind the `stas` binary. Errors go to `err` as one JSON object.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stas::cli
