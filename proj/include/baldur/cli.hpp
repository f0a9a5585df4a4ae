#pragma once

#include <ostream>

namespace baldur {

// Exit codes: 0 success (possibly with warnings), 2 input error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace baldur
