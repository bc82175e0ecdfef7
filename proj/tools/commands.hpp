#pragma once

// Exit codes: 0 success, 1 usage or input error, 2 numeric failure.
namespace afsd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumeric = 2;

int run(int argc, char** argv);

}  // namespace afsd::cli
