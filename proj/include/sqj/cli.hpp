#pragma once

// Command-line driver. Exit codes: 0 success, 1 check failure (or no feasible
// design point), 2 usage or I/O error.

#include <iosfwd>
#include <string>

#include "sqj/perf.hpp"
#include "sqj/quantizer.hpp"

namespace sqj {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default --budget (device name or file).
inline constexpr const char* kBudgetEnv = "SQJ2_BUDGET";

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Per-layer CSV with a version comment and a total/fps footer.
std::string profile_csv(const CycleReport& r);
/// Per-node FL table printed by `quantize`.
std::string scheme_table(const NetworkGraph& g, const QuantScheme& s);

}  // namespace sqj
