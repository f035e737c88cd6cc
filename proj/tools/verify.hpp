#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vdc::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    double metric = 0.0;     // observed worst value
    double threshold = 0.0;  // bound it must stay under
};

struct Options {
    std::uint64_t seed = 0;
    bool inject_fault = false;  // deliberately perturb one weight to prove
                                // the suite can fail
};

extern const std::vector<std::string> kSuiteNames;

/// Run one named suite ("linalg", "funnel", "pruning", "attnopt", "toyunet",
/// "conditioning") or "all". Throws ArgumentError for unknown names.
std::vector<CheckResult> run_suite(const std::string& suite, const Options& options);

}  // namespace vdc::verify
