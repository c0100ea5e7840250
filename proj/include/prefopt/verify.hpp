#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prefopt {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// The built-in verification battery behind the `verify` subcommand:
// loss/preset identities against naive closed-form evaluation, the
// log(a+b) identity, finite-difference gradient checks for every preset and
// constrained variant, the eta-line under-specification demo, the monotone
// constraint proposition, and identity-constraint conservation.
std::vector<CheckResult> run_verification(std::uint64_t seed = 0);

bool all_passed(const std::vector<CheckResult>& results);

// JSON array of {check_name, status, detail} objects.
std::string verification_report_json(const std::vector<CheckResult>& results);

} // namespace prefopt
