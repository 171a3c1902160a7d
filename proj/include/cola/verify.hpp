#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cola/theory.hpp"

// Randomised certificate suites over the approximation results.
namespace cola::theory {

struct SuiteResult {
    std::string name;
    std::vector<Certificate> certificates;
    std::size_t count(Verdict v) const;
    // No asserted certificate failed.
    bool ok() const { return count(Verdict::Fail) == 0; }
};

// dominance, identity-optimum, outside-feature, strict-improvement, recovery
const std::vector<std::string>& suite_names();

// instances = 0 uses the default size of each suite. Throws std::invalid_argument on an unknown name.
SuiteResult run_suite(const std::string& name, std::uint64_t seed, std::size_t instances = 0);

// Best ||Y - B A X||_F by alternating least squares over random starts.
double als_error(const Problem& p, std::size_t restarts, std::uint64_t seed);

}  // namespace cola::theory
