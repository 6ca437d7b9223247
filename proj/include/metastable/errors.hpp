#pragma once

#include <stdexcept>
#include <string>

namespace metastable {

// Error taxonomy used across the library. The CLI maps these onto its
// exit-code contract (config/schema problems vs. runtime failures).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A parameter lies outside its mathematical domain (epsilon <= 0, lambda
// outside (0,1), K < 1, ...).
struct DomainError : Error {
    using Error::Error;
};

// Malformed data: non-finite path values, out-of-range indices, paths too
// short for the requested window, schedules exceeding the horizon.
struct InputError : Error {
    using Error::Error;
};

// A structural invariant was violated (non-refining filtration, non-monotone
// witness predicate, malformed schedule interleaving).
struct ContractError : Error {
    using Error::Error;
};

// Checked index arithmetic would wrap around.
struct OverflowError : Error {
    using Error::Error;
};

// A configured iteration/index budget was exhausted before an answer was
// reached. Distinct from OverflowError: the computation was cut short, not
// wrong.
struct BudgetError : Error {
    using Error::Error;
};

// Bisection bracket does not straddle the requested target.
struct BracketError : Error {
    using Error::Error;
};

// JSON/CSV schema violation (unknown field, wrong type, missing key).
struct SchemaError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace metastable
