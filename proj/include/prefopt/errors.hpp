#pragma once

#include <stdexcept>
#include <string>

namespace prefopt {

// CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (JSONL / JSON); message names the offending line.
struct parse_error : config_error {
    using config_error::config_error;
};

// A record violating its structural invariants (winner == loser, duplicate
// ranking entries, out-of-range ids, ...).
struct invalid_record_error : config_error {
    using config_error::config_error;
};

// A loss applied to a record variant it does not support.
struct unsupported_form_error : config_error {
    using config_error::config_error;
};

// CLI exit code 3: non-finite loss or gradient during training.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace prefopt
