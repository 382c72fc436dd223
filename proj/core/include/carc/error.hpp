#pragma once

#include <stdexcept>
#include <string>

namespace carc {

// Error taxonomy shared by the library and the CLI. ConfigError maps to the
// CLI's validation exit code, everything else to the runtime exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct OverflowError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace carc
