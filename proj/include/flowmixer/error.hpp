#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace flowmixer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: singular system, non-convergence, non-finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or malformed input file.
class ConfigError : public Error {
public:
    using Error::Error;
};

using WarningSink = std::function<void(const std::string&)>;

/// Routes a warning to the installed sink (stderr by default).
void warn(const std::string& message);

/// Replaces the warning sink and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace flowmixer
