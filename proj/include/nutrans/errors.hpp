#pragma once

#include <stdexcept>
#include <string>

namespace nutrans {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct OutOfDomain : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Raised when a rate combination leaves a linear system or a closed form
// without a finite solution (vanishing opacity, non-positive determinant).
struct SingularOpacity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidKernel : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class StepRejected : public std::runtime_error {
public:
    StepRejected(const std::string& what, double suggested_dt)
        : std::runtime_error(what), suggested_dt_(suggested_dt) {}
    double suggested_dt() const noexcept { return suggested_dt_; }

private:
    double suggested_dt_;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& file, int line, const std::string& msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace nutrans
