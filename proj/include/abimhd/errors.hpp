#pragma once

#include <stdexcept>
#include <string>

namespace abimhd {

// Bad parameters or malformed input data. Maps to CLI exit status 2.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Anything raised while integrating in time. Maps to CLI exit status 3.
class NumericalAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PositivityViolation : public NumericalAbort {
public:
    using NumericalAbort::NumericalAbort;
};

class BlowUp : public NumericalAbort {
public:
    using NumericalAbort::NumericalAbort;
};

class StepRejected : public NumericalAbort {
public:
    StepRejected(const std::string& what, double suggested)
        : NumericalAbort(what), suggested_dt(suggested) {}
    double suggested_dt;
};

} // namespace abimhd
