#pragma once

#include <stdexcept>
#include <string>

namespace pwrsim {

/// Base class of every error raised by the simulator.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input document or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A policy returned a decision that violates its preconditions.
class PolicyFault : public Error {
public:
    using Error::Error;
};

/// A node state trace does not tile the simulated horizon.
class AccountingFault : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace pwrsim
