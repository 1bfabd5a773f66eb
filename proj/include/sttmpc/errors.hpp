#pragma once

#include <stdexcept>
#include <string>

namespace sttmpc {

// Base for all library-specific failures. Plain argument mistakes
// (dimension mismatches, negative radii, ...) use std::invalid_argument.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 2^d vertex enumeration requested above the dimension cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

// An iterative routine exhausted its iteration budget.
class IterationLimitError : public Error {
public:
    using Error::Error;
};

// Vertex dynamics admit no lambda-contractive set (spectral radius >= lambda).
class NotContractibleError : public Error {
public:
    using Error::Error;
};

// The tube template cannot represent the requested row cone (H-matrix LP infeasible).
class TemplateInsufficientError : public Error {
public:
    using Error::Error;
};

// {x : Tx <= 1} is unbounded; contractivity LPs are meaningless.
class TemplateUnboundedError : public Error {
public:
    using Error::Error;
};

// Lyapunov solve requested for a non-stable closed loop.
class InstabilityError : public Error {
public:
    using Error::Error;
};

// Confidence-radius schedule queried before its activation time.
class ScheduleError : public Error {
public:
    using Error::Error;
};

// Coupled trajectory pair does not share the disturbance realization.
class CouplingError : public Error {
public:
    using Error::Error;
};

// The fallback chain was exhausted; the configuration violates the
// feasible-start precondition and no control is defined.
class BrokenPreconditionError : public Error {
public:
    using Error::Error;
};

// Configuration file failed to parse or validate.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sttmpc
