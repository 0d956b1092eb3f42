#pragma once

#include <stdexcept>
#include <string>

namespace starld {

/// Bad input to a library call (unknown route, negative rate, infeasible generator).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The ergodic form of the local rate was requested for a network that is not ergodic.
class ModeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stationary quantities requested for a network (or channel) that has no stationary regime.
class NotErgodic : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Importance sampling hit a transition the sampling law cannot produce while the
/// reference law can, so the likelihood ratio is not defined.
class AbsoluteContinuityBreach : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace starld
