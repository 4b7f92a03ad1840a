#pragma once

#include <stdexcept>
#include <string>

namespace rlrds {

/// Bad input: malformed parameters, out-of-domain arguments, bad config.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a result (singular design, divergence).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covariate regression for one allocation is rank deficient.
class SingularFitError : public NumericalError {
public:
    SingularFitError(const std::string& what, int allocation)
        : NumericalError(what), allocation_(allocation) {}
    int allocation() const noexcept { return allocation_; }

private:
    int allocation_;
};

/// An internal invariant was broken (e.g. a zero propensity under clipping).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace rlrds
