#pragma once

#include <stdexcept>
#include <string>

namespace derivfair {

/// Shapes of operands do not agree.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A precondition on how an API is used was violated.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// The same outcome parent is claimed by an allowed and a not-allowed path.
struct PathConflictError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or blew up.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input file does not follow the expected layout.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace derivfair
