#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmn {

/// Bad arguments: shape mismatches, non-finite input, empty batches.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative kernel ran out of its sweep budget.
class ConvergenceFailure : public std::runtime_error {
public:
    ConvergenceFailure(const std::string& what, std::size_t sweeps)
        : std::runtime_error(what + " (after " + std::to_string(sweeps) + " sweeps)"),
          sweeps_(sweeps) {}

    std::size_t sweeps() const { return sweeps_; }

private:
    std::size_t sweeps_;
};

/// A forward/backward pass produced a non-finite value at some timestep.
class NumericFailure : public std::runtime_error {
public:
    NumericFailure(const std::string& what, std::size_t timestep)
        : std::runtime_error(what + " at timestep " + std::to_string(timestep)),
          timestep_(timestep) {}

    std::size_t timestep() const { return timestep_; }

private:
    std::size_t timestep_;
};

}  // namespace lmn
