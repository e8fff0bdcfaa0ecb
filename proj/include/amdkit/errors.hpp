#pragma once

#include <stdexcept>
#include <string>

namespace amdkit {

/// Bad input: malformed files, invariant violations, out-of-range options.
/// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure while computing: divergence, fingerprint mismatch, I/O.
/// The CLI maps this to exit code 3.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

class DivergenceError : public RuntimeError {
public:
    DivergenceError(int epoch, const std::string& what)
        : RuntimeError("training diverged at epoch " + std::to_string(epoch) + ": " + what),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace amdkit
