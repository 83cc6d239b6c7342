#pragma once

#include <stdexcept>
#include <string>

namespace autoci {

// Base class for all library errors so callers can catch one type at the CLI
// boundary and map it to an exit code.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A term failed to type-check; carries the offending subterm and the
// expected/found types as rendered strings.
struct TypeError : Error {
    TypeError(std::string subterm_, std::string expected_, std::string found_)
        : Error("type error at '" + subterm_ + "': expected " + expected_ + ", found " + found_),
          subterm(std::move(subterm_)),
          expected(std::move(expected_)),
          found(std::move(found_)) {}
    std::string subterm;
    std::string expected;
    std::string found;
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// A NaN or Inf appeared in a forward/backward pass.
struct NonFiniteValue : Error {
    explicit NonFiniteValue(const std::string& where) : Error("non-finite value in " + where) {}
};

struct DegenerateEnvironment : Error {
    explicit DegenerateEnvironment(const std::string& msg) : Error("degenerate environment: " + msg) {}
};

struct DegenerateSample : Error {
    explicit DegenerateSample(const std::string& msg) : Error("degenerate sample: " + msg) {}
};

struct NoComparablePairs : Error {
    NoComparablePairs() : Error("concordance index has no comparable pairs") {}
};

struct NoEvents : Error {
    NoEvents() : Error("partial likelihood requires at least one event") {}
};

struct SingularFit : Error {
    explicit SingularFit(const std::string& msg) : Error("singular fit: " + msg) {}
};

struct ConvergenceFailure : Error {
    explicit ConvergenceFailure(const std::string& msg) : Error("convergence failure: " + msg) {}
};

// Exhaustive subset search refused to run (2^n blowup guard).
struct ExhaustionGuard : Error {
    explicit ExhaustionGuard(const std::string& msg) : Error("exhaustion guard: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace autoci
