#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace cfica {

#define CFICA_VERSION "0.1.0"

inline const char* version() { return CFICA_VERSION; }

using Complex = std::complex<double>;

constexpr double kPi = 3.14159265358979323846264338327950288;

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value (bad flag, bad policy, out-of-range setting).
struct ConfigError : Error {
    using Error::Error;
};

/// The requested mixing matrix is too close to degenerate: some pair of
/// columns violates the minimum angular separation.
struct DegenerateParametrizationError : Error {
    int col_a, col_b;
    DegenerateParametrizationError(int a, int b, double angle, double eps)
        : Error("degenerate parametrization: columns " + std::to_string(a) + " and " +
                std::to_string(b) + " separated by " + std::to_string(angle) +
                " rad < epsilon = " + std::to_string(eps)),
          col_a(a), col_b(b) {}
};

struct UnsupportedDimensionError : Error {
    using Error::Error;
};

/// An empirical characteristic function fell below the trimming threshold at a
/// point where it appears in a denominator.
struct TrimmedPointError : Error {
    using Error::Error;
};

/// Numerical evaluation failed (e.g. the phase of the ECF winds too fast for
/// the configured ray grid of the complex logarithm).
struct EvaluationError : Error {
    using Error::Error;
};

struct DegenerateKernelError : Error {
    using Error::Error;
};

struct EigenSolverError : Error {
    using Error::Error;
};

struct RankDeficiencyError : Error {
    using Error::Error;
};

struct CollinearityError : Error {
    using Error::Error;
};

struct ParseError : Error {
    long line;
    ParseError(const std::string& msg, long line_number)
        : Error(msg + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
};

struct BootstrapError : Error {
    using Error::Error;
};

struct HarnessError : Error {
    using Error::Error;
};

namespace detail {

// exp(x) for x <= 0, accurate to ~3e-10 relative. Branch-free so the kernel
// assembly loops vectorize; falls out of use anywhere tighter accuracy than
// the 1e-6 closed-form/quadrature tolerance budget is required.
inline double fast_exp_neg(double x) {
    const double log2e = 1.4426950408889634074;
    double n = std::nearbyint(x * log2e);
    double f = (x - n * 0.693147180559945286226764) - n * 2.3190468138462995584178e-17;
    double p = 1.0 +
               f * (1.0 +
                    f * (0.5 +
                         f * (1.0 / 6 +
                              f * (1.0 / 24 +
                                   f * (1.0 / 120 +
                                        f * (1.0 / 720 + f * (1.0 / 5040 + f / 40320)))))));
    auto ni = static_cast<std::int64_t>(n);
    std::uint64_t bits;
    std::memcpy(&bits, &p, 8);
    bits += static_cast<std::uint64_t>(ni) << 52;
    double r;
    std::memcpy(&r, &bits, 8);
    return r;
}

// Contributions smaller than exp(-kExpCutoff/2) ~ 4e-18 are dropped from
// Gaussian-weighted pair sums.
constexpr double kExpCutoff = 80.0;

}  // namespace detail

}  // namespace cfica
