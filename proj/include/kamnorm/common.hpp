#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kamnorm {

using cplx = std::complex<double>;

/// Guard or hypothesis failure: the requested operation is well formed but
/// its mathematical preconditions do not hold (smallness bound, nesting
/// condition, non-vanishing degree, ...).  The CLI maps this to exit code 2.
class HypothesisError : public std::runtime_error {
public:
    explicit HypothesisError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file.  Carries a line number when one is known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}
    int line() const { return line_; }
private:
    int line_;
};

inline int norm1(std::span<const int> v)
{
    int s = 0;
    for (int x : v) s += x >= 0 ? x : -x;
    return s;
}

inline double norm1(std::span<const double> v)
{
    double s = 0;
    for (double x : v) s += std::abs(x);
    return s;
}

inline double norm_inf(std::span<const double> v)
{
    double s = 0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Formats a double so that parsing it back yields the identical bits.
std::string fmt_double(double x);

} // namespace kamnorm
