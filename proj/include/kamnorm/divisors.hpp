#pragma once

#include "kamnorm/series.hpp"

namespace kamnorm {

/// Smooth cutoff: 0 on |t| <= 1/2, 1 on |t| >= 1, C^infinity and monotone in
/// |t| across the transition.  Built from the standard exponential bump
/// psi(u) = f(u) / (f(u) + f(1-u)) with f(u) = exp(-1/u) for u > 0.
struct CutoffFn {
    static double value(double t);
    static double derivative(double t);
};

/// phi_h(t) = phi(t/h): dead zone |t| <= h/2, identity region |t| >= h.
double phi_h(double t, double h);
double phi_h_derivative(double t, double h);

struct DivisorParams {
    double alpha = 0;     // in (0,1]
    double tau = 0;       // > n-1
    long long K = 0;      // Fourier cutoff of the scan
    void validate() const;
};

/// Result of a finite-K Diophantine scan.  margin is the minimum over the
/// scanned modes of |<omega,k>| |k|_1^tau / alpha (plus |<l,Omega>| / alpha
/// terms in the elliptic variant); pass iff margin >= 1.
struct DioReport {
    bool pass = false;
    double margin = 0;
    std::vector<int> worst_k;
    std::vector<int> worst_l; // empty outside the elliptic variant
};

/// Extended inverse divisor g_k = phi_h(<omega,k>) / (i <omega,k>) with
/// h = alpha / |k|_1^tau.  Defined for every omega; equals the plain inverse
/// where the divisor clears alpha / |k|^tau, vanishes where it is below half
/// of that, and is bounded by 2 |k|^tau / alpha throughout.
cplx extended_inverse(std::span<const double> omega, std::span<const int> k,
                      const DivisorParams& dp);

/// Exhaustive scan of |<omega,k>| >= alpha/|k|_1^tau over 0 < |k|_1 <= K.
DioReport check_dio(std::span<const double> omega, const DivisorParams& dp);

/// Elliptic variant: scans |<l,Omega>| >= alpha over 1 <= |l|_1 <= 2 and
/// |<omega,k> + <l,Omega>| >= alpha/|k|_1^tau over k != 0, 1 <= |l|_1 <= 2.
/// The l = 0 family is check_dio's job and is not rescanned here.
DioReport check_dio_elliptic(std::span<const double> omega,
                             std::span<const double> Omega,
                             const DivisorParams& dp);

/// Per-sample check_dio flags for a frequency table over a grid.
std::vector<uint8_t> build_Pi(const ParamGrid& grid,
                              const std::vector<std::vector<double>>& omega,
                              const DivisorParams& dp);

/// All l in Z^nbar with 1 <= |l|_1 <= 2, in lexicographic order.
std::vector<std::vector<int>> elliptic_l_set(int nbar);

} // namespace kamnorm
