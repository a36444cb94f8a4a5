#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>

#include "kamnorm/common.hpp"

namespace kamnorm {

/// Storage caps for a truncated Fourier-Taylor series.  |k|_1 <= k_max for
/// Fourier modes, |l|_1 <= d_max for Taylor exponents.  Coefficient mass
/// produced beyond the caps is never stored, but it is accounted for in the
/// per-sample truncation residual of the receiving series.
struct SeriesCaps {
    int k_max = 0;
    int d_max = 0;
    bool operator==(const SeriesCaps&) const = default;
};

/// One (Fourier mode, Taylor exponent) index pair.
struct TermKey {
    std::vector<int> k; // signed mode, size n
    std::vector<int> l; // non-negative exponents, size n
    auto operator<=>(const TermKey&) const = default;
};

/// Norm weights: angle strip half-width s, action radius r, divisor
/// constant alpha in (0,1].
struct NormParams {
    double s = 0;
    double r = 0;
    double alpha = 1;
    void validate() const;
};

/// Finite sample set of a parameter box, with named per-point flag channels.
struct ParamGrid {
    std::vector<double> lo, hi;               // box corners, dim d
    std::vector<int> shape;                   // lattice shape (empty if irregular)
    std::vector<std::vector<double>> samples; // ordered points, each of dim d
    std::map<std::string, std::vector<uint8_t>> flags;

    size_t size() const { return samples.size(); }
    int dim() const { return static_cast<int>(lo.size()); }
    void validate() const; // samples inside box, nonempty, duplicate-free

    /// Regular lattice including box corners (shape[i] >= 1 points per axis;
    /// a single point per axis sits at the box center).
    static ParamGrid regular(std::vector<double> lo, std::vector<double> hi,
                             std::vector<int> shape);
};

/// Truncated Fourier-Taylor series in angles theta and actions I, with one
/// complex coefficient per parameter sample for every stored index pair.
///
/// With the reality flag set, coeff(-k, l) == conj(coeff(k, l)) at every
/// sample is maintained by all operations, so the series represents a real
/// function of (theta, I) for real arguments.
class FTSeries {
public:
    FTSeries() = default;
    FTSeries(int n, size_t n_samples, SeriesCaps caps, bool reality);

    int n = 0;
    size_t n_samples = 0;
    SeriesCaps caps;
    bool reality = false;
    std::map<TermKey, std::vector<cplx>> coeffs;
    /// Per-sample l1 coefficient mass discarded against the caps (or a drop
    /// threshold) by the operations that produced this series.
    std::vector<double> dropped;

    bool same_shape(const FTSeries& o) const;
    void require_same_shape(const FTSeries& o) const;

    /// Sets the coefficient at (k, l) for all samples.  With reality set the
    /// mirror coefficient at -k is set to the conjugate as well.
    void set_coeff(const TermKey& key, const std::vector<cplx>& values);
    void set_coeff_uniform(const TermKey& key, cplx value);
    /// Adds into the coefficient at (k, l) for one sample only (no mirror).
    void add_to_coeff(const TermKey& key, size_t sample, cplx value);

    std::vector<cplx> coeff(const TermKey& key) const; // zeros if absent
    size_t term_count() const { return coeffs.size(); }
    bool empty() const { return coeffs.empty(); }

    /// Removes exact-zero rows; with drop_tol > 0 also removes rows whose
    /// largest coefficient magnitude is below drop_tol, adding their mass to
    /// the truncation residual.
    void prune(double drop_tol = 0.0);

    /// Largest reality-constraint violation, for checks.
    double reality_defect() const;

    double dropped_sup() const;

    void write(std::ostream& os) const;
    static FTSeries read(std::istream& is);
};

// -- ring operations ---------------------------------------------------------

FTSeries add(const FTSeries& a, const FTSeries& b);
FTSeries sub(const FTSeries& a, const FTSeries& b);
/// Reality is preserved only for real factors; a complex factor clears it.
FTSeries scale(const FTSeries& a, cplx factor);
/// Convolution in k, exponent addition in l.  Product terms beyond the caps
/// (or below drop_tol) accumulate into the result's truncation residual.
FTSeries multiply(const FTSeries& a, const FTSeries& b, double drop_tol = 0.0);

// -- calculus ----------------------------------------------------------------

FTSeries theta_derivative(const FTSeries& a, int axis);
FTSeries action_derivative(const FTSeries& a, int axis);

/// { F, G } = sum_i dF/dtheta_i dG/dI_i - dF/dI_i dG/dtheta_i.
FTSeries poisson_bracket(const FTSeries& f, const FTSeries& g, double drop_tol = 0.0);

/// Sub-series of Taylor degree <= 1.
FTSeries linear_part(const FTSeries& a);

/// Splits into (modes with |k|_1 <= K, remainder); the two parts sum to the
/// input exactly.
std::pair<FTSeries, FTSeries> truncate_fourier(const FTSeries& a, long long K);

/// k = 0 sub-series.
FTSeries average(const FTSeries& a);

// -- norms and evaluation ----------------------------------------------------

/// Majorant norm sum_{k,l} |c_{k,l}| e^{s|k|_1} r^{|l|_1}, one value per
/// sample.  Dominates the analytic sup-norm and is submultiplicative.
std::vector<double> majorant_norm(const FTSeries& a, const NormParams& np);
double majorant_norm_sup(const FTSeries& a, const NormParams& np);

/// Plain coefficient l1 mass per sample (the s = 0, r = 1 majorant).
std::vector<double> coeff_mass(const FTSeries& a);

cplx evaluate(const FTSeries& a, std::span<const double> theta,
              std::span<const cplx> actions, size_t sample);
double evaluate_real(const FTSeries& a, std::span<const double> theta,
                     std::span<const double> actions, size_t sample);

/// Normal form <omega(xi), I> as a series over the given samples.
FTSeries linear_form_series(const std::vector<std::vector<double>>& omega,
                            int n, SeriesCaps caps);

} // namespace kamnorm
