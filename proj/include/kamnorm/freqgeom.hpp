#pragma once

#include <functional>

#include "kamnorm/divisors.hpp"
#include "kamnorm/expr.hpp"

namespace kamnorm {

/// Frequency map xi -> omega(xi): closed-form components, optionally with a
/// perturbation given either in closed form or as a table over a regular
/// grid (multilinear interpolation).
class FreqMap {
public:
    FreqMap() = default;
    FreqMap(std::vector<Expr> comps, int dim_in);

    static FreqMap from_exprs(const std::vector<std::string>& comps, int dim_in);

    void set_perturbation(std::vector<Expr> hat);
    void set_perturbation_table(ParamGrid grid, std::vector<std::vector<double>> values);
    bool has_perturbation() const { return !hat_.empty() || !table_values_.empty(); }

    int dim_in() const { return dim_in_; }
    int dim_out() const { return static_cast<int>(comps_.size()); }

    std::vector<double> base(std::span<const double> xi) const;
    std::vector<double> hat(std::span<const double> xi) const;  // zero when absent
    std::vector<double> eval(std::span<const double> xi) const; // base + hat

    /// dim_out x dim_in Jacobian: analytic for closed forms, cellwise-exact
    /// multilinear gradient for the table part.
    std::vector<std::vector<double>> jacobian(std::span<const double> xi) const;
    std::vector<std::vector<double>> base_jacobian(std::span<const double> xi) const;

    /// sup |hat| over a probe lattice of the given box.
    double perturbation_sup(std::span<const double> lo, std::span<const double> hi,
                            int per_axis = 9) const;

private:
    std::vector<Expr> comps_;
    std::vector<std::vector<Expr>> dcomps_; // [out][in]
    std::vector<Expr> hat_;
    std::vector<std::vector<Expr>> dhat_;
    int dim_in_ = 0;

    ParamGrid table_grid_;
    std::vector<std::vector<double>> table_values_; // per sample, dim_out

    std::vector<double> table_interp(std::span<const double> xi) const;
    std::vector<std::vector<double>> table_gradient(std::span<const double> xi) const;
};

struct RankReport {
    int rank_jacobian = 0;  // rank d_xi omega
    int rank_augmented = 0; // rank (d_xi omega^T, omega^T)
    double sigma_min_jacobian = 0;
    double threshold = 0;
};

/// Numerical ranks with singular-value threshold 1e-8 * sigma_max.
RankReport rank_tests(const FreqMap& omega, std::span<const double> xi);

struct DegreeResult {
    int degree = 0;
    double boundary_margin = 0; // min |omega(xi) - target| on the box boundary
    int refinement = 0;
    bool stable = false;
    std::vector<std::vector<double>> preimages;
};

struct DegreeOptions {
    int base_cells = 8;     // subdivision cells per axis at refinement 0
    int max_refinement = 3;
    double newton_tol = 1e-11;
    double dedupe_tol = 1e-7;
    int boundary_probe = 128; // boundary lattice points per axis
};

/// Brouwer degree by preimage sign-counting: subdivision seeds Newton
/// polishing, distinct interior preimages contribute sign(det J), and the
/// count must agree across one refinement level.
DegreeResult brouwer_degree(const FreqMap& omega, std::span<const double> lo,
                            std::span<const double> hi, std::span<const double> target,
                            const DegreeOptions& opt = {});

struct DilationSolution {
    std::vector<double> xi_star;
    double lambda = 0;
    double residual = 0;
    DegreeResult degree;
};

/// Solves omega_*(xi) = (1 + lambda(xi)) omega0 on the box, guarded by a
/// nonzero Brouwer degree of the corrected map.  lambda_fn may be empty
/// (lambda = 0) or an expression in xi1..xid.
DilationSolution solve_dilation(const FreqMap& omega_star, std::span<const double> lo,
                                std::span<const double> hi, std::span<const double> omega0,
                                const Expr* lambda_fn = nullptr,
                                const DegreeOptions& opt = {});

struct BrunoFamily {
    int pivot_xi = 0;    // continuation coordinate (dropped from the solve)
    int pivot_omega = 0; // component defining lambda
    std::vector<double> etas;
    std::vector<std::vector<double>> xi_stars;
    std::vector<double> lambdas;
    std::vector<double> residuals; // |omega_*(xi_*) - (1+lambda) omega0|
    double sigma = 0;      // sup |omega_hat| over the box
    double fit_C = 0;      // max |lambda| / (|eta| + sigma)
};

/// One-parameter dilation family under the Bruno rank pair (n-1, n):
/// continuation in the pivot coordinate, a reduced ratio solve per eta.
BrunoFamily bruno_family(const FreqMap& omega, std::span<const double> lo,
                         std::span<const double> hi, std::span<const double> xi0,
                         double delta0, int steps = 9);

struct Interval {
    double lo = 0, hi = 0;
    double length() const { return hi - lo; }
};

struct MeasureReport {
    double lambda0 = 0;
    long long K = 0;
    double bad_measure = 0;
    std::vector<Interval> bad_intervals;        // disjoint, sorted
    std::vector<double> lambda0_sequence;       // lambda0, lambda0/2, lambda0/4
    std::vector<double> measures;               // matching bad measures
    double fitted_exponent = 0;                 // log-log LS slope, NaN if undefined
    std::vector<Interval> admissible;           // complement (window variant)
};

/// Exact bad set { lambda in [0,lambda0] : |k1 (w01+lambda) + k2 w02| <
/// alpha / (2 |k|^{2 tau + 2}) for some 0 < |k| <= K } as a union of
/// intervals, plus the measure fit across lambda0, lambda0/2, lambda0/4.
MeasureReport resonance_measure_2d(std::span<const double> omega0, double alpha,
                                   double tau, double lambda0, long long K);

/// Window variant: bad lambda in [-sigma, sigma] where
/// |<omega0,k> + nu0 - (1+lambda)^{-1} (lambda mu0 - muhat(lambda))| <
/// alpha / (2 |k|^{2 tau + 1}); admissible holds the complement I_sigma^*.
MeasureReport dio_window_1d(std::span<const double> omega0, double nu0, double mu0,
                            const std::function<double(double)>& muhat, double alpha,
                            double tau, double sigma, long long K);

struct EllipticDilation {
    double lambda = 0;
    std::vector<double> varpi;
    double residual = 0;
    std::vector<Interval> admissible; // intersection of the per-l windows
    double admissible_measure = 0;
    DioReport membership;  // (omega_*, Omega_*)(varpi) against O~_{alpha/4, 2tau+1}
    DioReport membership_k; // pure-k family at the same level
};

/// Normal-frequency family Omega(w) = beta + w M.  Requires <l,beta> != 0 on
/// the finite l set and (omega0, Omega(omega0)) clean at level (alpha, tau).
/// Intersects the per-l admissible windows, solves omega_*(varpi) =
/// (1+lambda) omega0 by Newton for a representative admissible lambda, and
/// reports the finite-K membership margins at level (alpha/4, 2 tau + 1).
EllipticDilation elliptic_dilation(std::span<const double> omega0,
                                   std::span<const double> beta,
                                   const std::vector<std::vector<double>>& M,
                                   const FreqMap& omega_hat, const FreqMap& Omega_hat,
                                   std::span<const double> lo, std::span<const double> hi,
                                   double alpha, double tau, double sigma, long long K);

struct RatioDegreeResult {
    DegreeResult degree;
    std::vector<double> xi_star; // companion dilation solve
    double lambda = 0;
    double residual = 0; // |(omega_*,Omega_*) - Omega0^-1 Omega (1+lambda)(omega0,Omega0)|
};

/// Degree of omega/Omega at omega0/Omega0, with the companion solver for the
/// dilation identity.  Omega must stay bounded away from zero on the box.
RatioDegreeResult ratio_degree(const FreqMap& omega, const FreqMap& Omega,
                               std::span<const double> lo, std::span<const double> hi,
                               std::span<const double> xi0, const DegreeOptions& opt = {});

} // namespace kamnorm
