#pragma once

#include <functional>

#include "kamnorm/config.hpp"
#include "kamnorm/divisors.hpp"
#include "kamnorm/series.hpp"

namespace kamnorm {

/// One step's worth of iteration parameters.
struct StepParams {
    int j = 0;
    double s = 0;       // current analyticity width
    double rho = 0;     // width loss budget; s_next = s - 5 rho
    double r = 0;       // current action radius
    double alpha_j = 0; // current divisor constant, alpha/2 <= alpha_j <= alpha
    double E = 0;       // dimensionless smallness
    double eps = 0;     // eps = alpha_j * r * rho^tau' * E
    double eta = 0;     // sqrt(E); r_next = eta * r
    long long K = 0;    // Fourier cutoff, exp(-K rho) <= E < exp(-(K-1) rho)

    // constants carried through the iteration
    double tau = 0;
    double tau_prime = 0;
    double alpha = 0;   // final divisor constant
    double gamma = 0;

    void validate() const;
    DivisorParams divisors() const { return DivisorParams{alpha_j, tau, K}; }
    NormParams norms() const { return NormParams{s, r, alpha_j}; }
};

double tau_prime_of(int n, int m, double tau);

/// Step-0 parameters: rho_0 = s/20, E_0 = 2 * 20^tau' * gamma,
/// alpha_0 = alpha/2, K_0 = ceil(-ln E_0 / rho_0).  Refuses to start when
/// eps_input exceeds alpha r s^tau' gamma, reporting the gamma that would be
/// required.  gamma = 0 selects the smallest admissible value.
StepParams init_schedule(double s, double r, double alpha, double tau,
                         int n, int m, double gamma, double eps_input);

/// rho halves, r shrinks by eta, E -> c_growth E^{3/2},
/// alpha_{j+1} = (1 - 2^{-(j+3)}) alpha.  Checks the nesting condition
/// 2 K^{tau+1} eps <= (alpha_next - alpha_j) r first and aborts when it
/// fails, since the clean-set chain would be lost.
StepParams advance_schedule(const StepParams& sp, double c_growth);

/// Parameterized Hamiltonian <omega(xi), I> + P.  The constant (k = 0,
/// l = 0) part of the normal form is kept aside per sample as an energy
/// offset rather than inside P.
struct Hamiltonian {
    std::vector<std::vector<double>> omega; // per sample
    FTSeries P;
    std::vector<double> energy;

    int n() const { return P.n; }
    size_t samples() const { return P.n_samples; }
    FTSeries normal_form_series() const;
    /// Full series N + P + energy, for cross-checks.
    FTSeries total_series() const;
};

struct AtlasStage {
    FTSeries generator; // zero average, modes <= K_j, Taylor degree <= 1
    StepParams params;
};

struct SymplecticAtlas {
    std::vector<AtlasStage> stages;
};

/// Generating function of one step: F_k = g_k R_k for 0 < |k| <= K, F_0 = 0,
/// with g_k the extended inverse divisor.  Total on the whole sample set;
/// where all divisors clear the threshold this solves {N,F} + R^K - [R] = 0
/// exactly.
FTSeries solve_homological(const FTSeries& R_K,
                           const std::vector<std::vector<double>>& omega,
                           const DivisorParams& dp);

struct LieResult {
    FTSeries series;
    double tail_estimate = 0;  // majorant bound on the dropped adjoint tail
};

/// H composed with the time-1 flow of F, as the truncated exponential of the
/// adjoint: sum_{j<=j_max} ad_F^j H / j!.  Throws when consecutive adjoint
/// terms grow, which signals F too large for the caps.
LieResult lie_transform(const FTSeries& H, const FTSeries& F, int j_max,
                        const NormParams& np, double drop_tol = 0.0);

struct StepDiagnostics {
    std::vector<double> eps_measured;        // per sample, ||P_next|| at next norms
    double eps_measured_sup_clean = 0;
    double eps_measured_sup = 0;
    std::vector<double> hom_residual;        // per sample, ||{N,F}+R^K-[R]||
    double hom_residual_rel_clean = 0;       // sup over clean of residual/||R^K||
    double rk_norm_sup = 0;
    double lie_tail = 0;                     // summed adjoint tail estimates
    double cap_residual = 0;                 // truncation mass in P_next
    double conj_defect_clean = 0;            // vs single Lie transform of N+P
    double conj_budget = 0;
    std::vector<double> omega_shift;         // per sample |omega_hat|_inf
    std::vector<std::vector<double>> omega_hat; // exact per-sample update
};

struct KamStepResult {
    Hamiltonian next;
    AtlasStage stage;
    StepDiagnostics diag;
};

/// One normalization step at parameters sp, with sp_next already advanced.
/// clean marks the samples whose divisors all clear the current threshold;
/// the measured-vs-schedule guard applies to those only.
KamStepResult kam_step(const Hamiltonian& H, const StepParams& sp,
                       const StepParams& sp_next, const RunConfig& cfg,
                       const std::vector<uint8_t>& clean);

struct StepRecord {
    int j = 0;
    double eps_measured = 0;     // sup over samples of ||P_{j+1}||
    double eps_schedule = 0;     // eps_{j+1}
    double rho = 0, alpha_j = 0, r = 0, E = 0;
    long long K = 0;
    double clean_fraction = 0;
    double drift_sup = 0;        // sup_sample |omega_{j+1} - omega_0|_inf
    double step_shift_sup = 0;   // sup_sample |omega_hat_j|_inf
    double c_measured = 0;       // ||P_{j+1}|| / (alpha_{j+1} r_{j+1} rho_{j+1}^tau')
    double hom_residual_rel = 0;
    double lie_tail = 0, cap_residual = 0;
};

struct KamRun {
    std::vector<StepRecord> history;
    std::vector<std::vector<std::vector<double>>> omega_by_step;  // omega_0..omega_final
    std::vector<std::vector<std::vector<double>>> omega_hat_by_step; // exact updates
    std::vector<std::vector<uint8_t>> clean_by_step;              // Pi_j flags
    std::vector<std::vector<double>> omega_star;
    std::vector<double> energy_star;
    std::vector<uint8_t> pi_star;
    long long kcheck = 0;
    FTSeries P_star;
    SymplecticAtlas atlas;
    StepParams final_params;
    bool completed = false;
    std::string abort_reason;
    double eps0_measured = 0;
    double eps_final_measured = 0;

    const std::vector<std::vector<double>>& omega0() const { return omega_by_step.front(); }
};

/// Full iteration driver.  Stops when the measured perturbation norm falls
/// below stop_tol or after j_stop steps.  On a guard failure the partial
/// history is returned with completed = false and the failure text in
/// abort_reason.  on_step, when set, is invoked after each completed step.
/// Resuming: pass the Hamiltonian of step start_j plus the previously
/// recorded run as seed; the schedule is replayed deterministically.
KamRun run_kam(const Hamiltonian& H0, const ParamGrid& grid,
               double s, double r, double alpha, double tau, int m,
               const RunConfig& cfg,
               const std::function<void(const KamRun&)>& on_step = {},
               int start_j = 0, const KamRun* seed = nullptr);

} // namespace kamnorm
