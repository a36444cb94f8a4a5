#include "kamnorm/kam.hpp"

#include <cmath>
#include <sstream>

namespace kamnorm {

double tau_prime_of(int n, int m, double tau)
{
    return n + (m + 1) * tau + m;
}

void StepParams::validate() const
{
    if (!(s > 5 * rho) || !(rho > 0))
        throw std::invalid_argument("StepParams: need s > 5 rho > 0");
    if (!(r > 0)) throw std::invalid_argument("StepParams: r must be positive");
    if (alpha_j < 0.5 * alpha - 1e-15 || alpha_j > alpha + 1e-15)
        throw std::invalid_argument("StepParams: alpha_j outside [alpha/2, alpha]");
    const double eps_expected = alpha_j * r * std::pow(rho, tau_prime) * E;
    if (std::abs(eps - eps_expected) > 1e-9 * eps_expected)
        throw std::invalid_argument("StepParams: eps inconsistent with schedule");
    if (std::abs(eta - std::sqrt(E)) > 1e-12 * eta)
        throw std::invalid_argument("StepParams: eta != sqrt(E)");
    if (!(std::exp(-double(K) * rho) <= E * (1 + 1e-12)) ||
        !(E < std::exp(-double(K - 1) * rho) * (1 + 1e-12)))
        throw std::invalid_argument("StepParams: K inconsistent with E and rho");
}

static long long cutoff_for(double E, double rho)
{
    return static_cast<long long>(std::ceil(-std::log(E) / rho));
}

StepParams init_schedule(double s, double r, double alpha, double tau,
                         int n, int m, double gamma, double eps_input)
{
    if (!(s > 0) || !(r > 0)) throw std::invalid_argument("init_schedule: s, r must be positive");
    if (!(alpha > 0) || alpha > 1) throw std::invalid_argument("init_schedule: alpha in (0,1]");
    if (!(tau > n - 1)) throw std::invalid_argument("init_schedule: need tau > n-1");
    const double tp = tau_prime_of(n, m, tau);
    const double gamma_required = eps_input / (alpha * r * std::pow(s, tp));
    if (gamma == 0.0)
        gamma = 2.0 * gamma_required; // smallest admissible, with headroom
    if (eps_input > alpha * r * std::pow(s, tp) * gamma) {
        std::ostringstream msg;
        msg << "init_schedule: smallness bound violated: ||P|| = " << eps_input
            << " > alpha r s^tau' gamma = " << alpha * r * std::pow(s, tp) * gamma
            << "; the input requires gamma >= " << gamma_required;
        throw HypothesisError(msg.str());
    }
    StepParams sp;
    sp.j = 0;
    sp.s = s;
    sp.rho = s / 20.0;
    sp.r = r;
    sp.alpha = alpha;
    sp.alpha_j = 0.5 * alpha;
    sp.tau = tau;
    sp.tau_prime = tp;
    sp.gamma = gamma;
    sp.E = 2.0 * std::pow(20.0, tp) * gamma;
    if (sp.E >= 1.0) {
        std::ostringstream msg;
        msg << "init_schedule: E_0 = 2*20^tau'*gamma = " << sp.E
            << " >= 1; no Fourier cutoff exists. The perturbation is too large "
               "for the analyticity width s = " << s;
        throw HypothesisError(msg.str());
    }
    sp.eta = std::sqrt(sp.E);
    sp.eps = sp.alpha_j * sp.r * std::pow(sp.rho, tp) * sp.E;
    sp.K = cutoff_for(sp.E, sp.rho);
    sp.validate();
    return sp;
}

StepParams advance_schedule(const StepParams& sp, double c_growth)
{
    sp.validate();
    const double alpha_next = (1.0 - std::pow(2.0, -double(sp.j + 3))) * sp.alpha;
    const double lhs = 2.0 * std::pow(double(sp.K), sp.tau + 1.0) * sp.eps;
    const double rhs = (alpha_next - sp.alpha_j) * sp.r;
    if (lhs > rhs) {
        std::ostringstream msg;
        msg << "advance_schedule: nesting condition fails at step " << sp.j
            << ": 2 K^(tau+1) eps = " << lhs << " > (alpha_next - alpha_j) r = "
            << rhs << " (K = " << sp.K << ", eps = " << sp.eps
            << "); the clean-set chain would be lost";
        throw HypothesisError(msg.str());
    }
    StepParams nx = sp;
    nx.j = sp.j + 1;
    nx.s = sp.s - 5.0 * sp.rho;
    nx.rho = 0.5 * sp.rho;
    nx.r = sp.eta * sp.r;
    nx.alpha_j = alpha_next;
    nx.E = c_growth * std::pow(sp.E, 1.5);
    if (nx.E >= sp.E) {
        std::ostringstream msg;
        msg << "advance_schedule: E grows (" << sp.E << " -> " << nx.E
            << "); c_growth = " << c_growth << " needs E_0 < c_growth^-2";
        throw HypothesisError(msg.str());
    }
    nx.eta = std::sqrt(nx.E);
    nx.eps = nx.alpha_j * nx.r * std::pow(nx.rho, nx.tau_prime) * nx.E;
    nx.K = cutoff_for(nx.E, nx.rho);
    nx.validate();
    return nx;
}

FTSeries Hamiltonian::normal_form_series() const
{
    return linear_form_series(omega, P.n, P.caps);
}

FTSeries Hamiltonian::total_series() const
{
    FTSeries total = add(normal_form_series(), P);
    TermKey zero;
    zero.k.assign(P.n, 0);
    zero.l.assign(P.n, 0);
    for (size_t s = 0; s < energy.size(); ++s)
        total.add_to_coeff(zero, s, energy[s]);
    total.prune();
    return total;
}

FTSeries solve_homological(const FTSeries& R_K,
                           const std::vector<std::vector<double>>& omega,
                           const DivisorParams& dp)
{
    if (omega.size() != R_K.n_samples)
        throw std::invalid_argument("solve_homological: frequency table size mismatch");
    FTSeries F(R_K.n, R_K.n_samples, R_K.caps, R_K.reality);
    for (const auto& [key, vals] : R_K.coeffs) {
        if (norm1(key.l) > 1)
            throw std::invalid_argument("solve_homological: R^K must have Taylor degree <= 1");
        const int nk = norm1(key.k);
        if (nk > dp.K)
            throw std::invalid_argument("solve_homological: R^K carries modes beyond K");
        if (nk == 0) continue; // F_0 = 0
        std::vector<cplx> fv(vals.size());
        for (size_t s = 0; s < vals.size(); ++s)
            fv[s] = extended_inverse(omega[s], key.k, dp) * vals[s];
        F.coeffs.emplace(key, std::move(fv));
    }
    F.prune();
    return F;
}

namespace {

/// sum_{j<=j_max} c_j ad_F^j G with ad_F G = {G, F}; aborts on adjoint-term
/// growth and reports a geometric estimate of the dropped tail.
struct AdjointSum {
    FTSeries total;
    double tail = 0;
};

AdjointSum adjoint_sum(const FTSeries& G, const FTSeries& F, int j_max,
                       const std::function<double(int)>& coef,
                       const NormParams& np, double drop_tol)
{
    AdjointSum out{scale(G, coef(0)), 0.0};
    FTSeries term = G; // ad_F^j G / j!
    double prev_sz = majorant_norm_sup(term, np);
    for (int j = 1; j <= j_max; ++j) {
        term = scale(poisson_bracket(term, F, drop_tol), 1.0 / j);
        if (term.empty()) return out;
        const double sz = majorant_norm_sup(term, np);
        if (j >= 2 && sz > prev_sz) {
            std::ostringstream msg;
            msg << "lie series diverges: adjoint term " << j << " has norm " << sz
                << " > previous " << prev_sz << "; F too large for the caps";
            throw HypothesisError(msg.str());
        }
        out.total = add(out.total, scale(term, coef(j) * std::tgamma(j + 1.0)));
        prev_sz = sz;
    }
    // geometric tail from the last two computed terms
    FTSeries next = scale(poisson_bracket(term, F, drop_tol), 1.0 / (j_max + 1));
    const double t_next = majorant_norm_sup(next, np) * std::abs(coef(j_max + 1)) *
                          std::tgamma(j_max + 2.0);
    const double t_last = prev_sz * std::abs(coef(j_max)) * std::tgamma(j_max + 1.0);
    const double q = t_last > 0 ? std::min(t_next / t_last, 0.5) : 0.0;
    out.tail = t_next / (1.0 - q);
    return out;
}

double factorial(int j) { return std::tgamma(j + 1.0); }

} // namespace

LieResult lie_transform(const FTSeries& H, const FTSeries& F, int j_max,
                        const NormParams& np, double drop_tol)
{
    if (j_max < 1) throw std::invalid_argument("lie_transform: j_max must be >= 1");
    H.require_same_shape(F);
    auto sum = adjoint_sum(H, F, j_max, [](int j) { return 1.0 / factorial(j); },
                           np, drop_tol);
    return LieResult{std::move(sum.total), sum.tail};
}

KamStepResult kam_step(const Hamiltonian& H, const StepParams& sp,
                       const StepParams& sp_next, const RunConfig& cfg,
                       const std::vector<uint8_t>& clean)
{
    const size_t S = H.samples();
    if (clean.size() != S) throw std::invalid_argument("kam_step: flag size mismatch");
    const int n = H.n();
    const double drop = cfg.drop_tol;

    // A. truncation of the linear part
    FTSeries R = linear_part(H.P);
    auto [RK, Rtail] = truncate_fourier(R, sp.K);
    FTSeries Rbar = average(RK);

    // B/C. generating function through the extended divisors
    const DivisorParams dp = sp.divisors();
    FTSeries F = solve_homological(RK, H.omega, dp);

    // homological residual {N,F} + R^K - [R], exact at clean samples
    FTSeries N = H.normal_form_series();
    const NormParams np_cur{sp.s, sp.r, sp.alpha_j};
    FTSeries hom = add(poisson_bracket(N, F, drop), sub(RK, Rbar));
    StepDiagnostics diag;
    diag.hom_residual = majorant_norm(hom, np_cur);
    auto rk_norm = majorant_norm(RK, np_cur);
    for (size_t s = 0; s < S; ++s) {
        diag.rk_norm_sup = std::max(diag.rk_norm_sup, rk_norm[s]);
        if (clean[s] && rk_norm[s] > 0)
            diag.hom_residual_rel_clean =
                std::max(diag.hom_residual_rel_clean, diag.hom_residual[s] / rk_norm[s]);
    }

    // D. frequency and energy update from [R]
    KamStepResult out{Hamiltonian{H.omega, FTSeries(n, S, H.P.caps, H.P.reality), H.energy},
                      AtlasStage{F, sp}, {}};
    out.diag = std::move(diag);
    TermKey zero;
    zero.k.assign(n, 0);
    zero.l.assign(n, 0);
    out.diag.omega_shift.assign(S, 0.0);
    out.diag.omega_hat.assign(S, std::vector<double>(n, 0.0));
    {
        auto c0 = Rbar.coeff(zero);
        for (size_t s = 0; s < S; ++s) out.next.energy[s] += c0[s].real();
        for (int i = 0; i < n; ++i) {
            TermKey ei = zero;
            ei.l[i] = 1;
            auto ci = Rbar.coeff(ei);
            for (size_t s = 0; s < S; ++s) {
                out.next.omega[s][i] += ci[s].real();
                out.diag.omega_hat[s][i] = ci[s].real();
                out.diag.omega_shift[s] = std::max(out.diag.omega_shift[s],
                                                   std::abs(ci[s].real()));
            }
        }
    }

    // E. new perturbation:
    //   P+ = sum_j ad_F^j {[R],F} / (j! (j+1)(j+2))
    //      + sum_j ad_F^j {R^K,F} / (j! (j+2))
    //      + (P - R^K) o Phi
    const NormParams np_next{sp_next.s, sp_next.r, sp_next.alpha_j};
    auto sum1 = adjoint_sum(poisson_bracket(Rbar, F, drop), F, cfg.j_max,
                            [](int j) { return 1.0 / (factorial(j) * (j + 1) * (j + 2)); },
                            np_next, drop);
    auto sum2 = adjoint_sum(poisson_bracket(RK, F, drop), F, cfg.j_max,
                            [](int j) { return 1.0 / (factorial(j) * (j + 2)); },
                            np_next, drop);
    auto sum3 = adjoint_sum(sub(H.P, RK), F, cfg.j_max,
                            [](int j) { return 1.0 / factorial(j); }, np_next, drop);
    out.next.P = add(add(sum1.total, sum2.total), sum3.total);
    out.diag.lie_tail = sum1.tail + sum2.tail + sum3.tail;
    out.diag.cap_residual = out.next.P.dropped_sup();

    // measured norms against the schedule
    out.diag.eps_measured = majorant_norm(out.next.P, np_next);
    for (size_t s = 0; s < S; ++s) {
        out.diag.eps_measured_sup = std::max(out.diag.eps_measured_sup,
                                             out.diag.eps_measured[s]);
        if (clean[s])
            out.diag.eps_measured_sup_clean = std::max(out.diag.eps_measured_sup_clean,
                                                       out.diag.eps_measured[s]);
    }
    for (size_t s = 0; s < S; ++s) {
        if (clean[s] && out.diag.eps_measured[s] > sp_next.eps) {
            std::ostringstream msg;
            msg << "kam_step: measured ||P+|| = " << out.diag.eps_measured[s]
                << " exceeds the schedule eps_" << sp_next.j << " = " << sp_next.eps
                << " at clean sample " << s
                << "; raise c_growth, j_max or the caps";
            throw HypothesisError(msg.str());
        }
    }

    // conjugacy cross-check: the explicit formula against one Lie transform
    {
        LieResult direct = lie_transform(H.total_series(), F, cfg.j_max, np_next, drop);
        FTSeries assembled = out.next.total_series();
        const FTSeries diff = sub(assembled, direct.series);
        auto dn = majorant_norm(diff, np_next);
        for (size_t s = 0; s < S; ++s)
            if (clean[s])
                out.diag.conj_defect_clean = std::max(out.diag.conj_defect_clean, dn[s]);
        out.diag.conj_budget = out.diag.lie_tail + direct.tail_estimate +
                               out.next.P.dropped_sup() + direct.series.dropped_sup();
    }
    return out;
}

KamRun run_kam(const Hamiltonian& H0, const ParamGrid& grid,
               double s, double r, double alpha, double tau, int m,
               const RunConfig& cfg, const std::function<void(const KamRun&)>& on_step,
               int start_j, const KamRun* seed)
{
    if (H0.samples() != grid.size())
        throw std::invalid_argument("run_kam: sample count mismatch with grid");
    KamRun run;
    Hamiltonian H = H0;
    const int n = H.n();

    double eps0;
    if (seed) {
        run = *seed;
        eps0 = run.eps0_measured;
    } else {
        eps0 = majorant_norm_sup(H.P, NormParams{s, r, alpha});
        run.eps0_measured = eps0;
        run.omega_by_step.push_back(H.omega);
    }

    StepParams sp = init_schedule(s, r, alpha, tau, n, m, cfg.gamma, eps0);
    for (int a = 0; a < start_j; ++a) sp = advance_schedule(sp, cfg.c_growth);
    if (H.P.caps.k_max < sp.K)
        throw std::invalid_argument("run_kam: series caps below the initial cutoff K_0");

    const double stop_tol = cfg.stop_tol > 0 ? cfg.stop_tol : 1e-14 * eps0;
    double eps_meas = seed && !run.history.empty() ? run.history.back().eps_measured : eps0;

    for (int j = start_j; j < cfg.j_stop; ++j) {
        if (eps_meas < stop_tol) break;
        run.clean_by_step.push_back(build_Pi(grid, H.omega, sp.divisors()));
        const auto& clean = run.clean_by_step.back();
        double clean_fraction = 0;
        for (uint8_t c : clean) clean_fraction += c;
        clean_fraction /= double(clean.size());

        StepParams sp_next;
        KamStepResult step;
        try {
            sp_next = advance_schedule(sp, cfg.c_growth);
            step = kam_step(H, sp, sp_next, cfg, clean);
        } catch (const HypothesisError& e) {
            run.abort_reason = e.what();
            run.completed = false;
            run.final_params = sp;
            run.P_star = H.P;
            run.omega_star = H.omega;
            run.energy_star = H.energy;
            return run;
        }

        StepRecord rec;
        rec.j = j;
        rec.eps_measured = step.diag.eps_measured_sup;
        rec.eps_schedule = sp_next.eps;
        rec.rho = sp.rho;
        rec.alpha_j = sp.alpha_j;
        rec.r = sp.r;
        rec.E = sp.E;
        rec.K = sp.K;
        rec.clean_fraction = clean_fraction;
        rec.step_shift_sup = 0;
        for (double v : step.diag.omega_shift) rec.step_shift_sup = std::max(rec.step_shift_sup, v);
        rec.c_measured = step.diag.eps_measured_sup /
                         (sp_next.alpha_j * sp_next.r * std::pow(sp_next.rho, sp_next.tau_prime));
        rec.hom_residual_rel = step.diag.hom_residual_rel_clean;
        rec.lie_tail = step.diag.lie_tail;
        rec.cap_residual = step.diag.cap_residual;
        double drift = 0;
        for (size_t q = 0; q < grid.size(); ++q)
            for (int i = 0; i < n; ++i)
                drift = std::max(drift, std::abs(step.next.omega[q][i] - H0.omega[q][i]));
        rec.drift_sup = drift;
        run.history.push_back(rec);

        run.atlas.stages.push_back(std::move(step.stage));
        run.omega_hat_by_step.push_back(std::move(step.diag.omega_hat));
        H = std::move(step.next);
        run.omega_by_step.push_back(H.omega);
        sp = sp_next;
        eps_meas = rec.eps_measured;
        if (on_step) on_step(run);
    }

    run.final_params = sp;
    run.P_star = H.P;
    run.omega_star = H.omega;
    run.energy_star = H.energy;
    run.eps_final_measured = eps_meas;
    run.clean_by_step.push_back(build_Pi(grid, H.omega, sp.divisors()));
    run.kcheck = cfg.kcheck_mult * sp.K;
    run.pi_star = build_Pi(grid, H.omega, DivisorParams{alpha, tau, run.kcheck});
    run.completed = true;
    return run;
}

} // namespace kamnorm
