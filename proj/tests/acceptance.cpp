// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.  Exit code is the number of
// failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "kamnorm/freqgeom.hpp"
#include "kamnorm/io.hpp"
#include "kamnorm/verify.hpp"

using namespace kamnorm;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& what, double seconds,
            double budget_s = 0)
{
    const bool in_budget = budget_s <= 0 || seconds < budget_s;
    const bool ok = pass && in_budget;
    if (!ok) ++failures;
    std::printf("criterion %2d [%s] %s (t = %.2fs%s)\n", criterion, ok ? "PASS" : "FAIL",
                what.c_str(), seconds,
                budget_s > 0 ? (", budget " + std::to_string(int(budget_s)) + "s").c_str()
                             : "");
    std::fflush(stdout);
}

std::string problems_dir() { return KAMNORM_PROBLEMS_DIR; }

struct NamedRun {
    Problem problem;
    RunConfig cfg;
    ParamGrid grid;
    Hamiltonian H0;
    KamRun run;
};

NamedRun do_run(const std::string& prob_file, const std::string& cfg_file)
{
    NamedRun nr;
    nr.problem = Problem::parse_file(problems_dir() + "/" + prob_file);
    nr.cfg = config_from_file(problems_dir() + "/" + cfg_file);
    nr.grid = nr.problem.make_grid();
    nr.H0 = nr.problem.build_hamiltonian(nr.grid, nr.cfg);
    nr.run = run_kam(nr.H0, nr.grid, nr.problem.s, nr.problem.r, nr.problem.alpha,
                     nr.problem.tau, nr.problem.m, nr.cfg);
    return nr;
}

// -- criterion 1: homological exactness ------------------------------------------

bool homological_case(int n, const std::vector<std::vector<double>>& omega,
                      const FTSeries& P, double alpha, double tau, long long K,
                      double* worst_out)
{
    const DivisorParams dp{alpha, tau, K};
    FTSeries R = linear_part(P);
    auto [RK, tail] = truncate_fourier(R, K);
    FTSeries F = solve_homological(RK, omega, dp);
    FTSeries N = linear_form_series(omega, n, P.caps);
    FTSeries res = add(poisson_bracket(N, F), sub(RK, average(RK)));
    const NormParams np{1.0, 0.5, 1.0};
    auto res_norm = majorant_norm(res, np);
    auto rk_norm = majorant_norm(RK, np);
    bool any_clean = false;
    double worst = 0;
    for (size_t q = 0; q < omega.size(); ++q) {
        if (!check_dio(omega[q], dp).pass) continue;
        any_clean = true;
        worst = std::max(worst, res_norm[q] / rk_norm[q]);
    }
    *worst_out = worst;
    return any_clean && worst <= 1e-12;
}

void criterion_1()
{
    Timer t;
    const long long K = 30;
    SeriesCaps caps{64, 3};

    auto grid1 = ParamGrid::regular({0.8}, {1.2}, {9});
    FTSeries P1(1, grid1.size(), caps, true);
    P1.set_coeff_uniform(TermKey{{1}, {0}}, 0.5e-6);
    double worst1 = 0;
    const bool ok1 = homological_case(1, grid1.samples, P1, 0.1, 1.5, K, &worst1);

    auto grid2 = ParamGrid::regular({1.0, 1.3}, {2.0, 1.7}, {5, 5});
    FTSeries P2(2, grid2.size(), caps, true);
    P2.set_coeff_uniform(TermKey{{1, 0}, {0, 0}}, 0.5e-6);
    P2.set_coeff_uniform(TermKey{{1, 1}, {0, 0}}, 0.5e-6);
    double worst2 = 0;
    const bool ok2 = homological_case(2, grid2.samples, P2, 0.1, 1.5, K, &worst2);

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "homological residual <= 1e-12 ||R^K|| at clean samples "
                  "(pendulum %.2e, planar %.2e)",
                  worst1, worst2);
    report(1, ok1 && ok2, buf, t.seconds(), 10.0);
}

// -- criterion 2: quadratic-type decay --------------------------------------------

void criterion_2(const NamedRun& two, double run_seconds)
{
    Timer t;
    bool ok = two.run.completed && two.run.history.size() >= 3;
    for (const auto& rec : two.run.history)
        if (rec.eps_measured > rec.eps_schedule) ok = false;

    // log-log slope of ||P_{j+1}|| against ||P_j||
    std::vector<double> x, y;
    double prev = two.run.eps0_measured;
    for (const auto& rec : two.run.history) {
        x.push_back(std::log(prev));
        y.push_back(std::log(rec.eps_measured));
        prev = rec.eps_measured;
    }
    double slope = 0;
    if (x.size() >= 2) {
        double mx = 0, my = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            mx += x[i];
            my += y[i];
        }
        mx /= x.size();
        my /= x.size();
        double num = 0, den = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            num += (x[i] - mx) * (y[i] - my);
            den += (x[i] - mx) * (x[i] - mx);
        }
        slope = num / den;
    }
    if (slope < 1.4) ok = false;

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "measured <= schedule for %zu steps, log-log slope %.3f >= 1.4",
                  two.run.history.size(), slope);
    report(2, ok, buf, t.seconds() + run_seconds, 120.0);
}

// -- criterion 3: frequency drift ---------------------------------------------------

bool drift_ok(const NamedRun& nr, double* worst_ratio)
{
    const KamRun& run = nr.run;
    const double r0 = nr.problem.r;
    bool ok = true;
    double worst = 0;
    for (size_t q = 0; q < nr.grid.size(); ++q) {
        double d = 0;
        for (int i = 0; i < nr.problem.n; ++i)
            d = std::max(d, std::abs(run.omega_star[q][i] - run.omega0()[q][i]));
        const double bound = 2 * run.eps0_measured / r0;
        worst = std::max(worst, d / bound);
        if (d > bound) ok = false;
    }
    for (size_t j = 0; j < run.history.size(); ++j) {
        const double eps_j = j == 0 ? run.eps0_measured : run.history[j - 1].eps_measured;
        const double r_j = run.history[j].r;
        for (size_t q = 0; q < nr.grid.size(); ++q) {
            double d = 0;
            for (int i = 0; i < nr.problem.n; ++i)
                d = std::max(d, std::abs(run.omega_star[q][i] - run.omega_by_step[j][q][i]));
            if (d > 2 * eps_j / r_j) ok = false;
        }
    }
    *worst_ratio = worst;
    return ok;
}

void criterion_3(const std::vector<const NamedRun*>& runs)
{
    Timer t;
    bool ok = true;
    double worst = 0;
    for (const auto* nr : runs) {
        double ratio = 0;
        if (!drift_ok(*nr, &ratio)) ok = false;
        worst = std::max(worst, ratio);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "|omega_* - omega| <= 2 eps_0 / r and per-step bounds on every run "
                  "(worst ratio %.3f)",
                  worst);
    report(3, ok, buf, t.seconds());
}

// -- criterion 4: conjugacy ---------------------------------------------------------

void criterion_4(const NamedRun& two)
{
    Timer t;
    Hamiltonian Hstar{two.run.omega_star, two.run.P_star, two.run.energy_star};
    ConjugacyGrid grid;
    grid.theta_per_axis = 32;
    grid.action_points = 5;
    grid.action_radius = two.problem.r / 4;

    bool ok = true, any_clean = false;
    double worst = 0;
    double hsup = 0;
    for (size_t q = 0; q < two.grid.size(); ++q) {
        if (!two.run.pi_star[q]) continue;
        any_clean = true;
        auto rep = conjugacy_residual(two.H0, Hstar, two.run.atlas, q, true, grid, 1e-12);
        // scale: 1 + |H| with |H| the largest Hamiltonian value on the grid
        double hval = 0;
        for (const auto& [pt, res] : rep.rows) (void)pt, (void)res;
        hval = majorant_norm_sup(two.H0.total_series(),
                                 NormParams{two.problem.s / 2, two.problem.r / 4, 1});
        hsup = std::max(hsup, hval);
        const double tol = 1e-8 * (1.0 + hval);
        worst = std::max(worst, rep.sup_residual);
        if (rep.sup_residual > tol) ok = false;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "|H o Phi_* - H_*| on a 32x32x5 grid: worst %.3e <= 1e-8 (1 + %.2f)",
                  worst, hsup);
    report(4, ok && any_clean, buf, t.seconds(), 120.0);
}

// -- criterion 5: torus invariance ----------------------------------------------------

void criterion_5(const NamedRun& pend, double run_seconds)
{
    Timer t;
    bool ok = true, any_clean = false;
    double worst = 0;
    const double eps_final = pend.run.eps_final_measured;
    for (size_t q = 0; q < pend.grid.size(); ++q) {
        if (!pend.run.pi_star[q]) continue;
        any_clean = true;
        auto rep = torus_residual(pend.H0, pend.run.omega_star[q], pend.run.atlas, q, 64,
                                  true, 1e-12);
        worst = std::max(worst, rep.sup_residual);
        if (rep.sup_residual > 10 * eps_final) ok = false;
        if (!rep.warning.empty()) ok = false; // > 10% change under halving
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "invariance residual %.3e <= 10 eps_final = %.3e, stable under halving",
                  worst, 10 * eps_final);
    report(5, ok && any_clean, buf, t.seconds() + run_seconds, 60.0);
}

// -- criterion 6: symplecticity -------------------------------------------------------

void criterion_6(const std::vector<const NamedRun*>& runs)
{
    Timer t;
    bool ok = true;
    double worst = 0;
    for (const auto* nr : runs) {
        for (size_t q = 0; q < nr->grid.size(); ++q) {
            if (!nr->run.pi_star[q]) continue;
            std::mt19937_64 rng(1000 + q);
            std::uniform_real_distribution<double> uth(0, 2 * M_PI);
            std::uniform_real_distribution<double> ui(-1, 1);
            std::vector<std::vector<double>> pts;
            const int n = nr->problem.n;
            for (int p = 0; p < 20; ++p) {
                std::vector<double> x(2 * n);
                for (int i = 0; i < n; ++i) x[i] = uth(rng);
                for (int i = 0; i < n; ++i) x[n + i] = 0.5 * nr->problem.r * ui(rng) / n;
                pts.push_back(std::move(x));
            }
            auto rep = symplectic_check(nr->run.atlas, q, pts, 1e-6, 1e-12);
            worst = std::max(worst, rep.sup_residual);
            if (rep.sup_residual > 1e-8) ok = false;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "|DPhi^T J DPhi - J| <= 1e-8 at 20 points per clean "
                                   "sample (worst %.3e)", worst);
    report(6, ok, buf, t.seconds());
}

// -- criterion 7: resonance-measure scaling -------------------------------------------

double scan_measure_near_resonances(std::span<const double> w, double alpha, double tau,
                                    double lambda0, long long K, size_t points)
{
    // independent oracle: for each lambda only the k2 nearest to the
    // resonance line can violate the threshold, since |f| moves by |w2| per
    // unit of k2 and the thresholds are far below |w2|/2
    size_t hits = 0;
    for (size_t i = 0; i < points; ++i) {
        const double lam = lambda0 * (i + 0.5) / points;
        bool bad = false;
        for (long long k1 = -K; k1 <= K && !bad; ++k1) {
            if (k1 == 0) continue;
            const double ideal = -k1 * (w[0] + lam) / w[1];
            for (long long k2 = llround(ideal) - 1; k2 <= llround(ideal) + 1; ++k2) {
                const long long nk = std::llabs(k1) + std::llabs(k2);
                if (nk == 0 || nk > K) continue;
                const double f = k1 * (w[0] + lam) + k2 * w[1];
                if (std::abs(f) < alpha / (2 * std::pow(double(nk), 2 * tau + 2))) {
                    bad = true;
                    break;
                }
            }
        }
        if (bad) ++hits;
    }
    return double(hits) * lambda0 / points;
}

void criterion_7()
{
    Timer t;
    std::vector<double> w{1.0, 1.6180339887};
    const double alpha = 0.05, tau = 1.5;
    const long long K = 200;
    MeasureReport rep = resonance_measure_2d(w, alpha, tau, 0.02, K);

    const double target = 1.0 + (tau - 1) / (tau + 1);
    const bool fit_ok = std::isfinite(rep.fitted_exponent) &&
                        std::abs(rep.fitted_exponent - target) <= 0.15;

    const size_t points = 1000000;
    const double scan = scan_measure_near_resonances(w, alpha, tau, 0.02, K, points);
    const double cell = 0.02 / points;
    const bool scan_ok = std::abs(rep.bad_measure - scan) <= cell + 1e-18;

    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "exact bad measures {%.3e, %.3e, %.3e}; fitted exponent %.3f vs %.2f "
                  "+- 0.15 %s; scan gap %.2e <= one cell %s",
                  rep.measures[0], rep.measures[1], rep.measures[2], rep.fitted_exponent,
                  target, fit_ok ? "ok" : "VIOLATED", std::abs(rep.bad_measure - scan),
                  scan_ok ? "ok" : "VIOLATED");
    report(7, fit_ok && scan_ok, buf, t.seconds(), 30.0);
}

// -- criterion 8: degree correctness -----------------------------------------------

void criterion_8()
{
    Timer t;
    std::vector<double> lo{-1, -1}, hi{1, 1};
    bool ok = true;
    std::string detail;

    struct Case {
        const char* name;
        FreqMap map;
        std::vector<double> target;
        int expected;
    };
    std::vector<Case> cases;
    cases.push_back({"identity", FreqMap::from_exprs({"xi1", "xi2"}, 2), {0.2, -0.3}, 1});
    cases.push_back({"cubes", FreqMap::from_exprs({"xi1^3", "xi2^3"}, 2), {0.1, 0.1}, 1});
    cases.push_back({"fold", FreqMap::from_exprs({"xi1^2", "xi2"}, 2), {0.1, 0.0}, 0});
    cases.push_back({"odd-power", FreqMap::from_exprs({"xi1^3", "xi2^5"}, 2), {0.05, 0.02}, 1});

    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& c : cases) {
        auto res = brouwer_degree(c.map, lo, hi, c.target);
        if (res.degree != c.expected || !res.stable) {
            ok = false;
            detail += std::string(c.name) + " wrong; ";
        }
        for (int trial = 0; trial < 10; ++trial) {
            double vx = u(rng), vy = u(rng);
            const double nv = std::hypot(vx, vy);
            const double sc = 0.5 * res.boundary_margin / nv;
            FreqMap pert = c.map;
            pert.set_perturbation({Expr::parse_xi(fmt_double(vx * sc), 2),
                                   Expr::parse_xi(fmt_double(vy * sc), 2)});
            auto res2 = brouwer_degree(pert, lo, hi, c.target);
            if (res2.degree != c.expected) {
                ok = false;
                detail += std::string(c.name) + " unstable; ";
                break;
            }
        }
    }

    // circle Bruno map through the ratio reduction: degree -1 (so |deg| = 1)
    FreqMap cosm = FreqMap::from_exprs({"cos(xi1)"}, 1);
    FreqMap sinm = FreqMap::from_exprs({"sin(xi1)"}, 1);
    auto rd = ratio_degree(cosm, sinm, std::vector<double>{0.6}, std::vector<double>{1.1},
                           std::vector<double>{0.9});
    if (std::abs(rd.degree.degree) != 1) {
        ok = false;
        detail += "circle ratio wrong; ";
    }
    report(8, ok, "degrees {1,1,0,1,+-1} with perturbation stability" +
                      (detail.empty() ? "" : " [" + detail + "]"),
           t.seconds());
}

// -- criterion 9: odd-power persistence ----------------------------------------------

void criterion_9(const NamedRun& odd, double run_seconds)
{
    Timer t;
    bool ok = odd.run.completed;

    FreqMap map = FreqMap::from_exprs({"xi1^3", "xi2^3"}, 2);
    std::vector<std::vector<double>> hat(odd.grid.size(), std::vector<double>(2, 0.0));
    for (size_t q = 0; q < odd.grid.size(); ++q)
        for (int i = 0; i < 2; ++i)
            hat[q][i] = odd.run.omega_star[q][i] - odd.run.omega0()[q][i];
    map.set_perturbation_table(odd.grid, hat);

    const double edge = std::pow(1.0 - odd.problem.alpha, 3.0); // (1-alpha)^{2l+1}, l = 1
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-edge, edge);
    const DivisorParams dp{0.005, 1.5, 50};
    int found = 0;
    double worst = 0;
    while (found < 10) {
        std::vector<double> target{u(rng), u(rng)};
        if (!check_dio(target, dp).pass) continue;
        ++found;
        auto sol = solve_dilation(map, odd.grid.lo, odd.grid.hi, target);
        worst = std::max(worst, sol.residual);
        if (sol.residual > 1e-8) ok = false;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "10 Diophantine targets in the %.3f-cube reached, worst residual %.2e",
                  edge, worst);
    report(9, ok, buf, t.seconds() + run_seconds, 120.0);
}

// -- criterion 10: bookkeeping identities ----------------------------------------------

void criterion_10(const std::vector<const NamedRun*>& runs)
{
    Timer t;
    bool ok = true;
    for (const auto* nr : runs) {
        // exact frequency telescoping
        for (size_t q = 0; q < nr->grid.size(); ++q) {
            for (int i = 0; i < nr->problem.n; ++i) {
                double w = nr->run.omega0()[q][i];
                for (const auto& hat : nr->run.omega_hat_by_step) w += hat[q][i];
                if (w != nr->run.omega_star[q][i]) ok = false;
            }
        }
        // Pi_star inside every recorded Pi_j
        for (const auto& flags : nr->run.clean_by_step)
            for (size_t q = 0; q < nr->grid.size(); ++q)
                if (nr->run.pi_star[q] && !flags[q]) ok = false;
    }
    report(10, ok,
           "existence-level constants not reproduced; telescoping and Pi_* containment "
           "hold exactly on every run",
           t.seconds());
}

} // namespace

int main()
{
    std::printf("acceptance suite\n");

    criterion_1();

    Timer t2;
    NamedRun two = do_run("twotorus.cfg", "twotorus_run.cfg");
    const double two_seconds = t2.seconds();
    criterion_2(two, two_seconds);

    Timer t5;
    NamedRun pend = do_run("pendulum.cfg", "pendulum_run.cfg");
    const double pend_seconds = t5.seconds();

    Timer t9;
    NamedRun odd = do_run("oddpower.cfg", "oddpower_run.cfg");
    const double odd_seconds = t9.seconds();

    std::vector<const NamedRun*> all{&two, &pend, &odd};
    criterion_3(all);
    criterion_4(two);
    criterion_5(pend, pend_seconds);
    criterion_6(std::vector<const NamedRun*>{&two, &pend});
    criterion_7();
    criterion_8();
    criterion_9(odd, odd_seconds);
    criterion_10(all);

    std::printf("%d criterion(s) failing\n", failures);
    return failures;
}
