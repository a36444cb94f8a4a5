#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kamnorm/kam.hpp"

using namespace kamnorm;

namespace {

TermKey key(std::vector<int> k, std::vector<int> l) { return TermKey{std::move(k), std::move(l)}; }

/// Consistent step parameters for direct kam_step experiments, without
/// insisting on the smallness chain that a full run would enforce.
StepParams make_step(double s, double r, double alpha, double tau, int n, double E)
{
    StepParams sp;
    sp.j = 0;
    sp.s = s;
    sp.rho = s / 20;
    sp.r = r;
    sp.alpha = alpha;
    sp.alpha_j = alpha / 2;
    sp.tau = tau;
    sp.tau_prime = tau_prime_of(n, 0, tau);
    sp.gamma = 0;
    sp.E = E;
    sp.eta = std::sqrt(E);
    sp.eps = sp.alpha_j * r * std::pow(sp.rho, sp.tau_prime) * E;
    sp.K = static_cast<long long>(std::ceil(-std::log(E) / sp.rho));
    sp.validate();
    return sp;
}

/// cos(k . theta) with amplitude a, as a reality-respecting pair of modes.
void add_cos(FTSeries& P, std::vector<int> k, double a)
{
    P.set_coeff_uniform(TermKey{std::move(k), std::vector<int>(P.n, 0)}, a / 2);
}

Hamiltonian pendulum(double omega, double eps, size_t samples, SeriesCaps caps)
{
    Hamiltonian H;
    H.omega.assign(samples, {omega});
    H.P = FTSeries(1, samples, caps, true);
    add_cos(H.P, {1}, eps);
    H.energy.assign(samples, 0.0);
    return H;
}

// Two-stage oracle for the Lie transform: numerically flow (theta, I) along
// X_F for unit time with a fixed-step RK4, then evaluate H there.
std::vector<double> rk4_flow(const FTSeries& F, size_t sample, std::vector<double> x,
                             int steps)
{
    const int n = F.n;
    std::vector<FTSeries> dI, dTh;
    for (int i = 0; i < n; ++i) {
        dI.push_back(action_derivative(F, i));
        dTh.push_back(theta_derivative(F, i));
    }
    auto rhs = [&](const std::vector<double>& y) {
        std::vector<double> d(2 * n);
        std::span<const double> th(y.data(), n), ac(y.data() + n, n);
        for (int i = 0; i < n; ++i) {
            d[i] = evaluate_real(dI[i], th, ac, sample);
            d[n + i] = -evaluate_real(dTh[i], th, ac, sample);
        }
        return d;
    };
    const double h = 1.0 / steps;
    for (int st = 0; st < steps; ++st) {
        auto k1 = rhs(x);
        std::vector<double> t2(x), t3(x), t4(x);
        for (size_t i = 0; i < x.size(); ++i) t2[i] += 0.5 * h * k1[i];
        auto k2 = rhs(t2);
        for (size_t i = 0; i < x.size(); ++i) t3[i] += 0.5 * h * k2[i];
        auto k3 = rhs(t3);
        for (size_t i = 0; i < x.size(); ++i) t4[i] += h * k3[i];
        auto k4 = rhs(t4);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return x;
}

} // namespace

TEST_CASE("schedule: initial parameters match the stated formulas")
{
    CHECK(tau_prime_of(2, 0, 1.5) == doctest::Approx(3.5));
    CHECK(tau_prime_of(1, 0, 1.5) == doctest::Approx(2.5));
    CHECK(tau_prime_of(2, 1, 1.5) == doctest::Approx(6.0));

    const double gamma = 1e-9, tau = 1.5, alpha = 0.1, r = 0.5;
    StepParams sp = init_schedule(0.2, r, alpha, tau, 2, 0, gamma, /*eps_input=*/1e-15);
    CHECK(sp.rho == doctest::Approx(0.01));
    CHECK(sp.tau_prime == doctest::Approx(3.5));
    CHECK(sp.alpha_j == doctest::Approx(alpha / 2));
    const double E0 = 2 * std::pow(20.0, 3.5) * gamma;
    CHECK(sp.E == doctest::Approx(E0));
    CHECK(sp.K == static_cast<long long>(std::ceil(-std::log(E0) / 0.01)));
    CHECK(sp.eps == doctest::Approx(gamma * alpha * r * std::pow(0.2, 3.5)));
    CHECK(std::exp(-double(sp.K) * sp.rho) <= sp.E * (1 + 1e-12));
    CHECK(sp.E < std::exp(-double(sp.K - 1) * sp.rho) * (1 + 1e-12));
}

TEST_CASE("schedule: smallness refusal reports the required gamma")
{
    try {
        init_schedule(0.2, 0.5, 0.1, 1.5, 1, 0, 1e-9, /*eps_input=*/1.0);
        FAIL("expected a refusal");
    } catch (const HypothesisError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gamma") != std::string::npos);
        const double required = 1.0 / (0.1 * 0.5 * std::pow(0.2, 2.5));
        CHECK(msg.find(std::to_string(required).substr(0, 6)) != std::string::npos);
    }
    // gamma so large that no positive cutoff exists
    CHECK_THROWS_AS(init_schedule(0.2, 0.5, 0.1, 1.5, 1, 0, 1.0, 1e-12), HypothesisError);
}

TEST_CASE("schedule: one advance step follows the update rules")
{
    StepParams sp = make_step(4.0, 0.5, 0.1, 1.5, 1, 1e-4);
    StepParams nx = advance_schedule(sp, 1.0);
    CHECK(nx.rho == doctest::Approx(sp.rho / 2));
    CHECK(nx.s == doctest::Approx(sp.s - 5 * sp.rho));
    CHECK(nx.alpha_j == doctest::Approx((1 - 1.0 / 8) * sp.alpha)); // j = 0
    CHECK(nx.E == doctest::Approx(1e-6));
    CHECK(nx.eta == doctest::Approx(1e-2));
    CHECK(nx.r == doctest::Approx(sp.r * 1e-2).epsilon(1e-12));
    CHECK(nx.K == static_cast<long long>(std::ceil(-std::log(nx.E) / nx.rho)));

    StepParams n2 = advance_schedule(nx, 1.0);
    CHECK(n2.alpha_j == doctest::Approx((1 - 1.0 / 16) * sp.alpha));
    CHECK(n2.alpha_j > nx.alpha_j);
    CHECK(n2.E < nx.E);
}

TEST_CASE("schedule: nesting violation aborts with the offending quantities")
{
    // inflate eps via a large E so that 2 K^(tau+1) eps > (alpha_+ - alpha) r
    StepParams sp = make_step(4.0, 0.5, 0.1, 1.5, 1, 0.05);
    try {
        advance_schedule(sp, 1.0);
        FAIL("expected nesting failure");
    } catch (const HypothesisError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nesting") != std::string::npos);
        CHECK(msg.find("K = ") != std::string::npos);
    }
}

TEST_CASE("solve_homological: averages, the pendulum generator, resonant damping")
{
    SeriesCaps caps{20, 3};
    DivisorParams dp{0.1, 1.5, 10};

    // pure average: F = 0
    FTSeries avg(1, 1, caps, true);
    avg.set_coeff_uniform(key({0}, {0}), 2.5);
    avg.set_coeff_uniform(key({0}, {1}), 0.5);
    CHECK(solve_homological(avg, {{1.0}}, dp).term_count() == 0);

    // pendulum: R = eps cos(theta), omega = 1 -> F = eps sin(theta)
    const double eps = 1e-6;
    FTSeries R(1, 1, caps, true);
    add_cos(R, {1}, eps);
    FTSeries F = solve_homological(R, {{1.0}}, dp);
    REQUIRE(F.term_count() == 2);
    // sin(theta) = (e^{i theta} - e^{-i theta}) / 2i: coefficient -i/2 at k = 1
    CHECK(std::abs(F.coeff(key({1}, {0}))[0] - cplx(0, -eps / 2)) <= 1e-20);

    // homological residual vanishes at the clean sample
    FTSeries N = linear_form_series({{1.0}}, 1, caps);
    FTSeries res = add(poisson_bracket(N, F), sub(R, average(R)));
    CHECK(majorant_norm_sup(res, NormParams{1.0, 0.5, 1}) <= 1e-18);

    // resonant sample: the mode is dropped and the residual keeps it
    SeriesCaps caps2{10, 3};
    FTSeries R2(2, 1, caps2, true);
    add_cos(R2, {1, -1}, eps);
    FTSeries F2 = solve_homological(R2, {{1.0, 1.0}}, DivisorParams{0.1, 1.5, 5});
    CHECK(F2.term_count() == 0);
    FTSeries N2 = linear_form_series({{1.0, 1.0}}, 2, caps2);
    FTSeries res2 = add(poisson_bracket(N2, F2), sub(R2, average(R2)));
    CHECK(std::abs(std::abs(res2.coeff(key({1, -1}, {0, 0}))[0]) - eps / 2) <= 1e-20);
}

TEST_CASE("solve_homological rejects malformed truncations")
{
    SeriesCaps caps{10, 3};
    DivisorParams dp{0.1, 1.5, 3};
    FTSeries bad_deg(1, 1, caps, true);
    bad_deg.set_coeff_uniform(key({1}, {2}), 1e-3);
    CHECK_THROWS_AS(solve_homological(bad_deg, {{1.0}}, dp), std::invalid_argument);
    FTSeries bad_mode(1, 1, caps, true);
    bad_mode.set_coeff_uniform(key({5}, {0}), 1e-3);
    CHECK_THROWS_AS(solve_homological(bad_mode, {{1.0}}, dp), std::invalid_argument);
}

TEST_CASE("lie_transform: identity, exact one-step case, integrated-flow oracle")
{
    SeriesCaps caps{16, 3};
    const NormParams np{0.5, 0.4, 1};

    FTSeries H = linear_form_series({{1.3}}, 1, caps);
    FTSeries zero(1, 1, caps, true);
    LieResult same = lie_transform(H, zero, 4, np);
    CHECK(majorant_norm_sup(sub(same.series, H), np) == 0.0);
    CHECK(same.tail_estimate == 0.0);

    // H = omega I, F = eps sin(theta): image omega I - eps omega cos(theta)
    const double eps = 1e-3, omega = 1.3;
    FTSeries F(1, 1, caps, true);
    F.set_coeff_uniform(key({1}, {0}), cplx(0, -eps / 2)); // eps sin(theta)
    LieResult lt = lie_transform(H, F, 6, np);
    FTSeries expect = H;
    add_cos(expect, {1}, -eps * omega);
    CHECK(majorant_norm_sup(sub(lt.series, expect), np) <= 1e-18);
    CHECK(lt.tail_estimate <= 1e-18);

    // random small generator vs a numerically integrated flow
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 5; ++trial) {
        FTSeries Hr(1, 1, caps, true);
        Hr.set_coeff_uniform(key({0}, {1}), 0.7 + 0.1 * u(rng));
        add_cos(Hr, {1}, 0.05 * u(rng));
        Hr.set_coeff_uniform(key({2}, {1}), cplx(0.01 * u(rng), 0.01 * u(rng)));
        FTSeries Fr(1, 1, caps, true);
        Fr.set_coeff_uniform(key({1}, {0}), cplx(0.002 * u(rng), 0.002 * u(rng)));
        Fr.set_coeff_uniform(key({1}, {1}), cplx(0.001 * u(rng), 0.001 * u(rng)));
        LieResult image = lie_transform(Hr, Fr, 10, np);

        std::vector<double> x{0.3 + u(rng), 0.05 * u(rng)};
        auto y = rk4_flow(Fr, 0, x, 2000);
        std::span<const double> yth(y.data(), 1), yI(y.data() + 1, 1);
        const double direct = evaluate_real(Hr, yth, yI, 0);
        std::span<const double> xth(x.data(), 1), xI(x.data() + 1, 1);
        const double viaseries = evaluate_real(image.series, xth, xI, 0);
        CHECK(std::abs(direct - viaseries) <= 1e-10);
    }
}

TEST_CASE("lie_transform aborts on adjoint growth")
{
    SeriesCaps caps{8, 2};
    FTSeries H = linear_form_series({{1.0}}, 1, caps);
    FTSeries F(1, 1, caps, true);
    add_cos(F, {1}, 50.0); // far too large a generator
    F.set_coeff_uniform(key({1}, {1}), cplx(0, -25.0));
    CHECK_THROWS_AS(lie_transform(H, F, 6, NormParams{0.5, 0.4, 1}), HypothesisError);
}

TEST_CASE("kam_step: P = 0 is a fixed point")
{
    SeriesCaps caps{40, 3};
    Hamiltonian H = pendulum(1.0, 0.0, 2, caps);
    RunConfig cfg;
    StepParams sp = make_step(4.0, 0.5, 0.1, 1.5, 1, 1e-3);
    StepParams nx = advance_schedule(sp, 3.0);
    auto res = kam_step(H, sp, nx, cfg, std::vector<uint8_t>(2, 1));
    CHECK(res.stage.generator.term_count() == 0);
    CHECK(res.next.P.term_count() == 0);
    CHECK(res.next.omega[0][0] == 1.0);
    CHECK(res.diag.eps_measured_sup == 0.0);
}

TEST_CASE("kam_step: quadratic contraction of the pendulum perturbation")
{
    SeriesCaps caps{60, 3};
    RunConfig cfg;
    cfg.drop_tol = 0; // keep everything for the scaling measurement
    StepParams sp = make_step(4.0, 0.5, 0.1, 1.5, 1, 1e-3);
    StepParams nx = advance_schedule(sp, 3.0);
    std::vector<double> ratios;
    for (double eps : {1e-4, 1e-5, 1e-6}) {
        Hamiltonian H = pendulum(1.0, eps, 1, caps);
        const double eps0 = majorant_norm_sup(H.P, NormParams{sp.s, sp.r, 1});
        // flags off: the schedule is deliberately not honored at these sizes
        auto res = kam_step(H, sp, nx, cfg, std::vector<uint8_t>(1, 0));
        CHECK(res.next.omega[0][0] == 1.0); // cos has zero average
        const double ratio = res.diag.eps_measured_sup / (eps0 * eps0);
        ratios.push_back(ratio);
    }
    const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(*mx / *mn <= 1.5); // same constant across two decades
}

TEST_CASE("kam_step: frequency update obeys |omega_hat| <= eps / r and is recorded")
{
    SeriesCaps caps{60, 3};
    RunConfig cfg;
    StepParams sp = make_step(4.0, 0.5, 0.1, 1.5, 1, 1e-3);
    StepParams nx = advance_schedule(sp, 3.0);
    const double eps = 1e-7;
    Hamiltonian H = pendulum(1.0, eps, 1, caps);
    H.P.set_coeff_uniform(key({0}, {1}), 0.3 * eps); // average action term
    const double eps0 = majorant_norm_sup(H.P, NormParams{sp.s, sp.r, 1});
    auto res = kam_step(H, sp, nx, cfg, std::vector<uint8_t>(1, 1));
    CHECK(res.diag.omega_hat[0][0] == doctest::Approx(0.3 * eps));
    CHECK(std::abs(res.next.omega[0][0] - 1.0) <= eps0 / sp.r);
    // homological residual at the clean sample is round-off only
    CHECK(res.diag.hom_residual_rel_clean <= 1e-12);
    // the explicit formula matches a single Lie transform within budget
    CHECK(res.diag.conj_defect_clean <= res.diag.conj_budget + 1e-25);
}

TEST_CASE("run_kam: pendulum run satisfies the drift bounds and bookkeeping")
{
    auto grid = ParamGrid::regular({0.8}, {1.2}, {5});
    RunConfig cfg;
    cfg.c_growth = 10;
    cfg.j_stop = 3;
    const double s = 4.0, r = 0.5, alpha = 0.1, tau = 1.5, eps = 1e-9;

    SeriesCaps caps{200, 3};
    Hamiltonian H0;
    H0.omega = grid.samples;
    H0.P = FTSeries(1, grid.size(), caps, true);
    add_cos(H0.P, {1}, eps);
    H0.energy.assign(grid.size(), 0.0);

    KamRun run = run_kam(H0, grid, s, r, alpha, tau, 0, cfg);
    REQUIRE(run.completed);
    REQUIRE(run.history.size() >= 2);

    // measured below schedule at every step
    for (const auto& rec : run.history) CHECK(rec.eps_measured <= rec.eps_schedule);

    // superlinear decay and monotone schedules
    for (size_t j = 1; j < run.history.size(); ++j) {
        CHECK(run.history[j].eps_measured < run.history[j - 1].eps_measured);
        CHECK(run.history[j].rho == doctest::Approx(run.history[j - 1].rho / 2));
        CHECK(run.history[j].alpha_j > run.history[j - 1].alpha_j);
        CHECK(run.history[j].alpha_j < alpha);
        CHECK(run.history[j].E < run.history[j - 1].E);
    }

    // total drift: |omega_* - omega_0| <= 2 eps_0 / r
    for (size_t q = 0; q < grid.size(); ++q)
        CHECK(std::abs(run.omega_star[q][0] - grid.samples[q][0]) <=
              2 * run.eps0_measured / r);

    // per-step drift: |omega_* - omega_j| <= 2 eps_j / r_j with measured eps
    for (size_t j = 0; j < run.history.size(); ++j) {
        const double eps_j = j == 0 ? run.eps0_measured : run.history[j - 1].eps_measured;
        const double r_j = run.history[j].r;
        for (size_t q = 0; q < grid.size(); ++q)
            CHECK(std::abs(run.omega_star[q][0] - run.omega_by_step[j][q][0]) <=
                  2 * eps_j / r_j);
    }

    // exact telescoping: omega_0 plus the recorded updates reproduces omega_*
    for (size_t q = 0; q < grid.size(); ++q) {
        double w = grid.samples[q][0];
        for (const auto& hat : run.omega_hat_by_step) w += hat[q][0];
        CHECK(w == run.omega_star[q][0]);
    }

    // Pi_star containment in every recorded Pi_j
    for (const auto& flags : run.clean_by_step)
        for (size_t q = 0; q < grid.size(); ++q)
            if (run.pi_star[q]) CHECK(flags[q] == 1);

    // all samples in [0.8, 1.2] are Diophantine in 1-d at this alpha
    for (size_t q = 0; q < grid.size(); ++q) CHECK(run.pi_star[q] == 1);
}

TEST_CASE("run_kam: aborts carry diagnostics and partial state")
{
    auto grid = ParamGrid::regular({0.8}, {1.2}, {3});
    RunConfig cfg;
    cfg.c_growth = 1e6; // forces E to grow on the first advance
    SeriesCaps caps{200, 3};
    Hamiltonian H0;
    H0.omega = grid.samples;
    H0.P = FTSeries(1, grid.size(), caps, true);
    add_cos(H0.P, {1}, 1e-9);
    H0.energy.assign(grid.size(), 0.0);
    KamRun run = run_kam(H0, grid, 4.0, 0.5, 0.1, 1.5, 0, cfg);
    CHECK_FALSE(run.completed);
    CHECK(run.abort_reason.find("E grows") != std::string::npos);
    CHECK(run.omega_star.size() == grid.size());
}

TEST_CASE("run_kam: fully resonant frequency map completes formally with empty Pi_star")
{
    auto grid = ParamGrid::regular({1.0}, {1.0}, {1});
    RunConfig cfg;
    cfg.j_stop = 2;
    SeriesCaps caps{200, 3};
    Hamiltonian H0;
    H0.omega = {{1.0, 1.0}}; // resonant at k = (1,-1)
    H0.P = FTSeries(2, 1, caps, true);
    add_cos(H0.P, {1, -1}, 1e-10);
    H0.energy = {0.0};
    KamRun run = run_kam(H0, grid, 1.0, 0.5, 0.1, 1.5, 0, cfg);
    CHECK(run.completed);
    CHECK(run.pi_star[0] == 0);
    for (const auto& flags : run.clean_by_step) CHECK(flags[0] == 0);
    // the resonant mode was dropped from every generator
    for (const auto& stage : run.atlas.stages) CHECK(stage.generator.term_count() == 0);
    // and the formal perturbation still contracted
    if (run.history.size() >= 2)
        CHECK(run.history.back().eps_measured < run.history.front().eps_measured);
}
