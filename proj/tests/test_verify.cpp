#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kamnorm/verify.hpp"

using namespace kamnorm;

namespace {

TermKey key(std::vector<int> k, std::vector<int> l) { return TermKey{std::move(k), std::move(l)}; }

FTSeries sin_generator(double eps, SeriesCaps caps)
{
    FTSeries F(1, 1, caps, true);
    F.set_coeff_uniform(key({1}, {0}), cplx(0, -eps / 2)); // eps sin(theta)
    return F;
}

SymplecticAtlas one_stage(const FTSeries& F)
{
    SymplecticAtlas atlas;
    AtlasStage st;
    st.generator = F;
    atlas.stages.push_back(std::move(st));
    return atlas;
}

} // namespace

TEST_CASE("eval_atlas: empty atlas is the identity")
{
    SymplecticAtlas atlas;
    std::vector<double> th{1.2}, I{0.05};
    auto ev = eval_atlas(atlas, 0, th, I);
    CHECK(ev.theta_out[0] == 1.2);
    CHECK(ev.action_out[0] == 0.05);
}

TEST_CASE("eval_atlas: one sine stage has the hand-computed flow")
{
    const double eps = 1e-3;
    SeriesCaps caps{8, 2};
    auto atlas = one_stage(sin_generator(eps, caps));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 2 * M_PI);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> th{u(rng)}, I{0.02 * u(rng) / (2 * M_PI)};
        auto ev = eval_atlas(atlas, 0, th, I);
        // theta frozen, I shifted by -eps cos(theta)
        CHECK(std::abs(ev.theta_out[0] - th[0]) <= 1e-12);
        CHECK(std::abs(ev.action_out[0] - (I[0] - eps * std::cos(th[0]))) <= 1e-12);
    }
}

TEST_CASE("eval_atlas: composition equals sequential stage flows bit for bit")
{
    SeriesCaps caps{8, 2};
    auto F1 = sin_generator(2e-3, caps);
    FTSeries F2(1, 1, caps, true);
    F2.set_coeff_uniform(key({2}, {0}), cplx(0, -5e-4));
    SymplecticAtlas both;
    both.stages.push_back({F1, {}});
    both.stages.push_back({F2, {}});

    std::vector<double> th{0.7}, I{0.01};
    auto full = eval_atlas(both, 0, th, I);
    // stages apply newest first
    auto inner = eval_atlas(one_stage(F2), 0, th, I);
    auto outer = eval_atlas(one_stage(F1), 0, inner.theta_out, inner.action_out);
    CHECK(full.theta_out[0] == outer.theta_out[0]);
    CHECK(full.action_out[0] == outer.action_out[0]);
}

TEST_CASE("symplectic_check: identity, exact stage, random small atlas")
{
    SymplecticAtlas empty;
    std::vector<std::vector<double>> pts{{0.3, 0.01}, {2.0, -0.02}};
    CHECK(symplectic_check(empty, 0, pts).sup_residual <= 1e-12);

    SeriesCaps caps{8, 2};
    auto atlas = one_stage(sin_generator(1e-3, caps));
    CHECK(symplectic_check(atlas, 0, pts).sup_residual <= 1e-9);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    SymplecticAtlas rnd;
    for (int st = 0; st < 2; ++st) {
        FTSeries F(1, 1, caps, true);
        F.set_coeff_uniform(key({1}, {0}), cplx(1e-4 * u(rng), 1e-4 * u(rng)));
        F.set_coeff_uniform(key({2}, {1}), cplx(5e-5 * u(rng), 5e-5 * u(rng)));
        rnd.stages.push_back({F, {}});
    }
    std::vector<std::vector<double>> pts2;
    for (int p = 0; p < 20; ++p) pts2.push_back({M_PI * (1 + u(rng)), 0.05 * u(rng)});
    CHECK(symplectic_check(rnd, 0, pts2).sup_residual <= 1e-8);
}

TEST_CASE("conjugacy_residual: zero perturbation conjugates exactly")
{
    SeriesCaps caps{8, 2};
    Hamiltonian H0;
    H0.omega = {{1.1}};
    H0.P = FTSeries(1, 1, caps, true);
    H0.energy = {0.0};
    SymplecticAtlas empty;
    ConjugacyGrid grid;
    grid.theta_per_axis = 8;
    grid.action_points = 3;
    grid.action_radius = 0.1;
    auto rep = conjugacy_residual(H0, H0, empty, 0, true, grid);
    CHECK(rep.sup_residual <= 1e-14);
}

TEST_CASE("conjugacy_residual: non-clean samples carry a warning")
{
    SeriesCaps caps{8, 2};
    Hamiltonian H0;
    H0.omega = {{1.0}};
    H0.P = FTSeries(1, 1, caps, true);
    H0.energy = {0.0};
    SymplecticAtlas empty;
    ConjugacyGrid grid;
    grid.theta_per_axis = 4;
    grid.action_points = 1;
    grid.action_radius = 0.1;
    auto rep = conjugacy_residual(H0, H0, empty, 0, false, grid);
    CHECK_FALSE(rep.clean_sample);
    CHECK(rep.warning.find("not divisor-clean") != std::string::npos);
}

TEST_CASE("torus_residual: flat torus and the frequency-error detector")
{
    SeriesCaps caps{8, 2};
    Hamiltonian H0;
    H0.omega = {{1.234}};
    H0.P = FTSeries(1, 1, caps, true);
    H0.energy = {0.0};
    SymplecticAtlas empty;
    auto rep = torus_residual(H0, std::vector<double>{1.234}, empty, 0, 32);
    CHECK(rep.sup_residual <= 1e-12);

    // a deliberately wrong frequency is detected at the size of the error
    auto wrong = torus_residual(H0, std::vector<double>{1.334}, empty, 0, 32);
    // flat embedding: DK = id, so the residual is exactly |delta omega|
    CHECK(wrong.sup_residual == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("torus_residual: grid-halving stability flag trips when it should")
{
    SeriesCaps caps{8, 2};
    Hamiltonian H0;
    H0.omega = {{1.0}};
    H0.P = FTSeries(1, 1, caps, true);
    H0.energy = {0.0};
    auto atlas = one_stage(sin_generator(1e-4, caps));
    // the sine stage makes K nontrivial; the 4th-order differences resolve it
    auto rep = torus_residual(H0, std::vector<double>{1.0}, atlas, 0, 64, true);
    CHECK(rep.warning.empty());
}

TEST_CASE("map_distance_bound reports the weighted distance")
{
    SeriesCaps caps{8, 2};
    const double eps = 1e-4;
    auto atlas = one_stage(sin_generator(eps, caps));
    atlas.stages[0].params = StepParams{};
    auto rep = map_distance_bound(atlas, 0, /*rho0=*/0.05, /*r0=*/0.5, /*E0=*/1e-3, 16, 3);
    // the stage shifts I by about eps: weighted by 1/r0
    CHECK(rep.sup_weighted == doctest::Approx(eps / 0.5).epsilon(0.01));
    CHECK(rep.ratio_to_E0 == doctest::Approx(rep.sup_weighted / 1e-3));
}
