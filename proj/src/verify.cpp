#include "kamnorm/verify.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>

namespace odeint = boost::numeric::odeint;

namespace kamnorm {

namespace {

using State = std::vector<double>;

/// Canonical vector field of one generator at one sample.
struct StageField {
    std::vector<FTSeries> dI;  // dF/dI_i
    std::vector<FTSeries> dTh; // dF/dtheta_i
    size_t sample;

    StageField(const FTSeries& F, size_t sample_) : sample(sample_)
    {
        for (int i = 0; i < F.n; ++i) {
            dI.push_back(action_derivative(F, i));
            dTh.push_back(theta_derivative(F, i));
        }
    }

    void operator()(const State& x, State& dxdt, double) const
    {
        const int n = static_cast<int>(dI.size());
        std::span<const double> theta(x.data(), n);
        std::span<const double> action(x.data() + n, n);
        dxdt.resize(2 * n);
        for (int i = 0; i < n; ++i) {
            dxdt[i] = evaluate_real(dI[i], theta, action, sample);
            dxdt[n + i] = -evaluate_real(dTh[i], theta, action, sample);
        }
    }
};

State flow_stage(const FTSeries& F, size_t sample, State x, double tol)
{
    StageField field(F, sample);
    auto stepper = odeint::make_controlled(tol, tol,
                                           odeint::runge_kutta_fehlberg78<State>());
    try {
        odeint::integrate_adaptive(stepper, field, x, 0.0, 1.0, 0.25);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("stage flow integration failed: ") + e.what());
    }
    return x;
}

std::vector<double> mod_2pi(std::span<const double> theta)
{
    std::vector<double> out(theta.begin(), theta.end());
    for (double& t : out) {
        t = std::fmod(t, 2 * M_PI);
        if (t < 0) t += 2 * M_PI;
    }
    return out;
}

State apply_atlas(const SymplecticAtlas& atlas, size_t sample, State x, double tol,
                  std::vector<std::vector<double>>* log = nullptr)
{
    for (size_t i = atlas.stages.size(); i-- > 0;) {
        x = flow_stage(atlas.stages[i].generator, sample, std::move(x), tol);
        if (log) log->push_back(x);
    }
    return x;
}

} // namespace

MapEvaluation eval_atlas(const SymplecticAtlas& atlas, size_t sample,
                         std::span<const double> theta, std::span<const double> action,
                         double integrator_tol)
{
    const size_t n = theta.size();
    if (action.size() != n) throw std::invalid_argument("eval_atlas: dimension mismatch");
    MapEvaluation ev;
    ev.theta_in.assign(theta.begin(), theta.end());
    ev.action_in.assign(action.begin(), action.end());
    State x(2 * n);
    std::copy(theta.begin(), theta.end(), x.begin());
    std::copy(action.begin(), action.end(), x.begin() + n);
    x = apply_atlas(atlas, sample, std::move(x), integrator_tol, &ev.stage_log);
    for (double v : x)
        if (!std::isfinite(v)) throw std::runtime_error("eval_atlas: non-finite image");
    ev.theta_out.assign(x.begin(), x.begin() + n);
    ev.action_out.assign(x.begin() + n, x.end());
    ev.theta_out_mod = mod_2pi(ev.theta_out);
    return ev;
}

ResidualReport symplectic_check(const SymplecticAtlas& atlas, size_t sample,
                                const std::vector<std::vector<double>>& points,
                                double fd_step, double integrator_tol)
{
    ResidualReport rep;
    rep.fd_step = fd_step;
    rep.integrator_tol = integrator_tol;
    for (const auto& p : points) {
        const size_t dim = p.size(); // 2n
        const size_t n = dim / 2;
        if (dim != 2 * n || n == 0)
            throw std::invalid_argument("symplectic_check: points must have even dimension");
        // Jacobian by central differences
        std::vector<std::vector<double>> Dp(dim, std::vector<double>(dim, 0.0));
        for (size_t c = 0; c < dim; ++c) {
            State xp(p.begin(), p.end()), xm(p.begin(), p.end());
            xp[c] += fd_step;
            xm[c] -= fd_step;
            xp = apply_atlas(atlas, sample, std::move(xp), integrator_tol);
            xm = apply_atlas(atlas, sample, std::move(xm), integrator_tol);
            for (size_t rix = 0; rix < dim; ++rix)
                Dp[rix][c] = (xp[rix] - xm[rix]) / (2 * fd_step);
        }
        // residual M^T J M - J with J = [[0,-I],[I,0]]
        double worst = 0;
        for (size_t a = 0; a < dim; ++a) {
            for (size_t b = 0; b < dim; ++b) {
                double v = 0;
                for (size_t c = 0; c < n; ++c)
                    v += -Dp[c][a] * Dp[n + c][b] + Dp[n + c][a] * Dp[c][b];
                double J = 0;
                if (a < n && b == a + n) J = -1;
                if (a >= n && b == a - n) J = 1;
                worst = std::max(worst, std::abs(v - J));
            }
        }
        rep.rows.emplace_back(p, worst);
        rep.sup_residual = std::max(rep.sup_residual, worst);
    }
    return rep;
}

namespace {

std::vector<std::vector<double>> theta_lattice(int n, int per_axis)
{
    std::vector<std::vector<double>> pts;
    std::vector<int> idx(n, 0);
    const size_t total = static_cast<size_t>(std::pow(double(per_axis), n));
    pts.reserve(total);
    for (size_t t = 0; t < total; ++t) {
        std::vector<double> p(n);
        for (int i = 0; i < n; ++i) p[i] = 2 * M_PI * idx[i] / per_axis;
        pts.push_back(std::move(p));
        for (int i = n; i-- > 0;) {
            if (++idx[i] < per_axis) break;
            idx[i] = 0;
        }
    }
    return pts;
}

} // namespace

ResidualReport conjugacy_residual(const Hamiltonian& H0, const Hamiltonian& Hstar,
                                  const SymplecticAtlas& atlas, size_t sample,
                                  bool clean, const ConjugacyGrid& grid,
                                  double integrator_tol)
{
    ResidualReport rep;
    rep.integrator_tol = integrator_tol;
    rep.clean_sample = clean;
    if (!clean)
        rep.warning = "sample is not divisor-clean: the conjugacy identity is not "
                      "asserted here; residual reported for information only";
    const int n = H0.n();
    rep.grid = {grid.theta_per_axis, grid.action_points};
    const FTSeries total0 = H0.total_series();
    const FTSeries total1 = Hstar.total_series();

    double radius = grid.action_radius;
    const auto thetas = theta_lattice(n, grid.theta_per_axis);
    for (int a = 0; a < grid.action_points; ++a) {
        const double t = grid.action_points == 1
                             ? 0.0
                             : -radius + 2.0 * radius * a / (grid.action_points - 1);
        std::vector<double> action(n, t / n); // |I|_1 = |t| <= radius
        for (const auto& th : thetas) {
            MapEvaluation ev = eval_atlas(atlas, sample, th, action, integrator_tol);
            const double lhs = evaluate_real(total0, ev.theta_out, ev.action_out, sample);
            const double rhs = evaluate_real(total1, th, action, sample);
            const double res = std::abs(lhs - rhs);
            std::vector<double> point = th;
            point.insert(point.end(), action.begin(), action.end());
            rep.rows.emplace_back(std::move(point), res);
            rep.sup_residual = std::max(rep.sup_residual, res);
        }
    }
    return rep;
}

namespace {

double torus_sup_residual(const Hamiltonian& H0, std::span<const double> omega_star,
                          const SymplecticAtlas& atlas, size_t sample, int G,
                          double tol, ResidualReport* rows_out)
{
    const int n = H0.n();
    std::vector<FTSeries> dPdI, dPdTh;
    for (int i = 0; i < n; ++i) {
        dPdI.push_back(action_derivative(H0.P, i));
        dPdTh.push_back(theta_derivative(H0.P, i));
    }
    // evaluate the embedding on the lattice
    const auto thetas = theta_lattice(n, G);
    std::vector<std::vector<double>> K(thetas.size());
    const std::vector<double> zero(n, 0.0);
    for (size_t t = 0; t < thetas.size(); ++t) {
        MapEvaluation ev = eval_atlas(atlas, sample, thetas[t], zero, tol);
        K[t] = ev.theta_out;
        K[t].insert(K[t].end(), ev.action_out.begin(), ev.action_out.end());
    }
    auto at = [&](std::vector<int> idx) -> const std::vector<double>& {
        size_t flat = 0;
        for (int i = 0; i < n; ++i) {
            int v = ((idx[i] % G) + G) % G;
            flat = flat * G + v;
        }
        return K[flat];
    };
    const double h = 2 * M_PI / G;
    double sup = 0;
    std::vector<int> idx(n, 0);
    for (size_t t = 0; t < thetas.size(); ++t) {
        // flat index -> lattice index
        size_t rem = t;
        for (int i = n; i-- > 0;) {
            idx[i] = static_cast<int>(rem % G);
            rem /= G;
        }
        // DK . omega_star by 4th-order central differences along each axis
        std::vector<double> dk(2 * n, 0.0);
        for (int ax = 0; ax < n; ++ax) {
            auto shift = [&](int d) {
                std::vector<int> s = idx;
                s[ax] += d;
                return at(s);
            };
            const auto &p2 = shift(2), &p1 = shift(1), &m1 = shift(-1), &m2 = shift(-2);
            for (int c = 0; c < 2 * n; ++c) {
                const double deriv = (-p2[c] + 8 * p1[c] - 8 * m1[c] + m2[c]) / (12 * h);
                dk[c] += deriv * omega_star[ax];
            }
        }
        // X_H0 at K(theta)
        std::span<const double> kth(K[t].data(), n);
        std::span<const double> kI(K[t].data() + n, n);
        double res = 0;
        for (int i = 0; i < n; ++i) {
            const double xdot = H0.omega[sample][i] + evaluate_real(dPdI[i], kth, kI, sample);
            const double idot = -evaluate_real(dPdTh[i], kth, kI, sample);
            res = std::max(res, std::abs(xdot - dk[i]));
            res = std::max(res, std::abs(idot - dk[n + i]));
        }
        if (rows_out) rows_out->rows.emplace_back(thetas[t], res);
        sup = std::max(sup, res);
    }
    return sup;
}

} // namespace

ResidualReport torus_residual(const Hamiltonian& H0, std::span<const double> omega_star,
                              const SymplecticAtlas& atlas, size_t sample,
                              int theta_per_axis, bool check_stability,
                              double integrator_tol)
{
    if (theta_per_axis < 8)
        throw std::invalid_argument("torus_residual: need at least 8 points per axis");
    ResidualReport rep;
    rep.integrator_tol = integrator_tol;
    rep.grid = {theta_per_axis};
    rep.sup_residual = torus_sup_residual(H0, omega_star, atlas, sample, theta_per_axis,
                                          integrator_tol, &rep);
    if (check_stability) {
        const double coarse = torus_sup_residual(H0, omega_star, atlas, sample,
                                                 theta_per_axis / 2, integrator_tol, nullptr);
        rep.grid.push_back(theta_per_axis / 2);
        rep.rows.emplace_back(std::vector<double>{double(theta_per_axis / 2)}, coarse);
        const double change = std::abs(coarse - rep.sup_residual) /
                              std::max(rep.sup_residual, 1e-300);
        if (change > 0.10)
            rep.warning = "residual changes by " + std::to_string(change * 100) +
                          "% under grid halving: differencing error dominates";
    }
    return rep;
}

MapBoundReport map_distance_bound(const SymplecticAtlas& atlas, size_t sample,
                                  double rho0, double r0, double E0,
                                  int theta_per_axis, int action_points,
                                  double integrator_tol)
{
    MapBoundReport rep;
    rep.grid = {theta_per_axis, action_points};
    if (atlas.stages.empty()) return rep;
    const int n = atlas.stages.front().generator.n;
    const auto thetas = theta_lattice(n, theta_per_axis);
    for (int a = 0; a < action_points; ++a) {
        const double t = action_points == 1
                             ? 0.0
                             : -0.5 * r0 + r0 * a / (action_points - 1);
        std::vector<double> action(n, t / n);
        for (const auto& th : thetas) {
            MapEvaluation ev = eval_atlas(atlas, sample, th, action, integrator_tol);
            double w = 0;
            for (int i = 0; i < n; ++i) {
                w = std::max(w, std::abs(ev.theta_out[i] - th[i]) / rho0);
                w = std::max(w, std::abs(ev.action_out[i] - action[i]) / r0);
            }
            rep.sup_weighted = std::max(rep.sup_weighted, w);
        }
    }
    rep.ratio_to_E0 = E0 > 0 ? rep.sup_weighted / E0 : 0.0;
    return rep;
}

} // namespace kamnorm
