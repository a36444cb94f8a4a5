#include "kamnorm/freqgeom.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kamnorm {

// -- FreqMap --------------------------------------------------------------------

FreqMap::FreqMap(std::vector<Expr> comps, int dim_in)
    : comps_(std::move(comps)), dim_in_(dim_in)
{
    for (const auto& c : comps_) {
        if (c.n_vars() != dim_in_)
            throw std::invalid_argument("FreqMap: component arity mismatch");
        std::vector<Expr> d;
        for (int i = 0; i < dim_in_; ++i) d.push_back(c.derivative(i));
        dcomps_.push_back(std::move(d));
    }
}

FreqMap FreqMap::from_exprs(const std::vector<std::string>& comps, int dim_in)
{
    std::vector<Expr> es;
    for (const auto& c : comps) es.push_back(Expr::parse_xi(c, dim_in));
    return FreqMap(std::move(es), dim_in);
}

void FreqMap::set_perturbation(std::vector<Expr> hat)
{
    if (static_cast<int>(hat.size()) != dim_out())
        throw std::invalid_argument("FreqMap: perturbation dimension mismatch");
    hat_ = std::move(hat);
    dhat_.clear();
    for (const auto& c : hat_) {
        std::vector<Expr> d;
        for (int i = 0; i < dim_in_; ++i) d.push_back(c.derivative(i));
        dhat_.push_back(std::move(d));
    }
}

void FreqMap::set_perturbation_table(ParamGrid grid, std::vector<std::vector<double>> values)
{
    if (grid.shape.empty())
        throw std::invalid_argument("FreqMap: perturbation table needs a regular grid");
    if (values.size() != grid.size())
        throw std::invalid_argument("FreqMap: table size mismatch");
    table_grid_ = std::move(grid);
    table_values_ = std::move(values);
}

std::vector<double> FreqMap::base(std::span<const double> xi) const
{
    std::vector<double> out(comps_.size());
    for (size_t c = 0; c < comps_.size(); ++c) out[c] = comps_[c].eval(xi);
    return out;
}

std::vector<double> FreqMap::table_interp(std::span<const double> xi) const
{
    const auto& g = table_grid_;
    const int d = g.dim();
    std::vector<int> cell(d);
    std::vector<double> t(d);
    for (int i = 0; i < d; ++i) {
        const int m = g.shape[i];
        if (m == 1) {
            cell[i] = 0;
            t[i] = 0;
            continue;
        }
        double u = (xi[i] - g.lo[i]) / (g.hi[i] - g.lo[i]) * (m - 1);
        u = std::clamp(u, 0.0, double(m - 1));
        cell[i] = std::min(static_cast<int>(u), m - 2);
        t[i] = u - cell[i];
    }
    const int nout = static_cast<int>(table_values_[0].size());
    std::vector<double> out(nout, 0.0);
    const int corners = 1 << d;
    for (int mask = 0; mask < corners; ++mask) {
        double w = 1;
        size_t flat = 0;
        bool valid = true;
        for (int i = 0; i < d; ++i) {
            const int bit = (mask >> i) & 1;
            if (g.shape[i] == 1) {
                if (bit) { valid = false; break; }
                flat = flat * g.shape[i];
                continue;
            }
            w *= bit ? t[i] : 1.0 - t[i];
            flat = flat * g.shape[i] + (cell[i] + bit);
        }
        if (!valid || w == 0.0) continue;
        for (int c = 0; c < nout; ++c) out[c] += w * table_values_[flat][c];
    }
    return out;
}

std::vector<std::vector<double>> FreqMap::table_gradient(std::span<const double> xi) const
{
    const auto& g = table_grid_;
    const int d = g.dim();
    const int nout = static_cast<int>(table_values_[0].size());
    std::vector<std::vector<double>> J(nout, std::vector<double>(d, 0.0));
    // central differences with a step snapped inside the box; the interpolant
    // is piecewise multilinear so this is exact away from cell facets
    for (int i = 0; i < d; ++i) {
        if (g.shape[i] == 1) continue;
        const double h = 0.25 * (g.hi[i] - g.lo[i]) / (g.shape[i] - 1);
        std::vector<double> xp(xi.begin(), xi.end()), xm(xi.begin(), xi.end());
        xp[i] = std::min(xp[i] + h, g.hi[i]);
        xm[i] = std::max(xm[i] - h, g.lo[i]);
        auto vp = table_interp(xp), vm = table_interp(xm);
        for (int c = 0; c < nout; ++c) J[c][i] = (vp[c] - vm[c]) / (xp[i] - xm[i]);
    }
    return J;
}

std::vector<double> FreqMap::hat(std::span<const double> xi) const
{
    std::vector<double> out(dim_out(), 0.0);
    if (!hat_.empty())
        for (int c = 0; c < dim_out(); ++c) out[c] = hat_[c].eval(xi);
    if (!table_values_.empty()) {
        auto tv = table_interp(xi);
        for (int c = 0; c < dim_out(); ++c) out[c] += tv[c];
    }
    return out;
}

std::vector<double> FreqMap::eval(std::span<const double> xi) const
{
    auto out = base(xi);
    if (has_perturbation()) {
        auto h = hat(xi);
        for (size_t c = 0; c < out.size(); ++c) out[c] += h[c];
    }
    return out;
}

std::vector<std::vector<double>> FreqMap::base_jacobian(std::span<const double> xi) const
{
    std::vector<std::vector<double>> J(dim_out(), std::vector<double>(dim_in_, 0.0));
    for (int c = 0; c < dim_out(); ++c)
        for (int i = 0; i < dim_in_; ++i) J[c][i] = dcomps_[c][i].eval(xi);
    return J;
}

std::vector<std::vector<double>> FreqMap::jacobian(std::span<const double> xi) const
{
    std::vector<std::vector<double>> J = base_jacobian(xi);
    if (!hat_.empty())
        for (int c = 0; c < dim_out(); ++c)
            for (int i = 0; i < dim_in_; ++i) J[c][i] += dhat_[c][i].eval(xi);
    if (!table_values_.empty()) {
        auto T = table_gradient(xi);
        for (int c = 0; c < dim_out(); ++c)
            for (int i = 0; i < dim_in_; ++i) J[c][i] += T[c][i];
    }
    return J;
}

double FreqMap::perturbation_sup(std::span<const double> lo, std::span<const double> hi,
                                 int per_axis) const
{
    if (!has_perturbation()) return 0.0;
    const int d = dim_in_;
    std::vector<int> idx(d, 0);
    size_t total = 1;
    for (int i = 0; i < d; ++i) total *= per_axis;
    double sup = 0;
    for (size_t t = 0; t < total; ++t) {
        std::vector<double> p(d);
        for (int i = 0; i < d; ++i)
            p[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / double(per_axis - 1);
        sup = std::max(sup, norm_inf(hat(p)));
        for (int i = d; i-- > 0;) {
            if (++idx[i] < per_axis) break;
            idx[i] = 0;
        }
    }
    return sup;
}

// -- rank tests -----------------------------------------------------------------

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& m)
{
    Eigen::MatrixXd M(m.size(), m.empty() ? 0 : m[0].size());
    for (size_t i = 0; i < m.size(); ++i)
        for (size_t j = 0; j < m[i].size(); ++j) M(i, j) = m[i][j];
    return M;
}

int rank_of(const Eigen::MatrixXd& M, double rel_threshold, double* sigma_min = nullptr,
            double* threshold_out = nullptr)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    const double thr = sv.size() ? rel_threshold * sv(0) : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > thr) ++rank;
    if (sigma_min) *sigma_min = sv.size() ? sv(sv.size() - 1) : 0.0;
    if (threshold_out) *threshold_out = thr;
    return rank;
}

} // namespace

RankReport rank_tests(const FreqMap& omega, std::span<const double> xi)
{
    RankReport rep;
    Eigen::MatrixXd J = to_eigen(omega.jacobian(xi)); // dim_out x dim_in
    rep.rank_jacobian = rank_of(J, 1e-8, &rep.sigma_min_jacobian, &rep.threshold);
    // (d_xi omega^T, omega^T): columns are the partials plus omega itself
    auto w = omega.eval(xi);
    Eigen::MatrixXd A(J.rows(), J.cols() + 1);
    A.leftCols(J.cols()) = J;
    for (int c = 0; c < J.rows(); ++c) A(c, J.cols()) = w[c];
    rep.rank_augmented = rank_of(A, 1e-8);
    return rep;
}

// -- degree machinery -----------------------------------------------------------

namespace {

struct MapFn {
    std::function<std::vector<double>(std::span<const double>)> eval;
    std::function<Eigen::MatrixXd(std::span<const double>)> jac;
    int dim = 0;
};

MapFn as_mapfn(const FreqMap& m)
{
    if (m.dim_in() != m.dim_out())
        throw std::invalid_argument("degree: map must be square");
    MapFn f;
    f.dim = m.dim_in();
    f.eval = [&m](std::span<const double> x) { return m.eval(x); };
    f.jac = [&m](std::span<const double> x) { return to_eigen(m.jacobian(x)); };
    return f;
}

bool newton_polish(const MapFn& f, std::span<const double> target,
                   std::vector<double>& x, double tol, int max_iter = 40)
{
    const int d = f.dim;
    for (int it = 0; it < max_iter; ++it) {
        auto val = f.eval(x);
        Eigen::VectorXd res(d);
        for (int i = 0; i < d; ++i) res(i) = val[i] - target[i];
        if (res.lpNorm<Eigen::Infinity>() <= tol) return true;
        Eigen::MatrixXd J = f.jac(x);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) return false;
        Eigen::VectorXd step = lu.solve(res);
        double damp = 1.0;
        for (int ls = 0; ls < 8; ++ls) {
            std::vector<double> cand(x);
            for (int i = 0; i < d; ++i) cand[i] -= damp * step(i);
            auto v2 = f.eval(cand);
            double r2 = 0;
            for (int i = 0; i < d; ++i) r2 = std::max(r2, std::abs(v2[i] - target[i]));
            if (r2 < res.lpNorm<Eigen::Infinity>()) {
                x = std::move(cand);
                break;
            }
            damp *= 0.5;
            if (ls == 7) return false;
        }
    }
    auto val = f.eval(x);
    double r = 0;
    for (int i = 0; i < f.dim; ++i) r = std::max(r, std::abs(val[i] - target[i]));
    return r <= tol;
}

double boundary_margin_of(const MapFn& f, std::span<const double> lo,
                          std::span<const double> hi, std::span<const double> target,
                          int probe)
{
    const int d = f.dim;
    double margin = std::numeric_limits<double>::infinity();
    std::vector<double> p(d);
    auto visit = [&](std::span<const double> pt) {
        auto v = f.eval(pt);
        double dist2 = 0;
        for (int i = 0; i < d; ++i) dist2 += (v[i] - target[i]) * (v[i] - target[i]);
        margin = std::min(margin, std::sqrt(dist2));
    };
    if (d == 1) {
        p[0] = lo[0];
        visit(p);
        p[0] = hi[0];
        visit(p);
        return margin;
    }
    for (int face_axis = 0; face_axis < d; ++face_axis) {
        for (int side = 0; side < 2; ++side) {
            std::vector<int> idx(d, 0);
            size_t total = 1;
            for (int i = 0; i < d; ++i)
                if (i != face_axis) total *= probe;
            for (size_t t = 0; t < total; ++t) {
                for (int i = 0; i < d; ++i) {
                    if (i == face_axis) {
                        p[i] = side ? hi[i] : lo[i];
                    } else {
                        p[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / double(probe - 1);
                    }
                }
                visit(p);
                for (int i = d; i-- > 0;) {
                    if (i == face_axis) continue;
                    if (++idx[i] < probe) break;
                    idx[i] = 0;
                }
            }
        }
    }
    return margin;
}

struct CountResult {
    int degree = 0;
    std::vector<std::vector<double>> roots;
};

CountResult count_preimages(const MapFn& f, std::span<const double> lo,
                            std::span<const double> hi, std::span<const double> target,
                            int cells_per_axis, const DegreeOptions& opt)
{
    const int d = f.dim;
    double box_scale = 0;
    for (int i = 0; i < d; ++i) box_scale = std::max(box_scale, hi[i] - lo[i]);
    double target_scale = 1.0;
    for (int i = 0; i < d; ++i) target_scale = std::max(target_scale, std::abs(target[i]));

    CountResult out;
    std::vector<int> idx(d, 0);
    size_t total = 1;
    for (int i = 0; i < d; ++i) total *= cells_per_axis;
    for (size_t t = 0; t < total; ++t) {
        std::vector<double> x(d);
        for (int i = 0; i < d; ++i)
            x[i] = lo[i] + (hi[i] - lo[i]) * (idx[i] + 0.5) / cells_per_axis;
        if (newton_polish(f, target, x, opt.newton_tol * target_scale)) {
            bool inside = true;
            for (int i = 0; i < d; ++i)
                if (x[i] < lo[i] || x[i] > hi[i]) inside = false;
            if (inside) {
                bool dup = false;
                for (const auto& r : out.roots) {
                    double dist = 0;
                    for (int i = 0; i < d; ++i) dist = std::max(dist, std::abs(r[i] - x[i]));
                    if (dist < opt.dedupe_tol * box_scale) dup = true;
                }
                if (!dup) out.roots.push_back(x);
            }
        }
        for (int i = d; i-- > 0;) {
            if (++idx[i] < cells_per_axis) break;
            idx[i] = 0;
        }
    }
    for (const auto& r : out.roots) {
        const double det = f.jac(r).determinant();
        out.degree += det > 0 ? 1 : det < 0 ? -1 : 0;
    }
    return out;
}

DegreeResult degree_of_mapfn(const MapFn& f, std::span<const double> lo,
                             std::span<const double> hi, std::span<const double> target,
                             const DegreeOptions& opt)
{
    DegreeResult res;
    res.boundary_margin = boundary_margin_of(f, lo, hi, target, opt.boundary_probe);
    if (!(res.boundary_margin > 1e-12)) {
        std::ostringstream msg;
        msg << "brouwer_degree: target lies on (or numerically at) the image of the "
               "box boundary, margin = " << res.boundary_margin
            << "; the degree is undefined";
        throw HypothesisError(msg.str());
    }
    CountResult prev = count_preimages(f, lo, hi, target, opt.base_cells, opt);
    for (int ref = 1; ref <= opt.max_refinement; ++ref) {
        CountResult cur = count_preimages(f, lo, hi, target, opt.base_cells << ref, opt);
        if (cur.degree == prev.degree && cur.roots.size() == prev.roots.size()) {
            res.degree = cur.degree;
            res.refinement = ref;
            res.stable = true;
            res.preimages = cur.roots;
            return res;
        }
        prev = std::move(cur);
    }
    res.degree = prev.degree;
    res.refinement = opt.max_refinement;
    res.stable = false;
    res.preimages = prev.roots;
    return res;
}

} // namespace

DegreeResult brouwer_degree(const FreqMap& omega, std::span<const double> lo,
                            std::span<const double> hi, std::span<const double> target,
                            const DegreeOptions& opt)
{
    return degree_of_mapfn(as_mapfn(omega), lo, hi, target, opt);
}

DilationSolution solve_dilation(const FreqMap& omega_star, std::span<const double> lo,
                                std::span<const double> hi, std::span<const double> omega0,
                                const Expr* lambda_fn, const DegreeOptions& opt)
{
    const int d = omega_star.dim_in();
    // corrected map G(xi) = omega_*(xi) - lambda(xi) omega0, solved at omega0
    MapFn base = as_mapfn(omega_star);
    MapFn g;
    g.dim = d;
    std::vector<double> w0(omega0.begin(), omega0.end());
    g.eval = [base, lambda_fn, w0](std::span<const double> x) {
        auto v = base.eval(x);
        if (lambda_fn) {
            const double lam = lambda_fn->eval(x);
            for (size_t i = 0; i < v.size(); ++i) v[i] -= lam * w0[i];
        }
        return v;
    };
    g.jac = [base, lambda_fn, w0, d](std::span<const double> x) {
        Eigen::MatrixXd J = base.jac(x);
        if (lambda_fn) {
            for (int i = 0; i < d; ++i) {
                const double dl = lambda_fn->derivative(i).eval(x);
                for (size_t c = 0; c < w0.size(); ++c) J(c, i) -= dl * w0[c];
            }
        }
        return J;
    };

    DilationSolution sol;
    sol.degree = degree_of_mapfn(g, lo, hi, omega0, opt);
    if (sol.degree.degree == 0 || !sol.degree.stable) {
        std::ostringstream msg;
        msg << "solve_dilation: Brouwer degree of the corrected map is "
            << sol.degree.degree << (sol.degree.stable ? "" : " (unstable)")
            << "; no solution is guaranteed";
        throw HypothesisError(msg.str());
    }
    sol.xi_star = sol.degree.preimages.front();
    // polish to the solver tolerance and evaluate the dilation
    newton_polish(g, omega0, sol.xi_star, 1e-13 * std::max(1.0, norm_inf(omega0)));
    sol.lambda = lambda_fn ? lambda_fn->eval(sol.xi_star) : 0.0;
    auto v = omega_star.eval(sol.xi_star);
    double res = 0;
    for (int i = 0; i < d; ++i)
        res = std::max(res, std::abs(v[i] - (1.0 + sol.lambda) * omega0[i]));
    sol.residual = res;
    return sol;
}

// -- Bruno families ---------------------------------------------------------------

BrunoFamily bruno_family(const FreqMap& omega, std::span<const double> lo,
                         std::span<const double> hi, std::span<const double> xi0,
                         double delta0, int steps)
{
    const int n = omega.dim_out();
    if (omega.dim_in() != n)
        throw std::invalid_argument("bruno_family: map must be square");
    RankReport rk = rank_tests(omega, xi0);
    if (rk.rank_jacobian != n - 1 || rk.rank_augmented != n) {
        std::ostringstream msg;
        msg << "bruno_family: rank test fails: rank(d omega) = " << rk.rank_jacobian
            << " (need " << n - 1 << "), rank(d omega^T, omega^T) = " << rk.rank_augmented
            << " (need " << n << ")";
        throw HypothesisError(msg.str());
    }

    const auto w0 = omega.base(xi0);
    // pivot selection: drop xi_i, define lambda from omega_j, maximize the
    // conditioning of the reduced ratio Jacobian
    int best_i = -1, best_j = -1;
    double best_sigma = -1;
    Eigen::MatrixXd J0 = to_eigen(omega.jacobian(xi0));
    for (int j = 0; j < n; ++j) {
        if (std::abs(w0[j]) < 1e-8) continue;
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXd R(n - 1, n - 1);
            int rr = 0;
            for (int c = 0; c < n; ++c) {
                if (c == j) continue;
                int cc = 0;
                for (int v = 0; v < n; ++v) {
                    if (v == i) continue;
                    // d/dxi_v (omega_c / omega_j)
                    R(rr, cc) = (J0(c, v) * w0[j] - w0[c] * J0(j, v)) / (w0[j] * w0[j]);
                    ++cc;
                }
                ++rr;
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
            const double smin = svd.singularValues().size()
                                    ? svd.singularValues()(svd.singularValues().size() - 1)
                                    : 0.0;
            if (smin > best_sigma) {
                best_sigma = smin;
                best_i = i;
                best_j = j;
            }
        }
    }
    if (best_sigma <= 1e-10)
        throw HypothesisError("bruno_family: reduced ratio Jacobian is singular for "
                              "every pivot choice");

    BrunoFamily fam;
    fam.pivot_xi = best_i;
    fam.pivot_omega = best_j;
    fam.sigma = omega.perturbation_sup(lo, hi);

    // reduced system in the remaining coordinates, solved per eta
    const int i_piv = best_i, j_piv = best_j;
    auto reduced = [&](double eta) {
        MapFn f;
        f.dim = n - 1;
        const double xi_fixed = xi0[i_piv] + eta;
        auto assemble = [=](std::span<const double> y) {
            std::vector<double> x(n);
            int yy = 0;
            for (int v = 0; v < n; ++v) x[v] = v == i_piv ? xi_fixed : y[yy++];
            return x;
        };
        f.eval = [&omega, assemble, j_piv, n](std::span<const double> y) {
            auto x = assemble(y);
            auto w = omega.eval(x);
            std::vector<double> out;
            for (int c = 0; c < n; ++c)
                if (c != j_piv) out.push_back(w[c] / w[j_piv]);
            return out;
        };
        f.jac = [&omega, assemble, j_piv, i_piv, n](std::span<const double> y) {
            auto x = assemble(y);
            auto w = omega.eval(x);
            Eigen::MatrixXd J = to_eigen(omega.jacobian(x));
            Eigen::MatrixXd R(n - 1, n - 1);
            int rr = 0;
            for (int c = 0; c < n; ++c) {
                if (c == j_piv) continue;
                int cc = 0;
                for (int v = 0; v < n; ++v) {
                    if (v == i_piv) continue;
                    R(rr, cc) = (J(c, v) * w[j_piv] - w[c] * J(j_piv, v)) / (w[j_piv] * w[j_piv]);
                    ++cc;
                }
                ++rr;
            }
            return R;
        };
        return f;
    };

    std::vector<double> target;
    for (int c = 0; c < n; ++c)
        if (c != j_piv) target.push_back(w0[c] / w0[j_piv]);

    std::vector<double> y0;
    for (int v = 0; v < n; ++v)
        if (v != i_piv) y0.push_back(xi0[v]);

    for (int k = 0; k < steps; ++k) {
        const double eta = steps == 1 ? 0.0 : -delta0 + 2.0 * delta0 * k / (steps - 1);
        MapFn f = reduced(eta);
        std::vector<double> y = y0; // warm start from the center solution
        if (!newton_polish(f, target, y, 1e-12)) {
            if (std::abs(eta) < 1e-14)
                throw HypothesisError("bruno_family: reduced solve fails at eta = 0");
            continue; // family truncated where continuation fails
        }
        std::vector<double> x(n);
        int yy = 0;
        for (int v = 0; v < n; ++v) x[v] = v == i_piv ? xi0[i_piv] + eta : y[yy++];
        bool inside = true;
        for (int v = 0; v < n; ++v)
            if (x[v] < lo[v] || x[v] > hi[v]) inside = false;
        if (!inside) continue;
        auto w = omega.eval(x);
        const double lambda = w[j_piv] / w0[j_piv] - 1.0;
        double res = 0;
        for (int c = 0; c < n; ++c)
            res = std::max(res, std::abs(w[c] - (1.0 + lambda) * w0[c]));
        fam.etas.push_back(eta);
        fam.xi_stars.push_back(std::move(x));
        fam.lambdas.push_back(lambda);
        fam.residuals.push_back(res);
    }
    if (fam.etas.empty())
        throw HypothesisError("bruno_family: no point of the family could be solved");
    for (size_t k = 0; k < fam.etas.size(); ++k)
        fam.fit_C = std::max(fam.fit_C, std::abs(fam.lambdas[k]) /
                                            (std::abs(fam.etas[k]) + fam.sigma + 1e-300));
    return fam;
}

// -- resonance measures -----------------------------------------------------------

namespace {

double merge_measure(std::vector<Interval>& ivs)
{
    std::sort(ivs.begin(), ivs.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const auto& iv : ivs) {
        if (!merged.empty() && iv.lo <= merged.back().hi)
            merged.back().hi = std::max(merged.back().hi, iv.hi);
        else
            merged.push_back(iv);
    }
    ivs = std::move(merged);
    double m = 0;
    for (const auto& iv : ivs) m += iv.length();
    return m;
}

std::vector<Interval> complement_in(const std::vector<Interval>& bad, double lo, double hi)
{
    std::vector<Interval> good;
    double cursor = lo;
    for (const auto& iv : bad) {
        if (iv.lo > cursor) good.push_back({cursor, iv.lo});
        cursor = std::max(cursor, iv.hi);
    }
    if (cursor < hi) good.push_back({cursor, hi});
    return good;
}

double fit_exponent(const std::vector<double>& xs, const std::vector<double>& ys)
{
    std::vector<double> lx, ly;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (ys[i] > 0) {
            lx.push_back(std::log(xs[i]));
            ly.push_back(std::log(ys[i]));
        }
    }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0, my = 0;
    for (size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= lx.size();
    my /= lx.size();
    double num = 0, den = 0;
    for (size_t i = 0; i < lx.size(); ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

std::vector<Interval> bad_set_2d(std::span<const double> w, double alpha, double tau,
                                 double lambda0, long long K)
{
    std::vector<Interval> bad;
    for (long long k1 = -K; k1 <= K; ++k1) {
        const long long rest = K - std::llabs(k1);
        for (long long k2 = -rest; k2 <= rest; ++k2) {
            if (k1 == 0 && k2 == 0) continue;
            if (k1 < 0 || (k1 == 0 && k2 < 0)) continue; // +-k give equal |f|
            const double nk = double(std::llabs(k1) + std::llabs(k2));
            const double thr = alpha / (2.0 * std::pow(nk, 2 * tau + 2));
            const double c = k1 * w[0] + k2 * w[1];
            if (k1 == 0) {
                if (std::abs(c) < thr) bad.push_back({0.0, lambda0});
                continue;
            }
            double a = (-thr - c) / double(k1);
            double b = (thr - c) / double(k1);
            if (a > b) std::swap(a, b);
            a = std::max(a, 0.0);
            b = std::min(b, lambda0);
            if (a < b) bad.push_back({a, b});
        }
    }
    merge_measure(bad);
    return bad;
}

} // namespace

MeasureReport resonance_measure_2d(std::span<const double> omega0, double alpha,
                                   double tau, double lambda0, long long K)
{
    if (omega0.size() != 2)
        throw std::invalid_argument("resonance_measure_2d: omega0 must be 2-dimensional");
    if (!(lambda0 > 0)) throw std::invalid_argument("resonance_measure_2d: lambda0 > 0");
    if (lambda0 > 0.5 * std::abs(omega0[0]))
        throw HypothesisError("resonance_measure_2d: need lambda0 <= |omega01| / 2");
    DioReport tj = check_dio(omega0, DivisorParams{alpha, tau, K});
    if (!tj.pass) {
        std::ostringstream msg;
        msg << "resonance_measure_2d: omega0 violates the Diophantine hypothesis at k = (";
        msg << tj.worst_k[0] << "," << tj.worst_k[1] << "), margin " << tj.margin;
        throw HypothesisError(msg.str());
    }

    MeasureReport rep;
    rep.lambda0 = lambda0;
    rep.K = K;
    rep.bad_intervals = bad_set_2d(omega0, alpha, tau, lambda0, K);
    for (const auto& iv : rep.bad_intervals) rep.bad_measure += iv.length();
    for (double l0 : {lambda0, lambda0 / 2, lambda0 / 4}) {
        auto ivs = bad_set_2d(omega0, alpha, tau, l0, K);
        double m = 0;
        for (const auto& iv : ivs) m += iv.length();
        rep.lambda0_sequence.push_back(l0);
        rep.measures.push_back(m);
    }
    rep.fitted_exponent = fit_exponent(rep.lambda0_sequence, rep.measures);
    return rep;
}

MeasureReport dio_window_1d(std::span<const double> omega0, double nu0, double mu0,
                            const std::function<double(double)>& muhat, double alpha,
                            double tau, double sigma, long long K)
{
    if (std::abs(mu0) < 1e-15)
        throw HypothesisError("dio_window_1d: mu0 = 0, transversality in lambda is lost");
    if (!(sigma > 0)) throw std::invalid_argument("dio_window_1d: sigma > 0 required");

    // margin test for the unperturbed pair over the full k range
    {
        const int d = static_cast<int>(omega0.size());
        std::vector<int> k(d, 0);
        double worst = std::numeric_limits<double>::infinity();
        std::vector<int> worst_k;
        std::vector<double> powc(static_cast<size_t>(K) + 1);
        for (long long m = 1; m <= K; ++m) powc[m] = std::pow(double(m), tau);
        auto rec = [&](auto&& self, int axis, long long budget, double t) -> void {
            if (axis == d) {
                const int nk = norm1(k);
                if (nk == 0) return;
                const double margin = std::abs(t + nu0) * powc[nk] / alpha;
                if (margin < worst) {
                    worst = margin;
                    worst_k = k;
                }
                return;
            }
            for (long long v = -budget; v <= budget; ++v) {
                k[axis] = static_cast<int>(v);
                self(self, axis + 1, budget - std::llabs(v), t + v * omega0[axis]);
            }
            k[axis] = 0;
        };
        rec(rec, 0, K, 0.0);
        if (worst < 1.0) {
            std::ostringstream msg;
            msg << "dio_window_1d: (omega0, nu0) fails the margin test at k = (";
            for (size_t i = 0; i < worst_k.size(); ++i)
                msg << (i ? "," : "") << worst_k[i];
            msg << "), margin " << worst;
            throw HypothesisError(msg.str());
        }
    }

    // g(lambda) = (1+lambda)^{-1} (lambda mu0 - muhat(lambda)); f_k = A_k - g
    auto g = [&](double lam) {
        return (lam * mu0 - muhat(lam)) / (1.0 + lam);
    };
    const int probe = 512;
    double gmin = std::numeric_limits<double>::infinity(), gmax = -gmin;
    double prev = g(-sigma);
    bool increasing = true, decreasing = true;
    for (int i = 0; i <= probe; ++i) {
        const double lam = -sigma + 2 * sigma * i / probe;
        const double gv = g(lam);
        gmin = std::min(gmin, gv);
        gmax = std::max(gmax, gv);
        if (i > 0) {
            if (gv < prev) increasing = false;
            if (gv > prev) decreasing = false;
            prev = gv;
        }
    }
    if (!increasing && !decreasing)
        throw HypothesisError("dio_window_1d: the dilation response is not monotone over "
                              "the window; sigma exceeds the transversality range");

    auto invert = [&](double value) {
        // g is monotone; bisect g(lambda) = value on [-sigma, sigma]
        double a = -sigma, b = sigma;
        double ga = g(a) - value, gb = g(b) - value;
        if (ga == 0) return a;
        if (gb == 0) return b;
        if (ga * gb > 0) return ((ga < 0) == increasing) ? b : a; // value outside range
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (a + b);
            const double gm = g(mid) - value;
            if (gm == 0) return mid;
            if ((gm < 0) == (ga < 0)) {
                a = mid;
                ga = gm;
            } else {
                b = mid;
            }
        }
        return 0.5 * (a + b);
    };

    MeasureReport rep;
    rep.lambda0 = sigma;
    rep.K = K;
    auto bad_for = [&](double sig) {
        std::vector<Interval> bad;
        const int d = static_cast<int>(omega0.size());
        std::vector<int> k(d, 0);
        auto rec = [&](auto&& self, int axis, long long budget, double t) -> void {
            if (axis == d) {
                const int nk = norm1(k);
                if (nk == 0) return;
                const double thr = alpha / (2.0 * std::pow(double(nk), 2 * tau + 1));
                const double A = t + nu0;
                if (A - thr > gmax || A + thr < gmin) return;
                double x1 = invert(A - thr);
                double x2 = invert(A + thr);
                if (x1 > x2) std::swap(x1, x2);
                x1 = std::max(x1, -sig);
                x2 = std::min(x2, sig);
                if (x1 < x2) bad.push_back({x1, x2});
                return;
            }
            for (long long v = -budget; v <= budget; ++v) {
                k[axis] = static_cast<int>(v);
                self(self, axis + 1, budget - std::llabs(v), t + v * omega0[axis]);
            }
            k[axis] = 0;
        };
        rec(rec, 0, K, 0.0);
        merge_measure(bad);
        return bad;
    };

    rep.bad_intervals = bad_for(sigma);
    for (const auto& iv : rep.bad_intervals) rep.bad_measure += iv.length();
    rep.admissible = complement_in(rep.bad_intervals, -sigma, sigma);
    for (double sv : {sigma, sigma / 2, sigma / 4}) {
        auto ivs = bad_for(sv);
        double m = 0;
        for (const auto& iv : ivs) m += iv.length();
        rep.lambda0_sequence.push_back(sv);
        rep.measures.push_back(m);
    }
    rep.fitted_exponent = fit_exponent(rep.lambda0_sequence, rep.measures);
    return rep;
}

// -- elliptic dilation --------------------------------------------------------------

namespace {

std::vector<double> row_times_matrix(std::span<const double> v,
                                     const std::vector<std::vector<double>>& M)
{
    const size_t nbar = M.empty() ? 0 : M[0].size();
    std::vector<double> out(nbar, 0.0);
    for (size_t i = 0; i < M.size(); ++i)
        for (size_t j = 0; j < nbar; ++j) out[j] += v[i] * M[i][j];
    return out;
}

std::vector<Interval> intersect(const std::vector<Interval>& a, const std::vector<Interval>& b)
{
    std::vector<Interval> out;
    for (const auto& x : a) {
        for (const auto& y : b) {
            const double lo = std::max(x.lo, y.lo);
            const double hi = std::min(x.hi, y.hi);
            if (lo < hi) out.push_back({lo, hi});
        }
    }
    return out;
}

} // namespace

EllipticDilation elliptic_dilation(std::span<const double> omega0,
                                   std::span<const double> beta,
                                   const std::vector<std::vector<double>>& M,
                                   const FreqMap& omega_hat, const FreqMap& Omega_hat,
                                   std::span<const double> lo, std::span<const double> hi,
                                   double alpha, double tau, double sigma, long long K)
{
    const int n = static_cast<int>(omega0.size());
    const int nbar = static_cast<int>(beta.size());
    if (static_cast<int>(M.size()) != n)
        throw std::invalid_argument("elliptic_dilation: M must have n rows");

    const auto ls = elliptic_l_set(nbar);
    for (const auto& l : ls) {
        double lb = 0;
        for (int i = 0; i < nbar; ++i) lb += l[i] * beta[i];
        if (std::abs(lb) < 1e-12) {
            std::ostringstream msg;
            msg << "elliptic_dilation: <l, beta> = 0 at l = (";
            for (int i = 0; i < nbar; ++i) msg << (i ? "," : "") << l[i];
            msg << "); the hypothesis fails";
            throw HypothesisError(msg.str());
        }
    }

    auto Omega_of = [&](std::span<const double> w) {
        auto out = row_times_matrix(w, M);
        for (int j = 0; j < nbar; ++j) out[j] += beta[j];
        return out;
    };
    const auto Omega0 = Omega_of(omega0);

    {
        DioReport base = check_dio_elliptic(omega0, Omega0, DivisorParams{alpha, tau, K});
        DioReport basek = check_dio(omega0, DivisorParams{alpha, tau, K});
        if (!base.pass || !basek.pass)
            throw HypothesisError("elliptic_dilation: (omega0, Omega(omega0)) is not in the "
                                  "Diophantine set at level (alpha, tau)");
    }

    // inverse of omega_* = omega + omega_hat at (1+lambda) omega0
    auto varpi_of = [&](double lam) {
        std::vector<double> target(n);
        for (int i = 0; i < n; ++i) target[i] = (1.0 + lam) * omega0[i];
        MapFn f;
        f.dim = n;
        f.eval = [&](std::span<const double> w) {
            auto v = omega_hat.eval(w);
            for (int i = 0; i < n; ++i) v[i] += w[i];
            return v;
        };
        f.jac = [&](std::span<const double> w) {
            Eigen::MatrixXd J = to_eigen(omega_hat.jacobian(w));
            for (int i = 0; i < n; ++i) J(i, i) += 1.0;
            return J;
        };
        std::vector<double> w = target;
        if (!newton_polish(f, target, w, 1e-13 * std::max(1.0, norm_inf(target))))
            throw HypothesisError("elliptic_dilation: Newton inversion of omega_* diverged");
        return w;
    };

    EllipticDilation out;
    std::vector<Interval> good = {{-sigma, sigma}};
    for (const auto& l : ls) {
        double nu0 = 0, mu0 = 0;
        for (int j = 0; j < nbar; ++j) {
            nu0 += l[j] * Omega0[j];
            mu0 += l[j] * beta[j];
        }
        auto muhat = [&, l](double lam) {
            auto w = varpi_of(lam);
            auto oh = omega_hat.eval(w);
            auto Oh = Omega_hat.eval(w);
            auto tilde = row_times_matrix(oh, M); // -omega_hat . M + Omega_hat
            double v = 0;
            for (int j = 0; j < nbar; ++j) v += l[j] * (Oh[j] - tilde[j]);
            return v;
        };
        MeasureReport win = dio_window_1d(omega0, nu0, mu0, muhat, alpha, tau, sigma, K);
        good = intersect(good, win.admissible);
    }
    out.admissible = good;
    for (const auto& iv : good) out.admissible_measure += iv.length();
    if (good.empty())
        throw HypothesisError("elliptic_dilation: the admissible window is empty at "
                              "sigma = " + std::to_string(sigma));

    const Interval* widest = &good.front();
    for (const auto& iv : good)
        if (iv.length() > widest->length()) widest = &iv;
    out.lambda = 0.5 * (widest->lo + widest->hi);
    out.varpi = varpi_of(out.lambda);

    auto wstar = omega_hat.eval(out.varpi);
    for (int i = 0; i < n; ++i) wstar[i] += out.varpi[i];
    for (int i = 0; i < n; ++i)
        out.residual = std::max(out.residual,
                                std::abs(wstar[i] - (1.0 + out.lambda) * omega0[i]));

    auto Ost = Omega_of(out.varpi);
    auto Oh = Omega_hat.eval(out.varpi);
    for (int j = 0; j < nbar; ++j) Ost[j] += Oh[j];
    const DivisorParams dp_conc{alpha / 4, 2 * tau + 1, K};
    out.membership = check_dio_elliptic(wstar, Ost, dp_conc);
    out.membership_k = check_dio(wstar, dp_conc);
    return out;
}

RatioDegreeResult ratio_degree(const FreqMap& omega, const FreqMap& Omega,
                               std::span<const double> lo, std::span<const double> hi,
                               std::span<const double> xi0, const DegreeOptions& opt)
{
    const int d = omega.dim_in();
    if (Omega.dim_out() != 1 || Omega.dim_in() != d)
        throw std::invalid_argument("ratio_degree: Omega must be a scalar map on the box");

    // |Omega| >= c > 0 on a probe lattice
    {
        std::vector<int> idx(d, 0);
        const int probe = 33;
        size_t total = 1;
        for (int i = 0; i < d; ++i) total *= probe;
        double cmin = std::numeric_limits<double>::infinity();
        for (size_t t = 0; t < total; ++t) {
            std::vector<double> p(d);
            for (int i = 0; i < d; ++i)
                p[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / double(probe - 1);
            cmin = std::min(cmin, std::abs(Omega.eval(p)[0]));
            for (int i = d; i-- > 0;) {
                if (++idx[i] < probe) break;
                idx[i] = 0;
            }
        }
        if (cmin < 1e-8)
            throw HypothesisError("ratio_degree: Omega vanishes on the box (min |Omega| = " +
                                  std::to_string(cmin) + ")");
    }

    auto ratio_mapfn = [&](bool perturbed) {
        MapFn f;
        f.dim = d;
        f.eval = [&omega, &Omega, perturbed](std::span<const double> x) {
            auto w = perturbed ? omega.eval(x) : omega.base(x);
            const double O = perturbed ? Omega.eval(x)[0] : Omega.base(x)[0];
            for (double& v : w) v /= O;
            return w;
        };
        f.jac = [&omega, &Omega, perturbed, d](std::span<const double> x) {
            auto w = perturbed ? omega.eval(x) : omega.base(x);
            const double O = perturbed ? Omega.eval(x)[0] : Omega.base(x)[0];
            Eigen::MatrixXd Jw = to_eigen(perturbed ? omega.jacobian(x)
                                                    : omega.base_jacobian(x));
            Eigen::MatrixXd JO = to_eigen(perturbed ? Omega.jacobian(x)
                                                    : Omega.base_jacobian(x));
            Eigen::MatrixXd R(w.size(), d);
            for (size_t c = 0; c < w.size(); ++c)
                for (int v = 0; v < d; ++v)
                    R(c, v) = (Jw(c, v) * O - w[c] * JO(0, v)) / (O * O);
            return R;
        };
        return f;
    };

    RatioDegreeResult res;
    const auto w0 = omega.base(xi0);
    const double O0 = Omega.base(xi0)[0];
    std::vector<double> target(w0.size());
    for (size_t c = 0; c < w0.size(); ++c) target[c] = w0[c] / O0;

    res.degree = degree_of_mapfn(ratio_mapfn(false), lo, hi, target, opt);

    // companion: solve the perturbed ratio at the unperturbed target
    MapFn pert = ratio_mapfn(true);
    std::vector<double> x(xi0.begin(), xi0.end());
    if (!newton_polish(pert, target, x, 1e-12))
        throw HypothesisError("ratio_degree: companion solve diverged");
    res.xi_star = x;
    const double Obase = Omega.base(x)[0];
    const double Ohat = Omega.eval(x)[0] - Obase;
    res.lambda = Ohat / Obase;
    auto wst = omega.eval(x);
    const double Ost = Omega.eval(x)[0];
    const double scale = Omega.base(x)[0] * (1.0 + res.lambda) / O0;
    for (size_t c = 0; c < wst.size(); ++c)
        res.residual = std::max(res.residual, std::abs(wst[c] - scale * w0[c]));
    res.residual = std::max(res.residual, std::abs(Ost - scale * O0));
    return res;
}

} // namespace kamnorm
