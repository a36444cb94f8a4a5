#include "kamnorm/divisors.hpp"

#include <cmath>

namespace kamnorm {

static double bump(double u)
{
    return u > 0 ? std::exp(-1.0 / u) : 0.0;
}

static double bump_derivative(double u)
{
    return u > 0 ? std::exp(-1.0 / u) / (u * u) : 0.0;
}

double CutoffFn::value(double t)
{
    const double u = 2.0 * std::abs(t) - 1.0;
    if (u <= 0) return 0.0;
    if (u >= 1) return 1.0;
    const double fu = bump(u), fc = bump(1.0 - u);
    return fu / (fu + fc);
}

double CutoffFn::derivative(double t)
{
    const double u = 2.0 * std::abs(t) - 1.0;
    if (u <= 0 || u >= 1) return 0.0;
    const double fu = bump(u), fc = bump(1.0 - u);
    const double du = bump_derivative(u), dc = bump_derivative(1.0 - u);
    const double dpsi = (du * fc + fu * dc) / ((fu + fc) * (fu + fc));
    return (t >= 0 ? 2.0 : -2.0) * dpsi;
}

double phi_h(double t, double h)
{
    if (!(h > 0)) throw std::domain_error("phi_h: h must be positive");
    return CutoffFn::value(t / h);
}

double phi_h_derivative(double t, double h)
{
    if (!(h > 0)) throw std::domain_error("phi_h: h must be positive");
    return CutoffFn::derivative(t / h) / h;
}

void DivisorParams::validate() const
{
    if (!(alpha > 0) || alpha > 1)
        throw std::invalid_argument("DivisorParams: alpha must lie in (0,1]");
    if (!(tau > 0)) throw std::invalid_argument("DivisorParams: tau must be positive");
    if (K < 1) throw std::invalid_argument("DivisorParams: K must be >= 1");
}

cplx extended_inverse(std::span<const double> omega, std::span<const int> k,
                      const DivisorParams& dp)
{
    if (norm1(k) == 0) throw std::domain_error("extended_inverse: k = 0 has no divisor");
    if (!(dp.alpha > 0) || !(dp.tau > 0))
        throw std::invalid_argument("extended_inverse: bad divisor parameters");
    double t = 0;
    for (size_t i = 0; i < omega.size(); ++i) t += omega[i] * k[i];
    const double h = dp.alpha / std::pow(double(norm1(k)), dp.tau);
    const double phi = phi_h(t, h);
    if (phi == 0.0) return cplx{};
    return phi / (cplx(0.0, 1.0) * t);
}

namespace {

// Enumerates all k with 0 < |k|_1 <= K, visiting each {k,-k} pair once
// (first nonzero component positive), and keeps the minimum margin.
struct MarginScan {
    double alpha;
    double tau;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> worst;
    std::vector<double> pow_cache; // |k|_1^tau

    MarginScan(double a, double t, long long K) : alpha(a), tau(t)
    {
        pow_cache.resize(static_cast<size_t>(K) + 1, 0.0);
        for (long long m = 1; m <= K; ++m)
            pow_cache[static_cast<size_t>(m)] = std::pow(double(m), tau);
    }

    void offer(std::span<const int> k, double t)
    {
        const double margin = std::abs(t) * pow_cache[static_cast<size_t>(norm1(k))] / alpha;
        if (margin < best) {
            best = margin;
            worst.assign(k.begin(), k.end());
        }
    }
};

void scan_rec(std::span<const double> omega, long long budget, size_t axis,
              std::vector<int>& k, double t, bool leading_set, MarginScan& scan)
{
    if (axis == omega.size()) {
        if (leading_set) scan.offer(k, t);
        return;
    }
    const long long lo = leading_set ? -budget : 0; // canonical half-space
    for (long long v = lo; v <= budget; ++v) {
        k[axis] = static_cast<int>(v);
        scan_rec(omega, budget - std::llabs(v), axis + 1, k,
                 t + double(v) * omega[axis], leading_set || v != 0, scan);
    }
    k[axis] = 0;
}

} // namespace

DioReport check_dio(std::span<const double> omega, const DivisorParams& dp)
{
    dp.validate();
    MarginScan scan(dp.alpha, dp.tau, dp.K);
    std::vector<int> k(omega.size(), 0);
    scan_rec(omega, dp.K, 0, k, 0.0, false, scan);
    DioReport rep;
    rep.margin = scan.best;
    rep.worst_k = scan.worst;
    rep.pass = rep.margin >= 1.0;
    return rep;
}

std::vector<std::vector<int>> elliptic_l_set(int nbar)
{
    if (nbar < 1) throw std::invalid_argument("elliptic_l_set: nbar must be >= 1");
    std::vector<std::vector<int>> out;
    std::vector<int> l(nbar, 0);
    // all |l|_1 <= 2 by recursion, keep 1 <= |l|_1
    auto rec = [&](auto&& self, int axis, int budget) -> void {
        if (axis == nbar) {
            if (norm1(l) >= 1) out.push_back(l);
            return;
        }
        for (int v = -budget; v <= budget; ++v) {
            l[axis] = v;
            self(self, axis + 1, budget - std::abs(v));
        }
        l[axis] = 0;
    };
    rec(rec, 0, 2);
    return out;
}

DioReport check_dio_elliptic(std::span<const double> omega,
                             std::span<const double> Omega,
                             const DivisorParams& dp)
{
    dp.validate();
    DioReport rep;
    rep.margin = std::numeric_limits<double>::infinity();

    const auto ls = elliptic_l_set(static_cast<int>(Omega.size()));
    for (const auto& l : ls) {
        double lw = 0;
        for (size_t i = 0; i < Omega.size(); ++i) lw += l[i] * Omega[i];
        const double margin = std::abs(lw) / dp.alpha;
        if (margin < rep.margin) {
            rep.margin = margin;
            rep.worst_k.assign(omega.size(), 0);
            rep.worst_l = l;
        }
    }

    MarginScan scan(dp.alpha, dp.tau, dp.K);
    std::vector<int> k(omega.size(), 0);
    for (const auto& l : ls) {
        double lw = 0;
        for (size_t i = 0; i < Omega.size(); ++i) lw += l[i] * Omega[i];
        // full k half-space against +<l,Omega>; the mirrored pairs (-k, -l)
        // carry the same margin
        scan.best = std::numeric_limits<double>::infinity();
        scan.worst.clear();
        scan_rec(omega, dp.K, 0, k, lw, false, scan);
        // the scan fixes the sign of k; redo against -<l,Omega> to cover
        // (k, -l) combinations
        MarginScan scan2(dp.alpha, dp.tau, dp.K);
        scan_rec(omega, dp.K, 0, k, -lw, false, scan2);
        if (scan2.best < scan.best) {
            scan.best = scan2.best;
            scan.worst = scan2.worst;
            for (int& ki : scan.worst) ki = -ki; // report against +l
        }
        if (scan.best < rep.margin) {
            rep.margin = scan.best;
            rep.worst_k = scan.worst;
            rep.worst_l = l;
        }
    }
    rep.pass = rep.margin >= 1.0;
    return rep;
}

std::vector<uint8_t> build_Pi(const ParamGrid& grid,
                              const std::vector<std::vector<double>>& omega,
                              const DivisorParams& dp)
{
    if (omega.size() != grid.size())
        throw std::invalid_argument("build_Pi: frequency table size mismatch");
    std::vector<uint8_t> flags(grid.size(), 0);
    for (size_t s = 0; s < grid.size(); ++s)
        flags[s] = check_dio(omega[s], dp).pass ? 1 : 0;
    return flags;
}

} // namespace kamnorm
