#include "kamnorm/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace kamnorm {

std::string fmt_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void NormParams::validate() const
{
    if (!(s > 0) || !(r > 0))
        throw std::invalid_argument("NormParams: s and r must be positive");
    if (!(alpha > 0) || alpha > 1)
        throw std::invalid_argument("NormParams: alpha must lie in (0,1]");
}

// -- ParamGrid ----------------------------------------------------------------

void ParamGrid::validate() const
{
    if (samples.empty())
        throw std::invalid_argument("ParamGrid: sample list is empty");
    const size_t d = lo.size();
    if (hi.size() != d)
        throw std::invalid_argument("ParamGrid: box corner dimensions differ");
    for (const auto& p : samples) {
        if (p.size() != d)
            throw std::invalid_argument("ParamGrid: sample dimension mismatch");
        for (size_t i = 0; i < d; ++i)
            if (p[i] < lo[i] - 1e-12 || p[i] > hi[i] + 1e-12)
                throw std::invalid_argument("ParamGrid: sample outside box");
    }
    for (size_t a = 0; a < samples.size(); ++a)
        for (size_t b = a + 1; b < samples.size(); ++b)
            if (samples[a] == samples[b])
                throw std::invalid_argument("ParamGrid: duplicate sample");
}

ParamGrid ParamGrid::regular(std::vector<double> lo, std::vector<double> hi,
                             std::vector<int> shape)
{
    const size_t d = lo.size();
    if (hi.size() != d || shape.size() != d)
        throw std::invalid_argument("ParamGrid::regular: dimension mismatch");
    ParamGrid g;
    g.lo = std::move(lo);
    g.hi = std::move(hi);
    g.shape = shape;
    size_t total = 1;
    for (int m : shape) {
        if (m < 1) throw std::invalid_argument("ParamGrid::regular: shape entries must be >= 1");
        total *= static_cast<size_t>(m);
    }
    std::vector<int> idx(d, 0);
    g.samples.reserve(total);
    for (size_t t = 0; t < total; ++t) {
        std::vector<double> p(d);
        for (size_t i = 0; i < d; ++i) {
            if (shape[i] == 1)
                p[i] = 0.5 * (g.lo[i] + g.hi[i]);
            else
                p[i] = g.lo[i] + (g.hi[i] - g.lo[i]) * idx[i] / double(shape[i] - 1);
        }
        g.samples.push_back(std::move(p));
        for (size_t i = d; i-- > 0;) { // row-major increment, last axis fastest
            if (++idx[i] < shape[i]) break;
            idx[i] = 0;
        }
    }
    g.validate();
    return g;
}

// -- FTSeries basics ----------------------------------------------------------

FTSeries::FTSeries(int n_, size_t n_samples_, SeriesCaps caps_, bool reality_)
    : n(n_), n_samples(n_samples_), caps(caps_), reality(reality_),
      dropped(n_samples_, 0.0)
{
    if (n <= 0) throw std::invalid_argument("FTSeries: phase dimension must be positive");
    if (n_samples == 0) throw std::invalid_argument("FTSeries: need at least one sample");
}

bool FTSeries::same_shape(const FTSeries& o) const
{
    return n == o.n && n_samples == o.n_samples && caps == o.caps;
}

void FTSeries::require_same_shape(const FTSeries& o) const
{
    if (!same_shape(o))
        throw std::invalid_argument("FTSeries: operands differ in dimension, samples or caps");
}

static void check_key(const FTSeries& s, const TermKey& key)
{
    if (static_cast<int>(key.k.size()) != s.n || static_cast<int>(key.l.size()) != s.n)
        throw std::invalid_argument("FTSeries: term index dimension mismatch");
    for (int li : key.l)
        if (li < 0) throw std::invalid_argument("FTSeries: negative Taylor exponent");
    if (norm1(key.k) > s.caps.k_max || norm1(key.l) > s.caps.d_max)
        throw std::invalid_argument("FTSeries: term index beyond caps");
}

static TermKey mirror(const TermKey& key)
{
    TermKey m = key;
    for (int& ki : m.k) ki = -ki;
    return m;
}

void FTSeries::set_coeff(const TermKey& key, const std::vector<cplx>& values)
{
    check_key(*this, key);
    if (values.size() != n_samples)
        throw std::invalid_argument("FTSeries::set_coeff: wrong sample count");
    coeffs[key] = values;
    if (reality) {
        TermKey m = mirror(key);
        if (m != key) {
            std::vector<cplx> conj_vals(values.size());
            for (size_t i = 0; i < values.size(); ++i) conj_vals[i] = std::conj(values[i]);
            coeffs[m] = std::move(conj_vals);
        } else {
            for (cplx v : values)
                if (std::abs(v.imag()) > 1e-14 * (1.0 + std::abs(v.real())))
                    throw std::invalid_argument("FTSeries: self-mirrored mode must be real");
        }
    }
}

void FTSeries::set_coeff_uniform(const TermKey& key, cplx value)
{
    set_coeff(key, std::vector<cplx>(n_samples, value));
}

void FTSeries::add_to_coeff(const TermKey& key, size_t sample, cplx value)
{
    check_key(*this, key);
    auto it = coeffs.find(key);
    if (it == coeffs.end())
        it = coeffs.emplace(key, std::vector<cplx>(n_samples, cplx{})).first;
    it->second[sample] += value;
}

std::vector<cplx> FTSeries::coeff(const TermKey& key) const
{
    auto it = coeffs.find(key);
    if (it == coeffs.end()) return std::vector<cplx>(n_samples, cplx{});
    return it->second;
}

void FTSeries::prune(double drop_tol)
{
    for (auto it = coeffs.begin(); it != coeffs.end();) {
        double amax = 0;
        for (cplx v : it->second) amax = std::max(amax, std::abs(v));
        if (amax == 0.0) {
            it = coeffs.erase(it);
        } else if (amax < drop_tol) {
            for (size_t s = 0; s < n_samples; ++s) dropped[s] += std::abs(it->second[s]);
            it = coeffs.erase(it);
        } else {
            ++it;
        }
    }
}

double FTSeries::reality_defect() const
{
    double worst = 0;
    for (const auto& [key, vals] : coeffs) {
        auto it = coeffs.find(mirror(key));
        for (size_t s = 0; s < n_samples; ++s) {
            cplx other = it == coeffs.end() ? cplx{} : it->second[s];
            worst = std::max(worst, std::abs(vals[s] - std::conj(other)));
        }
    }
    return worst;
}

double FTSeries::dropped_sup() const
{
    double m = 0;
    for (double d : dropped) m = std::max(m, d);
    return m;
}

// -- ring operations ----------------------------------------------------------

FTSeries add(const FTSeries& a, const FTSeries& b)
{
    a.require_same_shape(b);
    FTSeries out(a.n, a.n_samples, a.caps, a.reality && b.reality);
    out.coeffs = a.coeffs;
    for (const auto& [key, vals] : b.coeffs) {
        auto it = out.coeffs.find(key);
        if (it == out.coeffs.end()) {
            out.coeffs[key] = vals;
        } else {
            for (size_t s = 0; s < vals.size(); ++s) it->second[s] += vals[s];
        }
    }
    for (size_t s = 0; s < a.n_samples; ++s) out.dropped[s] = a.dropped[s] + b.dropped[s];
    out.prune();
    return out;
}

FTSeries sub(const FTSeries& a, const FTSeries& b) { return add(a, scale(b, -1.0)); }

FTSeries scale(const FTSeries& a, cplx factor)
{
    const bool real_factor = factor.imag() == 0.0;
    FTSeries out(a.n, a.n_samples, a.caps, a.reality && real_factor);
    for (const auto& [key, vals] : a.coeffs) {
        std::vector<cplx> v(vals.size());
        for (size_t s = 0; s < vals.size(); ++s) v[s] = vals[s] * factor;
        out.coeffs.emplace(key, std::move(v));
    }
    const double af = std::abs(factor);
    for (size_t s = 0; s < a.n_samples; ++s) out.dropped[s] = a.dropped[s] * af;
    out.prune();
    return out;
}

FTSeries multiply(const FTSeries& a, const FTSeries& b, double drop_tol)
{
    a.require_same_shape(b);
    FTSeries out(a.n, a.n_samples, a.caps, a.reality && b.reality);
    const size_t S = a.n_samples;
    TermKey key;
    key.k.resize(a.n);
    key.l.resize(a.n);
    for (const auto& [ka, va] : a.coeffs) {
        for (const auto& [kb, vb] : b.coeffs) {
            for (int i = 0; i < a.n; ++i) {
                key.k[i] = ka.k[i] + kb.k[i];
                key.l[i] = ka.l[i] + kb.l[i];
            }
            if (norm1(key.k) > a.caps.k_max || norm1(key.l) > a.caps.d_max) {
                for (size_t s = 0; s < S; ++s)
                    out.dropped[s] += std::abs(va[s]) * std::abs(vb[s]);
                continue;
            }
            auto it = out.coeffs.find(key);
            if (it == out.coeffs.end())
                it = out.coeffs.emplace(key, std::vector<cplx>(S, cplx{})).first;
            for (size_t s = 0; s < S; ++s) it->second[s] += va[s] * vb[s];
        }
    }
    // residual of the inputs propagates through the product
    auto ma = coeff_mass(a);
    auto mb = coeff_mass(b);
    for (size_t s = 0; s < S; ++s)
        out.dropped[s] += a.dropped[s] * (mb[s] + b.dropped[s]) + b.dropped[s] * ma[s];
    out.prune(drop_tol);
    return out;
}

// -- calculus -----------------------------------------------------------------

FTSeries theta_derivative(const FTSeries& a, int axis)
{
    if (axis < 0 || axis >= a.n) throw std::invalid_argument("theta_derivative: bad axis");
    FTSeries out(a.n, a.n_samples, a.caps, a.reality);
    for (const auto& [key, vals] : a.coeffs) {
        if (key.k[axis] == 0) continue;
        const cplx ik(0.0, double(key.k[axis]));
        std::vector<cplx> v(vals.size());
        for (size_t s = 0; s < vals.size(); ++s) v[s] = vals[s] * ik;
        out.coeffs.emplace(key, std::move(v));
    }
    return out;
}

FTSeries action_derivative(const FTSeries& a, int axis)
{
    if (axis < 0 || axis >= a.n) throw std::invalid_argument("action_derivative: bad axis");
    FTSeries out(a.n, a.n_samples, a.caps, a.reality);
    for (const auto& [key, vals] : a.coeffs) {
        if (key.l[axis] == 0) continue;
        TermKey nk = key;
        nk.l[axis] -= 1;
        const double f = double(key.l[axis]);
        auto it = out.coeffs.find(nk);
        if (it == out.coeffs.end())
            it = out.coeffs.emplace(nk, std::vector<cplx>(vals.size(), cplx{})).first;
        for (size_t s = 0; s < vals.size(); ++s) it->second[s] += vals[s] * f;
    }
    out.prune();
    return out;
}

FTSeries poisson_bracket(const FTSeries& f, const FTSeries& g, double drop_tol)
{
    f.require_same_shape(g);
    FTSeries out(f.n, f.n_samples, f.caps, f.reality && g.reality);
    for (int i = 0; i < f.n; ++i) {
        FTSeries t1 = multiply(theta_derivative(f, i), action_derivative(g, i), drop_tol);
        FTSeries t2 = multiply(action_derivative(f, i), theta_derivative(g, i), drop_tol);
        out = add(out, sub(t1, t2));
    }
    out.prune(drop_tol);
    return out;
}

FTSeries linear_part(const FTSeries& a)
{
    FTSeries out(a.n, a.n_samples, a.caps, a.reality);
    for (const auto& [key, vals] : a.coeffs)
        if (norm1(key.l) <= 1) out.coeffs.emplace(key, vals);
    return out;
}

std::pair<FTSeries, FTSeries> truncate_fourier(const FTSeries& a, long long K)
{
    if (K < 0) throw std::invalid_argument("truncate_fourier: K must be >= 0");
    FTSeries head(a.n, a.n_samples, a.caps, a.reality);
    FTSeries tail(a.n, a.n_samples, a.caps, a.reality);
    for (const auto& [key, vals] : a.coeffs) {
        if (norm1(key.k) <= K)
            head.coeffs.emplace(key, vals);
        else
            tail.coeffs.emplace(key, vals);
    }
    head.dropped = a.dropped; // residual bookkeeping stays with the kept part
    return {std::move(head), std::move(tail)};
}

FTSeries average(const FTSeries& a)
{
    FTSeries out(a.n, a.n_samples, a.caps, a.reality);
    for (const auto& [key, vals] : a.coeffs)
        if (norm1(key.k) == 0) out.coeffs.emplace(key, vals);
    return out;
}

// -- norms and evaluation -----------------------------------------------------

std::vector<double> majorant_norm(const FTSeries& a, const NormParams& np)
{
    np.validate();
    std::vector<double> out(a.n_samples, 0.0);
    for (const auto& [key, vals] : a.coeffs) {
        const double w = std::exp(np.s * norm1(key.k)) * std::pow(np.r, norm1(key.l));
        for (size_t s = 0; s < vals.size(); ++s) out[s] += w * std::abs(vals[s]);
    }
    return out;
}

double majorant_norm_sup(const FTSeries& a, const NormParams& np)
{
    double m = 0;
    for (double v : majorant_norm(a, np)) m = std::max(m, v);
    return m;
}

std::vector<double> coeff_mass(const FTSeries& a)
{
    std::vector<double> out(a.n_samples, 0.0);
    for (const auto& [key, vals] : a.coeffs)
        for (size_t s = 0; s < vals.size(); ++s) out[s] += std::abs(vals[s]);
    return out;
}

cplx evaluate(const FTSeries& a, std::span<const double> theta,
              std::span<const cplx> actions, size_t sample)
{
    if (static_cast<int>(theta.size()) != a.n || static_cast<int>(actions.size()) != a.n)
        throw std::invalid_argument("evaluate: argument dimension mismatch");
    if (sample >= a.n_samples) throw std::invalid_argument("evaluate: sample out of range");
    cplx sum{};
    for (const auto& [key, vals] : a.coeffs) {
        double phase = 0;
        for (int i = 0; i < a.n; ++i) phase += key.k[i] * theta[i];
        cplx term = std::polar(1.0, phase);
        for (int i = 0; i < a.n; ++i)
            for (int p = 0; p < key.l[i]; ++p) term *= actions[i];
        sum += vals[sample] * term;
    }
    return sum;
}

double evaluate_real(const FTSeries& a, std::span<const double> theta,
                     std::span<const double> actions, size_t sample)
{
    std::vector<cplx> ic(actions.begin(), actions.end());
    return evaluate(a, theta, ic, sample).real();
}

FTSeries linear_form_series(const std::vector<std::vector<double>>& omega,
                            int n, SeriesCaps caps)
{
    if (omega.empty()) throw std::invalid_argument("linear_form_series: empty table");
    FTSeries out(n, omega.size(), caps, true);
    for (int i = 0; i < n; ++i) {
        TermKey key;
        key.k.assign(n, 0);
        key.l.assign(n, 0);
        key.l[i] = 1;
        std::vector<cplx> vals(omega.size());
        for (size_t s = 0; s < omega.size(); ++s) {
            if (static_cast<int>(omega[s].size()) != n)
                throw std::invalid_argument("linear_form_series: frequency dimension mismatch");
            vals[s] = omega[s][i];
        }
        out.set_coeff(key, vals);
    }
    out.prune();
    return out;
}

// -- serialization ------------------------------------------------------------

void FTSeries::write(std::ostream& os) const
{
    os << "ftseries 1\n";
    os << "n " << n << "\n";
    os << "caps " << caps.k_max << " " << caps.d_max << "\n";
    os << "samples " << n_samples << "\n";
    os << "reality " << (reality ? 1 : 0) << "\n";
    os << "dropped";
    for (double d : dropped) os << " " << fmt_double(d);
    os << "\n";
    os << "terms " << coeffs.size() << "\n";
    for (const auto& [key, vals] : coeffs) {
        for (int ki : key.k) os << ki << " ";
        for (int li : key.l) os << li << " ";
        for (const cplx& v : vals)
            os << fmt_double(v.real()) << " " << fmt_double(v.imag()) << " ";
        os << "\n";
    }
}

FTSeries FTSeries::read(std::istream& is)
{
    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "ftseries" || version != 1)
        throw ParseError("not an ftseries v1 stream");
    int n = 0, kmax = 0, dmax = 0, reality = 0;
    size_t samples = 0, terms = 0;
    is >> tag >> n;
    if (tag != "n") throw ParseError("ftseries: expected 'n'");
    is >> tag >> kmax >> dmax;
    if (tag != "caps") throw ParseError("ftseries: expected 'caps'");
    is >> tag >> samples;
    if (tag != "samples") throw ParseError("ftseries: expected 'samples'");
    is >> tag >> reality;
    if (tag != "reality") throw ParseError("ftseries: expected 'reality'");
    FTSeries out(n, samples, SeriesCaps{kmax, dmax}, reality != 0);
    is >> tag;
    if (tag != "dropped") throw ParseError("ftseries: expected 'dropped'");
    for (size_t s = 0; s < samples; ++s) is >> out.dropped[s];
    is >> tag >> terms;
    if (tag != "terms") throw ParseError("ftseries: expected 'terms'");
    for (size_t t = 0; t < terms; ++t) {
        TermKey key;
        key.k.resize(n);
        key.l.resize(n);
        for (int i = 0; i < n; ++i) is >> key.k[i];
        for (int i = 0; i < n; ++i) is >> key.l[i];
        std::vector<cplx> vals(samples);
        for (size_t s = 0; s < samples; ++s) {
            double re = 0, im = 0;
            is >> re >> im;
            vals[s] = cplx(re, im);
        }
        if (!is) throw ParseError("ftseries: truncated term table");
        out.coeffs.emplace(std::move(key), std::move(vals));
    }
    return out;
}

} // namespace kamnorm
