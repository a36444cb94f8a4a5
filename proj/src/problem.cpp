#include "kamnorm/problem.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace kamnorm {

namespace {

struct Entry {
    std::string key, value;
    int line;
};

using Sections = std::map<std::string, std::vector<Entry>>;

Sections parse_sections(const std::string& text)
{
    Sections out;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        std::string t = line.substr(a, b - a + 1);
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("unterminated section header", lineno);
            section = t.substr(1, t.size() - 2);
            out[section];
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        std::string key = t.substr(0, eq);
        std::string val = t.substr(eq + 1);
        auto trim = [](std::string& s) {
            size_t x = s.find_first_not_of(" \t");
            size_t y = s.find_last_not_of(" \t");
            s = x == std::string::npos ? "" : s.substr(x, y - x + 1);
        };
        trim(key);
        trim(val);
        if (section.empty()) throw ParseError("key before any [section]", lineno);
        out[section].push_back(Entry{key, val, lineno});
    }
    return out;
}

const Entry* find_one(const Sections& s, const std::string& sec, const std::string& key)
{
    auto it = s.find(sec);
    if (it == s.end()) return nullptr;
    const Entry* found = nullptr;
    for (const auto& e : it->second) {
        if (e.key == key) {
            if (found) throw ParseError("duplicate key '" + key + "'", e.line);
            found = &e;
        }
    }
    return found;
}

double need_double(const Sections& s, const std::string& sec, const std::string& key)
{
    const Entry* e = find_one(s, sec, key);
    if (!e) throw ParseError("missing [" + sec + "] " + key);
    try {
        size_t used = 0;
        double v = std::stod(e->value, &used);
        if (used != e->value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ParseError("bad number for '" + key + "'", e->line);
    }
}

int need_int(const Sections& s, const std::string& sec, const std::string& key)
{
    const double v = need_double(s, sec, key);
    if (v != std::floor(v)) throw ParseError("expected integer for '" + key + "'");
    return static_cast<int>(v);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& p : out) {
        size_t a = p.find_first_not_of(" \t");
        size_t b = p.find_last_not_of(" \t");
        p = a == std::string::npos ? "" : p.substr(a, b - a + 1);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& s, int line)
{
    std::vector<double> out;
    for (const auto& p : split(s, ',')) {
        if (p.empty()) throw ParseError("empty number in list", line);
        try {
            out.push_back(std::stod(p));
        } catch (...) {
            throw ParseError("bad number '" + p + "'", line);
        }
    }
    return out;
}

std::vector<int> parse_ints(const std::string& s, int line)
{
    std::vector<int> out;
    for (double v : parse_doubles(s, line)) {
        if (v != std::floor(v)) throw ParseError("expected integer list", line);
        out.push_back(static_cast<int>(v));
    }
    return out;
}

} // namespace

Problem Problem::parse(const std::string& text)
{
    Sections s = parse_sections(text);
    Problem p;
    p.source_text = text;
    p.n = need_int(s, "problem", "n");
    p.m = find_one(s, "problem", "m") ? need_int(s, "problem", "m") : 0;
    if (p.m != 0)
        throw ParseError("only m = 0 parameter smoothness is implemented");
    p.tau = need_double(s, "problem", "tau");
    p.alpha = need_double(s, "problem", "alpha");
    p.s = need_double(s, "problem", "s");
    p.r = need_double(s, "problem", "r");
    if (p.n < 1) throw ParseError("need n >= 1");
    if (!(p.tau > p.n - 1)) throw ParseError("need tau > n - 1");
    if (!(p.alpha > 0) || p.alpha > 1) throw ParseError("need alpha in (0,1]");
    if (!(p.s > 0) || !(p.r > 0)) throw ParseError("need s > 0 and r > 0");

    const Entry* box = find_one(s, "grid", "box");
    if (!box) throw ParseError("missing [grid] box");
    for (const auto& axis : split(box->value, ',')) {
        auto lohi = split(axis, ':');
        if (lohi.size() != 2) throw ParseError("box axis must be lo:hi", box->line);
        try {
            p.box_lo.push_back(std::stod(lohi[0]));
            p.box_hi.push_back(std::stod(lohi[1]));
        } catch (...) {
            throw ParseError("bad box bound", box->line);
        }
    }
    const Entry* shape = find_one(s, "grid", "shape");
    if (!shape) throw ParseError("missing [grid] shape");
    p.grid_shape = parse_ints(shape->value, shape->line);
    if (p.grid_shape.size() != p.box_lo.size())
        throw ParseError("grid shape dimension differs from box", shape->line);

    const int d = static_cast<int>(p.box_lo.size());
    auto om = s.find("omega");
    if (om == s.end()) throw ParseError("missing [omega] section");
    for (const auto& e : om->second) {
        if (e.key != "component") throw ParseError("unknown key '" + e.key + "' in [omega]", e.line);
        try {
            p.omega.push_back(Expr::parse_xi(e.value, d));
        } catch (const ParseError& pe) {
            throw ParseError(pe.what(), e.line);
        }
    }
    if (static_cast<int>(p.omega.size()) != p.n)
        throw ParseError("[omega] must declare exactly n components");

    if (auto pt = s.find("perturbation"); pt != s.end()) {
        for (const auto& e : pt->second) {
            if (e.key != "term") throw ParseError("unknown key '" + e.key + "' in [perturbation]", e.line);
            auto parts = split(e.value, '|');
            if (parts.size() < 3 || parts.size() > 4)
                throw ParseError("term must be 'k | l | re [| im]'", e.line);
            PerturbationTerm t;
            t.k = parse_ints(parts[0], e.line);
            t.l = parse_ints(parts[1], e.line);
            if (static_cast<int>(t.k.size()) != p.n || static_cast<int>(t.l.size()) != p.n)
                throw ParseError("term indices must have dimension n", e.line);
            for (int li : t.l)
                if (li < 0) throw ParseError("Taylor exponents must be >= 0", e.line);
            try {
                t.re = Expr::parse_xi(parts[2], d);
                if (parts.size() == 4) {
                    t.im = Expr::parse_xi(parts[3], d);
                    t.has_im = true;
                }
            } catch (const ParseError& pe) {
                throw ParseError(pe.what(), e.line);
            }
            p.terms.push_back(std::move(t));
        }
    }

    if (auto el = s.find("elliptic"); el != s.end()) {
        p.nbar = need_int(s, "elliptic", "nbar");
        const Entry* beta = find_one(s, "elliptic", "beta");
        if (!beta) throw ParseError("missing [elliptic] beta");
        p.beta = parse_doubles(beta->value, beta->line);
        if (static_cast<int>(p.beta.size()) != p.nbar)
            throw ParseError("beta must have nbar entries", beta->line);
        const Entry* Mrow = find_one(s, "elliptic", "M");
        if (!Mrow) throw ParseError("missing [elliptic] M");
        for (const auto& row : split(Mrow->value, ';')) {
            p.M.push_back(parse_doubles(row, Mrow->line));
            if (static_cast<int>(p.M.back().size()) != p.nbar)
                throw ParseError("M rows must have nbar entries", Mrow->line);
        }
        if (static_cast<int>(p.M.size()) != p.n)
            throw ParseError("M must have n rows", Mrow->line);
    }
    return p;
}

Problem Problem::parse_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

ParamGrid Problem::make_grid() const
{
    return ParamGrid::regular(box_lo, box_hi, grid_shape);
}

std::vector<std::vector<double>> Problem::omega_table(const ParamGrid& grid) const
{
    std::vector<std::vector<double>> table(grid.size());
    for (size_t q = 0; q < grid.size(); ++q) {
        table[q].resize(n);
        for (int i = 0; i < n; ++i) table[q][i] = omega[i].eval(grid.samples[q]);
    }
    return table;
}

namespace {

// declared coefficients with reality completion, per sample
std::map<TermKey, std::vector<cplx>> collect_coeffs(const Problem& p, const ParamGrid& grid)
{
    std::map<TermKey, std::vector<cplx>> cs;
    for (const auto& t : p.terms) {
        TermKey key{t.k, t.l};
        auto [it, fresh] = cs.emplace(key, std::vector<cplx>(grid.size(), cplx{}));
        if (!fresh) throw ParseError("perturbation term declared twice for the same (k,l)");
        for (size_t q = 0; q < grid.size(); ++q) {
            const double re = t.re.eval(grid.samples[q]);
            const double im = t.has_im ? t.im.eval(grid.samples[q]) : 0.0;
            it->second[q] = cplx(re, im);
        }
    }
    // reality completion / consistency
    std::map<TermKey, std::vector<cplx>> full = cs;
    for (const auto& [key, vals] : cs) {
        TermKey mk = key;
        for (int& ki : mk.k) ki = -ki;
        auto other = cs.find(mk);
        if (other == cs.end()) {
            std::vector<cplx> conj_vals(vals.size());
            for (size_t q = 0; q < vals.size(); ++q) conj_vals[q] = std::conj(vals[q]);
            full[mk] = std::move(conj_vals);
        } else {
            for (size_t q = 0; q < vals.size(); ++q)
                if (std::abs(other->second[q] - std::conj(vals[q])) >
                    1e-13 * (1.0 + std::abs(vals[q])))
                    throw ParseError("perturbation violates reality: coefficients at k and -k "
                                     "are not conjugate");
        }
    }
    return full;
}

} // namespace

double Problem::declared_norm(const ParamGrid& grid) const
{
    auto cs = collect_coeffs(*this, grid);
    double sup = 0;
    for (size_t q = 0; q < grid.size(); ++q) {
        double total = 0;
        for (const auto& [key, vals] : cs)
            total += std::abs(vals[q]) * std::exp(s * norm1(key.k)) *
                     std::pow(r, norm1(key.l));
        sup = std::max(sup, total);
    }
    return sup;
}

Hamiltonian Problem::build_hamiltonian(const ParamGrid& grid, const RunConfig& cfg) const
{
    const double eps0 = declared_norm(grid);
    StepParams sp0 = init_schedule(s, r, alpha, tau, n, m, cfg.gamma, eps0);

    int k_declared = 0, d_declared = 0;
    for (const auto& t : terms) {
        k_declared = std::max(k_declared, norm1(std::span<const int>(t.k)));
        d_declared = std::max(d_declared, norm1(std::span<const int>(t.l)));
    }
    SeriesCaps caps;
    caps.k_max = std::max<long long>(cfg.kmax_mult * sp0.K, k_declared);
    caps.d_max = std::max(cfg.d_max, d_declared);

    Hamiltonian H;
    H.omega = omega_table(grid);
    H.P = FTSeries(n, grid.size(), caps, true);
    H.P.coeffs = collect_coeffs(*this, grid);
    H.P.prune();
    if (H.P.reality_defect() > 0)
        throw ParseError("perturbation failed the reality check after completion");
    H.energy.assign(grid.size(), 0.0);
    return H;
}

// -- run configuration ---------------------------------------------------------

std::string config_to_text(const RunConfig& c)
{
    std::ostringstream os;
    os << "[run]\n";
    os << "kmax_mult = " << c.kmax_mult << "\n";
    os << "d_max = " << c.d_max << "\n";
    os << "drop_tol = " << fmt_double(c.drop_tol) << "\n";
    os << "j_max = " << c.j_max << "\n";
    os << "c_growth = " << fmt_double(c.c_growth) << "\n";
    os << "stop_tol = " << fmt_double(c.stop_tol) << "\n";
    os << "j_stop = " << c.j_stop << "\n";
    os << "kcheck_mult = " << c.kcheck_mult << "\n";
    os << "gamma = " << fmt_double(c.gamma) << "\n";
    os << "[verify]\n";
    os << "theta_grid = " << c.theta_grid << "\n";
    os << "conj_theta_grid = " << c.conj_theta_grid << "\n";
    os << "conj_action_points = " << c.conj_action_points << "\n";
    os << "integrator_tol = " << fmt_double(c.integrator_tol) << "\n";
    os << "fd_step = " << fmt_double(c.fd_step) << "\n";
    os << "symplectic_points = " << c.symplectic_points << "\n";
    return os.str();
}

std::string RunConfig::to_text() const { return config_to_text(*this); }

RunConfig config_from_text(const std::string& text)
{
    Sections s = parse_sections(text);
    RunConfig c;
    auto opt_int = [&](const char* sec, const char* key, int& slot) {
        if (find_one(s, sec, key)) slot = need_int(s, sec, key);
    };
    auto opt_double = [&](const char* sec, const char* key, double& slot) {
        if (find_one(s, sec, key)) slot = need_double(s, sec, key);
    };
    opt_int("run", "kmax_mult", c.kmax_mult);
    opt_int("run", "d_max", c.d_max);
    opt_double("run", "drop_tol", c.drop_tol);
    opt_int("run", "j_max", c.j_max);
    opt_double("run", "c_growth", c.c_growth);
    opt_double("run", "stop_tol", c.stop_tol);
    opt_int("run", "j_stop", c.j_stop);
    opt_int("run", "kcheck_mult", c.kcheck_mult);
    opt_double("run", "gamma", c.gamma);
    opt_int("verify", "theta_grid", c.theta_grid);
    opt_int("verify", "conj_theta_grid", c.conj_theta_grid);
    opt_int("verify", "conj_action_points", c.conj_action_points);
    opt_double("verify", "integrator_tol", c.integrator_tol);
    opt_double("verify", "fd_step", c.fd_step);
    opt_int("verify", "symplectic_points", c.symplectic_points);
    for (const auto& [sec, entries] : s) {
        if (sec != "run" && sec != "verify")
            throw ParseError("unknown config section [" + sec + "]");
    }
    return c;
}

RunConfig RunConfig::from_text(const std::string& text) { return config_from_text(text); }

RunConfig config_from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_text(ss.str());
}

} // namespace kamnorm
