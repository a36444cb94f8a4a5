// Command-line front end: `run` drives the normalization engine, `verify`
// replays a run directory through the independent checks, `freq` exposes the
// frequency-geometry tools.  Exit codes: 0 success, 2 hypothesis/guard
// failure, 1 internal error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "kamnorm/freqgeom.hpp"
#include "kamnorm/io.hpp"
#include "kamnorm/verify.hpp"

using namespace kamnorm;
namespace fs = std::filesystem;

namespace {

std::vector<size_t> parse_sample_filter(const std::string& filter, size_t total)
{
    std::vector<size_t> out;
    if (filter.empty() || filter == "all") {
        for (size_t i = 0; i < total; ++i) out.push_back(i);
        return out;
    }
    std::istringstream is(filter);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        const size_t v = std::stoul(tok);
        if (v >= total) throw ParseError("--samples: index " + tok + " out of range");
        out.push_back(v);
    }
    return out;
}

std::vector<double> parse_vec(const std::string& s)
{
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

struct BoxSpec {
    std::vector<double> lo, hi;
};

BoxSpec parse_box(const std::string& s)
{
    BoxSpec b;
    std::istringstream is(s);
    std::string axis;
    while (std::getline(is, axis, ',')) {
        const size_t c = axis.find(':');
        if (c == std::string::npos) throw ParseError("box axis must be lo:hi");
        b.lo.push_back(std::stod(axis.substr(0, c)));
        b.hi.push_back(std::stod(axis.substr(c + 1)));
    }
    return b;
}

std::vector<std::string> split_exprs(const std::string& s)
{
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ';')) out.push_back(tok);
    return out;
}

void write_intervals_csv(const std::string& path, const std::vector<Interval>& ivs)
{
    std::ostringstream o;
    o << "lo,hi,length\n";
    for (const auto& iv : ivs)
        o << fmt_double(iv.lo) << "," << fmt_double(iv.hi) << ","
          << fmt_double(iv.length()) << "\n";
    write_text_file(path, o.str());
}

void write_residual_csv(const std::string& path, const ResidualReport& rep)
{
    std::ostringstream o;
    o << "point,residual\n";
    for (const auto& [pt, res] : rep.rows) {
        for (size_t i = 0; i < pt.size(); ++i) o << (i ? ";" : "") << fmt_double(pt[i]);
        o << "," << fmt_double(res) << "\n";
    }
    write_text_file(path, o.str());
}

int cmd_run(const std::string& problem_path, const std::string& config_path,
            const std::string& out_dir, int resume_from, const std::string& samples)
{
    Problem problem = Problem::parse_file(problem_path);
    RunConfig cfg = config_path.empty() ? RunConfig{} : config_from_file(config_path);

    ParamGrid grid = problem.make_grid();
    if (!samples.empty() && samples != "all") {
        auto keep = parse_sample_filter(samples, grid.size());
        ParamGrid sub;
        sub.lo = grid.lo;
        sub.hi = grid.hi;
        for (size_t i : keep) sub.samples.push_back(grid.samples[i]);
        sub.validate();
        grid = std::move(sub);
    }

    KamRun run;
    Hamiltonian H0 = problem.build_hamiltonian(grid, cfg);
    auto persist = [&](const KamRun& r) { save_run(out_dir, r, problem, cfg, grid); };

    if (resume_from >= 0) {
        LoadedRun prev = load_run(out_dir);
        if (resume_from > static_cast<int>(prev.run.history.size()))
            throw ParseError("--resume-from: step not present in " + out_dir);
        // truncate the recorded run to the resume point
        KamRun seed = prev.run;
        seed.history.resize(resume_from);
        seed.omega_by_step.resize(resume_from + 1);
        seed.omega_hat_by_step.resize(resume_from);
        seed.clean_by_step.resize(resume_from);
        seed.atlas.stages.resize(resume_from);
        seed.completed = false;
        Hamiltonian Hj = load_step_state(out_dir, prev, resume_from);
        run = run_kam(Hj, grid, problem.s, problem.r, problem.alpha, problem.tau,
                      problem.m, cfg, persist, resume_from, &seed);
    } else {
        // persist the initial state so any step is resumable
        KamRun init;
        init.omega_by_step = {H0.omega};
        init.omega_star = H0.omega;
        init.energy_star = H0.energy;
        init.P_star = H0.P;
        save_run(out_dir, init, problem, cfg, grid);
        run = run_kam(H0, grid, problem.s, problem.r, problem.alpha, problem.tau,
                      problem.m, cfg, persist);
    }
    save_run(out_dir, run, problem, cfg, grid);

    std::cout << "steps: " << run.history.size() << "\n";
    for (const auto& rec : run.history)
        std::cout << "  j=" << rec.j << " eps_measured=" << rec.eps_measured
                  << " eps_schedule=" << rec.eps_schedule << " K=" << rec.K
                  << " clean=" << rec.clean_fraction << "\n";
    if (!run.completed) {
        std::cerr << "aborted: " << run.abort_reason << "\n";
        return 2;
    }
    size_t in_star = 0;
    for (uint8_t f : run.pi_star) in_star += f;
    std::cout << "Pi_star: " << in_star << "/" << run.pi_star.size()
              << " samples (K_check = " << run.kcheck << ")\n";
    std::cout << "artifacts written to " << out_dir << "\n";
    return 0;
}

int cmd_verify(const std::string& run_dir, const std::string& checks_csv,
               const std::string& samples)
{
    for (const char* f : {"/manifest.txt", "/history.csv", "/omega_star.csv",
                          "/atlas/params.csv", "/problem.cfg", "/config.cfg"}) {
        if (!fs::exists(run_dir + f))
            throw ParseError("verify: missing artifact " + run_dir + f +
                             " (expected a completed or partial run directory)");
    }
    LoadedRun lr = load_run(run_dir);
    const RunConfig& cfg = lr.cfg;
    Hamiltonian H0 = lr.problem.build_hamiltonian(lr.grid, cfg);
    Hamiltonian Hstar{lr.run.omega_star, lr.run.P_star, lr.run.energy_star};

    std::vector<std::string> checks;
    {
        std::istringstream is(checks_csv);
        std::string tok;
        while (std::getline(is, tok, ',')) checks.push_back(tok);
    }
    auto enabled = [&](const std::string& c) {
        return checks.empty() || std::find(checks.begin(), checks.end(), c) != checks.end();
    };
    const auto idx = parse_sample_filter(samples, lr.grid.size());

    std::ostringstream report;
    report << "verify report for " << run_dir << "\n";
    report << "integrator_tol = " << fmt_double(cfg.integrator_tol)
           << ", fd_step = " << fmt_double(cfg.fd_step) << "\n";

    const StepParams sp0 = lr.run.atlas.stages.empty() ? StepParams{}
                                                       : lr.run.atlas.stages.front().params;
    for (size_t q : idx) {
        const bool clean = !lr.run.pi_star.empty() && lr.run.pi_star[q];
        report << "sample " << q << (clean ? " [clean]" : " [not clean]") << "\n";

        if (enabled("conjugacy")) {
            ConjugacyGrid grid;
            grid.theta_per_axis = cfg.conj_theta_grid;
            grid.action_points = cfg.conj_action_points;
            grid.action_radius = lr.problem.r / 4;
            auto rep = conjugacy_residual(H0, Hstar, lr.run.atlas, q, clean, grid,
                                          cfg.integrator_tol);
            write_residual_csv(run_dir + "/verify_conjugacy_" + std::to_string(q) + ".csv", rep);
            report << "  conjugacy sup-residual = " << fmt_double(rep.sup_residual)
                   << (clean ? "" : " [excluded: not clean]") << "\n";
            if (!rep.warning.empty()) report << "  warning: " << rep.warning << "\n";
        }
        if (enabled("torus")) {
            auto rep = torus_residual(H0, lr.run.omega_star[q], lr.run.atlas, q,
                                      cfg.theta_grid, true, cfg.integrator_tol);
            write_residual_csv(run_dir + "/verify_torus_" + std::to_string(q) + ".csv", rep);
            report << "  torus sup-residual = " << fmt_double(rep.sup_residual)
                   << (clean ? "" : " [excluded: not clean]") << "\n";
            if (!rep.warning.empty()) report << "  warning: " << rep.warning << "\n";
        }
        if (enabled("symplectic")) {
            std::mt19937_64 rng(12345 + q);
            std::uniform_real_distribution<double> uth(0, 2 * M_PI);
            std::uniform_real_distribution<double> ui(-1, 1);
            std::vector<std::vector<double>> pts;
            const int n = H0.n();
            for (int p = 0; p < cfg.symplectic_points; ++p) {
                std::vector<double> x(2 * n);
                for (int i = 0; i < n; ++i) x[i] = uth(rng);
                for (int i = 0; i < n; ++i) x[n + i] = 0.5 * lr.problem.r * ui(rng) / n;
                pts.push_back(std::move(x));
            }
            auto rep = symplectic_check(lr.run.atlas, q, pts, cfg.fd_step,
                                        cfg.integrator_tol);
            write_residual_csv(run_dir + "/verify_symplectic_" + std::to_string(q) + ".csv",
                               rep);
            report << "  symplectic sup-residual = " << fmt_double(rep.sup_residual) << "\n";
        }
        if (enabled("map_bound") && !lr.run.atlas.stages.empty()) {
            auto rep = map_distance_bound(lr.run.atlas, q, sp0.rho, sp0.r, sp0.E,
                                          16, 3, cfg.integrator_tol);
            report << "  sup |W(Phi-id)| = " << fmt_double(rep.sup_weighted)
                   << " (ratio to E_0 = " << fmt_double(rep.ratio_to_E0) << ")\n";
        }
    }
    write_text_file(run_dir + "/verify_report.txt", report.str());
    std::cout << report.str();
    return 0;
}

int cmd_freq_degree(const std::string& map_exprs, const std::string& box_spec,
                    const std::string& target_spec, const std::string& out)
{
    auto box = parse_box(box_spec);
    const int d = static_cast<int>(box.lo.size());
    FreqMap map = FreqMap::from_exprs(split_exprs(map_exprs), d);
    auto target = parse_vec(target_spec);
    DegreeResult res = brouwer_degree(map, box.lo, box.hi, target);
    std::cout << "degree = " << res.degree << " (boundary_margin = " << res.boundary_margin
              << ", refinement = " << res.refinement
              << ", stable = " << (res.stable ? "yes" : "no") << ")\n";
    for (const auto& p : res.preimages) {
        std::cout << "  preimage:";
        for (double v : p) std::cout << " " << v;
        std::cout << "\n";
    }
    if (!out.empty()) {
        std::ostringstream o;
        o << "degree,boundary_margin,refinement,stable\n";
        o << res.degree << "," << fmt_double(res.boundary_margin) << "," << res.refinement
          << "," << (res.stable ? 1 : 0) << "\n";
        write_text_file(out, o.str());
    }
    return 0;
}

int cmd_freq_dilate(const std::string& map_exprs, const std::string& hat_exprs,
                    const std::string& box_spec, const std::string& target_spec,
                    const std::string& lambda_expr)
{
    auto box = parse_box(box_spec);
    const int d = static_cast<int>(box.lo.size());
    FreqMap map = FreqMap::from_exprs(split_exprs(map_exprs), d);
    if (!hat_exprs.empty()) {
        std::vector<Expr> hats;
        for (const auto& h : split_exprs(hat_exprs)) hats.push_back(Expr::parse_xi(h, d));
        map.set_perturbation(std::move(hats));
    }
    auto omega0 = parse_vec(target_spec);
    Expr lambda;
    if (!lambda_expr.empty()) lambda = Expr::parse_xi(lambda_expr, d);
    DilationSolution sol = solve_dilation(map, box.lo, box.hi, omega0,
                                          lambda_expr.empty() ? nullptr : &lambda);
    std::cout << "xi_star =";
    for (double v : sol.xi_star) std::cout << " " << v;
    std::cout << "\nlambda = " << sol.lambda << "\nresidual = " << sol.residual
              << "\ndegree = " << sol.degree.degree << "\n";
    return 0;
}

int cmd_freq_measure(const std::string& omega0_spec, double alpha, double tau,
                     double lambda0, long long K, const std::string& out)
{
    auto omega0 = parse_vec(omega0_spec);
    MeasureReport rep = resonance_measure_2d(omega0, alpha, tau, lambda0, K);
    std::cout << "bad measure = " << fmt_double(rep.bad_measure) << " over [0, " << lambda0
              << "], " << rep.bad_intervals.size() << " intervals, K = " << K << "\n";
    std::cout << "measures at {lambda0, /2, /4}:";
    for (double m : rep.measures) std::cout << " " << fmt_double(m);
    std::cout << "\nfitted exponent = " << rep.fitted_exponent << "\n";
    if (!out.empty()) write_intervals_csv(out, rep.bad_intervals);
    return 0;
}

int cmd_freq_window(const std::string& omega0_spec, double nu0, double mu0,
                    const std::string& muhat_expr, double alpha, double tau, double sigma,
                    long long K, const std::string& out)
{
    auto omega0 = parse_vec(omega0_spec);
    std::function<double(double)> muhat = [](double) { return 0.0; };
    Expr mh;
    if (!muhat_expr.empty()) {
        mh = Expr::parse(muhat_expr, {"lam"});
        muhat = [&mh](double lam) { return mh.eval(std::vector<double>{lam}); };
    }
    MeasureReport rep = dio_window_1d(omega0, nu0, mu0, muhat, alpha, tau, sigma, K);
    std::cout << "bad measure = " << fmt_double(rep.bad_measure) << " within [-" << sigma
              << ", " << sigma << "]\nadmissible intervals: " << rep.admissible.size()
              << "\n";
    if (!out.empty()) write_intervals_csv(out, rep.admissible);
    return 0;
}

int cmd_freq_elliptic(const std::string& problem_path, const std::string& omega0_spec,
                      const std::string& hat_exprs, const std::string& Ohat_exprs,
                      double sigma, long long K)
{
    Problem p = Problem::parse_file(problem_path);
    if (p.nbar == 0) throw ParseError("freq elliptic: problem has no [elliptic] block");
    auto omega0 = parse_vec(omega0_spec);
    const int n = p.n;
    auto zero_exprs = [&](int count) {
        std::vector<std::string> z(count, "0");
        return z;
    };
    FreqMap omega_hat = FreqMap::from_exprs(
        hat_exprs.empty() ? zero_exprs(n) : split_exprs(hat_exprs), n);
    FreqMap Omega_hat = FreqMap::from_exprs(
        Ohat_exprs.empty() ? zero_exprs(p.nbar) : split_exprs(Ohat_exprs), n);
    EllipticDilation res = elliptic_dilation(omega0, p.beta, p.M, omega_hat, Omega_hat,
                                             p.box_lo, p.box_hi, p.alpha, p.tau, sigma, K);
    std::cout << "lambda = " << res.lambda << "\nvarpi =";
    for (double v : res.varpi) std::cout << " " << v;
    std::cout << "\nresidual = " << res.residual
              << "\nadmissible measure = " << res.admissible_measure
              << "\nmembership margin = " << res.membership.margin
              << " (pass = " << res.membership.pass << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"KAM normalization engine: runs, verification and frequency geometry"};
    app.require_subcommand(1);

    std::string problem, config, out = "out", samples, checks;
    int resume_from = -1;

    auto* run = app.add_subcommand("run", "normalize a problem file");
    run->add_option("--problem", problem, "problem file")->required();
    run->add_option("--config", config, "run configuration file");
    run->add_option("--out", out, "output directory");
    run->add_option("--resume-from", resume_from, "resume from a completed step index");
    run->add_option("--samples", samples, "sample filter, e.g. 0,2,5 (default all)");

    std::string run_dir;
    auto* verify = app.add_subcommand("verify", "verify a run directory");
    verify->add_option("dir", run_dir, "run directory")->required();
    verify->add_option("--checks", checks, "subset: conjugacy,torus,symplectic,map_bound");
    verify->add_option("--samples", samples, "sample filter (default all)");

    auto* freq = app.add_subcommand("freq", "frequency-geometry tools");
    freq->require_subcommand(1);
    std::string map_exprs, hat_exprs, Ohat_exprs, box_spec, target_spec, lambda_expr,
        omega0_spec, muhat_expr, csv_out;
    double alpha = 0.05, tau = 1.5, lambda0 = 0.01, sigma = 1e-3, nu0 = 0, mu0 = 1;
    long long K = 100;

    auto* degree = freq->add_subcommand("degree", "Brouwer degree of a map on a box");
    degree->add_option("--map", map_exprs, "components, ';'-separated")->required();
    degree->add_option("--box", box_spec, "box lo:hi per axis, ','-separated")->required();
    degree->add_option("--target", target_spec, "target vector")->required();
    degree->add_option("--out", csv_out, "CSV output path");

    auto* dilate = freq->add_subcommand("dilate", "solve omega_*(xi) = (1+lambda) omega0");
    dilate->add_option("--map", map_exprs)->required();
    dilate->add_option("--hat", hat_exprs, "perturbation components");
    dilate->add_option("--box", box_spec)->required();
    dilate->add_option("--omega0", target_spec)->required();
    dilate->add_option("--lambda", lambda_expr, "dilation expression in xi");

    auto* measure = freq->add_subcommand("measure", "2-d resonance measure in lambda");
    measure->add_option("--omega0", omega0_spec)->required();
    measure->add_option("--alpha", alpha);
    measure->add_option("--tau", tau);
    measure->add_option("--lambda0", lambda0);
    measure->add_option("--K", K);
    measure->add_option("--out", csv_out, "CSV of bad intervals");

    auto* window = freq->add_subcommand("window", "1-d Diophantine windows in lambda");
    window->add_option("--omega0", omega0_spec)->required();
    window->add_option("--nu0", nu0)->required();
    window->add_option("--mu0", mu0)->required();
    window->add_option("--muhat", muhat_expr, "expression in lam");
    window->add_option("--alpha", alpha);
    window->add_option("--tau", tau);
    window->add_option("--sigma", sigma);
    window->add_option("--K", K);
    window->add_option("--out", csv_out, "CSV of admissible intervals");

    auto* elliptic = freq->add_subcommand("elliptic", "elliptic dilation windows");
    elliptic->add_option("--problem", problem, "problem file with [elliptic] block")->required();
    elliptic->add_option("--omega0", omega0_spec)->required();
    elliptic->add_option("--hat", hat_exprs, "omega perturbation in xi (as omega vars)");
    elliptic->add_option("--Ohat", Ohat_exprs, "Omega perturbation");
    elliptic->add_option("--sigma", sigma);
    elliptic->add_option("--K", K);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(problem, config, out, resume_from, samples);
        if (*verify) return cmd_verify(run_dir, checks, samples);
        if (*degree) return cmd_freq_degree(map_exprs, box_spec, target_spec, csv_out);
        if (*dilate) return cmd_freq_dilate(map_exprs, hat_exprs, box_spec, target_spec,
                                            lambda_expr);
        if (*measure) return cmd_freq_measure(omega0_spec, alpha, tau, lambda0, K, csv_out);
        if (*window) return cmd_freq_window(omega0_spec, nu0, mu0, muhat_expr, alpha, tau,
                                            sigma, K, csv_out);
        if (*elliptic) return cmd_freq_elliptic(problem, omega0_spec, hat_exprs, Ohat_exprs,
                                                sigma, K);
    } catch (const HypothesisError& e) {
        std::cerr << "hypothesis failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
