#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "kamnorm/freqgeom.hpp"
#include "kamnorm/io.hpp"
#include "kamnorm/verify.hpp"

namespace py = pybind11;
using namespace kamnorm;

PYBIND11_MODULE(_kamnorm, m)
{
    m.doc() = "KAM normalization engine: Fourier-Taylor series algebra, smooth "
              "divisor extensions, the iteration driver, verification checks and "
              "frequency-geometry tools";

    py::register_exception<HypothesisError>(m, "HypothesisError");
    py::register_exception<ParseError>(m, "ParseError");

    py::class_<SeriesCaps>(m, "SeriesCaps")
        .def(py::init<>())
        .def(py::init([](int k_max, int d_max) { return SeriesCaps{k_max, d_max}; }),
             py::arg("k_max"), py::arg("d_max"))
        .def_readwrite("k_max", &SeriesCaps::k_max)
        .def_readwrite("d_max", &SeriesCaps::d_max);

    py::class_<NormParams>(m, "NormParams")
        .def(py::init([](double s, double r, double alpha) {
                 return NormParams{s, r, alpha};
             }),
             py::arg("s"), py::arg("r"), py::arg("alpha") = 1.0)
        .def_readwrite("s", &NormParams::s)
        .def_readwrite("r", &NormParams::r)
        .def_readwrite("alpha", &NormParams::alpha);

    py::class_<ParamGrid>(m, "ParamGrid")
        .def_static("regular", &ParamGrid::regular, py::arg("lo"), py::arg("hi"),
                    py::arg("shape"))
        .def_readonly("lo", &ParamGrid::lo)
        .def_readonly("hi", &ParamGrid::hi)
        .def_readonly("samples", &ParamGrid::samples)
        .def("size", &ParamGrid::size);

    py::class_<FTSeries>(m, "FTSeries")
        .def(py::init<int, size_t, SeriesCaps, bool>(), py::arg("n"), py::arg("n_samples"),
             py::arg("caps"), py::arg("reality") = true)
        .def_readonly("n", &FTSeries::n)
        .def_readonly("n_samples", &FTSeries::n_samples)
        .def_readonly("caps", &FTSeries::caps)
        .def_readonly("reality", &FTSeries::reality)
        .def("set_coeff",
             [](FTSeries& s, std::vector<int> k, std::vector<int> l,
                const std::vector<cplx>& values) {
                 s.set_coeff(TermKey{std::move(k), std::move(l)}, values);
             })
        .def("set_coeff_uniform",
             [](FTSeries& s, std::vector<int> k, std::vector<int> l, cplx value) {
                 s.set_coeff_uniform(TermKey{std::move(k), std::move(l)}, value);
             })
        .def("coeff",
             [](const FTSeries& s, std::vector<int> k, std::vector<int> l) {
                 return s.coeff(TermKey{std::move(k), std::move(l)});
             })
        .def("term_count", &FTSeries::term_count)
        .def("dropped_sup", &FTSeries::dropped_sup)
        .def("reality_defect", &FTSeries::reality_defect)
        .def("to_text",
             [](const FTSeries& s) {
                 std::ostringstream os;
                 s.write(os);
                 return os.str();
             })
        .def_static("from_text", [](const std::string& text) {
            std::istringstream is(text);
            return FTSeries::read(is);
        });

    m.def("add", &add);
    m.def("sub", &sub);
    m.def("scale", &scale);
    m.def("multiply", &multiply, py::arg("a"), py::arg("b"), py::arg("drop_tol") = 0.0);
    m.def("poisson_bracket", &poisson_bracket, py::arg("f"), py::arg("g"),
          py::arg("drop_tol") = 0.0);
    m.def("linear_part", &linear_part);
    m.def("truncate_fourier", &truncate_fourier);
    m.def("average", &average);
    m.def("theta_derivative", &theta_derivative);
    m.def("action_derivative", &action_derivative);
    m.def("majorant_norm", &majorant_norm);
    m.def("majorant_norm_sup", &majorant_norm_sup);
    m.def("evaluate",
          [](const FTSeries& a, const std::vector<double>& theta,
             const std::vector<cplx>& actions, size_t sample) {
              return evaluate(a, theta, actions, sample);
          });

    m.def("phi", &CutoffFn::value, "smooth cutoff: 0 on |t|<=1/2, 1 on |t|>=1");
    m.def("phi_derivative", &CutoffFn::derivative);
    m.def("phi_h", &phi_h, py::arg("t"), py::arg("h"));
    m.def("phi_h_derivative", &phi_h_derivative, py::arg("t"), py::arg("h"));

    py::class_<DivisorParams>(m, "DivisorParams")
        .def(py::init([](double alpha, double tau, long long K) {
                 return DivisorParams{alpha, tau, K};
             }),
             py::arg("alpha"), py::arg("tau"), py::arg("K"))
        .def_readwrite("alpha", &DivisorParams::alpha)
        .def_readwrite("tau", &DivisorParams::tau)
        .def_readwrite("K", &DivisorParams::K);

    py::class_<DioReport>(m, "DioReport")
        .def_readonly("pass_", &DioReport::pass)
        .def_readonly("margin", &DioReport::margin)
        .def_readonly("worst_k", &DioReport::worst_k)
        .def_readonly("worst_l", &DioReport::worst_l);

    m.def("extended_inverse",
          [](const std::vector<double>& omega, const std::vector<int>& k,
             const DivisorParams& dp) { return extended_inverse(omega, k, dp); });
    m.def("check_dio", [](const std::vector<double>& omega, const DivisorParams& dp) {
        return check_dio(omega, dp);
    });
    m.def("check_dio_elliptic",
          [](const std::vector<double>& omega, const std::vector<double>& Omega,
             const DivisorParams& dp) { return check_dio_elliptic(omega, Omega, dp); });
    m.def("build_Pi", &build_Pi);

    py::class_<StepParams>(m, "StepParams")
        .def_readonly("j", &StepParams::j)
        .def_readonly("s", &StepParams::s)
        .def_readonly("rho", &StepParams::rho)
        .def_readonly("r", &StepParams::r)
        .def_readonly("alpha_j", &StepParams::alpha_j)
        .def_readonly("E", &StepParams::E)
        .def_readonly("eps", &StepParams::eps)
        .def_readonly("eta", &StepParams::eta)
        .def_readonly("K", &StepParams::K)
        .def_readonly("tau_prime", &StepParams::tau_prime)
        .def_readonly("gamma", &StepParams::gamma);

    m.def("tau_prime_of", &tau_prime_of);
    m.def("init_schedule", &init_schedule, py::arg("s"), py::arg("r"), py::arg("alpha"),
          py::arg("tau"), py::arg("n"), py::arg("m"), py::arg("gamma"),
          py::arg("eps_input"));
    m.def("advance_schedule", &advance_schedule);

    py::class_<Hamiltonian>(m, "Hamiltonian")
        .def(py::init([](std::vector<std::vector<double>> omega, FTSeries P) {
                 Hamiltonian H{std::move(omega), std::move(P), {}};
                 H.energy.assign(H.P.n_samples, 0.0);
                 return H;
             }),
             py::arg("omega"), py::arg("P"))
        .def_readwrite("omega", &Hamiltonian::omega)
        .def_readwrite("P", &Hamiltonian::P)
        .def_readwrite("energy", &Hamiltonian::energy);

    m.def("solve_homological", &solve_homological);

    py::class_<LieResult>(m, "LieResult")
        .def_readonly("series", &LieResult::series)
        .def_readonly("tail_estimate", &LieResult::tail_estimate);
    m.def("lie_transform", &lie_transform, py::arg("H"), py::arg("F"), py::arg("j_max"),
          py::arg("np"), py::arg("drop_tol") = 0.0);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("kmax_mult", &RunConfig::kmax_mult)
        .def_readwrite("d_max", &RunConfig::d_max)
        .def_readwrite("drop_tol", &RunConfig::drop_tol)
        .def_readwrite("j_max", &RunConfig::j_max)
        .def_readwrite("c_growth", &RunConfig::c_growth)
        .def_readwrite("stop_tol", &RunConfig::stop_tol)
        .def_readwrite("j_stop", &RunConfig::j_stop)
        .def_readwrite("kcheck_mult", &RunConfig::kcheck_mult)
        .def_readwrite("gamma", &RunConfig::gamma)
        .def_readwrite("theta_grid", &RunConfig::theta_grid)
        .def_readwrite("integrator_tol", &RunConfig::integrator_tol);

    py::class_<StepRecord>(m, "StepRecord")
        .def_readonly("j", &StepRecord::j)
        .def_readonly("eps_measured", &StepRecord::eps_measured)
        .def_readonly("eps_schedule", &StepRecord::eps_schedule)
        .def_readonly("K", &StepRecord::K)
        .def_readonly("clean_fraction", &StepRecord::clean_fraction)
        .def_readonly("drift_sup", &StepRecord::drift_sup)
        .def_readonly("c_measured", &StepRecord::c_measured)
        .def_readonly("hom_residual_rel", &StepRecord::hom_residual_rel);

    py::class_<AtlasStage>(m, "AtlasStage")
        .def_readonly("generator", &AtlasStage::generator)
        .def_readonly("params", &AtlasStage::params);
    py::class_<SymplecticAtlas>(m, "SymplecticAtlas")
        .def_readonly("stages", &SymplecticAtlas::stages);

    py::class_<KamRun>(m, "KamRun")
        .def_readonly("history", &KamRun::history)
        .def_readonly("omega_by_step", &KamRun::omega_by_step)
        .def_readonly("clean_by_step", &KamRun::clean_by_step)
        .def_readonly("omega_star", &KamRun::omega_star)
        .def_readonly("energy_star", &KamRun::energy_star)
        .def_readonly("pi_star", &KamRun::pi_star)
        .def_readonly("atlas", &KamRun::atlas)
        .def_readonly("P_star", &KamRun::P_star)
        .def_readonly("completed", &KamRun::completed)
        .def_readonly("abort_reason", &KamRun::abort_reason)
        .def_readonly("eps0_measured", &KamRun::eps0_measured)
        .def_readonly("eps_final_measured", &KamRun::eps_final_measured)
        .def_readonly("kcheck", &KamRun::kcheck);

    m.def("run_kam",
          [](const Hamiltonian& H0, const ParamGrid& grid, double s, double r, double alpha,
             double tau, int m_, const RunConfig& cfg) {
              return run_kam(H0, grid, s, r, alpha, tau, m_, cfg);
          },
          py::arg("H0"), py::arg("grid"), py::arg("s"), py::arg("r"), py::arg("alpha"),
          py::arg("tau"), py::arg("m"), py::arg("cfg"));

    py::class_<Problem>(m, "Problem")
        .def_static("parse", &Problem::parse)
        .def_static("parse_file", &Problem::parse_file)
        .def_readonly("n", &Problem::n)
        .def_readonly("tau", &Problem::tau)
        .def_readonly("alpha", &Problem::alpha)
        .def_readonly("s", &Problem::s)
        .def_readonly("r", &Problem::r)
        .def("make_grid", &Problem::make_grid)
        .def("omega_table", &Problem::omega_table)
        .def("declared_norm", &Problem::declared_norm)
        .def("build_hamiltonian", &Problem::build_hamiltonian);

    m.def("run_problem",
          [](const std::string& problem_text, const RunConfig& cfg) {
              Problem p = Problem::parse(problem_text);
              ParamGrid grid = p.make_grid();
              Hamiltonian H0 = p.build_hamiltonian(grid, cfg);
              return run_kam(H0, grid, p.s, p.r, p.alpha, p.tau, p.m, cfg);
          },
          py::arg("problem_text"), py::arg("cfg") = RunConfig{});

    py::class_<MapEvaluation>(m, "MapEvaluation")
        .def_readonly("theta_out", &MapEvaluation::theta_out)
        .def_readonly("action_out", &MapEvaluation::action_out)
        .def_readonly("theta_out_mod", &MapEvaluation::theta_out_mod);
    py::class_<ResidualReport>(m, "ResidualReport")
        .def_readonly("sup_residual", &ResidualReport::sup_residual)
        .def_readonly("grid", &ResidualReport::grid)
        .def_readonly("clean_sample", &ResidualReport::clean_sample)
        .def_readonly("warning", &ResidualReport::warning);

    m.def("eval_atlas",
          [](const SymplecticAtlas& atlas, size_t sample, const std::vector<double>& theta,
             const std::vector<double>& action, double tol) {
              return eval_atlas(atlas, sample, theta, action, tol);
          },
          py::arg("atlas"), py::arg("sample"), py::arg("theta"), py::arg("action"),
          py::arg("tol") = 1e-12);
    m.def("symplectic_check", &symplectic_check, py::arg("atlas"), py::arg("sample"),
          py::arg("points"), py::arg("fd_step") = 1e-6, py::arg("tol") = 1e-12);
    py::class_<ConjugacyGrid>(m, "ConjugacyGrid")
        .def(py::init<>())
        .def_readwrite("theta_per_axis", &ConjugacyGrid::theta_per_axis)
        .def_readwrite("action_points", &ConjugacyGrid::action_points)
        .def_readwrite("action_radius", &ConjugacyGrid::action_radius);
    m.def("conjugacy_residual", &conjugacy_residual, py::arg("H0"), py::arg("Hstar"),
          py::arg("atlas"), py::arg("sample"), py::arg("clean"), py::arg("grid"),
          py::arg("tol") = 1e-12);
    m.def("torus_residual",
          [](const Hamiltonian& H0, const std::vector<double>& omega_star,
             const SymplecticAtlas& atlas, size_t sample, int theta_per_axis,
             bool check_stability, double tol) {
              return torus_residual(H0, omega_star, atlas, sample, theta_per_axis,
                                    check_stability, tol);
          },
          py::arg("H0"), py::arg("omega_star"), py::arg("atlas"), py::arg("sample"),
          py::arg("theta_per_axis") = 64, py::arg("check_stability") = true,
          py::arg("tol") = 1e-12);

    py::class_<FreqMap>(m, "FreqMap")
        .def_static("from_exprs", &FreqMap::from_exprs, py::arg("components"),
                    py::arg("dim_in"))
        .def("set_perturbation_table", &FreqMap::set_perturbation_table)
        .def("set_perturbation",
             [](FreqMap& f, const std::vector<std::string>& comps) {
                 std::vector<Expr> es;
                 for (const auto& c : comps) es.push_back(Expr::parse_xi(c, f.dim_in()));
                 f.set_perturbation(std::move(es));
             })
        .def("eval", [](const FreqMap& f, const std::vector<double>& xi) { return f.eval(xi); })
        .def("jacobian",
             [](const FreqMap& f, const std::vector<double>& xi) { return f.jacobian(xi); });

    py::class_<RankReport>(m, "RankReport")
        .def_readonly("rank_jacobian", &RankReport::rank_jacobian)
        .def_readonly("rank_augmented", &RankReport::rank_augmented);
    m.def("rank_tests", [](const FreqMap& f, const std::vector<double>& xi) {
        return rank_tests(f, xi);
    });

    py::class_<DegreeResult>(m, "DegreeResult")
        .def_readonly("degree", &DegreeResult::degree)
        .def_readonly("boundary_margin", &DegreeResult::boundary_margin)
        .def_readonly("stable", &DegreeResult::stable)
        .def_readonly("preimages", &DegreeResult::preimages);
    m.def("brouwer_degree",
          [](const FreqMap& f, const std::vector<double>& lo, const std::vector<double>& hi,
             const std::vector<double>& target) { return brouwer_degree(f, lo, hi, target); });

    py::class_<DilationSolution>(m, "DilationSolution")
        .def_readonly("xi_star", &DilationSolution::xi_star)
        .def_readonly("lambda_", &DilationSolution::lambda)
        .def_readonly("residual", &DilationSolution::residual);
    m.def("solve_dilation",
          [](const FreqMap& f, const std::vector<double>& lo, const std::vector<double>& hi,
             const std::vector<double>& omega0) {
              return solve_dilation(f, lo, hi, omega0);
          });

    py::class_<Interval>(m, "Interval")
        .def_readonly("lo", &Interval::lo)
        .def_readonly("hi", &Interval::hi);
    py::class_<MeasureReport>(m, "MeasureReport")
        .def_readonly("bad_measure", &MeasureReport::bad_measure)
        .def_readonly("bad_intervals", &MeasureReport::bad_intervals)
        .def_readonly("measures", &MeasureReport::measures)
        .def_readonly("fitted_exponent", &MeasureReport::fitted_exponent)
        .def_readonly("admissible", &MeasureReport::admissible);
    m.def("resonance_measure_2d",
          [](const std::vector<double>& omega0, double alpha, double tau, double lambda0,
             long long K) { return resonance_measure_2d(omega0, alpha, tau, lambda0, K); });
    m.def("dio_window_1d",
          [](const std::vector<double>& omega0, double nu0, double mu0,
             const std::function<double(double)>& muhat, double alpha, double tau,
             double sigma, long long K) {
              return dio_window_1d(omega0, nu0, mu0, muhat, alpha, tau, sigma, K);
          });

    py::class_<BrunoFamily>(m, "BrunoFamily")
        .def_readonly("etas", &BrunoFamily::etas)
        .def_readonly("xi_stars", &BrunoFamily::xi_stars)
        .def_readonly("lambdas", &BrunoFamily::lambdas)
        .def_readonly("fit_C", &BrunoFamily::fit_C)
        .def_readonly("sigma", &BrunoFamily::sigma);
    m.def("bruno_family",
          [](const FreqMap& f, const std::vector<double>& lo, const std::vector<double>& hi,
             const std::vector<double>& xi0, double delta0, int steps) {
              return bruno_family(f, lo, hi, xi0, delta0, steps);
          },
          py::arg("omega"), py::arg("lo"), py::arg("hi"), py::arg("xi0"), py::arg("delta0"),
          py::arg("steps") = 9);

    py::class_<EllipticDilation>(m, "EllipticDilation")
        .def_readonly("lambda_", &EllipticDilation::lambda)
        .def_readonly("varpi", &EllipticDilation::varpi)
        .def_readonly("residual", &EllipticDilation::residual)
        .def_readonly("admissible_measure", &EllipticDilation::admissible_measure)
        .def_readonly("membership", &EllipticDilation::membership);
    m.def("elliptic_dilation",
          [](const std::vector<double>& omega0, const std::vector<double>& beta,
             const std::vector<std::vector<double>>& M, const FreqMap& omega_hat,
             const FreqMap& Omega_hat, const std::vector<double>& lo,
             const std::vector<double>& hi, double alpha, double tau, double sigma,
             long long K) {
              return elliptic_dilation(omega0, beta, M, omega_hat, Omega_hat, lo, hi, alpha,
                                       tau, sigma, K);
          });

    py::class_<RatioDegreeResult>(m, "RatioDegreeResult")
        .def_readonly("xi_star", &RatioDegreeResult::xi_star)
        .def_readonly("lambda_", &RatioDegreeResult::lambda)
        .def_readonly("residual", &RatioDegreeResult::residual)
        .def_property_readonly("degree",
                               [](const RatioDegreeResult& r) { return r.degree.degree; });
    m.def("ratio_degree",
          [](const FreqMap& omega, const FreqMap& Omega, const std::vector<double>& lo,
             const std::vector<double>& hi, const std::vector<double>& xi0) {
              return ratio_degree(omega, Omega, lo, hi, xi0);
          });
}
