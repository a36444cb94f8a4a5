#pragma once

#include "kamnorm/expr.hpp"
#include "kamnorm/kam.hpp"

namespace kamnorm {

/// One declared perturbation term c(xi) e^{i<k,theta>} I^l.  Reality is
/// enforced on load: the mirror coefficient at -k is the conjugate; when
/// both k and -k are declared they must agree.
struct PerturbationTerm {
    std::vector<int> k;
    std::vector<int> l;
    Expr re, im; // im optional (absent -> 0)
    bool has_im = false;
};

/// Parsed problem statement: phase dimension, norm parameters, parameter
/// grid, frequency map and perturbation, plus an optional elliptic block
/// used by the frequency-geometry tools.
struct Problem {
    int n = 0;
    int m = 0; // parameter smoothness order; only m = 0 is implemented
    double tau = 0, alpha = 0, s = 0, r = 0;

    std::vector<double> box_lo, box_hi;
    std::vector<int> grid_shape;
    std::vector<Expr> omega; // n expressions in xi1..xid

    std::vector<PerturbationTerm> terms;

    // optional elliptic data
    int nbar = 0;
    std::vector<double> beta;
    std::vector<std::vector<double>> M; // n rows, nbar columns

    std::string source_text;

    static Problem parse(const std::string& text);
    static Problem parse_file(const std::string& path);

    ParamGrid make_grid() const;
    std::vector<std::vector<double>> omega_table(const ParamGrid& grid) const;

    /// Declared perturbation norm sum |c| e^{s|k|} r^{|l|} (with mirrors),
    /// sup over grid samples.  Matches the majorant of the built series.
    double declared_norm(const ParamGrid& grid) const;

    /// Builds the Hamiltonian with caps sized from the schedule
    /// (K_max = kmax_mult * K_0 but at least the declared modes).
    /// Throws HypothesisError when the smallness bound refuses the run.
    Hamiltonian build_hamiltonian(const ParamGrid& grid, const RunConfig& cfg) const;
};

std::string config_to_text(const RunConfig& cfg);
RunConfig config_from_text(const std::string& text);
RunConfig config_from_file(const std::string& path);

} // namespace kamnorm
