#pragma once

#include "kamnorm/kam.hpp"

namespace kamnorm {

/// Map evaluation through the atlas, with the angle image also reduced
/// mod 2 pi for reporting.
struct MapEvaluation {
    std::vector<double> theta_in, action_in;
    std::vector<double> theta_out, action_out;
    std::vector<double> theta_out_mod;
    std::vector<std::vector<double>> stage_log; // state after each stage flow
};

/// Residual summary over an evaluation grid.  Residuals are exact sups over
/// the reported grid; rows hold one line per grid point for CSV emission.
struct ResidualReport {
    double sup_residual = 0;
    std::vector<int> grid;
    double fd_step = 0;
    double integrator_tol = 0;
    bool clean_sample = true;
    std::string warning;
    std::vector<std::pair<std::vector<double>, double>> rows; // point -> residual
};

/// Applies each stage's time-1 generator flow (newest stage first, matching
/// the composition order of the engine) by adaptive high-order integration
/// of theta' = dF/dI, I' = -dF/dtheta.
MapEvaluation eval_atlas(const SymplecticAtlas& atlas, size_t sample,
                         std::span<const double> theta, std::span<const double> action,
                         double integrator_tol = 1e-12);

/// sup |DPhi^T J DPhi - J| over the given points, DPhi by central
/// differences of the integrated flow.
ResidualReport symplectic_check(const SymplecticAtlas& atlas, size_t sample,
                                const std::vector<std::vector<double>>& points,
                                double fd_step = 1e-6, double integrator_tol = 1e-12);

struct ConjugacyGrid {
    int theta_per_axis = 32;
    int action_points = 5;
    double action_radius = 0; // 0 selects r/4 of the initial step
};

/// sup over a real grid in D(s/2, r/4) of |H0 o Phi - H_*|.
ResidualReport conjugacy_residual(const Hamiltonian& H0, const Hamiltonian& Hstar,
                                  const SymplecticAtlas& atlas, size_t sample,
                                  bool clean, const ConjugacyGrid& grid,
                                  double integrator_tol = 1e-12);

/// Invariance-equation residual sup_theta |X_H0(K(theta)) - DK(theta) omega_*|
/// with K(theta) the torus embedding eval_atlas(theta, 0) and DK by
/// fourth-order central differences on the periodic theta lattice.
/// The report carries the residual at the halved lattice in rows.back()
/// when check_stability is set.
ResidualReport torus_residual(const Hamiltonian& H0, std::span<const double> omega_star,
                              const SymplecticAtlas& atlas, size_t sample,
                              int theta_per_axis, bool check_stability = true,
                              double integrator_tol = 1e-12);

/// sup over a grid in D(s/2, r/2) of |W (Phi - id)|_inf with
/// W = diag(rho_0^-1, r_0^-1); reported together with the ratio to E_0.
struct MapBoundReport {
    double sup_weighted = 0;
    double ratio_to_E0 = 0;
    std::vector<int> grid;
};

MapBoundReport map_distance_bound(const SymplecticAtlas& atlas, size_t sample,
                                  double rho0, double r0, double E0,
                                  int theta_per_axis = 16, int action_points = 3,
                                  double integrator_tol = 1e-12);

} // namespace kamnorm
