#pragma once

#include <string>

namespace kamnorm {

/// Run configuration shared by the engine, the verifier and the CLI.  Every
/// report embeds the resolved values.
struct RunConfig {
    // series caps
    int kmax_mult = 4;       // K_max = kmax_mult * K_0
    int d_max = 3;
    double drop_tol = 1e-40; // sub-threshold product terms go to the residual

    // engine
    int j_max = 6;           // Lie series order
    double c_growth = 10.0;  // E_{j+1} = c_growth * E_j^{3/2}
    double stop_tol = 0.0;   // 0 selects 1e-14 * eps_0
    int j_stop = 8;
    int kcheck_mult = 4;     // K for the final membership scan = mult * K_last
    double gamma = 0.0;      // 0 selects the smallest admissible value

    // verifier
    int theta_grid = 64;          // torus residual grid per axis
    int conj_theta_grid = 32;     // conjugacy grid per angle axis
    int conj_action_points = 5;
    double integrator_tol = 1e-12;
    double fd_step = 1e-6;        // symplectic-check differencing step
    int symplectic_points = 20;

    std::string to_text() const;
    static RunConfig from_text(const std::string& text);
};

} // namespace kamnorm
