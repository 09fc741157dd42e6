#pragma once

#include <Eigen/Dense>
#include <vector>

#include "era/vec3.hpp"

namespace era {

// Linear latent transition z' = Psi z + Gamma a with the spectral norm of
// Psi projected below the contraction bound, so the unforced energy |z|^2
// strictly decreases every step.
struct TransitionModel {
    Eigen::MatrixXd psi;    // d x d
    Eigen::MatrixXd gamma;  // d x 3
    double contraction = 0.99;
    double sigma_max = 0.0;  // cached spectral norm of psi after projection
};

struct LatentTriple {
    Eigen::VectorXd z;
    Vec3 action;
    Eigen::VectorXd z_next;
};

// Largest singular value via power iteration on Psi^T Psi (Rayleigh
// quotient, deterministic start vector).
double spectral_norm(const Eigen::MatrixXd& m, int iters = 100, double tol = 1e-10);

// Rescales so the spectral norm does not exceed gamma; verified and repeated
// until the bound holds under re-measurement.
Eigen::MatrixXd project_spectral(Eigen::MatrixXd psi, double gamma = 0.99);

// Ridge least squares [Psi Gamma] over the triples, then spectral projection.
// Requires at least d + 3 triples; ridge = 0 raises on a singular system.
TransitionModel fit_dynamics(const std::vector<LatentTriple>& triples, double ridge = 1e-6,
                             double contraction = 0.99);

Eigen::VectorXd predict(const TransitionModel& model, const Eigen::VectorXd& z, const Vec3& a);

// Lyapunov energy change |z'|^2 - |z|^2 for applying action a in state z.
double lyapunov_delta(const TransitionModel& model, const Eigen::VectorXd& z, const Vec3& a);

}  // namespace era
