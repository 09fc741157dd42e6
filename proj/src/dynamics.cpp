#include "era/dynamics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace era {

double spectral_norm(const Eigen::MatrixXd& m, int iters, double tol) {
    if (m.size() == 0) return 0.0;
    const Eigen::MatrixXd mtm = m.transpose() * m;
    const Eigen::Index n = mtm.rows();

    // Fixed non-degenerate start vector keeps the estimate deterministic.
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 1e-3 * static_cast<double>(i);
    v.normalize();

    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = mtm * v;
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        w /= wn;
        const double next = w.dot(mtm * w);  // Rayleigh quotient
        if (it > 0 && std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) {
            lambda = next;
            break;
        }
        lambda = next;
        v = w;
    }
    return std::sqrt(std::max(0.0, lambda));
}

Eigen::MatrixXd project_spectral(Eigen::MatrixXd psi, double gamma) {
    if (!psi.allFinite()) throw std::invalid_argument("project_spectral: non-finite matrix");
    // Rescale-and-remeasure: the power-iteration estimate can sit a hair
    // below the true value, so one pass is not always enough.
    for (int round = 0; round < 4; ++round) {
        const double sigma = spectral_norm(psi);
        if (sigma <= gamma * (1.0 + 1e-12)) break;
        psi *= gamma / sigma;
    }
    return psi;
}

TransitionModel fit_dynamics(const std::vector<LatentTriple>& triples, double ridge,
                             double contraction) {
    if (triples.empty()) throw std::invalid_argument("fit_dynamics: no triples");
    const Eigen::Index d = triples.front().z.size();
    const Eigen::Index aug = d + 3;
    if (static_cast<Eigen::Index>(triples.size()) < aug)
        throw std::invalid_argument("fit_dynamics: need at least d + 3 = " + std::to_string(aug) +
                                    " triples, got " + std::to_string(triples.size()));

    // Normal equations for Theta = [Psi Gamma]: (X^T X + ridge I) Theta^T = X^T Y.
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(aug, aug);
    Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(aug, d);
    Eigen::VectorXd x(aug);
    for (const auto& t : triples) {
        if (t.z.size() != d || t.z_next.size() != d)
            throw std::invalid_argument("fit_dynamics: inconsistent latent dimensions");
        x.head(d) = t.z;
        x(d) = t.action.x;
        x(d + 1) = t.action.y;
        x(d + 2) = t.action.z;
        xtx.noalias() += x * x.transpose();
        xty.noalias() += x * t.z_next.transpose();
    }
    xtx.diagonal().array() += ridge;

    const Eigen::LDLT<Eigen::MatrixXd> solver(xtx);
    if (solver.info() != Eigen::Success || (ridge == 0.0 && !solver.isPositive()))
        throw std::runtime_error(
            "fit_dynamics: normal matrix is singular; use a positive ridge");
    const Eigen::MatrixXd theta = solver.solve(xty).transpose();  // d x (d + 3)

    TransitionModel model;
    model.contraction = contraction;
    model.psi = project_spectral(theta.leftCols(d), contraction);
    model.gamma = theta.rightCols(3);
    model.sigma_max = spectral_norm(model.psi);
    return model;
}

Eigen::VectorXd predict(const TransitionModel& model, const Eigen::VectorXd& z, const Vec3& a) {
    Eigen::Vector3d av(a.x, a.y, a.z);
    return model.psi * z + model.gamma * av;
}

double lyapunov_delta(const TransitionModel& model, const Eigen::VectorXd& z, const Vec3& a) {
    return predict(model, z, a).squaredNorm() - z.squaredNorm();
}

}  // namespace era
