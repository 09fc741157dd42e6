#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "era/events.hpp"
#include "era/vec3.hpp"

namespace era {

inline constexpr int kElementWidth = 10;  // rel pos (3) + rel vel (3) + kind (3) + risk
inline constexpr int kGlobalWidth = 8;    // self vel (3) + speed + target unit (3) + distance
inline constexpr int kLatentDim = 32;
inline constexpr int kHiddenDim = 64;

// Normalization constants baked into the encoder so a serialized model is
// self-contained: positions scale by 1/d_threshold, velocities by 1/v_max.
struct FeatureScales {
    double d_threshold = 10.0;
    double v_max = 5.0;
};

// Element rows in arbitrary order; downstream must be order-insensitive.
Eigen::MatrixXd featurize_elements(const EventList& events, const FeatureScales& scales);
Eigen::VectorXd featurize_global(const EventList& events, const FeatureScales& scales);

// Mean-pooled set encoder: z = rho(concat(mean_i tanh(phi(e_i)), global)).
// The imitation head is used during pretraining only.
struct EncoderParams {
    FeatureScales scales;
    Eigen::MatrixXd w_phi;   // h x 10
    Eigen::VectorXd b_phi;   // h
    Eigen::MatrixXd w_rho;   // d x (h + 8)
    Eigen::VectorXd b_rho;   // d
    Eigen::MatrixXd w_imit;  // 3 x d
    Eigen::VectorXd b_imit;  // 3

    static EncoderParams random_init(std::uint64_t seed, const FeatureScales& scales);
    std::size_t parameter_count() const;
};

Eigen::VectorXd encode(const EncoderParams& params, const EventList& events);

// Kinematically informed distance between two environment states: symmetric
// mean Chamfer matching over elements (|dp|/d_threshold + 0.5*|dv|/v_max per
// match, empty_cost per element unmatched against an empty set) plus a
// weighted distance between the scaled global vectors.
struct DPhysOptions {
    double empty_cost = 1.0;
    double global_weight = 0.5;
};

double d_phys_env(const EventList& a, const EventList& b, const FeatureScales& scales,
                  const DPhysOptions& opts = {});

struct TrainingSample {
    EventList event;
    Vec3 expert_action;
};

struct PretrainHyper {
    double lambda_m = 1.0;     // metric-alignment weight
    double lambda_i = 1.0;     // imitation weight
    double iso_weight = 1e-3;  // soft pull of batch-mean |z|^2 toward 1
    double learning_rate = 0.02;
    double momentum = 0.9;
    int batch_size = 64;
    int epochs = 30;
    int pairs_per_batch = 64;
    std::uint64_t seed = 0;
};

// Flat gradient container mirroring EncoderParams.
struct EncoderGrads {
    Eigen::MatrixXd w_phi;
    Eigen::VectorXd b_phi;
    Eigen::MatrixXd w_rho;
    Eigen::VectorXd b_rho;
    Eigen::MatrixXd w_imit;
    Eigen::VectorXd b_imit;

    static EncoderGrads zeros_like(const EncoderParams& p);
    void scale(double s);
};

// Loss of one batch: imitation + metric over the given index pairs +
// isotropy. Exposed as a pure function so gradients can be finite-checked.
double batch_loss(const EncoderParams& params, const std::vector<TrainingSample>& samples,
                  const std::vector<std::size_t>& batch,
                  const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                  const PretrainHyper& hyper);

// Same forward pass with analytic gradients accumulated into grads.
double batch_loss_and_grad(const EncoderParams& params,
                           const std::vector<TrainingSample>& samples,
                           const std::vector<std::size_t>& batch,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                           const PretrainHyper& hyper, EncoderGrads& grads);

struct PretrainResult {
    EncoderParams params;
    std::vector<double> loss_curve;  // per-epoch mean of minibatch losses
};

// Mini-batch gradient descent with momentum over the combined objective.
// Throws std::runtime_error with diagnostics if the loss diverges.
PretrainResult pretrain(const std::vector<TrainingSample>& dataset, const PretrainHyper& hyper,
                        const FeatureScales& scales);

}  // namespace era
