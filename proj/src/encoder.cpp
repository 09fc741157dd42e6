#include "era/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "era/rng.hpp"

namespace era {

namespace {

int kind_index(IntruderKind k) {
    switch (k) {
        case IntruderKind::TypeA: return 0;
        case IntruderKind::TypeB: return 1;
        default: return 2;
    }
}

void check_finite(const EventList& events) {
    auto bad = [](const Vec3& v) { return !v.finite(); };
    for (const auto& e : events.elements) {
        if (bad(e.rel_position) || bad(e.rel_velocity) || !std::isfinite(e.risk))
            throw std::invalid_argument("featurize: non-finite event element");
    }
    if (bad(events.global.self_velocity) || bad(events.global.target_unit) ||
        !std::isfinite(events.global.speed) || !std::isfinite(events.global.target_distance))
        throw std::invalid_argument("featurize: non-finite global state");
}

}  // namespace

Eigen::MatrixXd featurize_elements(const EventList& events, const FeatureScales& scales) {
    check_finite(events);
    const double sp = 1.0 / scales.d_threshold;
    const double sv = 1.0 / scales.v_max;
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(events.elements.size()), kElementWidth);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const auto& e = events.elements[static_cast<std::size_t>(i)];
        rows(i, 0) = e.rel_position.x * sp;
        rows(i, 1) = e.rel_position.y * sp;
        rows(i, 2) = e.rel_position.z * sp;
        rows(i, 3) = e.rel_velocity.x * sv;
        rows(i, 4) = e.rel_velocity.y * sv;
        rows(i, 5) = e.rel_velocity.z * sv;
        rows(i, 6) = 0.0;
        rows(i, 7) = 0.0;
        rows(i, 8) = 0.0;
        rows(i, 6 + kind_index(e.kind)) = 1.0;
        rows(i, 9) = e.risk;
    }
    return rows;
}

Eigen::VectorXd featurize_global(const EventList& events, const FeatureScales& scales) {
    check_finite(events);
    const double sp = 1.0 / scales.d_threshold;
    const double sv = 1.0 / scales.v_max;
    Eigen::VectorXd g(kGlobalWidth);
    const auto& gs = events.global;
    g << gs.self_velocity.x * sv, gs.self_velocity.y * sv, gs.self_velocity.z * sv,
        gs.speed * sv, gs.target_unit.x, gs.target_unit.y, gs.target_unit.z,
        gs.target_distance * sp;
    return g;
}

EncoderParams EncoderParams::random_init(std::uint64_t seed, const FeatureScales& scales) {
    Rng rng(seed);
    auto xavier = [&rng](Eigen::Index rows, Eigen::Index cols) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
        return m;
    };
    EncoderParams p;
    p.scales = scales;
    p.w_phi = xavier(kHiddenDim, kElementWidth);
    p.b_phi = Eigen::VectorXd::Zero(kHiddenDim);
    p.w_rho = xavier(kLatentDim, kHiddenDim + kGlobalWidth);
    p.b_rho = Eigen::VectorXd::Zero(kLatentDim);
    p.w_imit = xavier(3, kLatentDim);
    p.b_imit = Eigen::VectorXd::Zero(3);
    return p;
}

std::size_t EncoderParams::parameter_count() const {
    return static_cast<std::size_t>(w_phi.size() + b_phi.size() + w_rho.size() + b_rho.size() +
                                    w_imit.size() + b_imit.size());
}

namespace {

// Forward pass with the activations needed for backprop.
struct ForwardCache {
    Eigen::MatrixXd feats;   // N x 10
    Eigen::MatrixXd tanh_h;  // N x h
    Eigen::VectorXd pooled;  // h
    Eigen::VectorXd concat;  // h + 8
    Eigen::VectorXd z;       // d
};

ForwardCache forward(const EncoderParams& p, const EventList& events) {
    ForwardCache c;
    c.feats = featurize_elements(events, p.scales);
    const Eigen::Index n = c.feats.rows();
    c.tanh_h.resize(n, kHiddenDim);
    c.pooled = Eigen::VectorXd::Zero(kHiddenDim);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd u = p.w_phi * c.feats.row(i).transpose() + p.b_phi;
        c.tanh_h.row(i) = u.array().tanh().matrix().transpose();
        c.pooled += c.tanh_h.row(i).transpose();
    }
    if (n > 0) c.pooled /= static_cast<double>(n);
    c.concat.resize(kHiddenDim + kGlobalWidth);
    c.concat << c.pooled, featurize_global(events, p.scales);
    c.z = p.w_rho * c.concat + p.b_rho;
    return c;
}

// Accumulates parameter gradients given dL/dz for one sample.
void backward(const EncoderParams& p, const ForwardCache& c, const Eigen::VectorXd& dz,
              EncoderGrads& g) {
    g.w_rho += dz * c.concat.transpose();
    g.b_rho += dz;
    const Eigen::VectorXd dconcat = p.w_rho.transpose() * dz;
    const Eigen::Index n = c.feats.rows();
    if (n == 0) return;
    const Eigen::VectorXd dmean = dconcat.head(kHiddenDim) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::ArrayXd t = c.tanh_h.row(i).transpose().array();
        const Eigen::VectorXd du = (dmean.array() * (1.0 - t * t)).matrix();
        g.w_phi += du * c.feats.row(i);
        g.b_phi += du;
    }
}

}  // namespace

Eigen::VectorXd encode(const EncoderParams& params, const EventList& events) {
    if (params.w_phi.rows() != kHiddenDim || params.w_rho.rows() != kLatentDim)
        throw std::invalid_argument("encode: parameter dimension mismatch");
    return forward(params, events).z;
}

double d_phys_env(const EventList& a, const EventList& b, const FeatureScales& scales,
                  const DPhysOptions& opts) {
    const Eigen::MatrixXd fa = featurize_elements(a, scales);
    const Eigen::MatrixXd fb = featurize_elements(b, scales);

    auto element_dist = [](const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& y,
                           Eigen::Index j) {
        const double dp = (x.row(i).segment(0, 3) - y.row(j).segment(0, 3)).norm();
        const double dv = (x.row(i).segment(3, 3) - y.row(j).segment(3, 3)).norm();
        return dp + 0.5 * dv;
    };

    // Mean over elements per side; an element matched against an empty set
    // costs empty_cost.
    auto side = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        if (x.rows() == 0) return 0.0;
        double total = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (y.rows() == 0) {
                total += opts.empty_cost;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < y.rows(); ++j)
                best = std::min(best, element_dist(x, i, y, j));
            total += best;
        }
        return total / static_cast<double>(x.rows());
    };

    const double global_term =
        opts.global_weight * (featurize_global(a, scales) - featurize_global(b, scales)).norm();
    return side(fa, fb) + side(fb, fa) + global_term;
}

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& p) {
    EncoderGrads g;
    g.w_phi = Eigen::MatrixXd::Zero(p.w_phi.rows(), p.w_phi.cols());
    g.b_phi = Eigen::VectorXd::Zero(p.b_phi.size());
    g.w_rho = Eigen::MatrixXd::Zero(p.w_rho.rows(), p.w_rho.cols());
    g.b_rho = Eigen::VectorXd::Zero(p.b_rho.size());
    g.w_imit = Eigen::MatrixXd::Zero(p.w_imit.rows(), p.w_imit.cols());
    g.b_imit = Eigen::VectorXd::Zero(p.b_imit.size());
    return g;
}

void EncoderGrads::scale(double s) {
    w_phi *= s;
    b_phi *= s;
    w_rho *= s;
    b_rho *= s;
    w_imit *= s;
    b_imit *= s;
}

namespace {

struct BatchEval {
    double loss = 0.0;
    std::vector<ForwardCache> caches;
    std::vector<Eigen::VectorXd> dz;  // per batch item, empty when grads not wanted
};

BatchEval eval_batch(const EncoderParams& params, const std::vector<TrainingSample>& samples,
                     const std::vector<std::size_t>& batch,
                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                     const PretrainHyper& hyper, bool want_grads, EncoderGrads* grads) {
    BatchEval ev;
    const std::size_t b = batch.size();
    if (b == 0) throw std::invalid_argument("pretrain: empty batch");

    ev.caches.reserve(b);
    for (const std::size_t idx : batch) ev.caches.push_back(forward(params, samples[idx].event));
    if (want_grads) ev.dz.assign(b, Eigen::VectorXd::Zero(kLatentDim));

    // Imitation: mean squared action error through the auxiliary head.
    if (hyper.lambda_i > 0.0) {
        for (std::size_t i = 0; i < b; ++i) {
            const Vec3& target = samples[batch[i]].expert_action;
            Eigen::Vector3d t(target.x, target.y, target.z);
            const Eigen::VectorXd pred = params.w_imit * ev.caches[i].z + params.b_imit;
            const Eigen::VectorXd err = pred - t;
            ev.loss += hyper.lambda_i * err.squaredNorm() / static_cast<double>(b);
            if (want_grads) {
                const Eigen::VectorXd dpred =
                    (2.0 * hyper.lambda_i / static_cast<double>(b)) * err;
                grads->w_imit += dpred * ev.caches[i].z.transpose();
                grads->b_imit += dpred;
                ev.dz[i] += params.w_imit.transpose() * dpred;
            }
        }
    }

    // Metric alignment: latent distance tracks the physical distance.
    if (hyper.lambda_m > 0.0 && !pairs.empty()) {
        const double pn = static_cast<double>(pairs.size());
        for (const auto& [pi, pj] : pairs) {
            const Eigen::VectorXd diff = ev.caches[pi].z - ev.caches[pj].z;
            const double u = diff.norm();
            const double target = d_phys_env(samples[batch[pi]].event, samples[batch[pj]].event,
                                             params.scales);
            ev.loss += hyper.lambda_m * std::abs(u - target) / pn;
            if (want_grads && u > 1e-12) {
                const double sign = u > target ? 1.0 : (u < target ? -1.0 : 0.0);
                const Eigen::VectorXd d = (hyper.lambda_m * sign / (pn * u)) * diff;
                ev.dz[pi] += d;
                ev.dz[pj] -= d;
            }
        }
    }

    // Isotropy: batch-mean latent energy pulled toward 1.
    if (hyper.iso_weight > 0.0) {
        double mean_sq = 0.0;
        for (const auto& c : ev.caches) mean_sq += c.z.squaredNorm();
        mean_sq /= static_cast<double>(b);
        ev.loss += hyper.iso_weight * (mean_sq - 1.0) * (mean_sq - 1.0);
        if (want_grads) {
            const double coeff =
                hyper.iso_weight * 2.0 * (mean_sq - 1.0) * 2.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) ev.dz[i] += coeff * ev.caches[i].z;
        }
    }

    if (want_grads) {
        for (std::size_t i = 0; i < b; ++i) backward(params, ev.caches[i], ev.dz[i], *grads);
    }
    return ev;
}

}  // namespace

double batch_loss(const EncoderParams& params, const std::vector<TrainingSample>& samples,
                  const std::vector<std::size_t>& batch,
                  const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                  const PretrainHyper& hyper) {
    return eval_batch(params, samples, batch, pairs, hyper, false, nullptr).loss;
}

double batch_loss_and_grad(const EncoderParams& params,
                           const std::vector<TrainingSample>& samples,
                           const std::vector<std::size_t>& batch,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                           const PretrainHyper& hyper, EncoderGrads& grads) {
    return eval_batch(params, samples, batch, pairs, hyper, true, &grads).loss;
}

PretrainResult pretrain(const std::vector<TrainingSample>& dataset, const PretrainHyper& hyper,
                        const FeatureScales& scales) {
    if (dataset.empty()) throw std::invalid_argument("pretrain: dataset is empty");
    if (hyper.lambda_m < 0.0 || hyper.lambda_i < 0.0 ||
        (hyper.lambda_m == 0.0 && hyper.lambda_i == 0.0))
        throw std::invalid_argument("pretrain: loss weights must be >= 0 and not both zero");

    PretrainResult result;
    result.params = EncoderParams::random_init(substream_seed(hyper.seed, "init"), scales);
    EncoderGrads vel = EncoderGrads::zeros_like(result.params);

    Rng rng = substream(hyper.seed, "pretrain");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const int batch_size = std::max(1, hyper.batch_size);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        // Fisher-Yates with the project rng keeps the shuffle portable.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = rng.uniform_int(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);

            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            if (batch.size() >= 2 && hyper.lambda_m > 0.0) {
                pairs.reserve(static_cast<std::size_t>(hyper.pairs_per_batch));
                for (int p = 0; p < hyper.pairs_per_batch; ++p) {
                    const std::size_t i = rng.uniform_int(batch.size());
                    std::size_t j = rng.uniform_int(batch.size() - 1);
                    if (j >= i) ++j;
                    pairs.emplace_back(i, j);
                }
            }

            EncoderGrads grads = EncoderGrads::zeros_like(result.params);
            const double loss =
                batch_loss_and_grad(result.params, dataset, batch, pairs, hyper, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error("pretrain: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches) +
                                         "; reduce the learning rate");
            epoch_loss += loss;
            ++batches;

            auto sgd = [&](Eigen::MatrixXd& v, const Eigen::MatrixXd& g, Eigen::MatrixXd& p) {
                v = hyper.momentum * v - hyper.learning_rate * g;
                p += v;
            };
            auto sgd_v = [&](Eigen::VectorXd& v, const Eigen::VectorXd& g, Eigen::VectorXd& p) {
                v = hyper.momentum * v - hyper.learning_rate * g;
                p += v;
            };
            sgd(vel.w_phi, grads.w_phi, result.params.w_phi);
            sgd_v(vel.b_phi, grads.b_phi, result.params.b_phi);
            sgd(vel.w_rho, grads.w_rho, result.params.w_rho);
            sgd_v(vel.b_rho, grads.b_rho, result.params.b_rho);
            sgd(vel.w_imit, grads.w_imit, result.params.w_imit);
            sgd_v(vel.b_imit, grads.b_imit, result.params.b_imit);
        }
        result.loss_curve.push_back(epoch_loss / std::max(1, batches));
    }
    return result;
}

}  // namespace era
