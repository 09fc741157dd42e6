#include "era/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace era {

std::vector<TraceCandidate> filter_stable(std::vector<TraceCandidate> candidates,
                                          const Eigen::VectorXd& z, const TransitionModel& model,
                                          double margin, Fallback fallback, bool* expert_signal) {
    if (expert_signal) *expert_signal = false;
    for (auto& c : candidates) {
        c.delta_v = lyapunov_delta(model, z, c.action);
        c.passed = c.delta_v < margin;
    }

    std::vector<TraceCandidate> survivors;
    for (const auto& c : candidates)
        if (c.passed) survivors.push_back(c);

    if (survivors.empty()) {
        if (fallback == Fallback::VpfExpert) {
            if (expert_signal) *expert_signal = true;
            return {};
        }
        // MinDeltaV: keep the single least-destabilizing candidate.
        std::size_t best = 0;
        for (std::size_t i = 1; i < candidates.size(); ++i) {
            if (candidates[i].delta_v < candidates[best].delta_v ||
                (candidates[i].delta_v == candidates[best].delta_v &&
                 candidates[i].id < candidates[best].id))
                best = i;
        }
        survivors.push_back(candidates[best]);
    }

    double total = 0.0;
    for (const auto& c : survivors) total += c.weight;
    for (auto& c : survivors) c.weight_final = total > 0.0 ? c.weight / total : 0.0;
    return survivors;
}

std::vector<TraceCluster> cluster_actions(const std::vector<TraceCandidate>& survivors,
                                          double theta_c) {
    if (survivors.empty()) throw std::invalid_argument("cluster_actions: no candidates");
    for (const auto& c : survivors)
        if (!c.action.finite())
            throw std::invalid_argument("cluster_actions: non-finite action");

    // Greedy leader clustering in (weight desc, id asc) order.
    std::vector<std::size_t> order(survivors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (survivors[a].weight_final != survivors[b].weight_final)
            return survivors[a].weight_final > survivors[b].weight_final;
        return survivors[a].id < survivors[b].id;
    });

    constexpr double kZeroEps = 1e-12;
    std::vector<TraceCluster> clusters;
    std::vector<Vec3> leader_dir;  // unit action of each cluster's founder; zero for zero cluster
    int zero_cluster = -1;

    for (const std::size_t i : order) {
        const auto& cand = survivors[i];
        const double mag = cand.action.norm();
        if (mag < kZeroEps) {
            if (zero_cluster < 0) {
                zero_cluster = static_cast<int>(clusters.size());
                clusters.push_back({{cand.id}, cand.weight_final});
                leader_dir.push_back(Vec3{});
            } else {
                clusters[static_cast<std::size_t>(zero_cluster)].ids.push_back(cand.id);
                clusters[static_cast<std::size_t>(zero_cluster)].aggregate_weight +=
                    cand.weight_final;
            }
            continue;
        }
        const Vec3 dir = cand.action / mag;
        bool joined = false;
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (static_cast<int>(c) == zero_cluster) continue;
            if (dir.dot(leader_dir[c]) >= theta_c) {
                clusters[c].ids.push_back(cand.id);
                clusters[c].aggregate_weight += cand.weight_final;
                joined = true;
                break;
            }
        }
        if (!joined) {
            clusters.push_back({{cand.id}, cand.weight_final});
            leader_dir.push_back(dir);
        }
    }
    return clusters;
}

int select_cluster(const std::vector<TraceCluster>& clusters) {
    if (clusters.empty()) throw std::invalid_argument("select_cluster: no clusters");
    int best = 0;
    for (int c = 1; c < static_cast<int>(clusters.size()); ++c) {
        const auto& lhs = clusters[static_cast<std::size_t>(c)];
        const auto& rhs = clusters[static_cast<std::size_t>(best)];
        if (lhs.aggregate_weight > rhs.aggregate_weight ||
            (lhs.aggregate_weight == rhs.aggregate_weight &&
             lhs.ids.front() < rhs.ids.front()))
            best = c;
    }
    return best;
}

Vec3 fuse(const TraceCluster& cluster, const std::vector<TraceCandidate>& survivors,
          double v_max) {
    if (cluster.ids.empty()) throw std::invalid_argument("fuse: empty cluster");
    Vec3 fused;
    for (const auto id : cluster.ids) {
        const auto it = std::find_if(survivors.begin(), survivors.end(),
                                     [id](const TraceCandidate& c) { return c.id == id; });
        if (it == survivors.end()) throw std::logic_error("fuse: cluster member not a survivor");
        fused += it->action * (it->weight_final / cluster.aggregate_weight);
    }
    return fused.clamped(v_max);
}

DecideResult decide_from_latent(const KnowledgeBank& bank, const TransitionModel& model,
                                const ControllerConfig& cfg, const Eigen::VectorXd& z) {
    if (bank.empty()) throw std::runtime_error("decide: knowledge bank is empty");

    DecideResult result;
    result.trace.z = z;

    std::vector<Candidate> retrieved;
    if (bank.index_built() && bank.index_fresh()) {
        auto ann = bank.search_ann(z, cfg.retrieval.k);
        retrieved = std::move(ann.candidates);
        result.trace.used_ann = true;
    }
    if (retrieved.empty()) {
        retrieved = bank.search_exact(z, cfg.retrieval.k);
        result.trace.used_ann = false;
    }
    retrieved = compute_weights(std::move(retrieved), cfg.retrieval);

    std::vector<TraceCandidate> candidates;
    candidates.reserve(retrieved.size());
    for (const auto& c : retrieved) {
        TraceCandidate tc;
        tc.id = c.id;
        tc.sim = c.sim;
        tc.weight = c.weight;
        tc.action = bank.action_of(c.id);
        candidates.push_back(tc);
    }

    bool expert_signal = false;
    auto survivors =
        filter_stable(std::move(candidates), z, model, cfg.dv_margin, cfg.fallback, &expert_signal);

    // The trace keeps every retrieved candidate with its filter verdict.
    result.trace.candidates.clear();
    for (const auto& c : retrieved) {
        TraceCandidate tc;
        tc.id = c.id;
        tc.sim = c.sim;
        tc.weight = c.weight;
        tc.action = bank.action_of(c.id);
        tc.delta_v = lyapunov_delta(model, z, tc.action);
        tc.passed = tc.delta_v < cfg.dv_margin;
        for (const auto& s : survivors)
            if (s.id == tc.id) tc.weight_final = s.weight_final;
        result.trace.candidates.push_back(tc);
    }

    if (expert_signal) {
        result.use_expert = true;
        result.trace.expert_fallback = true;
        return result;
    }

    result.trace.clusters = cluster_actions(survivors, cfg.theta_c);
    result.trace.winning_cluster = select_cluster(result.trace.clusters);
    result.action = fuse(result.trace.clusters[static_cast<std::size_t>(result.trace.winning_cluster)],
                         survivors, cfg.v_max);
    result.trace.action = result.action;
    return result;
}

DecideResult decide(const KnowledgeBank& bank, const EncoderParams& encoder,
                    const TransitionModel& model, const ControllerConfig& cfg,
                    const EventList& events) {
    if (events.elements.empty())
        throw std::invalid_argument("decide: event list must have at least one element");
    const auto t0 = std::chrono::steady_clock::now();
    DecideResult result = decide_from_latent(bank, model, cfg, encode(encoder, events));
    result.trace.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

double reward(const WorldState& prev, const Vec3& /*action*/, const WorldState& next,
              const EpisodeConfig& cfg) {
    const double sep = min_intruder_separation(next);
    const bool collided = sep < cfg.collision_radius;
    const bool succeeded = distance(next.ego.position, next.ego.goal) < cfg.goal_radius;
    const bool warned = sep < cfg.warning_radius;

    double r = 0.0;
    if (succeeded) r += 1.0;
    if (collided) r -= 1.0;
    if (warned && !collided) r -= 0.1;
    if (!collided) {
        const double progress = distance(prev.ego.position, prev.ego.goal) -
                                distance(next.ego.position, next.ego.goal);
        r += 0.01 * progress;
    }
    return r;
}

void record_status(ExperienceBuffer& buffer, EventList event, Vec3 action, double reward_value,
                   std::optional<EventList> next_event, int episode, int step) {
    BufferRecord rec;
    rec.episode = episode;
    rec.step = step;
    rec.status = {std::move(event), action, reward_value, std::move(next_event)};
    buffer.append(std::move(rec));
}

AdaptSummary adapt(KnowledgeBank& bank, const ExperienceBuffer& buffer,
                   const EncoderParams& encoder, const ControllerConfig& cfg,
                   const EpisodeOutcome& outcome) {
    (void)encoder;  // latents are taken from the recorded traces
    AdaptSummary summary;
    const auto& records = buffer.records();

    auto implicated_ids = [&](const DecisionTrace& trace) {
        std::vector<std::int64_t> ids;
        for (const auto& c : trace.candidates)
            if (c.weight > cfg.implicate_threshold) ids.push_back(c.id);
        return ids;
    };

    if (outcome.terminal == Terminal::Collision) {
        // The decision immediately preceding the collision is the last one.
        for (auto it = records.rbegin(); it != records.rend(); ++it) {
            if (!it->trace) continue;
            auto ids = implicated_ids(*it->trace);
            if (cfg.protect_expert) {
                std::erase_if(ids, [&](std::int64_t id) {
                    return bank.contains(id) &&
                           bank.origin_of(id).source == EntrySource::Expert;
                });
            }
            std::erase_if(ids, [&](std::int64_t id) { return !bank.contains(id); });
            if (ids.size() >= bank.size()) {
                summary.prune_aborted = true;
            } else {
                for (const auto id : ids) {
                    bank.prune(id);
                    ++summary.pruned;
                }
            }
            break;
        }
    }

    // Reliability decay for entries implicated in warning steps.
    for (const auto& rec : records) {
        if (!rec.warning_step || !rec.trace) continue;
        for (const auto id : implicated_ids(*rec.trace)) {
            if (!bank.contains(id)) continue;
            bank.penalize(id, cfg.penalize_factor, cfg.reliability_floor);
            ++summary.penalized;
        }
    }

    // Novel successful experience enters the bank with full reliability.
    if (outcome.terminal == Terminal::Success) {
        for (const auto& rec : records) {
            if (!rec.trace) continue;
            const auto& z = rec.trace->z;
            const auto nearest = bank.search_exact(z, 1);
            if (!nearest.empty() && nearest.front().sim >= cfg.novelty_sim) continue;
            BankEntry entry;
            entry.id = bank.next_id();
            entry.z = z;
            entry.action = rec.status.action;
            entry.reliability = 1.0;
            entry.origin = {rec.episode, rec.step, EntrySource::Online};
            bank.insert(entry);
            ++summary.inserted;
        }
    }
    return summary;
}

double r_phys(const DecisionTrace& trace, const KnowledgeBank& bank) {
    double total = 0.0;
    for (const auto& c : trace.candidates) {
        if (c.weight_final <= 0.0) continue;
        if (!bank.contains(c.id)) continue;
        total += c.weight_final * (trace.z - bank.latent_of(c.id)).norm();
    }
    return total;
}

double j_perf(const ExperienceBuffer& buffer) {
    if (buffer.empty()) throw std::invalid_argument("j_perf: empty buffer");
    double total = 0.0;
    for (const auto& rec : buffer.records()) total += rec.status.reward;
    return total / static_cast<double>(buffer.size());
}

}  // namespace era
