#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "era/bank.hpp"
#include "era/dynamics.hpp"
#include "era/encoder.hpp"
#include "era/events.hpp"
#include "era/world.hpp"

namespace era {

enum class Fallback { MinDeltaV, VpfExpert };

struct ControllerConfig {
    RetrievalParams retrieval;
    double dv_margin = 0.0;          // keep candidates with delta-V strictly below this
    double theta_c = 0.5;            // cluster cosine threshold, in (-1, 1)
    Fallback fallback = Fallback::MinDeltaV;
    double v_max = 5.0;              // fused-action clamp
    double implicate_threshold = 0.2;  // trace weight above which an entry is implicated
    double novelty_sim = 0.95;         // skip inserts whose nearest neighbor is this close
    double penalize_factor = 0.9;
    double reliability_floor = 0.05;
    bool protect_expert = false;     // exempt expert-sourced entries from pruning
    double lambda_p = 1.0;           // reporting weights for the combined logged scalar
    double lambda_r = 1.0;
};

struct TraceCandidate {
    std::int64_t id = 0;
    double sim = 0.0;
    double weight = 0.0;        // softmax weight over the retrieved set
    double weight_final = 0.0;  // renormalized over filter survivors
    double delta_v = 0.0;
    bool passed = false;
    Vec3 action;
};

struct TraceCluster {
    std::vector<std::int64_t> ids;  // founding candidate first
    double aggregate_weight = 0.0;
};

// Complete audit record of one decision: replaying it against the serialized
// bank reproduces the fused action bit-for-bit.
struct DecisionTrace {
    Eigen::VectorXd z;
    std::vector<TraceCandidate> candidates;
    std::vector<TraceCluster> clusters;
    int winning_cluster = -1;
    Vec3 action;
    double latency_ms = 0.0;
    bool expert_fallback = false;
    bool used_ann = false;
};

struct DecideResult {
    Vec3 action;
    bool use_expert = false;  // fallback signal: caller substitutes the expert action
    DecisionTrace trace;
};

// The full decision pipeline from an already-encoded latent query.
DecideResult decide_from_latent(const KnowledgeBank& bank, const TransitionModel& model,
                                const ControllerConfig& cfg, const Eigen::VectorXd& z);

// encode -> retrieve (ANN when fresh, exact otherwise) -> weights ->
// Lyapunov filter -> cluster -> select -> fuse.
DecideResult decide(const KnowledgeBank& bank, const EncoderParams& encoder,
                    const TransitionModel& model, const ControllerConfig& cfg,
                    const EventList& events);

// Keeps candidates whose Lyapunov delta is strictly below the margin,
// renormalizing survivor weights. With no survivors, MinDeltaV retains the
// single smallest-delta candidate; VpfExpert sets *expert_signal instead.
std::vector<TraceCandidate> filter_stable(std::vector<TraceCandidate> candidates,
                                          const Eigen::VectorXd& z, const TransitionModel& model,
                                          double margin, Fallback fallback, bool* expert_signal);

// Greedy leader clustering in weight order by directional cosine similarity;
// zero-magnitude actions pool into their own cluster.
std::vector<TraceCluster> cluster_actions(const std::vector<TraceCandidate>& survivors,
                                          double theta_c);

// Cluster with the largest aggregate weight; ties go to the cluster whose
// founding candidate has the lower id.
int select_cluster(const std::vector<TraceCluster>& clusters);

// Weighted mean of the winning cluster's actions, clamped to v_max.
Vec3 fuse(const TraceCluster& cluster, const std::vector<TraceCandidate>& survivors,
          double v_max);

// Step reward: +1 success, -1 collision, -0.1 on a warning-radius violation,
// +0.01 * meters of progress toward the goal on non-collision steps.
double reward(const WorldState& prev, const Vec3& action, const WorldState& next,
              const EpisodeConfig& cfg);

struct BufferRecord {
    int episode = 0;
    int step = 0;
    StatusCode status;
    std::optional<DecisionTrace> trace;
    bool warning_step = false;
};

// Append-only within an episode; closed with the episode outcome.
class ExperienceBuffer {
  public:
    void append(BufferRecord record) { records_.push_back(std::move(record)); }
    void close_episode(const EpisodeOutcome& outcome) { outcome_ = outcome; }

    const std::vector<BufferRecord>& records() const { return records_; }
    const std::optional<EpisodeOutcome>& outcome() const { return outcome_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

  private:
    std::vector<BufferRecord> records_;
    std::optional<EpisodeOutcome> outcome_;
};

void record_status(ExperienceBuffer& buffer, EventList event, Vec3 action, double reward_value,
                   std::optional<EventList> next_event, int episode = 0, int step = 0);

struct AdaptSummary {
    int pruned = 0;
    int penalized = 0;
    int inserted = 0;
    bool prune_aborted = false;  // pruning would have emptied the bank
};

// Post-episode bank maintenance: prune entries implicated in the decision
// preceding a collision, decay entries implicated in warning steps, and on
// success insert novel (z, a, r=1) experiences.
AdaptSummary adapt(KnowledgeBank& bank, const ExperienceBuffer& buffer,
                   const EncoderParams& encoder, const ControllerConfig& cfg,
                   const EpisodeOutcome& outcome);

// Retrieval-consistency scalar: sum of final candidate weights times latent
// distance to the query.
double r_phys(const DecisionTrace& trace, const KnowledgeBank& bank);

// Mean reward over the buffer window.
double j_perf(const ExperienceBuffer& buffer);

}  // namespace era
