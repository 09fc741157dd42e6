#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "era/bank.hpp"
#include "era/config.hpp"
#include "era/controller.hpp"
#include "era/dynamics.hpp"
#include "era/encoder.hpp"
#include "era/world.hpp"

namespace era {

struct HarnessOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    bool timing = true;  // false zeroes wall-clock fields for byte-reproducible outputs
};

// --- Expert dataset ------------------------------------------------------

struct DatasetEpisodeStat {
    int episode = 0;
    Terminal outcome = Terminal::Timeout;
    int records = 0;  // zero unless the episode succeeded
};

struct DatasetStats {
    std::size_t records = 0;
    int episodes_run = 0;
    int episodes_kept = 0;
    std::vector<DatasetEpisodeStat> per_episode;
};

// Runs expert episodes over the mixed difficulty schedule and writes one
// JSONL record per triggered decision of every successful episode.
DatasetStats gen_dataset(const EpisodeConfig& base, int episodes,
                         const std::filesystem::path& out, std::uint64_t seed);

struct DatasetRecord {
    int episode = 0;
    int step = 0;  // sim step of the decision
    EventList event;
    Vec3 expert_action;
};

struct Dataset {
    FeatureScales scales;
    std::uint64_t seed = 0;
    std::vector<DatasetRecord> records;
};

Dataset load_dataset(const std::filesystem::path& path);

// --- Pretraining ----------------------------------------------------------

struct PretrainArtifacts {
    EncoderParams params;
    TransitionModel model;
    KnowledgeBank bank;
    std::vector<double> loss_curve;
};

// Trains the encoder, encodes every record into the bank, fits the latent
// transition from step-adjacent decision pairs, builds the ANN index, and
// writes all artifacts.
PretrainArtifacts pretrain_cmd(const std::filesystem::path& dataset_path,
                               const PretrainHyper& hyper,
                               const std::filesystem::path& out_params,
                               const std::filesystem::path& out_bank,
                               const std::filesystem::path& out_log);

// --- Curriculum training --------------------------------------------------

struct TrainEpisodeLog {
    int episode = 0;
    double xi = 0.0;
    bool success = false;
    bool collision = false;
    bool warning = false;
    double j_perf = 0.0;
    double r_phys = 0.0;    // mean over the episode's decisions
    double combined = 0.0;  // lambda_p * r_phys - lambda_r * j_perf
    std::size_t bank_size = 0;
    int decisions = 0;
    AdaptSummary adapt;
};

struct TrainStats {
    std::vector<TrainEpisodeLog> episodes;
    std::size_t final_bank_size = 0;
};

TrainStats train_cmd(const std::filesystem::path& params_path,
                     const std::filesystem::path& bank_path, int episodes,
                     const EpisodeConfig& base, const ControllerConfig& ctrl,
                     const std::filesystem::path& out_bank,
                     const std::filesystem::path& out_log, const HarnessOptions& opts);

// --- Evaluation -----------------------------------------------------------

enum class PolicyKind { Era, Expert };

PolicyKind policy_from_name(const std::string& name);
const char* policy_name(PolicyKind p);

struct MetricsReport {
    std::string policy;
    std::string difficulty;
    int seeds = 0;
    std::vector<std::uint64_t> seed_list;
    int success_count = 0;
    int collision_count = 0;
    int timeout_count = 0;
    double success_rate = 0.0;
    double collision_rate = 0.0;
    double timeout_rate = 0.0;
    double warning_rate = 0.0;
    double avg_steps = 0.0;     // mean triggered decisions per episode
    double reaction_ms = 0.0;   // mean wall-clock per decision, pooled
    std::size_t bank_size = 0;
};

// Fixed-difficulty seeded benchmark with an identical seed list across
// policies. Optionally writes one decision trace per line (ERA only).
MetricsReport eval_cmd(const std::filesystem::path& params_path,
                       const std::filesystem::path& bank_path, Difficulty difficulty, int seeds,
                       PolicyKind policy, const ControllerConfig& ctrl,
                       const EpisodeConfig& base, const HarnessOptions& opts,
                       const std::filesystem::path& out_report,
                       const std::optional<std::filesystem::path>& traces_out = std::nullopt);

// --- Benchmark -------------------------------------------------------------

struct StagePercentiles {
    double p50 = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
};

struct BenchSizeReport {
    std::size_t bank_size = 0;
    StagePercentiles retrieve_ms;
    StagePercentiles end_to_end_ms;
    double recall_at_k = 0.0;
    double memory_mb = 0.0;
};

struct BenchReport {
    int k = 8;
    int calls = 0;
    StagePercentiles encode_ms;
    StagePercentiles stabilize_ms;
    StagePercentiles fuse_ms;
    std::vector<BenchSizeReport> sizes;
    double bytes_per_entry = 0.0;
    double scaling_ratio = 0.0;  // median retrieve at max size / at min size
};

// Pads the bank with synthetic clustered entries to each target size, then
// measures per-stage latency percentiles (>= `calls` calls each), ANN recall
// against the exact oracle, and the retrieval time scaling across sizes.
BenchReport bench_cmd(const std::filesystem::path& params_path,
                      const std::filesystem::path& bank_path,
                      const std::vector<std::size_t>& bank_sizes, int calls,
                      const ControllerConfig& ctrl, const HarnessOptions& opts,
                      const std::filesystem::path& out_report);

// --- Trace audit ------------------------------------------------------------

struct TraceVerification {
    std::size_t decisions = 0;
    std::size_t candidates_checked = 0;
    std::size_t filter_violations = 0;   // surviving candidate with dv >= margin
    std::size_t dv_mismatches = 0;       // recorded dv disagrees with recomputation
    std::size_t action_mismatches = 0;   // pipeline replay diverges bit-for-bit
    std::size_t missing_entries = 0;     // trace references an id absent from the bank
};

// Independent replay: recomputes every delta-V with plain loops over the raw
// artifact JSON (no shared code path with the controller) and replays the
// pipeline against the serialized bank for bit-exact fused actions.
TraceVerification verify_traces(const std::filesystem::path& traces_path,
                                const std::filesystem::path& bank_path,
                                const std::filesystem::path& params_path,
                                const ControllerConfig& ctrl);

// ERA episode wrapper used by train/eval: runs one episode, collecting the
// per-decision traces alongside the status codes.
struct EraEpisode {
    EpisodeResult result;
    std::vector<DecisionTrace> traces;  // one per triggered decision
    ExperienceBuffer buffer;            // records with traces and warning flags
};

EraEpisode run_era_episode(const KnowledgeBank& bank, const EncoderParams& encoder,
                           const TransitionModel& model, const ControllerConfig& ctrl,
                           const EpisodeConfig& cfg, int episode_tag = 0);

}  // namespace era
