#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "era/config.hpp"
#include "era/events.hpp"
#include "era/rng.hpp"
#include "era/vec3.hpp"

namespace era {

struct EgoState {
    Vec3 position;
    Vec3 velocity;
    Vec3 goal;
};

struct Intruder {
    std::int64_t id = 0;
    IntruderKind kind = IntruderKind::TypeA;
    Vec3 position;
    Vec3 velocity;
    double risk = 0.0;
};

// Full simulation state. Advancing it with the same inputs and rng state is
// bit-reproducible: all randomness comes from the embedded stream.
struct WorldState {
    double time = 0.0;
    EgoState ego;
    std::vector<Intruder> intruders;
    Rng rng{0};
};

enum class Terminal { Success, Collision, Timeout };

const char* terminal_name(Terminal t);

struct EpisodeOutcome {
    Terminal terminal = Terminal::Timeout;
    bool had_warning = false;
    int decision_steps = 0;        // triggered decisions only
    double min_separation = std::numeric_limits<double>::infinity();
    double wall_reaction_ms = 0.0;  // mean wall-clock per triggered decision
};

// Running accumulators an episode driver feeds into classify().
struct RunStats {
    double min_separation = std::numeric_limits<double>::infinity();
    bool had_warning = false;
    int decision_steps = 0;
    double decide_ms_total = 0.0;

    void observe(const WorldState& world, const EpisodeConfig& cfg);
};

struct TrajectoryStep {
    double t = 0.0;
    Vec3 ego_position;
    Vec3 ego_velocity;
    std::vector<Intruder> intruders;
    Vec3 action;
    bool triggered = false;
};

// A policy maps the sensed event list (empty optional when the trigger did
// not fire) and the world to a commanded velocity.
using Policy = std::function<Vec3(const std::optional<EventList>&, const WorldState&)>;

using RewardFn = std::function<double(const WorldState& prev, const Vec3& action,
                                      const WorldState& next, const EpisodeConfig& cfg)>;

// Goal-aligned ego frame: +x toward the goal, z kept close to world up.
// Sensing in this frame makes events and stored maneuvers invariant to the
// episode's global orientation. Falls back to world axes at the goal.
struct EgoFrame {
    Vec3 ex{1, 0, 0};
    Vec3 ey{0, 1, 0};
    Vec3 ez{0, 0, 1};

    Vec3 to_frame(const Vec3& v) const { return {ex.dot(v), ey.dot(v), ez.dot(v)}; }
    Vec3 from_frame(const Vec3& v) const { return ex * v.x + ey * v.y + ez * v.z; }

    static EgoFrame for_world(const WorldState& world);
};

// --- Core operations ---------------------------------------------------

WorldState spawn_world(const EpisodeConfig& cfg);

// Advances the world one tick: clamps and applies the commanded velocity,
// runs every intruder policy, integrates positions (explicit Euler).
void step(WorldState& world, const Vec3& ego_action, const EpisodeConfig& cfg);

Vec3 intruder_policy(const Intruder& intruder, const WorldState& world,
                     const EpisodeConfig& cfg, Rng& rng);

// Negative gradient of the potential field, clamped to v_max.
Vec3 vpf_action(const WorldState& world, const EpisodeConfig& cfg);

// Unclamped field; exposed so the gradient can be checked numerically.
Vec3 vpf_field(const WorldState& world, const EpisodeConfig& cfg);

// Goal attraction only (the no-event default behavior), clamped to v_max.
Vec3 attraction_only(const WorldState& world, const EpisodeConfig& cfg);

// Event list of intruders strictly inside the trigger radius, or nothing.
std::optional<EventList> sense_events(const WorldState& world, const EpisodeConfig& cfg);

// Terminal classification from geometry plus the episode accumulators.
// Priority: Collision, then Success, then Timeout.
std::optional<EpisodeOutcome> classify(const WorldState& world, const EpisodeConfig& cfg,
                                       int steps, const RunStats& stats);

// Difficulty schedule over T=100 episodes: xi ramps 0 -> 1, intruder count
// 5 -> 25, intruder speeds scale up, kind mix shifts toward interceptors.
EpisodeConfig curriculum(int episode_idx, const EpisodeConfig& base);

double min_intruder_separation(const WorldState& world);

struct EpisodeResult {
    EpisodeOutcome outcome;
    std::vector<StatusCode> status_codes;       // one per triggered decision
    std::vector<bool> status_warning;           // warning violation on that step
    std::vector<TrajectoryStep> trajectory;     // one per sim step
};

// Runs a full episode under the given policy. Status codes are recorded for
// triggered decisions only; the reward function scores every transition.
EpisodeResult run_episode(const Policy& policy, const EpisodeConfig& cfg,
                          const RewardFn& reward_fn);

// The demonstration expert: full potential field at every step.
Policy expert_policy(const EpisodeConfig& cfg);

}  // namespace era
