#include "era/world.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace era {

const char* terminal_name(Terminal t) {
    switch (t) {
        case Terminal::Success: return "success";
        case Terminal::Collision: return "collision";
        default: return "timeout";
    }
}

double min_intruder_separation(const WorldState& world) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& intr : world.intruders)
        best = std::min(best, distance(world.ego.position, intr.position));
    return best;
}

void RunStats::observe(const WorldState& world, const EpisodeConfig& cfg) {
    const double sep = min_intruder_separation(world);
    min_separation = std::min(min_separation, sep);
    if (sep < cfg.warning_radius) had_warning = true;
}

namespace {

IntruderKind draw_kind(double xi, Rng& rng) {
    // Mix shifts toward interceptors as difficulty ramps.
    const double p_b = 0.2 + 0.5 * xi;
    const double p_c = std::max(0.1, 0.4 - 0.3 * xi);
    const double u = rng.uniform();
    if (u < p_b) return IntruderKind::TypeB;
    if (u < p_b + p_c) return IntruderKind::TypeC;
    return IntruderKind::TypeA;
}

double draw_risk(IntruderKind kind, Rng& rng) {
    const double u = rng.uniform();
    switch (kind) {
        case IntruderKind::TypeB: return 0.7 + 0.3 * u;
        case IntruderKind::TypeA: return 0.4 + 0.3 * u;
        default: return 0.2 + 0.2 * u;
    }
}

// Orthonormal pair spanning the plane perpendicular to dir (unit).
void perp_basis(const Vec3& dir, Vec3& u, Vec3& v) {
    const Vec3 helper = std::abs(dir.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    u = Vec3{dir.y * helper.z - dir.z * helper.y, dir.z * helper.x - dir.x * helper.z,
             dir.x * helper.y - dir.y * helper.x}
            .normalized();
    v = Vec3{dir.y * u.z - dir.z * u.y, dir.z * u.x - dir.x * u.z, dir.x * u.y - dir.y * u.x};
}

}  // namespace

WorldState spawn_world(const EpisodeConfig& cfg) {
    cfg.validate();
    WorldState world;
    world.rng = substream(cfg.seed, "world");
    world.ego.position = Vec3{0, 0, 0};
    world.ego.velocity = Vec3{0, 0, 0};

    const double goal_dist = world.rng.uniform(cfg.goal_dist_min, cfg.goal_dist_max);
    const double angle = world.rng.uniform(0.0, 6.283185307179586476925286766559);
    world.ego.goal = Vec3{goal_dist * std::cos(angle), goal_dist * std::sin(angle),
                          world.rng.uniform(-1.0, 1.0)};

    const Vec3 path = world.ego.goal - world.ego.position;
    const Vec3 dir = path.normalized();
    Vec3 pu, pv;
    perp_basis(dir, pu, pv);

    world.intruders.reserve(static_cast<std::size_t>(cfg.intruder_count));
    for (int i = 0; i < cfg.intruder_count; ++i) {
        const IntruderKind kind = draw_kind(cfg.difficulty, world.rng);
        Intruder intr;
        intr.id = i + 1;
        intr.kind = kind;
        intr.risk = draw_risk(kind, world.rng);

        bool placed = false;
        for (int attempt = 0; attempt < cfg.spawn_retries; ++attempt) {
            const double along = world.rng.uniform(0.25, 0.90);
            const double max_off = kind == IntruderKind::TypeC ? 1.5 : 7.0;
            const double off = world.rng.uniform(0.0, max_off);
            const double phase = world.rng.uniform(0.0, 6.283185307179586476925286766559);
            const Vec3 candidate = world.ego.position + path * along +
                                   pu * (off * std::cos(phase)) + pv * (off * std::sin(phase));
            if (distance(candidate, world.ego.position) <= cfg.warning_radius) continue;
            intr.position = candidate;
            placed = true;
            break;
        }
        if (!placed)
            throw std::invalid_argument(
                "spawn_world: could not place intruder outside the warning radius "
                "(goal annulus too tight for the configured radii)");

        switch (kind) {
            case IntruderKind::TypeA:
                intr.velocity = (world.rng.normal_vec3() * (0.5 * cfg.intruder_v_max))
                                    .clamped(cfg.intruder_v_max);
                break;
            case IntruderKind::TypeB:
            case IntruderKind::TypeC:
                intr.velocity = Vec3{0, 0, 0};
                break;
        }
        world.intruders.push_back(intr);
    }
    return world;
}

Vec3 intruder_policy(const Intruder& intruder, const WorldState& world, const EpisodeConfig& cfg,
                     Rng& rng) {
    switch (intruder.kind) {
        case IntruderKind::TypeC:
            return Vec3{0, 0, 0};
        case IntruderKind::TypeB: {
            const Vec3 predicted = world.ego.position + world.ego.velocity * cfg.lead_time;
            const double speed = cfg.intruder_v_max * (0.5 + 0.5 * cfg.difficulty);
            return (predicted - intruder.position).normalized() * speed;
        }
        case IntruderKind::TypeA:
        default: {
            // Bounded Gaussian walk: perturbation capped at 3 sigma, speed clamped.
            const Vec3 perturb = (rng.normal_vec3() * cfg.typea_sigma)
                                     .clamped(3.0 * cfg.typea_sigma);
            return (intruder.velocity + perturb).clamped(cfg.intruder_v_max);
        }
    }
}

void step(WorldState& world, const Vec3& ego_action, const EpisodeConfig& cfg) {
    if (!ego_action.finite()) throw std::invalid_argument("step: non-finite ego action");
    const Vec3 a = ego_action.clamped(cfg.v_max);

    // Intruder policies read the pre-step ego state, in list order.
    std::vector<Vec3> velocities(world.intruders.size());
    for (std::size_t i = 0; i < world.intruders.size(); ++i)
        velocities[i] = intruder_policy(world.intruders[i], world, cfg, world.rng);

    world.ego.velocity = a;
    world.ego.position += a * cfg.dt;
    for (std::size_t i = 0; i < world.intruders.size(); ++i) {
        world.intruders[i].velocity = velocities[i];
        world.intruders[i].position += velocities[i] * cfg.dt;
    }
    world.time += cfg.dt;
}

Vec3 vpf_field(const WorldState& world, const EpisodeConfig& cfg) {
    const Vec3 p = world.ego.position;
    Vec3 f = (world.ego.goal - p) * cfg.k_att;  // -grad of 0.5*k_att*|p-goal|^2
    const double rho0 = cfg.warning_radius;
    for (const auto& intr : world.intruders) {
        const Vec3 away = p - intr.position;
        const double rho = away.norm();
        if (rho >= rho0) continue;
        if (rho < 1e-9) {
            // Exact overlap: direction undefined, push along a fixed axis.
            f += Vec3{cfg.rep_cap, 0, 0};
            continue;
        }
        double mag = cfg.k_rep * (1.0 / rho - 1.0 / rho0) / (rho * rho);
        mag = std::min(mag, cfg.rep_cap);
        f += away * (mag / rho);
    }
    return f;
}

Vec3 vpf_action(const WorldState& world, const EpisodeConfig& cfg) {
    return vpf_field(world, cfg).clamped(cfg.v_max);
}

Vec3 attraction_only(const WorldState& world, const EpisodeConfig& cfg) {
    return ((world.ego.goal - world.ego.position) * cfg.k_att).clamped(cfg.v_max);
}

EgoFrame EgoFrame::for_world(const WorldState& world) {
    const Vec3 to_goal = world.ego.goal - world.ego.position;
    const Vec3 ex = to_goal.normalized(1e-9);
    if (ex.squared_norm() < 0.5) return {};  // at the goal: world axes
    Vec3 up{0, 0, 1};
    Vec3 ez = up - ex * up.dot(ex);
    if (ez.squared_norm() < 1e-12) ez = Vec3{1, 0, 0} - ex * ex.x;  // goal straight up
    ez = ez.normalized();
    const Vec3 ey{ez.y * ex.z - ez.z * ex.y, ez.z * ex.x - ez.x * ex.z,
                  ez.x * ex.y - ez.y * ex.x};
    return {ex, ey, ez};
}

std::optional<EventList> sense_events(const WorldState& world, const EpisodeConfig& cfg) {
    const EgoFrame frame = EgoFrame::for_world(world);
    EventList events;
    for (const auto& intr : world.intruders) {
        const double d = distance(world.ego.position, intr.position);
        if (d < cfg.trigger_radius) {
            events.elements.push_back(
                {intr.id, frame.to_frame(intr.position - world.ego.position),
                 frame.to_frame(intr.velocity - world.ego.velocity), intr.kind, intr.risk});
        }
    }
    if (events.elements.empty()) return std::nullopt;

    const Vec3 to_goal = world.ego.goal - world.ego.position;
    events.global.self_velocity = frame.to_frame(world.ego.velocity);
    events.global.speed = world.ego.velocity.norm();
    events.global.target_distance = to_goal.norm();
    events.global.target_unit = frame.to_frame(to_goal.normalized(1e-9));
    events.timestamp = world.time;
    return events;
}

std::optional<EpisodeOutcome> classify(const WorldState& world, const EpisodeConfig& cfg,
                                       int steps, const RunStats& stats) {
    auto outcome = [&](Terminal t) {
        EpisodeOutcome o;
        o.terminal = t;
        o.had_warning = stats.had_warning;
        o.decision_steps = stats.decision_steps;
        o.min_separation = stats.min_separation;
        o.wall_reaction_ms =
            stats.decision_steps > 0 ? stats.decide_ms_total / stats.decision_steps : 0.0;
        return o;
    };
    if (min_intruder_separation(world) < cfg.collision_radius) return outcome(Terminal::Collision);
    if (distance(world.ego.position, world.ego.goal) < cfg.goal_radius)
        return outcome(Terminal::Success);
    if (steps >= cfg.max_sim_steps) return outcome(Terminal::Timeout);
    return std::nullopt;
}

EpisodeConfig curriculum(int episode_idx, const EpisodeConfig& base) {
    if (episode_idx < 0) throw std::invalid_argument("curriculum: episode index must be >= 0");
    constexpr int kEpisodes = 100;
    EpisodeConfig cfg = base;
    const double xi = std::min(1.0, static_cast<double>(episode_idx) / (kEpisodes - 1));
    cfg.difficulty = xi;
    cfg.intruder_count = static_cast<int>(std::lround(5.0 + 20.0 * xi));
    cfg.intruder_v_max = base.intruder_v_max * (1.0 + 0.5 * xi);
    cfg.seed = substream_seed(base.seed, "episode", static_cast<std::uint64_t>(episode_idx));
    return cfg;
}

EpisodeResult run_episode(const Policy& policy, const EpisodeConfig& cfg,
                          const RewardFn& reward_fn) {
    cfg.validate();
    using clock = std::chrono::steady_clock;

    EpisodeResult result;
    WorldState world = spawn_world(cfg);
    RunStats stats;
    stats.observe(world, cfg);

    for (int steps = 1;; ++steps) {
        auto events = sense_events(world, cfg);
        const bool triggered = events.has_value();

        Vec3 action;
        const auto t0 = clock::now();
        try {
            action = policy(events, world);
        } catch (const std::exception& e) {
            throw std::runtime_error("run_episode: policy failed at t=" +
                                     std::to_string(world.time) + ": " + e.what());
        }
        if (!action.finite())
            throw std::runtime_error("run_episode: policy returned a non-finite action");
        if (triggered) {
            stats.decision_steps += 1;
            stats.decide_ms_total +=
                std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        }

        result.trajectory.push_back(
            {world.time, world.ego.position, world.ego.velocity, world.intruders, action,
             triggered});

        const WorldState prev = world;
        step(world, action, cfg);
        stats.observe(world, cfg);
        const auto terminal = classify(world, cfg, steps, stats);
        const double r = reward_fn ? reward_fn(prev, action, world, cfg) : 0.0;

        if (triggered) {
            // Status actions live in the same ego frame as their event list.
            const EgoFrame frame = EgoFrame::for_world(prev);
            result.status_codes.push_back({*events, frame.to_frame(action.clamped(cfg.v_max)), r,
                                           sense_events(world, cfg)});
            result.status_warning.push_back(min_intruder_separation(world) < cfg.warning_radius);
        }
        if (terminal) {
            result.outcome = *terminal;
            break;
        }
    }
    return result;
}

Policy expert_policy(const EpisodeConfig& cfg) {
    return [cfg](const std::optional<EventList>&, const WorldState& world) {
        return vpf_action(world, cfg);
    };
}

}  // namespace era
