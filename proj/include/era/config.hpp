#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace era {

// Everything a single episode needs to be reproducible from its seed.
struct EpisodeConfig {
    double difficulty = 0.0;  // xi in [0, 1]: drives intruder mix and aggression
    int intruder_count = 5;
    double dt = 0.05;  // s
    int max_sim_steps = 400;

    // Interaction radii, meters. Must satisfy collision < warning < trigger.
    double trigger_radius = 10.0;
    double warning_radius = 3.0;
    double collision_radius = 0.5;
    double goal_radius = 1.0;

    double v_max = 5.0;           // ego commanded-speed limit, m/s
    double intruder_v_max = 3.0;  // intruder speed limit, m/s
    std::uint64_t seed = 0;

    // Potential-field gains and spawn geometry.
    double k_att = 1.0;
    double k_rep = 20.0;
    double rep_cap = 50.0;        // repulsion magnitude cap near overlap
    double goal_dist_min = 16.0;  // goal sampled in this annulus around start
    double goal_dist_max = 24.0;
    double typea_sigma = 0.5;     // TypeA velocity perturbation scale, m/s
    double lead_time = 1.0;       // TypeB constant-velocity ego extrapolation, s
    int spawn_retries = 100;

    void validate() const;  // throws std::invalid_argument on bad geometry
};

enum class Difficulty { Easy, Medium, Hard, Extreme };

const char* difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);  // throws on unknown

// Fixed benchmark presets: intruder count and aggression per tier.
EpisodeConfig difficulty_preset(Difficulty d, const EpisodeConfig& base);

// Plain-text key=value config file ('#' starts a comment). Every EpisodeConfig
// field is exposed; unknown keys are an error so typos surface early.
EpisodeConfig load_episode_config(const std::filesystem::path& file,
                                  const EpisodeConfig& defaults = {});

// Raw key=value view for consumers with extra keys (controller, harness).
std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& file);

// Applies EpisodeConfig keys from an already-parsed map, erasing the consumed
// keys so callers can detect leftovers.
void apply_episode_keys(std::map<std::string, std::string>& kv, EpisodeConfig& cfg);

}  // namespace era
