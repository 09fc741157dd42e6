#include "era/config.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace era {

void EpisodeConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (!(collision_radius < warning_radius && warning_radius < trigger_radius))
        fail("radii must satisfy collision < warning < trigger");
    if (dt <= 0.0) fail("dt must be positive");
    if (max_sim_steps <= 0) fail("max_sim_steps must be positive");
    if (intruder_count < 0) fail("intruder_count must be >= 0");
    if (difficulty < 0.0 || difficulty > 1.0) fail("difficulty must be in [0, 1]");
    if (v_max <= 0.0 || intruder_v_max < 0.0) fail("speed limits must be positive");
    if (goal_radius <= 0.0) fail("goal_radius must be positive");
    if (goal_dist_min <= 0.0 || goal_dist_max < goal_dist_min)
        fail("goal annulus must satisfy 0 < min <= max");
}

const char* difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
        default: return "extreme";
    }
}

Difficulty difficulty_from_name(const std::string& name) {
    if (name == "easy") return Difficulty::Easy;
    if (name == "medium") return Difficulty::Medium;
    if (name == "hard") return Difficulty::Hard;
    if (name == "extreme") return Difficulty::Extreme;
    throw std::invalid_argument("unknown difficulty: " + name);
}

EpisodeConfig difficulty_preset(Difficulty d, const EpisodeConfig& base) {
    EpisodeConfig cfg = base;
    switch (d) {
        case Difficulty::Easy:
            cfg.intruder_count = 5;
            cfg.intruder_v_max = base.intruder_v_max * 0.8;
            cfg.difficulty = 0.20;
            break;
        case Difficulty::Medium:
            cfg.intruder_count = 10;
            cfg.intruder_v_max = base.intruder_v_max * 1.0;
            cfg.difficulty = 0.45;
            break;
        case Difficulty::Hard:
            cfg.intruder_count = 17;
            cfg.intruder_v_max = base.intruder_v_max * 1.2;
            cfg.difficulty = 0.70;
            break;
        case Difficulty::Extreme:
            cfg.intruder_count = 25;
            cfg.intruder_v_max = base.intruder_v_max * 1.4;
            cfg.difficulty = 1.00;
            break;
    }
    return cfg;
}

std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config file: " + file.string());
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r\n");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(file.string() + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

namespace {

template <typename T>
void take(std::map<std::string, std::string>& kv, const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if constexpr (std::is_same_v<T, double>) {
        out = std::stod(it->second);
    } else if constexpr (std::is_same_v<T, int>) {
        out = std::stoi(it->second);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        out = std::stoull(it->second);
    }
    kv.erase(it);
}

}  // namespace

void apply_episode_keys(std::map<std::string, std::string>& kv, EpisodeConfig& cfg) {
    take(kv, "difficulty", cfg.difficulty);
    take(kv, "intruder_count", cfg.intruder_count);
    take(kv, "dt", cfg.dt);
    take(kv, "max_sim_steps", cfg.max_sim_steps);
    take(kv, "trigger_radius", cfg.trigger_radius);
    take(kv, "warning_radius", cfg.warning_radius);
    take(kv, "collision_radius", cfg.collision_radius);
    take(kv, "goal_radius", cfg.goal_radius);
    take(kv, "v_max", cfg.v_max);
    take(kv, "intruder_v_max", cfg.intruder_v_max);
    take(kv, "seed", cfg.seed);
    take(kv, "k_att", cfg.k_att);
    take(kv, "k_rep", cfg.k_rep);
    take(kv, "rep_cap", cfg.rep_cap);
    take(kv, "goal_dist_min", cfg.goal_dist_min);
    take(kv, "goal_dist_max", cfg.goal_dist_max);
    take(kv, "typea_sigma", cfg.typea_sigma);
    take(kv, "lead_time", cfg.lead_time);
    take(kv, "spawn_retries", cfg.spawn_retries);
}

EpisodeConfig load_episode_config(const std::filesystem::path& file,
                                  const EpisodeConfig& defaults) {
    auto kv = parse_key_value_file(file);
    EpisodeConfig cfg = defaults;
    apply_episode_keys(kv, cfg);
    if (!kv.empty())
        throw std::runtime_error("unknown config key: " + kv.begin()->first);
    cfg.validate();
    return cfg;
}

}  // namespace era
