#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "era/vec3.hpp"

namespace era {

enum class IntruderKind { TypeA, TypeB, TypeC };

inline char kind_letter(IntruderKind k) {
    switch (k) {
        case IntruderKind::TypeA: return 'A';
        case IntruderKind::TypeB: return 'B';
        default: return 'C';
    }
}

// One detected object, expressed relative to the ego agent.
struct EventElement {
    std::int64_t object_id = 0;
    Vec3 rel_position;  // m, ego frame
    Vec3 rel_velocity;  // m/s, ego frame
    IntruderKind kind = IntruderKind::TypeA;
    double risk = 0.0;  // in [0, 1]
};

// Ego self-status and navigational intent at the same timestamp.
struct GlobalState {
    Vec3 self_velocity;    // m/s
    double speed = 0.0;    // |self_velocity|
    Vec3 target_unit;      // unit vector toward goal, zero when at the goal
    double target_distance = 0.0;  // m
};

struct EventList {
    std::vector<EventElement> elements;  // unordered; object_ids distinct
    GlobalState global;
    double timestamp = 0.0;  // s
};

// One recorded interaction: what was seen, what was done, how it scored,
// and what was seen next (empty past the end of an episode).
struct StatusCode {
    EventList event;
    Vec3 action;
    double reward = 0.0;
    std::optional<EventList> next_event;
};

}  // namespace era
