#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "era/controller.hpp"
#include "era/dynamics.hpp"
#include "era/encoder.hpp"
#include "era/events.hpp"
#include "era/world.hpp"

namespace era {

using ordered_json = nlohmann::ordered_json;

ordered_json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const ordered_json& j);

ordered_json eventlist_to_json(const EventList& events);
EventList eventlist_from_json(const ordered_json& j);

// Combined versioned artifact: encoder weights plus the latent transition.
// Byte-stable for identical training seeds.
ordered_json artifacts_to_json(const EncoderParams& params, const TransitionModel& model);
void artifacts_from_json(const ordered_json& j, EncoderParams& params, TransitionModel& model);

void save_artifacts(const std::filesystem::path& path, const EncoderParams& params,
                    const TransitionModel& model);
void load_artifacts(const std::filesystem::path& path, EncoderParams& params,
                    TransitionModel& model);

// Decision trace audit record (one JSONL line per decision).
ordered_json trace_to_json(const DecisionTrace& trace, bool with_timing = true);
DecisionTrace trace_from_json(const ordered_json& j);

// Trajectory step in the episode-log schema.
ordered_json trajectory_step_to_json(const TrajectoryStep& step);

ordered_json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const ordered_json& j);

}  // namespace era
