#include "era/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace era {

namespace {

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const ordered_json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size())
            throw std::runtime_error("matrix: ragged rows");
        for (std::size_t c = 0; c < rows[i].size(); ++c)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    return m;
}

ordered_json vector_to_json(const Eigen::VectorXd& v) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const ordered_json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

IntruderKind kind_from_letter(const std::string& s) {
    if (s == "A") return IntruderKind::TypeA;
    if (s == "B") return IntruderKind::TypeB;
    if (s == "C") return IntruderKind::TypeC;
    throw std::runtime_error("unknown intruder kind: " + s);
}

}  // namespace

ordered_json vec3_to_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const ordered_json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

ordered_json eventlist_to_json(const EventList& events) {
    ordered_json j;
    j["t"] = events.timestamp;
    j["global"] = {{"v", vec3_to_json(events.global.self_velocity)},
                   {"speed", events.global.speed},
                   {"tu", vec3_to_json(events.global.target_unit)},
                   {"td", events.global.target_distance}};
    ordered_json elements = ordered_json::array();
    for (const auto& e : events.elements) {
        elements.push_back({{"id", e.object_id},
                            {"kind", std::string(1, kind_letter(e.kind))},
                            {"p", vec3_to_json(e.rel_position)},
                            {"v", vec3_to_json(e.rel_velocity)},
                            {"risk", e.risk}});
    }
    j["elements"] = std::move(elements);
    return j;
}

EventList eventlist_from_json(const ordered_json& j) {
    EventList events;
    events.timestamp = j.at("t").get<double>();
    const auto& g = j.at("global");
    events.global.self_velocity = vec3_from_json(g.at("v"));
    events.global.speed = g.at("speed").get<double>();
    events.global.target_unit = vec3_from_json(g.at("tu"));
    events.global.target_distance = g.at("td").get<double>();
    for (const auto& e : j.at("elements")) {
        events.elements.push_back({e.at("id").get<std::int64_t>(), vec3_from_json(e.at("p")),
                                   vec3_from_json(e.at("v")),
                                   kind_from_letter(e.at("kind").get<std::string>()),
                                   e.at("risk").get<double>()});
    }
    return events;
}

ordered_json artifacts_to_json(const EncoderParams& params, const TransitionModel& model) {
    ordered_json j;
    j["version"] = 1;
    j["d"] = kLatentDim;
    j["h"] = kHiddenDim;
    j["scales"] = {{"d_threshold", params.scales.d_threshold}, {"v_max", params.scales.v_max}};
    j["weights"] = {{"w_phi", matrix_to_json(params.w_phi)},
                    {"b_phi", vector_to_json(params.b_phi)},
                    {"w_rho", matrix_to_json(params.w_rho)},
                    {"b_rho", vector_to_json(params.b_rho)},
                    {"w_imit", matrix_to_json(params.w_imit)},
                    {"b_imit", vector_to_json(params.b_imit)}};
    j["psi"] = matrix_to_json(model.psi);
    j["gamma"] = matrix_to_json(model.gamma);
    j["sigma_max"] = model.sigma_max;
    j["contraction"] = model.contraction;
    return j;
}

void artifacts_from_json(const ordered_json& j, EncoderParams& params, TransitionModel& model) {
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw std::runtime_error("artifacts: unsupported version");
    if (j.at("d").get<int>() != kLatentDim || j.at("h").get<int>() != kHiddenDim)
        throw std::runtime_error("artifacts: dimension mismatch");
    params.scales.d_threshold = j.at("scales").at("d_threshold").get<double>();
    params.scales.v_max = j.at("scales").at("v_max").get<double>();
    const auto& w = j.at("weights");
    params.w_phi = matrix_from_json(w.at("w_phi"));
    params.b_phi = vector_from_json(w.at("b_phi"));
    params.w_rho = matrix_from_json(w.at("w_rho"));
    params.b_rho = vector_from_json(w.at("b_rho"));
    params.w_imit = matrix_from_json(w.at("w_imit"));
    params.b_imit = vector_from_json(w.at("b_imit"));
    model.psi = matrix_from_json(j.at("psi"));
    model.gamma = matrix_from_json(j.at("gamma"));
    model.sigma_max = j.at("sigma_max").get<double>();
    model.contraction = j.value("contraction", 0.99);
}

void save_artifacts(const std::filesystem::path& path, const EncoderParams& params,
                    const TransitionModel& model) {
    write_json_file(path, artifacts_to_json(params, model));
}

void load_artifacts(const std::filesystem::path& path, EncoderParams& params,
                    TransitionModel& model) {
    artifacts_from_json(read_json_file(path), params, model);
}

ordered_json trace_to_json(const DecisionTrace& trace, bool with_timing) {
    ordered_json j;
    j["z"] = vector_to_json(trace.z);
    ordered_json cands = ordered_json::array();
    for (const auto& c : trace.candidates) {
        cands.push_back({{"id", c.id},
                         {"sim", c.sim},
                         {"w", c.weight},
                         {"dv", c.delta_v},
                         {"pass", c.passed}});
    }
    j["cands"] = std::move(cands);
    ordered_json clusters = ordered_json::array();
    for (const auto& c : trace.clusters)
        clusters.push_back({{"ids", c.ids}, {"W", c.aggregate_weight}});
    j["clusters"] = std::move(clusters);
    j["win"] = trace.winning_cluster;
    j["action"] = vec3_to_json(trace.action);
    j["ms"] = with_timing ? trace.latency_ms : 0.0;
    j["expert_fallback"] = trace.expert_fallback;
    return j;
}

DecisionTrace trace_from_json(const ordered_json& j) {
    DecisionTrace trace;
    trace.z = vector_from_json(j.at("z"));
    for (const auto& c : j.at("cands")) {
        TraceCandidate tc;
        tc.id = c.at("id").get<std::int64_t>();
        tc.sim = c.at("sim").get<double>();
        tc.weight = c.at("w").get<double>();
        tc.delta_v = c.at("dv").get<double>();
        tc.passed = c.at("pass").get<bool>();
        trace.candidates.push_back(tc);
    }
    for (const auto& c : j.at("clusters"))
        trace.clusters.push_back(
            {c.at("ids").get<std::vector<std::int64_t>>(), c.at("W").get<double>()});
    trace.winning_cluster = j.at("win").get<int>();
    trace.action = vec3_from_json(j.at("action"));
    trace.latency_ms = j.at("ms").get<double>();
    trace.expert_fallback = j.value("expert_fallback", false);
    return trace;
}

ordered_json trajectory_step_to_json(const TrajectoryStep& step) {
    ordered_json j;
    j["t"] = step.t;
    j["ego"] = vec3_to_json(step.ego_position);
    j["vel"] = vec3_to_json(step.ego_velocity);
    ordered_json intruders = ordered_json::array();
    for (const auto& intr : step.intruders) {
        intruders.push_back({{"id", intr.id},
                             {"kind", std::string(1, kind_letter(intr.kind))},
                             {"p", vec3_to_json(intr.position)},
                             {"v", vec3_to_json(intr.velocity)}});
    }
    j["intruders"] = std::move(intruders);
    j["action"] = vec3_to_json(step.action);
    j["triggered"] = step.triggered;
    return j;
}

ordered_json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    ordered_json j;
    in >> j;
    return j;
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

}  // namespace era
