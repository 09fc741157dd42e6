#include "era/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "era/serialize.hpp"

namespace era {

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(const clock_type::time_point& t0) {
    return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

// --- Expert dataset ---------------------------------------------------------

DatasetStats gen_dataset(const EpisodeConfig& base, int episodes,
                         const std::filesystem::path& out, std::uint64_t seed) {
    base.validate();
    auto file = open_out(out);
    ordered_json header;
    header["version"] = 1;
    header["kind"] = "era-dataset";
    header["d_threshold"] = base.trigger_radius;
    header["v_max"] = base.v_max;
    header["seed"] = seed;
    file << header.dump() << '\n';

    DatasetStats stats;
    stats.episodes_run = episodes;
    for (int e = 0; e < episodes; ++e) {
        // Sweep the full difficulty schedule so the bank covers easy and
        // dense regimes alike; seeds vary per episode.
        EpisodeConfig cfg = curriculum(e % 100, base);
        cfg.seed = substream_seed(seed, "gen", static_cast<std::uint64_t>(e));

        const auto run = run_episode(expert_policy(cfg), cfg, reward);
        DatasetEpisodeStat ep;
        ep.episode = e;
        ep.outcome = run.outcome.terminal;

        if (run.outcome.terminal == Terminal::Success) {
            // Recover the sim step of each triggered decision.
            std::vector<int> decision_steps;
            for (std::size_t i = 0; i < run.trajectory.size(); ++i)
                if (run.trajectory[i].triggered) decision_steps.push_back(static_cast<int>(i));

            for (std::size_t d = 0; d < run.status_codes.size(); ++d) {
                ordered_json rec;
                rec["episode"] = e;
                rec["step"] = decision_steps.at(d);
                rec["E"] = eventlist_to_json(run.status_codes[d].event);
                rec["a"] = vec3_to_json(run.status_codes[d].action);
                file << rec.dump() << '\n';
            }
            ep.records = static_cast<int>(run.status_codes.size());
            stats.records += run.status_codes.size();
            stats.episodes_kept += 1;
        }
        stats.per_episode.push_back(ep);
    }
    if (episodes > 0 && stats.episodes_kept == 0)
        throw std::runtime_error(
            "gen_dataset: no collision-free episodes retained; use an easier config");
    return stats;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    Dataset ds;
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) return ds;
    ++lineno;
    const auto header = ordered_json::parse(line);
    if (header.value("kind", std::string{}) != "era-dataset")
        throw std::runtime_error(path.string() + ": not an era dataset file");
    ds.scales.d_threshold = header.at("d_threshold").get<double>();
    ds.scales.v_max = header.at("v_max").get<double>();
    ds.seed = header.value("seed", std::uint64_t{0});

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            DatasetRecord rec;
            rec.episode = j.at("episode").get<int>();
            rec.step = j.at("step").get<int>();
            rec.event = eventlist_from_json(j.at("E"));
            rec.expert_action = vec3_from_json(j.at("a"));
            ds.records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return ds;
}

// --- Pretraining --------------------------------------------------------------

PretrainArtifacts pretrain_cmd(const std::filesystem::path& dataset_path,
                               const PretrainHyper& hyper,
                               const std::filesystem::path& out_params,
                               const std::filesystem::path& out_bank,
                               const std::filesystem::path& out_log) {
    const Dataset ds = load_dataset(dataset_path);
    if (ds.records.empty()) throw std::runtime_error("pretrain: dataset has no records");

    std::vector<TrainingSample> samples;
    samples.reserve(ds.records.size());
    for (const auto& r : ds.records) samples.push_back({r.event, r.expert_action});

    auto trained = pretrain(samples, hyper, ds.scales);

    PretrainArtifacts artifacts{std::move(trained.params), {}, KnowledgeBank(kLatentDim),
                                std::move(trained.loss_curve)};

    std::vector<Eigen::VectorXd> latents;
    latents.reserve(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        latents.push_back(encode(artifacts.params, ds.records[i].event));
        BankEntry entry;
        entry.id = static_cast<std::int64_t>(i) + 1;
        entry.z = latents.back();
        entry.action = ds.records[i].expert_action;
        entry.reliability = 1.0;
        entry.origin = {ds.records[i].episode, ds.records[i].step, EntrySource::Expert};
        artifacts.bank.insert(entry);
    }

    // Transition triples from step-adjacent decisions of the same episode.
    std::vector<LatentTriple> triples;
    for (std::size_t i = 0; i + 1 < ds.records.size(); ++i) {
        if (ds.records[i].episode == ds.records[i + 1].episode &&
            ds.records[i + 1].step == ds.records[i].step + 1)
            triples.push_back({latents[i], ds.records[i].expert_action, latents[i + 1]});
    }
    if (static_cast<int>(triples.size()) < kLatentDim + 3)
        throw std::runtime_error("pretrain: only " + std::to_string(triples.size()) +
                                 " consecutive decision pairs; need at least " +
                                 std::to_string(kLatentDim + 3) +
                                 " to fit the transition model");
    artifacts.model = fit_dynamics(triples);

    artifacts.bank.build_default_index(substream_seed(hyper.seed, "kmeans"));

    save_artifacts(out_params, artifacts.params, artifacts.model);
    artifacts.bank.save(out_bank);
    auto log = open_out(out_log);
    for (std::size_t e = 0; e < artifacts.loss_curve.size(); ++e) {
        ordered_json j;
        j["epoch"] = e;
        j["loss"] = artifacts.loss_curve[e];
        log << j.dump() << '\n';
    }
    return artifacts;
}

// --- ERA episode wrapper --------------------------------------------------------

EraEpisode run_era_episode(const KnowledgeBank& bank, const EncoderParams& encoder,
                           const TransitionModel& model, const ControllerConfig& ctrl,
                           const EpisodeConfig& cfg, int episode_tag) {
    EraEpisode out;
    auto* traces = &out.traces;
    Policy policy = [&bank, &encoder, &model, &ctrl, &cfg, traces](
                        const std::optional<EventList>& events, const WorldState& world) {
        if (!events) return attraction_only(world, cfg);
        auto res = decide(bank, encoder, model, ctrl, *events);
        // Retrieved maneuvers are expressed in the goal-aligned ego frame.
        Vec3 action = res.use_expert ? vpf_action(world, cfg)
                                     : EgoFrame::for_world(world).from_frame(res.action);
        traces->push_back(std::move(res.trace));
        return action;
    };

    out.result = run_episode(policy, cfg, reward);

    if (out.traces.size() != out.result.status_codes.size())
        throw std::logic_error("run_era_episode: trace/status bookkeeping mismatch");
    std::vector<int> decision_steps;
    for (std::size_t i = 0; i < out.result.trajectory.size(); ++i)
        if (out.result.trajectory[i].triggered) decision_steps.push_back(static_cast<int>(i));

    for (std::size_t d = 0; d < out.result.status_codes.size(); ++d) {
        BufferRecord rec;
        rec.episode = episode_tag;
        rec.step = decision_steps.at(d);
        rec.status = out.result.status_codes[d];
        rec.trace = out.traces[d];
        rec.warning_step = out.result.status_warning[d];
        out.buffer.append(std::move(rec));
    }
    out.buffer.close_episode(out.result.outcome);
    return out;
}

// --- Curriculum training ----------------------------------------------------------

TrainStats train_cmd(const std::filesystem::path& params_path,
                     const std::filesystem::path& bank_path, int episodes,
                     const EpisodeConfig& base, const ControllerConfig& ctrl,
                     const std::filesystem::path& out_bank,
                     const std::filesystem::path& out_log, const HarnessOptions& opts) {
    EncoderParams params;
    TransitionModel model;
    load_artifacts(params_path, params, model);
    KnowledgeBank bank = KnowledgeBank::load(bank_path);
    if (bank.empty()) throw std::runtime_error("train: starting bank is empty");

    EpisodeConfig schedule_base = base;
    schedule_base.seed = substream_seed(opts.seed, "train");

    auto log = open_out(out_log);
    TrainStats stats;
    for (int e = 0; e < episodes; ++e) {
        const EpisodeConfig cfg = curriculum(e, schedule_base);
        auto episode = run_era_episode(bank, params, model, ctrl, cfg, e);

        TrainEpisodeLog entry;
        entry.episode = e;
        entry.xi = cfg.difficulty;
        entry.success = episode.result.outcome.terminal == Terminal::Success;
        entry.collision = episode.result.outcome.terminal == Terminal::Collision;
        entry.warning = episode.result.outcome.had_warning;
        entry.decisions = episode.result.outcome.decision_steps;
        entry.j_perf = episode.buffer.empty() ? 0.0 : j_perf(episode.buffer);
        double rp = 0.0;
        for (const auto& trace : episode.traces) rp += r_phys(trace, bank);
        entry.r_phys = episode.traces.empty() ? 0.0 : rp / static_cast<double>(episode.traces.size());
        entry.combined = ctrl.lambda_p * entry.r_phys - ctrl.lambda_r * entry.j_perf;

        entry.adapt = adapt(bank, episode.buffer, params, ctrl, episode.result.outcome);
        if (bank.empty()) throw std::runtime_error("train: bank emptied at episode " +
                                                   std::to_string(e));
        bank.rebuild_index_if_stale();
        entry.bank_size = bank.size();

        ordered_json j;
        j["episode"] = entry.episode;
        j["xi"] = entry.xi;
        j["success"] = entry.success;
        j["collision"] = entry.collision;
        j["warning"] = entry.warning;
        j["j_perf"] = entry.j_perf;
        j["r_phys"] = entry.r_phys;
        j["combined"] = entry.combined;
        j["bank_size"] = entry.bank_size;
        j["decisions"] = entry.decisions;
        j["pruned"] = entry.adapt.pruned;
        j["penalized"] = entry.adapt.penalized;
        j["inserted"] = entry.adapt.inserted;
        log << j.dump() << '\n';
        stats.episodes.push_back(entry);
    }
    stats.final_bank_size = bank.size();
    bank.save(out_bank);
    return stats;
}

// --- Evaluation ----------------------------------------------------------------

PolicyKind policy_from_name(const std::string& name) {
    if (name == "era") return PolicyKind::Era;
    if (name == "expert") return PolicyKind::Expert;
    throw std::invalid_argument("unknown policy: " + name);
}

const char* policy_name(PolicyKind p) { return p == PolicyKind::Era ? "era" : "expert"; }

namespace {

ordered_json report_to_json(const MetricsReport& r) {
    ordered_json j;
    j["policy"] = r.policy;
    j["difficulty"] = r.difficulty;
    j["seeds"] = r.seeds;
    j["seed_list"] = r.seed_list;
    j["success_rate"] = r.success_rate;
    j["collision_rate"] = r.collision_rate;
    j["timeout_rate"] = r.timeout_rate;
    j["warning_rate"] = r.warning_rate;
    j["avg_steps"] = r.avg_steps;
    j["reaction_ms"] = r.reaction_ms;
    j["bank_size"] = r.bank_size;
    j["counts"] = {{"success", r.success_count},
                   {"collision", r.collision_count},
                   {"timeout", r.timeout_count}};
    return j;
}

}  // namespace

MetricsReport eval_cmd(const std::filesystem::path& params_path,
                       const std::filesystem::path& bank_path, Difficulty difficulty, int seeds,
                       PolicyKind policy, const ControllerConfig& ctrl,
                       const EpisodeConfig& base, const HarnessOptions& opts,
                       const std::filesystem::path& out_report,
                       const std::optional<std::filesystem::path>& traces_out) {
    EncoderParams params;
    TransitionModel model;
    load_artifacts(params_path, params, model);
    const KnowledgeBank bank = KnowledgeBank::load(bank_path);
    if (policy == PolicyKind::Era && bank.empty())
        throw std::runtime_error("eval: bank is empty");

    MetricsReport report;
    report.policy = policy_name(policy);
    report.difficulty = difficulty_name(difficulty);
    report.seeds = seeds;
    report.bank_size = bank.size();
    for (int i = 0; i < seeds; ++i)
        report.seed_list.push_back(substream_seed(opts.seed, "eval", static_cast<std::uint64_t>(i)));

    std::vector<EpisodeOutcome> outcomes(static_cast<std::size_t>(seeds));
    std::vector<std::vector<DecisionTrace>> all_traces(static_cast<std::size_t>(seeds));

    auto run_one = [&](int i) {
        EpisodeConfig cfg = difficulty_preset(difficulty, base);
        cfg.seed = report.seed_list[static_cast<std::size_t>(i)];
        if (policy == PolicyKind::Expert) {
            outcomes[static_cast<std::size_t>(i)] =
                run_episode(expert_policy(cfg), cfg, reward).outcome;
        } else {
            auto episode = run_era_episode(bank, params, model, ctrl, cfg, i);
            outcomes[static_cast<std::size_t>(i)] = episode.result.outcome;
            if (traces_out) all_traces[static_cast<std::size_t>(i)] = std::move(episode.traces);
        }
    };

    const int workers = std::max(1, opts.threads);
    if (workers == 1) {
        for (int i = 0; i < seeds; ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> cursor{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int i = cursor.fetch_add(1); i < seeds; i = cursor.fetch_add(1)) run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    double decisions_total = 0.0;
    double decide_ms_total = 0.0;
    double steps_total = 0.0;
    for (const auto& o : outcomes) {
        switch (o.terminal) {
            case Terminal::Success: ++report.success_count; break;
            case Terminal::Collision: ++report.collision_count; break;
            case Terminal::Timeout: ++report.timeout_count; break;
        }
        if (o.had_warning) report.warning_rate += 1.0;
        steps_total += o.decision_steps;
        decisions_total += o.decision_steps;
        decide_ms_total += o.wall_reaction_ms * o.decision_steps;
    }
    const double n = std::max(1, seeds);
    report.success_rate = report.success_count / n;
    report.collision_rate = report.collision_count / n;
    report.timeout_rate = report.timeout_count / n;
    report.warning_rate /= n;
    report.avg_steps = steps_total / n;
    report.reaction_ms =
        (opts.timing && decisions_total > 0.0) ? decide_ms_total / decisions_total : 0.0;

    write_json_file(out_report, report_to_json(report));
    if (traces_out) {
        auto tf = open_out(*traces_out);
        for (const auto& per_seed : all_traces)
            for (const auto& trace : per_seed) tf << trace_to_json(trace, opts.timing).dump() << '\n';
    }
    return report;
}

// --- Benchmark --------------------------------------------------------------------

namespace {

StagePercentiles percentiles(std::vector<double> samples) {
    StagePercentiles p;
    if (samples.empty()) return p;
    std::sort(samples.begin(), samples.end());
    auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(q * static_cast<double>(samples.size() - 1));
        return samples[idx];
    };
    p.p50 = at(0.50);
    p.p90 = at(0.90);
    p.p99 = at(0.99);
    return p;
}

// Synthetic clustered latents in the style of the real bank: well-separated
// Gaussian cluster centers with tight spread.
struct SyntheticLatents {
    std::vector<Eigen::VectorXd> centers;
    Eigen::VectorXd draw_member(Rng& rng) const {
        const auto& c = centers[rng.uniform_int(centers.size())];
        Eigen::VectorXd z = c;
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) += 0.05 * rng.normal();
        return z;
    }
    static SyntheticLatents make(int n_centers, int dim, Rng& rng) {
        SyntheticLatents s;
        for (int c = 0; c < n_centers; ++c) {
            Eigen::VectorXd v(dim);
            for (int i = 0; i < dim; ++i) v(i) = rng.normal();
            s.centers.push_back(std::move(v));
        }
        return s;
    }
};

EventList synthetic_event_list(Rng& rng, const FeatureScales& scales, int max_elements = 12) {
    EventList events;
    const int n = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_elements)));
    for (int i = 0; i < n; ++i) {
        EventElement e;
        e.object_id = i + 1;
        e.rel_position = rng.normal_vec3() * (0.3 * scales.d_threshold);
        e.rel_velocity = rng.normal_vec3() * (0.3 * scales.v_max);
        e.kind = static_cast<IntruderKind>(rng.uniform_int(3));
        e.risk = rng.uniform();
        events.elements.push_back(e);
    }
    events.global.self_velocity = rng.normal_vec3() * (0.3 * scales.v_max);
    events.global.speed = events.global.self_velocity.norm();
    events.global.target_unit = rng.uniform_unit_vec3();
    events.global.target_distance = rng.uniform(5.0, 30.0);
    return events;
}

}  // namespace

BenchReport bench_cmd(const std::filesystem::path& params_path,
                      const std::filesystem::path& bank_path,
                      const std::vector<std::size_t>& bank_sizes, int calls,
                      const ControllerConfig& ctrl, const HarnessOptions& opts,
                      const std::filesystem::path& out_report) {
    EncoderParams params;
    TransitionModel model;
    load_artifacts(params_path, params, model);
    const KnowledgeBank base_bank = KnowledgeBank::load(bank_path);

    BenchReport report;
    report.k = ctrl.retrieval.k;
    report.calls = calls;
    report.bytes_per_entry =
        static_cast<double>(kLatentDim) * 8.0 + 8.0 /*inv norm*/ + 8.0 /*id*/ + 24.0 /*action*/ +
        8.0 /*reliability*/ + 16.0 /*origin*/ + 8.0 /*list assignment*/;

    Rng rng = substream(opts.seed, "bench");
    const auto clusters = SyntheticLatents::make(48, kLatentDim, rng);

    // Encoder stage percentiles are bank-independent.
    {
        std::vector<double> times;
        for (int i = 0; i < calls; ++i) {
            const auto events = synthetic_event_list(rng, params.scales);
            const auto t0 = clock_type::now();
            volatile double sink = encode(params, events).sum();
            (void)sink;
            times.push_back(ms_since(t0));
        }
        report.encode_ms = percentiles(std::move(times));
    }

    for (const std::size_t target : bank_sizes) {
        KnowledgeBank bank(kLatentDim);
        // Real entries first, synthetic padding after.
        for (std::size_t row = 0; row < base_bank.size() && row < target; ++row) {
            const auto id = base_bank.ids()[row];
            BankEntry e;
            e.id = id;
            e.z = base_bank.latent_of(id);
            e.action = base_bank.action_of(id);
            e.reliability = base_bank.reliability_of(id);
            e.origin = base_bank.origin_of(id);
            bank.insert(e);
        }
        Rng pad_rng = substream(opts.seed, "bench-pad", target);
        while (bank.size() < target) {
            BankEntry e;
            e.id = bank.next_id();
            e.z = clusters.draw_member(pad_rng);
            e.action = pad_rng.uniform_unit_vec3() * pad_rng.uniform(0.5, 5.0);
            e.reliability = pad_rng.uniform(0.5, 1.0);
            e.origin = {0, 0, EntrySource::Online};
            bank.insert(e);
        }
        bank.build_default_index(substream_seed(opts.seed, "bench-index", target));

        BenchSizeReport size_report;
        size_report.bank_size = bank.size();
        size_report.memory_mb =
            report.bytes_per_entry * static_cast<double>(bank.size()) / (1024.0 * 1024.0);

        std::vector<Eigen::VectorXd> queries;
        queries.reserve(static_cast<std::size_t>(calls));
        for (int i = 0; i < calls; ++i) queries.push_back(clusters.draw_member(pad_rng));

        std::vector<double> retrieve_times;
        retrieve_times.reserve(queries.size());
        for (const auto& q : queries) {
            const auto t0 = clock_type::now();
            const auto r = bank.search_ann(q, ctrl.retrieval.k);
            volatile double sink = r.candidates.empty() ? 0.0 : r.candidates.front().sim;
            (void)sink;
            retrieve_times.push_back(ms_since(t0));
        }
        size_report.retrieve_ms = percentiles(std::move(retrieve_times));

        // Recall against the exact oracle on the same query set.
        const int recall_queries = std::min(calls, 200);
        double recall_sum = 0.0;
        for (int i = 0; i < recall_queries; ++i) {
            const auto& q = queries[static_cast<std::size_t>(i)];
            const auto approx = bank.search_ann(q, ctrl.retrieval.k).candidates;
            const auto exact = bank.search_exact(q, ctrl.retrieval.k);
            int hits = 0;
            for (const auto& a : approx)
                for (const auto& e : exact)
                    if (a.id == e.id) {
                        ++hits;
                        break;
                    }
            recall_sum += static_cast<double>(hits) / static_cast<double>(exact.size());
        }
        size_report.recall_at_k = recall_sum / std::max(1, recall_queries);

        std::vector<double> decide_times;
        decide_times.reserve(static_cast<std::size_t>(calls));
        std::vector<double> stabilize_times;
        std::vector<double> fuse_times;
        for (int i = 0; i < calls; ++i) {
            const auto events = synthetic_event_list(rng, params.scales);
            const auto t0 = clock_type::now();
            const auto res = decide(bank, params, model, ctrl, events);
            decide_times.push_back(ms_since(t0));

            // Stage timings on the same retrieved set.
            const auto z = res.trace.z;
            auto retrieved = bank.search_ann(z, ctrl.retrieval.k).candidates;
            if (retrieved.empty()) continue;
            auto cands = compute_weights(std::move(retrieved), ctrl.retrieval);
            std::vector<TraceCandidate> tc;
            for (const auto& c : cands)
                tc.push_back({c.id, c.sim, c.weight, 0.0, 0.0, false, bank.action_of(c.id)});
            const auto t1 = clock_type::now();
            bool expert = false;
            auto survivors = filter_stable(tc, z, model, ctrl.dv_margin, ctrl.fallback, &expert);
            stabilize_times.push_back(ms_since(t1));
            if (!expert && !survivors.empty()) {
                const auto t2 = clock_type::now();
                const auto groups = cluster_actions(survivors, ctrl.theta_c);
                volatile double sink =
                    fuse(groups[static_cast<std::size_t>(select_cluster(groups))], survivors,
                         ctrl.v_max)
                        .norm();
                (void)sink;
                fuse_times.push_back(ms_since(t2));
            }
        }
        size_report.end_to_end_ms = percentiles(std::move(decide_times));
        if (report.stabilize_ms.p50 == 0.0) report.stabilize_ms = percentiles(stabilize_times);
        if (report.fuse_ms.p50 == 0.0) report.fuse_ms = percentiles(fuse_times);

        report.sizes.push_back(size_report);
    }

    if (report.sizes.size() >= 2) {
        const auto by_size = [](const BenchSizeReport& a, const BenchSizeReport& b) {
            return a.bank_size < b.bank_size;
        };
        const auto mn = std::min_element(report.sizes.begin(), report.sizes.end(), by_size);
        const auto mx = std::max_element(report.sizes.begin(), report.sizes.end(), by_size);
        if (mn->retrieve_ms.p50 > 0.0)
            report.scaling_ratio = mx->retrieve_ms.p50 / mn->retrieve_ms.p50;
    }

    ordered_json j;
    j["k"] = report.k;
    j["calls"] = report.calls;
    auto stage_json = [](const StagePercentiles& p) {
        return ordered_json{{"p50", p.p50}, {"p90", p.p90}, {"p99", p.p99}};
    };
    j["encode_ms"] = stage_json(report.encode_ms);
    j["stabilize_ms"] = stage_json(report.stabilize_ms);
    j["fuse_ms"] = stage_json(report.fuse_ms);
    ordered_json sizes = ordered_json::array();
    for (const auto& s : report.sizes) {
        sizes.push_back({{"bank_size", s.bank_size},
                         {"retrieve_ms", stage_json(s.retrieve_ms)},
                         {"end_to_end_ms", stage_json(s.end_to_end_ms)},
                         {"recall_at_k", s.recall_at_k},
                         {"memory_mb", s.memory_mb}});
    }
    j["sizes"] = std::move(sizes);
    j["bytes_per_entry"] = report.bytes_per_entry;
    j["scaling_ratio"] = report.scaling_ratio;
    write_json_file(out_report, j);
    return report;
}

// --- Trace audit --------------------------------------------------------------------

TraceVerification verify_traces(const std::filesystem::path& traces_path,
                                const std::filesystem::path& bank_path,
                                const std::filesystem::path& params_path,
                                const ControllerConfig& ctrl) {
    // Raw artifact JSON, deliberately not the typed loaders: the checks below
    // redo the arithmetic with plain loops.
    const auto artifact = read_json_file(params_path);
    const auto psi = artifact.at("psi").get<std::vector<std::vector<double>>>();
    const auto gamma = artifact.at("gamma").get<std::vector<std::vector<double>>>();
    const std::size_t d = psi.size();

    const KnowledgeBank bank = KnowledgeBank::load(bank_path);

    EncoderParams params;
    TransitionModel model;
    load_artifacts(params_path, params, model);

    std::ifstream in(traces_path);
    if (!in) throw std::runtime_error("cannot open " + traces_path.string());

    TraceVerification v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = ordered_json::parse(line);
        const auto z = j.at("z").get<std::vector<double>>();
        if (z.size() != d) throw std::runtime_error("verify: latent dimension mismatch");
        ++v.decisions;

        double z_sq = 0.0;
        for (const double x : z) z_sq += x * x;

        for (const auto& c : j.at("cands")) {
            ++v.candidates_checked;
            const auto id = c.at("id").get<std::int64_t>();
            if (!bank.contains(id)) {
                ++v.missing_entries;
                continue;
            }
            const Vec3 a = bank.action_of(id);
            // z' = Psi z + Gamma a, elementwise.
            double next_sq = 0.0;
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0.0;
                for (std::size_t cidx = 0; cidx < d; ++cidx) acc += psi[r][cidx] * z[cidx];
                acc += gamma[r][0] * a.x + gamma[r][1] * a.y + gamma[r][2] * a.z;
                next_sq += acc * acc;
            }
            const double dv = next_sq - z_sq;
            if (std::abs(dv - c.at("dv").get<double>()) > 1e-9 * std::max(1.0, std::abs(dv)))
                ++v.dv_mismatches;
            if (c.at("pass").get<bool>() && !(dv < ctrl.dv_margin)) ++v.filter_violations;
        }

        // Pipeline replay must reproduce the fused action bit-for-bit.
        if (!j.value("expert_fallback", false)) {
            Eigen::VectorXd zq =
                Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
            const auto replay = decide_from_latent(bank, model, ctrl, zq);
            const Vec3 recorded = vec3_from_json(j.at("action"));
            if (!(replay.action == recorded)) ++v.action_mismatches;
        }
    }
    return v;
}

}  // namespace era
