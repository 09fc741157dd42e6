#include "era/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "era/harness.hpp"
#include "era/serialize.hpp"

namespace era {

namespace {

struct GlobalFlags {
    std::string config_file;
    std::uint64_t seed = 0;
    int threads = 1;
    bool no_timing = false;
};

struct LoadedConfig {
    EpisodeConfig episode;
    ControllerConfig controller;
};

void take_double(std::map<std::string, std::string>& kv, const std::string& key, double& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    out = std::stod(it->second);
    kv.erase(it);
}

void take_int(std::map<std::string, std::string>& kv, const std::string& key, int& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    out = std::stoi(it->second);
    kv.erase(it);
}

void take_bool(std::map<std::string, std::string>& kv, const std::string& key, bool& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    out = it->second == "1" || it->second == "true" || it->second == "yes";
    kv.erase(it);
}

LoadedConfig load_full_config(const GlobalFlags& flags) {
    LoadedConfig cfg;
    if (flags.config_file.empty()) return cfg;
    auto kv = parse_key_value_file(flags.config_file);
    apply_episode_keys(kv, cfg.episode);

    auto& c = cfg.controller;
    take_int(kv, "retrieval_k", c.retrieval.k);
    take_double(kv, "tau", c.retrieval.tau);
    take_double(kv, "alpha", c.retrieval.alpha);
    take_double(kv, "dv_margin", c.dv_margin);
    take_double(kv, "theta_c", c.theta_c);
    take_double(kv, "implicate_threshold", c.implicate_threshold);
    take_double(kv, "novelty_sim", c.novelty_sim);
    take_double(kv, "penalize_factor", c.penalize_factor);
    take_double(kv, "reliability_floor", c.reliability_floor);
    take_bool(kv, "protect_expert", c.protect_expert);
    take_double(kv, "lambda_p", c.lambda_p);
    take_double(kv, "lambda_r", c.lambda_r);
    if (auto it = kv.find("fallback"); it != kv.end()) {
        if (it->second == "min_delta_v") c.fallback = Fallback::MinDeltaV;
        else if (it->second == "vpf_expert") c.fallback = Fallback::VpfExpert;
        else throw std::runtime_error("unknown fallback: " + it->second);
        kv.erase(it);
    }
    if (!kv.empty()) throw std::runtime_error("unknown config key: " + kv.begin()->first);

    cfg.episode.validate();
    cfg.controller.v_max = cfg.episode.v_max;
    return cfg;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
    std::vector<std::size_t> sizes;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) sizes.push_back(std::stoull(item));
    }
    if (sizes.empty()) throw std::runtime_error("--sizes: expected a comma-separated list");
    return sizes;
}

void print_trace(const ordered_json& j, std::size_t index) {
    std::cout << "decision " << index << "  action=[" << j.at("action").at(0).get<double>()
              << ", " << j.at("action").at(1).get<double>() << ", "
              << j.at("action").at(2).get<double>() << "]  win=" << j.at("win").get<int>()
              << "  ms=" << j.at("ms").get<double>() << "\n";
    std::cout << "  candidates (id, sim, w, dv, pass):\n";
    for (const auto& c : j.at("cands")) {
        std::cout << "    " << c.at("id").get<std::int64_t>() << "  sim=" << c.at("sim").get<double>()
                  << "  w=" << c.at("w").get<double>() << "  dv=" << c.at("dv").get<double>()
                  << "  " << (c.at("pass").get<bool>() ? "pass" : "cut") << "\n";
    }
    std::cout << "  clusters:";
    for (const auto& c : j.at("clusters")) {
        std::cout << " {W=" << c.at("W").get<double>() << " ids=[";
        bool first = true;
        for (const auto& id : c.at("ids")) {
            if (!first) std::cout << ",";
            std::cout << id.get<std::int64_t>();
            first = false;
        }
        std::cout << "]}";
    }
    std::cout << "\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"era: event-retrieve-action navigation stack"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalFlags flags;
    app.add_option("--config", flags.config_file, "key=value config file");
    app.add_option("--seed", flags.seed, "master seed for all sub-streams");
    app.add_option("--threads", flags.threads, "evaluation worker threads");
    app.add_flag("--no-timing", flags.no_timing,
                 "zero wall-clock fields for byte-reproducible outputs");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the expert demonstration dataset");
    int gen_episodes = 500;
    std::string gen_out = "dataset.jsonl";
    gen->add_option("--episodes", gen_episodes, "expert episodes to run");
    gen->add_option("--out", gen_out, "output dataset JSONL");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "train encoder, build bank and index");
    std::string pre_dataset = "dataset.jsonl";
    std::string pre_params = "params.json";
    std::string pre_bank = "bank.jsonl";
    std::string pre_log = "pretrain_log.jsonl";
    PretrainHyper hyper;
    pre->add_option("--dataset", pre_dataset, "input dataset JSONL");
    pre->add_option("--out-params", pre_params, "output encoder+dynamics JSON");
    pre->add_option("--out-bank", pre_bank, "output bank JSONL");
    pre->add_option("--log", pre_log, "output loss-curve JSONL");
    pre->add_option("--epochs", hyper.epochs, "training epochs");
    pre->add_option("--lr", hyper.learning_rate, "learning rate");
    pre->add_option("--batch", hyper.batch_size, "minibatch size");
    pre->add_option("--pairs", hyper.pairs_per_batch, "metric pairs per batch");
    pre->add_option("--lambda-m", hyper.lambda_m, "metric loss weight");
    pre->add_option("--lambda-i", hyper.lambda_i, "imitation loss weight");

    // train
    auto* train = app.add_subcommand("train", "run the adversarial curriculum with adaptation");
    std::string train_params = "params.json";
    std::string train_bank = "bank.jsonl";
    std::string train_out_bank = "bank_trained.jsonl";
    std::string train_log = "train_log.jsonl";
    int train_episodes = 100;
    train->add_option("--params", train_params, "encoder+dynamics JSON");
    train->add_option("--bank", train_bank, "input bank JSONL");
    train->add_option("--episodes", train_episodes, "curriculum episodes");
    train->add_option("--out-bank", train_out_bank, "output bank JSONL");
    train->add_option("--out-log", train_log, "per-episode log JSONL");

    // eval
    auto* eval = app.add_subcommand("eval", "seeded fixed-difficulty benchmark");
    std::string eval_params = "params.json";
    std::string eval_bank = "bank.jsonl";
    std::string eval_difficulty = "medium";
    std::string eval_policy = "era";
    std::string eval_out = "report.json";
    std::string eval_traces;
    int eval_seeds = 25;
    eval->add_option("--params", eval_params, "encoder+dynamics JSON");
    eval->add_option("--bank", eval_bank, "bank JSONL");
    eval->add_option("--difficulty", eval_difficulty, "easy|medium|hard|extreme");
    eval->add_option("--seeds", eval_seeds, "episodes / paired seeds");
    eval->add_option("--policy", eval_policy, "era|expert");
    eval->add_option("--out", eval_out, "output report JSON");
    eval->add_option("--traces", eval_traces, "optional decision-trace JSONL (era only)");

    // bench
    auto* bench = app.add_subcommand("bench", "latency, recall and scaling benchmark");
    std::string bench_params = "params.json";
    std::string bench_bank = "bank.jsonl";
    std::string bench_sizes = "10000,30650,100000";
    std::string bench_out = "bench.json";
    int bench_calls = 1000;
    bench->add_option("--params", bench_params, "encoder+dynamics JSON");
    bench->add_option("--bank", bench_bank, "bank JSONL");
    bench->add_option("--sizes", bench_sizes, "comma-separated bank sizes");
    bench->add_option("--calls", bench_calls, "calls per percentile (>= 1000 recommended)");
    bench->add_option("--out", bench_out, "output report JSON");

    // inspect-trace
    auto* inspect = app.add_subcommand("inspect-trace", "pretty-print or verify decision traces");
    std::string tr_path;
    std::string tr_bank;
    std::string tr_params;
    bool tr_verify = false;
    int tr_limit = 10;
    inspect->add_option("--traces", tr_path, "decision-trace JSONL")->required();
    inspect->add_option("--bank", tr_bank, "bank JSONL (required with --verify)");
    inspect->add_option("--params", tr_params, "encoder+dynamics JSON (required with --verify)");
    inspect->add_flag("--verify", tr_verify, "replay traces and check filter soundness");
    inspect->add_option("--limit", tr_limit, "decisions to pretty-print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const LoadedConfig cfg = load_full_config(flags);
        HarnessOptions opts;
        opts.seed = flags.seed;
        opts.threads = flags.threads;
        opts.timing = !flags.no_timing;

        EpisodeConfig episode = cfg.episode;
        episode.seed = flags.seed;
        ControllerConfig ctrl = cfg.controller;
        ctrl.v_max = episode.v_max;

        if (gen->parsed()) {
            const auto stats = gen_dataset(episode, gen_episodes, gen_out, flags.seed);
            std::cout << "episodes=" << stats.episodes_run << " kept=" << stats.episodes_kept
                      << " records=" << stats.records << "\n";
        } else if (pre->parsed()) {
            hyper.seed = flags.seed;
            const auto artifacts = pretrain_cmd(pre_dataset, hyper, pre_params, pre_bank, pre_log);
            std::cout << "bank_size=" << artifacts.bank.size()
                      << " sigma_max=" << artifacts.model.sigma_max
                      << " final_loss=" << (artifacts.loss_curve.empty() ? 0.0 : artifacts.loss_curve.back())
                      << "\n";
        } else if (train->parsed()) {
            const auto stats = train_cmd(train_params, train_bank, train_episodes, episode, ctrl,
                                         train_out_bank, train_log, opts);
            int successes = 0;
            for (const auto& e : stats.episodes) successes += e.success ? 1 : 0;
            std::cout << "episodes=" << stats.episodes.size() << " successes=" << successes
                      << " final_bank=" << stats.final_bank_size << "\n";
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> traces;
            if (!eval_traces.empty()) traces = eval_traces;
            const auto report =
                eval_cmd(eval_params, eval_bank, difficulty_from_name(eval_difficulty), eval_seeds,
                         policy_from_name(eval_policy), ctrl, episode, opts, eval_out, traces);
            std::cout << "policy=" << report.policy << " success=" << report.success_rate
                      << " collision=" << report.collision_rate
                      << " warning=" << report.warning_rate << " avg_steps=" << report.avg_steps
                      << " reaction_ms=" << report.reaction_ms << "\n";
        } else if (bench->parsed()) {
            const auto report = bench_cmd(bench_params, bench_bank, parse_sizes(bench_sizes),
                                          bench_calls, ctrl, opts, bench_out);
            for (const auto& s : report.sizes)
                std::cout << "size=" << s.bank_size << " retrieve_p50_ms=" << s.retrieve_ms.p50
                          << " recall=" << s.recall_at_k << "\n";
            std::cout << "scaling_ratio=" << report.scaling_ratio << "\n";
        } else if (inspect->parsed()) {
            if (tr_verify) {
                if (tr_bank.empty() || tr_params.empty())
                    throw std::runtime_error("--verify requires --bank and --params");
                const auto v = verify_traces(tr_path, tr_bank, tr_params, ctrl);
                std::cout << "decisions=" << v.decisions
                          << " candidates=" << v.candidates_checked
                          << " filter_violations=" << v.filter_violations
                          << " dv_mismatches=" << v.dv_mismatches
                          << " action_mismatches=" << v.action_mismatches
                          << " missing_entries=" << v.missing_entries << "\n";
                if (v.filter_violations || v.dv_mismatches || v.action_mismatches) return 1;
            } else {
                std::ifstream in(tr_path);
                if (!in) throw std::runtime_error("cannot open " + tr_path);
                std::string line;
                std::size_t index = 0;
                while (index < static_cast<std::size_t>(tr_limit) && std::getline(in, line)) {
                    if (line.empty()) continue;
                    print_trace(ordered_json::parse(line), index++);
                }
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace era
