#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsrl/checkpoint.hpp"
#include "dsrl/dsdqn.hpp"
#include "dsrl/errors.hpp"
#include "dsrl/harness.hpp"
#include "dsrl/lfa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsrl;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string env;
    std::string algorithm;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_env = true) {
    cmd->add_option("--config", opts.config_path, "JSON experiment config");
    if (with_env)
        cmd->add_option("--env", opts.env, "environment id (gridworld|mountaincar|minibreakout)");
    cmd->add_option("--algorithm", opts.algorithm, "dsdqn or vanilla (overrides config)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config)");
    cmd->add_option("--jobs", opts.jobs, "worker threads for trials");
}

harness::ExperimentConfig load_config(const CommonOpts& opts) {
    harness::ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw ConfigError("config", "cannot read config file: " + opts.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw ConfigError("config", std::string("config is not valid JSON: ") + e.what());
        }
        cfg = harness::config_from_json(j);
    } else if (!opts.env.empty()) {
        cfg = harness::default_config(envs::env_id_from_string(opts.env));
    } else {
        throw ConfigError("config", "either --config or --env is required");
    }
    if (!opts.env.empty() && !opts.config_path.empty() &&
        envs::env_id_from_string(opts.env) != cfg.task.env_id)
        throw ConfigError("env", "--env " + opts.env + " conflicts with config env " +
                                     envs::to_string(cfg.task.env_id));
    if (!opts.algorithm.empty()) {
        if (opts.algorithm == "vanilla") cfg.train.vanilla = true;
        else if (opts.algorithm == "dsdqn") cfg.train.vanilla = false;
        else throw ConfigError("algorithm", "must be dsdqn or vanilla");
    }
    if (opts.seed) {
        cfg.master_seed = *opts.seed;
        cfg.task.seed = *opts.seed;
    }
    if (opts.jobs) cfg.jobs = *opts.jobs;
    harness::validate_config(cfg);
    return cfg;
}

fs::path ensure_out(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("out", "cannot write file: " + path.string());
    out << j.dump(2) << "\n";
}

int cmd_train(const CommonOpts& opts) {
    const auto cfg = load_config(opts);
    const fs::path out = ensure_out(opts.out_dir);
    const std::uint64_t seed = harness::training_seed(cfg.master_seed, 0);
    std::printf("training %s on %s (seed %llu, %zu episodes)\n",
                cfg.train.vanilla ? "vanilla" : "dsdqn",
                envs::to_string(cfg.task.env_id).c_str(),
                static_cast<unsigned long long>(cfg.master_seed), cfg.train.episodes);
    const dsdqn::TrainResult result = dsdqn::train(cfg.task, cfg.train, seed);
    harness::write_training_log_csv(result.log, (out / "training_log.csv").string());
    harness::write_corr_trace_csv(result.log, (out / "corr_trace.csv").string());
    save_checkpoint(result.checkpoint, (out / "features.ckpt.json").string());
    write_json_file(dsdqn::full_model_to_json(result.final_net,
                                              envs::to_string(cfg.task.env_id), seed),
                    out / "full_model.ckpt.json");
    if (result.log.pair_fallbacks > 0)
        std::fprintf(stderr,
                     "note: clustered pair sampler fell back to uniform on %zu updates\n",
                     result.log.pair_fallbacks);
    if (result.log.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", result.log.abort_reason.c_str());
        return 3;
    }
    std::printf("done: %zu episodes, best moving-average return %s at episode %zu\n",
                result.log.episodes.size(), harness::format_double(result.log.best_moving_avg).c_str(),
                result.log.best_episode);
    return 0;
}

std::vector<lfa::TransferResult> run_transfers(const harness::ExperimentConfig& cfg,
                                               const lfa::Featurizer& feats) {
    std::vector<lfa::TransferResult> runs(cfg.runs);
    harness::parallel_for(cfg.runs, cfg.jobs, [&](std::size_t r) {
        const envs::TaskSpec run_task =
            envs::perturb_goal(cfg.task, harness::task_seed(cfg.master_seed, 0, r));
        runs[r] = lfa::run_transfer(feats, run_task, cfg.exit, cfg.transfer,
                                    harness::transfer_seed(cfg.master_seed, 0, r));
    });
    return runs;
}

int report_transfers(const harness::ExperimentConfig& cfg,
                     const std::vector<lfa::TransferResult>& runs, const fs::path& out) {
    harness::write_transfer_log_csv(runs, (out / "transfer_log.csv").string());
    const json summary = harness::transfer_summary_json(runs, cfg.transfer.episode_cap);
    write_json_file(summary, out / "transfer_summary.json");
    std::printf("episodes_to_exit mean %s (std %s) over %zu runs, cap %zu\n",
                harness::format_double(summary.at("mean").get<double>()).c_str(),
                harness::format_double(summary.at("std_dev").get<double>()).c_str(),
                runs.size(), cfg.transfer.episode_cap);
    return 0;
}

int cmd_transfer(const CommonOpts& opts, const std::string& ckpt_path) {
    const FeatureCheckpoint ckpt = load_checkpoint(ckpt_path);
    CommonOpts filled = opts;
    if (filled.config_path.empty() && filled.env.empty()) filled.env = ckpt.env_id;
    const auto cfg = load_config(filled);
    if (ckpt.env_id != envs::to_string(cfg.task.env_id))
        throw ConfigError("env", "checkpoint was trained on " + ckpt.env_id);
    const fs::path out = ensure_out(opts.out_dir);
    const auto runs = run_transfers(cfg, lfa::Featurizer::from_checkpoint(ckpt));
    return report_transfers(cfg, runs, out);
}

int cmd_baseline_raw(const CommonOpts& opts) {
    const auto cfg = load_config(opts);
    const fs::path out = ensure_out(opts.out_dir);
    const auto feats = lfa::Featurizer::raw(envs::observation_dim(cfg.task.env_id));
    const auto runs = run_transfers(cfg, feats);
    return report_transfers(cfg, runs, out);
}

int cmd_trials(const CommonOpts& opts) {
    const auto cfg = load_config(opts);
    const fs::path out = ensure_out(opts.out_dir);
    std::printf("trial protocol: %zu trainings x %zu runs on %s (%s)\n", cfg.trainings,
                cfg.runs, envs::to_string(cfg.task.env_id).c_str(),
                cfg.train.vanilla ? "vanilla" : "dsdqn");
    const harness::TrialReport report = harness::run_trials(cfg);
    write_json_file(harness::trial_report_to_json(report), out / "trial_report.json");

    std::ostringstream csv;
    csv << "trial,run,episodes_to_exit,exited,diverged\n";
    for (const auto& t : report.trials) {
        if (t.failed) continue;
        for (std::size_t r = 0; r < t.episodes_to_exit.size(); ++r)
            csv << t.trial << ',' << r << ',' << t.episodes_to_exit[r] << ','
                << (t.exited[r] ? 1 : 0) << ',' << (t.diverged[r] ? 1 : 0) << '\n';
    }
    harness::write_text_file(csv.str(), (out / "trial_runs.csv").string());

    std::ostringstream summary;
    summary << "trial,failed,mean,std,correlation_at_exit,selection_episode\n";
    for (const auto& t : report.trials)
        summary << t.trial << ',' << (t.failed ? 1 : 0) << ','
                << harness::format_double(t.mean) << ',' << harness::format_double(t.std_dev)
                << ',' << harness::format_double(t.correlation_at_exit) << ','
                << t.selection_episode << '\n';
    harness::write_text_file(summary.str(), (out / "trial_summary.csv").string());
    std::printf("grand mean %s, std %s%s\n", harness::format_double(report.grand_mean).c_str(),
                harness::format_double(report.std_dev).c_str(),
                report.complete ? "" : " (INCOMPLETE: training failures)");
    return report.complete ? 0 : 3;
}

int cmd_ablate(const CommonOpts& opts, std::vector<double> lambda_grid,
               std::vector<std::size_t> k_grid) {
    const auto cfg = load_config(opts);
    const fs::path out = ensure_out(opts.out_dir);
    if (lambda_grid.empty()) lambda_grid = {0.001, 0.01, 0.1};
    if (k_grid.empty()) k_grid = {10, 25, 50};
    std::vector<std::pair<double, std::size_t>> grid;
    for (double lm : lambda_grid)
        for (std::size_t k : k_grid) grid.emplace_back(lm, k);
    const auto cells = harness::run_ablation_lambda_k(cfg, grid);
    harness::write_ablation_csv(cells, (out / "ablation.csv").string());
    std::printf("ablation: %zu cells written\n", cells.size());
    return 0;
}

int cmd_corr(const CommonOpts& opts, const std::string& ckpt_path, const std::string& pairing,
             std::size_t k, std::size_t probes) {
    const FeatureCheckpoint ckpt = load_checkpoint(ckpt_path);
    envs::TaskSpec task;
    task.env_id = envs::env_id_from_string(opts.env.empty() ? ckpt.env_id : opts.env);
    task.seed = opts.seed.value_or(0);
    const auto probe_set = harness::probe_states(task, probes, derive_seed(task.seed, "corr"));
    harness::Pairing mode;
    if (pairing == "all_pairs") mode = harness::Pairing::all_pairs;
    else if (pairing == "clustered") mode = harness::Pairing::clustered;
    else throw ConfigError("pairing", "must be all_pairs or clustered");
    const auto report = harness::measure_mean_correlation(ckpt.trunk, probe_set, mode, k,
                                                          derive_seed(task.seed, "corr-k"));
    std::printf("%s\n", harness::format_double(report.mean).c_str());
    if (report.degenerate > 0)
        std::fprintf(stderr, "note: %zu of %zu pairs hit the degenerate-variance guard\n",
                     report.degenerate, report.pairs);
    return 0;
}

int cmd_gridworld_demo(const CommonOpts& opts, std::size_t episodes) {
    const fs::path out = ensure_out(opts.out_dir);
    const harness::GridworldDemo demo =
        harness::run_gridworld_demo(opts.seed.value_or(0), episodes);
    harness::write_gridworld_demo_csv(demo, (out / "gridworld_demo.csv").string());
    std::printf("low-correlation features:  mean pair corr %s, exit at episode %zu\n",
                harness::format_double(demo.low_corr).c_str(), demo.low_first_exit);
    std::printf("high-correlation features: mean pair corr %s, exit at episode %zu%s\n",
                harness::format_double(demo.high_corr).c_str(), demo.high_first_exit,
                demo.high_first_exit >= episodes ? " (never)" : "");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dsrl: decorrelated-feature DQN training and linear-transfer experiments"};
    app.require_subcommand(1);

    CommonOpts train_opts, transfer_opts, trials_opts, ablate_opts, raw_opts, corr_opts,
        demo_opts;
    std::string transfer_ckpt, corr_ckpt;
    std::string corr_pairing = "all_pairs";
    std::size_t corr_k = 4, corr_probes = 64, demo_episodes = 500;
    std::vector<double> lambda_grid;
    std::vector<std::size_t> k_grid;

    auto* train = app.add_subcommand("train", "run one DS-DQN or vanilla DQN training");
    add_common(train, train_opts);

    auto* transfer = app.add_subcommand("transfer", "LFA Q-learning from a feature checkpoint");
    add_common(transfer, transfer_opts);
    transfer->add_option("--ckpt", transfer_ckpt, "features.ckpt.json path")->required();

    auto* trials = app.add_subcommand("trials", "full protocol: T trainings x R LFA runs");
    add_common(trials, trials_opts);

    auto* ablate = app.add_subcommand("ablate", "lambda_max x k sweep, 3 trainings per cell");
    add_common(ablate, ablate_opts);
    ablate->add_option("--lambda-grid", lambda_grid, "lambda_max values");
    ablate->add_option("--k-grid", k_grid, "cluster counts");

    auto* raw = app.add_subcommand("baseline-raw", "LFA Q-learning on raw observations");
    add_common(raw, raw_opts);

    auto* corr = app.add_subcommand("corr", "mean pair correlation of checkpoint features");
    add_common(corr, corr_opts);
    corr->add_option("--ckpt", corr_ckpt, "features.ckpt.json path")->required();
    corr->add_option("--pairing", corr_pairing, "all_pairs or clustered");
    corr->add_option("--k", corr_k, "clusters for clustered pairing");
    corr->add_option("--probes", corr_probes, "probe state count");

    auto* demo = app.add_subcommand("gridworld-demo",
                                    "LFA over low- vs high-correlation gridworld features");
    add_common(demo, demo_opts, /*with_env=*/false);
    demo->add_option("--episodes", demo_episodes, "LFA episodes per curve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts);
        if (transfer->parsed()) return cmd_transfer(transfer_opts, transfer_ckpt);
        if (trials->parsed()) return cmd_trials(trials_opts);
        if (ablate->parsed()) return cmd_ablate(ablate_opts, lambda_grid, k_grid);
        if (raw->parsed()) return cmd_baseline_raw(raw_opts);
        if (corr->parsed()) return cmd_corr(corr_opts, corr_ckpt, corr_pairing, corr_k, corr_probes);
        if (demo->parsed()) return cmd_gridworld_demo(demo_opts, demo_episodes);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error in field '%s': %s\n", e.field.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
