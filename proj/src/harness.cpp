#include "dsrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dsrl/errors.hpp"
#include "dsrl/replay.hpp"

namespace dsrl::harness {

using nlohmann::json;

namespace {

double mean_of(const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError(scope.empty() ? it.key() : scope + "." + it.key(),
                              "unknown config field");
    }
}

}  // namespace

std::uint64_t training_seed(std::uint64_t master, std::size_t trial) {
    return derive_seed(master, "train", trial);
}

std::uint64_t transfer_seed(std::uint64_t master, std::size_t trial, std::size_t run) {
    return derive_seed(master, "lfa", trial, run);
}

std::uint64_t task_seed(std::uint64_t master, std::size_t trial, std::size_t run) {
    return derive_seed(master, "task", trial, run);
}

ExperimentConfig default_config(envs::EnvId env) {
    ExperimentConfig cfg;
    cfg.task.env_id = env;
    cfg.train.step_cap = envs::default_step_cap(env);
    cfg.transfer.step_cap = envs::default_step_cap(env);
    switch (env) {
        case envs::EnvId::gridworld:
            cfg.train.sampler.k = 4;
            cfg.train.learn_start = 64;
            cfg.train.episodes = 300;
            cfg.transfer.episode_cap = 2000;
            cfg.exit = {lfa::ExitCondition::Metric::moving_avg_length, 50, 7.0,
                        lfa::ExitCondition::Direction::at_most};
            break;
        case envs::EnvId::mountaincar:
            cfg.train.sampler.k = 25;
            cfg.train.episodes = 500;
            cfg.transfer.episode_cap = 5000;
            cfg.exit = {lfa::ExitCondition::Metric::moving_avg_return, 50, -200.0,
                        lfa::ExitCondition::Direction::at_least};
            break;
        case envs::EnvId::minibreakout:
            cfg.train.sampler.k = 25;
            cfg.train.episodes = 500;
            cfg.transfer.episode_cap = 10000;
            cfg.exit = {lfa::ExitCondition::Metric::moving_avg_return, 50, 8.0,
                        lfa::ExitCondition::Direction::at_least};
            break;
    }
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    const auto positive = [](double v, const char* field) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive");
    };
    positive(cfg.train.alpha, "alpha");
    positive(cfg.train.beta, "beta");
    positive(cfg.transfer.alpha, "lfa.alpha");
    if (cfg.train.gamma < 0.0 || cfg.train.gamma >= 1.0)
        throw ConfigError("gamma", "must lie in [0,1)");
    if (cfg.transfer.gamma < 0.0 || cfg.transfer.gamma >= 1.0)
        throw ConfigError("lfa.gamma", "must lie in [0,1)");
    if (cfg.train.lambda_max < 0.0) throw ConfigError("lambda_max", "must be non-negative");
    if (cfg.train.delta_lambda < 0.0)
        throw ConfigError("delta_lambda", "must be non-negative");
    if (cfg.task.goal_perturbation_sigma < 0.0)
        throw ConfigError("goal_perturbation_sigma", "must be non-negative");
    if (cfg.train.batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
    if (cfg.train.target_sync == 0) throw ConfigError("target_sync", "must be >= 1");
    if (cfg.train.buffer_capacity < cfg.train.batch_size)
        throw ConfigError("buffer_capacity", "must be >= batch_size");
    if (cfg.train.feature_dim < 2)
        throw ConfigError("network.feature_dim", "must be >= 2");
    auto check_eps = [](const dsdqn::EpsilonSchedule& e, const char* field) {
        if (e.start < 0.0 || e.start > 1.0 || e.end < 0.0 || e.end > 1.0 || e.end > e.start)
            throw ConfigError(field, "requires 0 <= end <= start <= 1");
    };
    check_eps(cfg.train.epsilon, "epsilon");
    check_eps(cfg.transfer.epsilon, "lfa.epsilon");
    if (cfg.train.sampler.kind == dsdqn::SamplerKind::clustered && cfg.train.sampler.k < 2)
        throw ConfigError("sampler.k", "clustered sampler needs k >= 2");
    if (cfg.train.sampler.kind == dsdqn::SamplerKind::uniform && cfg.train.sampler.l == 0)
        throw ConfigError("sampler.l", "uniform sampler needs l >= 1");
    if (cfg.exit.window == 0) throw ConfigError("lfa.exit.window", "must be >= 1");
    if (cfg.trainings == 0) throw ConfigError("trials.trainings", "must be >= 1");
    if (cfg.runs == 0) throw ConfigError("trials.runs", "must be >= 1");
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, "",
               {"env", "algorithm", "seed", "goal_perturbation_sigma", "goal_override",
                "network", "alpha", "beta", "gamma", "optimizer", "batch_size", "target_sync",
                "buffer_capacity", "learn_start", "lambda_max", "delta_lambda", "sampler",
                "epsilon", "episodes", "step_cap", "lfa", "trials", "jobs"});
    if (!j.contains("env")) throw ConfigError("env", "required field missing");
    ExperimentConfig cfg = default_config(envs::env_id_from_string(j.at("env").get<std::string>()));

    if (j.contains("algorithm")) {
        const std::string algo = j.at("algorithm").get<std::string>();
        if (algo == "vanilla") cfg.train.vanilla = true;
        else if (algo != "dsdqn") throw ConfigError("algorithm", "must be dsdqn or vanilla");
    }
    if (j.contains("seed")) cfg.master_seed = j.at("seed").get<std::uint64_t>();
    cfg.task.seed = cfg.master_seed;
    if (j.contains("goal_perturbation_sigma"))
        cfg.task.goal_perturbation_sigma = j.at("goal_perturbation_sigma").get<double>();
    if (j.contains("goal_override"))
        cfg.task.goal_override = j.at("goal_override").get<std::vector<double>>();
    if (j.contains("network")) {
        const json& n = j.at("network");
        check_keys(n, "network", {"hidden", "feature_dim"});
        if (n.contains("hidden"))
            cfg.train.trunk_hidden = n.at("hidden").get<std::vector<std::size_t>>();
        if (n.contains("feature_dim"))
            cfg.train.feature_dim = n.at("feature_dim").get<std::size_t>();
    }
    if (j.contains("alpha")) cfg.train.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) cfg.train.beta = j.at("beta").get<double>();
    if (j.contains("gamma")) cfg.train.gamma = j.at("gamma").get<double>();
    if (j.contains("optimizer")) {
        const std::string opt = j.at("optimizer").get<std::string>();
        if (opt == "sgd") cfg.train.optimizer = nn::OptimizerState::Kind::sgd;
        else if (opt == "adam") cfg.train.optimizer = nn::OptimizerState::Kind::adam;
        else throw ConfigError("optimizer", "must be sgd or adam");
    }
    if (j.contains("batch_size")) cfg.train.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("target_sync"))
        cfg.train.target_sync = j.at("target_sync").get<std::uint64_t>();
    if (j.contains("buffer_capacity"))
        cfg.train.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
    if (j.contains("learn_start")) cfg.train.learn_start = j.at("learn_start").get<std::size_t>();
    if (j.contains("lambda_max")) {
        cfg.train.lambda_max = j.at("lambda_max").get<double>();
        cfg.train.delta_lambda = cfg.train.lambda_max / 50.0;  // keep the 50-episode ramp
    }
    if (j.contains("delta_lambda"))
        cfg.train.delta_lambda = j.at("delta_lambda").get<double>();
    bool l_given = false;
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, "sampler",
                   {"kind", "k", "l", "refresh_episodes", "pool", "kmeans_iters", "restarts"});
        l_given = s.contains("l");
        if (s.contains("kind")) {
            const std::string kind = s.at("kind").get<std::string>();
            if (kind == "uniform") cfg.train.sampler.kind = dsdqn::SamplerKind::uniform;
            else if (kind == "clustered")
                cfg.train.sampler.kind = dsdqn::SamplerKind::clustered;
            else throw ConfigError("sampler.kind", "must be uniform or clustered");
        }
        if (s.contains("k")) cfg.train.sampler.k = s.at("k").get<std::size_t>();
        if (s.contains("l")) cfg.train.sampler.l = s.at("l").get<std::size_t>();
        if (s.contains("refresh_episodes"))
            cfg.train.sampler.refresh_episodes = s.at("refresh_episodes").get<std::size_t>();
        if (s.contains("pool")) cfg.train.sampler.pool = s.at("pool").get<std::size_t>();
        if (s.contains("kmeans_iters"))
            cfg.train.sampler.kmeans_iters = s.at("kmeans_iters").get<std::size_t>();
        if (s.contains("restarts"))
            cfg.train.sampler.restarts = s.at("restarts").get<std::size_t>();
    }
    if (!l_given) cfg.train.sampler.l = cfg.train.batch_size;  // default l = m
    auto parse_eps = [](const json& e, const std::string& scope) {
        check_keys(e, scope, {"start", "end", "decay_steps"});
        dsdqn::EpsilonSchedule eps;
        if (e.contains("start")) eps.start = e.at("start").get<double>();
        if (e.contains("end")) eps.end = e.at("end").get<double>();
        if (e.contains("decay_steps")) eps.decay_steps = e.at("decay_steps").get<std::uint64_t>();
        return eps;
    };
    if (j.contains("epsilon")) cfg.train.epsilon = parse_eps(j.at("epsilon"), "epsilon");
    if (j.contains("episodes")) cfg.train.episodes = j.at("episodes").get<std::size_t>();
    if (j.contains("step_cap")) cfg.train.step_cap = j.at("step_cap").get<std::size_t>();
    if (j.contains("lfa")) {
        const json& t = j.at("lfa");
        check_keys(t, "lfa", {"alpha", "gamma", "epsilon", "episode_cap", "step_cap", "exit"});
        if (t.contains("alpha")) cfg.transfer.alpha = t.at("alpha").get<double>();
        if (t.contains("gamma")) cfg.transfer.gamma = t.at("gamma").get<double>();
        if (t.contains("epsilon"))
            cfg.transfer.epsilon = parse_eps(t.at("epsilon"), "lfa.epsilon");
        if (t.contains("episode_cap"))
            cfg.transfer.episode_cap = t.at("episode_cap").get<std::size_t>();
        if (t.contains("step_cap")) cfg.transfer.step_cap = t.at("step_cap").get<std::size_t>();
        if (t.contains("exit")) {
            const json& e = t.at("exit");
            check_keys(e, "lfa.exit", {"metric", "window", "threshold", "direction"});
            if (e.contains("metric")) {
                const std::string m = e.at("metric").get<std::string>();
                if (m == "moving_avg_return")
                    cfg.exit.metric = lfa::ExitCondition::Metric::moving_avg_return;
                else if (m == "moving_avg_length")
                    cfg.exit.metric = lfa::ExitCondition::Metric::moving_avg_length;
                else throw ConfigError("lfa.exit.metric", "unknown metric");
            }
            if (e.contains("window")) cfg.exit.window = e.at("window").get<std::size_t>();
            if (e.contains("threshold")) cfg.exit.threshold = e.at("threshold").get<double>();
            if (e.contains("direction")) {
                const std::string d = e.at("direction").get<std::string>();
                if (d == "ge") cfg.exit.direction = lfa::ExitCondition::Direction::at_least;
                else if (d == "le") cfg.exit.direction = lfa::ExitCondition::Direction::at_most;
                else throw ConfigError("lfa.exit.direction", "must be ge or le");
            }
        }
    }
    if (j.contains("trials")) {
        const json& t = j.at("trials");
        check_keys(t, "trials", {"trainings", "runs"});
        if (t.contains("trainings")) cfg.trainings = t.at("trainings").get<std::size_t>();
        if (t.contains("runs")) cfg.runs = t.at("runs").get<std::size_t>();
    }
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<std::size_t>();
    validate_config(cfg);
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["env"] = envs::to_string(cfg.task.env_id);
    j["algorithm"] = cfg.train.vanilla ? "vanilla" : "dsdqn";
    j["seed"] = cfg.master_seed;
    j["goal_perturbation_sigma"] = cfg.task.goal_perturbation_sigma;
    if (!cfg.task.goal_override.empty()) j["goal_override"] = cfg.task.goal_override;
    j["network"] = {{"hidden", cfg.train.trunk_hidden}, {"feature_dim", cfg.train.feature_dim}};
    j["alpha"] = cfg.train.alpha;
    j["beta"] = cfg.train.beta;
    j["gamma"] = cfg.train.gamma;
    j["optimizer"] = cfg.train.optimizer == nn::OptimizerState::Kind::adam ? "adam" : "sgd";
    j["batch_size"] = cfg.train.batch_size;
    j["target_sync"] = cfg.train.target_sync;
    j["buffer_capacity"] = cfg.train.buffer_capacity;
    j["learn_start"] = cfg.train.learn_start;
    j["lambda_max"] = cfg.train.lambda_max;
    j["delta_lambda"] = cfg.train.delta_lambda;
    j["sampler"] = {
        {"kind", cfg.train.sampler.kind == dsdqn::SamplerKind::clustered ? "clustered" : "uniform"},
        {"k", cfg.train.sampler.k},
        {"l", cfg.train.sampler.l},
        {"refresh_episodes", cfg.train.sampler.refresh_episodes},
        {"pool", cfg.train.sampler.pool},
        {"kmeans_iters", cfg.train.sampler.kmeans_iters},
        {"restarts", cfg.train.sampler.restarts}};
    j["epsilon"] = {{"start", cfg.train.epsilon.start},
                    {"end", cfg.train.epsilon.end},
                    {"decay_steps", cfg.train.epsilon.decay_steps}};
    j["episodes"] = cfg.train.episodes;
    j["step_cap"] = cfg.train.step_cap;
    j["lfa"] = {
        {"alpha", cfg.transfer.alpha},
        {"gamma", cfg.transfer.gamma},
        {"epsilon",
         {{"start", cfg.transfer.epsilon.start},
          {"end", cfg.transfer.epsilon.end},
          {"decay_steps", cfg.transfer.epsilon.decay_steps}}},
        {"episode_cap", cfg.transfer.episode_cap},
        {"step_cap", cfg.transfer.step_cap},
        {"exit",
         {{"metric", cfg.exit.metric == lfa::ExitCondition::Metric::moving_avg_return
                         ? "moving_avg_return"
                         : "moving_avg_length"},
          {"window", cfg.exit.window},
          {"threshold", cfg.exit.threshold},
          {"direction",
           cfg.exit.direction == lfa::ExitCondition::Direction::at_least ? "ge" : "le"}}}};
    j["trials"] = {{"trainings", cfg.trainings}, {"runs", cfg.runs}};
    j["jobs"] = cfg.jobs;
    return j;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

TrialReport run_trials(const ExperimentConfig& cfg) {
    validate_config(cfg);
    TrialReport report;
    report.trainings = cfg.trainings;
    report.runs = cfg.runs;
    report.cap = cfg.transfer.episode_cap;
    report.trials.resize(cfg.trainings);

    std::vector<dsdqn::TrainResult> trainings(cfg.trainings);
    parallel_for(cfg.trainings, cfg.jobs, [&](std::size_t t) {
        TrialOutcome& outcome = report.trials[t];
        outcome.trial = t;
        try {
            trainings[t] = dsdqn::train(cfg.task, cfg.train, training_seed(cfg.master_seed, t));
            if (trainings[t].log.aborted) {
                outcome.failed = true;
                outcome.failure = trainings[t].log.abort_reason;
            }
        } catch (const std::exception& e) {
            outcome.failed = true;
            outcome.failure = e.what();
        }
    });

    for (std::size_t t = 0; t < cfg.trainings; ++t) {
        TrialOutcome& outcome = report.trials[t];
        if (outcome.failed) {
            std::fprintf(stderr, "[trials] training %zu failed: %s\n", t,
                         outcome.failure.c_str());
            report.complete = false;
            continue;
        }
        outcome.selection_episode = trainings[t].checkpoint.selection_episode;
        const auto probes = probe_states(cfg.task, 64, derive_seed(cfg.master_seed, "probe", t));
        outcome.correlation_at_exit =
            measure_mean_correlation(trainings[t].checkpoint.trunk, probes, Pairing::all_pairs,
                                     0, derive_seed(cfg.master_seed, "probe-corr", t))
                .mean;
        outcome.episodes_to_exit.resize(cfg.runs);
        outcome.exited.assign(cfg.runs, false);
        outcome.diverged.assign(cfg.runs, false);
    }

    struct Unit {
        std::size_t trial, run;
    };
    std::vector<Unit> units;
    for (std::size_t t = 0; t < cfg.trainings; ++t) {
        if (report.trials[t].failed) continue;
        for (std::size_t r = 0; r < cfg.runs; ++r) units.push_back({t, r});
    }
    parallel_for(units.size(), cfg.jobs, [&](std::size_t u) {
        const auto [t, r] = units[u];
        TrialOutcome& outcome = report.trials[t];
        const lfa::Featurizer feats = lfa::Featurizer::from_checkpoint(trainings[t].checkpoint);
        const envs::TaskSpec run_task =
            envs::perturb_goal(cfg.task, task_seed(cfg.master_seed, t, r));
        const lfa::TransferResult res = lfa::run_transfer(
            feats, run_task, cfg.exit, cfg.transfer, transfer_seed(cfg.master_seed, t, r));
        outcome.episodes_to_exit[r] = res.episodes_to_exit;
        outcome.exited[r] = res.exited;
        outcome.diverged[r] = res.diverged;
    });

    std::vector<double> trial_means;
    for (TrialOutcome& outcome : report.trials) {
        if (outcome.failed) continue;
        std::vector<double> vals(outcome.episodes_to_exit.begin(),
                                 outcome.episodes_to_exit.end());
        outcome.mean = mean_of(vals);
        outcome.std_dev = population_std(vals);
        trial_means.push_back(outcome.mean);
    }
    report.grand_mean = mean_of(trial_means);
    report.std_dev = population_std(trial_means);
    return report;
}

json trial_report_to_json(const TrialReport& report) {
    json trials = json::array();
    for (const TrialOutcome& t : report.trials) {
        trials.push_back({{"trial", t.trial},
                          {"failed", t.failed},
                          {"failure", t.failure},
                          {"episodes_to_exit", t.episodes_to_exit},
                          {"exited", t.exited},
                          {"diverged", t.diverged},
                          {"mean", t.mean},
                          {"std_dev", t.std_dev},
                          {"correlation_at_exit", t.correlation_at_exit},
                          {"selection_episode", t.selection_episode}});
    }
    return {{"format_version", 1},
            {"trainings", report.trainings},
            {"runs", report.runs},
            {"cap", report.cap},
            {"complete", report.complete},
            {"grand_mean", report.grand_mean},
            {"std_dev", report.std_dev},
            {"trials", trials}};
}

std::vector<AblationCell> run_ablation_lambda_k(
    const ExperimentConfig& base, const std::vector<std::pair<double, std::size_t>>& grid) {
    if (grid.empty()) throw ContractError("run_ablation_lambda_k: empty grid");
    // Keep the ramp length of the base schedule when scaling lambda_max.
    const double ramp = (base.train.lambda_max > 0.0 && base.train.delta_lambda > 0.0)
                            ? base.train.lambda_max / base.train.delta_lambda
                            : 50.0;
    std::vector<AblationCell> cells;
    for (const auto& [lambda_max, k] : grid) {
        AblationCell cell;
        cell.lambda_max = lambda_max;
        cell.k = k;
        ExperimentConfig cfg = base;
        cfg.trainings = 3;
        cfg.train.lambda_max = lambda_max;
        cfg.train.delta_lambda = lambda_max / ramp;
        cfg.train.sampler.k = k;
        cfg.master_seed = derive_seed(base.master_seed, "ablate",
                                      std::uint64_t(lambda_max * 1e6), k);
        try {
            validate_config(cfg);
            const TrialReport report = run_trials(cfg);
            for (const TrialOutcome& t : report.trials) {
                cell.trial_means.push_back(t.failed ? double(report.cap) : t.mean);
                cell.trial_stds.push_back(t.failed ? 0.0 : t.std_dev);
                if (t.failed) cell.note = "training failure in trial set";
            }
            cell.grand_mean = report.grand_mean;
            cell.grand_std = report.std_dev;
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.note = e.what();
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

std::vector<std::vector<double>> probe_states(const envs::TaskSpec& task, std::size_t count,
                                              std::uint64_t seed) {
    if (task.env_id == envs::EnvId::gridworld) return envs::GridWorld::all_observations();

    auto env = envs::make_env(task);
    RngStream act_rng(derive_seed(seed, "probe-act"));
    RngStream env_rng(derive_seed(seed, "probe-env"));
    std::vector<std::vector<double>> probes;
    probes.reserve(count);
    std::size_t episode = 0;
    while (probes.size() < count) {
        envs::EnvState state = env->reset(derive_seed(seed, "probe-ep", episode++));
        probes.push_back(state.observation);
        std::size_t steps = 0;
        while (!state.terminal && probes.size() < count &&
               steps < envs::default_step_cap(task.env_id)) {
            const int action =
                static_cast<int>(uniform_index(act_rng, env->action_count()));
            envs::StepResult res = env->step(action, env_rng);
            probes.push_back(res.next_observation);
            state.terminal = res.terminal;
            ++steps;
        }
    }
    probes.resize(count);
    return probes;
}

CorrelationReport measure_mean_correlation(const nn::DenseNet& trunk,
                                           const std::vector<std::vector<double>>& probes,
                                           Pairing pairing, std::size_t k,
                                           std::uint64_t seed) {
    if (probes.size() < 2)
        throw ContractError("measure_mean_correlation: need at least 2 probe states");
    std::vector<std::vector<double>> feats;
    feats.reserve(probes.size());
    for (const auto& s : probes) feats.push_back(nn::forward(trunk, s));

    CorrelationReport report;
    double total = 0.0;
    auto add_pair = [&](std::size_t i, std::size_t j) {
        const reprreg::PearsonResult r = reprreg::pearson_checked(feats[i], feats[j]);
        total += r.value;
        if (r.degenerate) ++report.degenerate;
        ++report.pairs;
    };

    if (pairing == Pairing::all_pairs) {
        for (std::size_t i = 0; i < probes.size(); ++i)
            for (std::size_t j = i + 1; j < probes.size(); ++j) add_pair(i, j);
    } else {
        if (k < 2) throw ContractError("measure_mean_correlation: clustered pairing needs k >= 2");
        RngStream rng(seed);
        const reprreg::KMeansModel model = reprreg::kmeans_fit_best(probes, k, 20, 4, rng);
        std::vector<std::vector<std::size_t>> members(model.k);
        for (std::size_t i = 0; i < probes.size(); ++i)
            members[model.assign(probes[i])].push_back(i);
        std::vector<std::size_t> reps;
        for (std::size_t c = 0; c < model.k; ++c) {
            if (members[c].empty()) continue;
            reps.push_back(members[c][uniform_index(rng, members[c].size())]);
        }
        for (std::size_t i = 0; i < reps.size(); ++i)
            add_pair(reps[i], reps[(i + 1) % reps.size()]);
    }
    report.mean = report.pairs > 0 ? total / static_cast<double>(report.pairs) : 0.0;
    return report;
}

nn::DenseNet make_high_correlation_trunk(std::size_t obs_dim, std::size_t feature_dim,
                                         std::uint64_t seed) {
    RngStream rng(seed);
    nn::DenseNet trunk;
    nn::Layer hidden;
    hidden.in_dim = obs_dim;
    hidden.out_dim = 64;
    hidden.activation = nn::Activation::relu;
    hidden.weights.resize(hidden.out_dim * hidden.in_dim);
    for (double& w : hidden.weights) w = uniform_range(rng, -0.01, 0.01);
    hidden.biases.assign(hidden.out_dim, 0.0);
    trunk.layers.push_back(std::move(hidden));

    nn::Layer out;
    out.in_dim = 64;
    out.out_dim = feature_dim;
    out.activation = nn::Activation::relu;
    out.weights.resize(out.out_dim * out.in_dim);
    for (double& w : out.weights) w = uniform_range(rng, -1e-4, 1e-4);
    out.biases.resize(feature_dim);
    for (std::size_t i = 0; i < feature_dim; ++i)
        out.biases[i] = 0.5 + static_cast<double>(i) / static_cast<double>(feature_dim - 1);
    trunk.layers.push_back(std::move(out));
    return trunk;
}

GridworldDemo run_gridworld_demo(std::uint64_t seed, std::size_t demo_episodes) {
    ExperimentConfig cfg = default_config(envs::EnvId::gridworld);
    cfg.task.seed = seed;
    cfg.train.epsilon = {1.0, 0.0, 2500};
    cfg.train.lambda_max = 0.2;
    cfg.train.delta_lambda = 4e-3;

    const dsdqn::TrainResult trained =
        dsdqn::train(cfg.task, cfg.train, derive_seed(seed, "demo-train"));
    const nn::DenseNet high_trunk =
        make_high_correlation_trunk(2, cfg.train.feature_dim, derive_seed(seed, "demo-high"));

    const auto probes = envs::GridWorld::all_observations();
    GridworldDemo demo;
    demo.low_corr = measure_mean_correlation(trained.checkpoint.trunk, probes,
                                             Pairing::all_pairs, 0, seed)
                        .mean;
    demo.high_corr =
        measure_mean_correlation(high_trunk, probes, Pairing::all_pairs, 0, seed).mean;

    lfa::TransferConfig transfer = cfg.transfer;
    transfer.episode_cap = demo_episodes;
    // Curves need the full budget; the exit condition is evaluated after the fact.
    const lfa::ExitCondition never{lfa::ExitCondition::Metric::moving_avg_length, 50, -1.0,
                                   lfa::ExitCondition::Direction::at_most};

    auto run_side = [&](const nn::DenseNet& trunk, std::vector<std::size_t>& lengths) {
        FeatureCheckpoint ckpt{trunk, trunk.output_dim(), "gridworld", seed, 0};
        const lfa::TransferResult res =
            lfa::run_transfer(lfa::Featurizer::from_checkpoint(std::move(ckpt)), cfg.task,
                              never, transfer, derive_seed(seed, "demo-lfa"));
        lengths.reserve(res.log.size());
        for (const auto& row : res.log) lengths.push_back(row.length);
        // First episode where the real exit condition holds.
        std::size_t first = demo_episodes;
        double window_sum = 0.0;
        for (std::size_t e = 0; e < lengths.size(); ++e) {
            window_sum += static_cast<double>(lengths[e]);
            if (e >= cfg.exit.window) window_sum -= static_cast<double>(lengths[e - cfg.exit.window]);
            const double avg =
                window_sum / static_cast<double>(std::min(e + 1, cfg.exit.window));
            if (cfg.exit.satisfied(avg)) {
                first = e;
                break;
            }
        }
        return first;
    };
    demo.low_first_exit = run_side(trained.checkpoint.trunk, demo.low_lengths);
    demo.high_first_exit = run_side(high_trunk, demo.high_lengths);
    return demo;
}

// ---------------------------------------------------------------------------
// Artifact emission

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_file(const std::string& text, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("out", "cannot write file: " + path);
    out << text;
}

void write_training_log_csv(const dsdqn::TrainingLog& log, const std::string& path) {
    std::ostringstream out;
    out << "episode,return,moving_avg_return,episode_length,l1,l2,lambda,mean_pair_corr,"
           "epsilon,steps\n";
    for (const auto& row : log.episodes) {
        out << row.episode << ',' << format_double(row.ret) << ','
            << format_double(row.moving_avg_return) << ',' << row.length << ','
            << format_double(row.l1) << ',' << format_double(row.l2) << ','
            << format_double(row.lambda) << ',' << format_double(row.mean_pair_corr) << ','
            << format_double(row.epsilon) << ',' << row.steps << '\n';
    }
    write_text_file(out.str(), path);
}

void write_corr_trace_csv(const dsdqn::TrainingLog& log, const std::string& path) {
    std::ostringstream out;
    out << "episode,mean_pair_corr\n";
    for (const auto& row : log.episodes)
        out << row.episode << ',' << format_double(row.mean_pair_corr) << '\n';
    write_text_file(out.str(), path);
}

void write_transfer_log_csv(const std::vector<lfa::TransferResult>& runs,
                            const std::string& path) {
    std::ostringstream out;
    out << "run_id,episode,return,length,exit_flag\n";
    for (std::size_t r = 0; r < runs.size(); ++r)
        for (const auto& row : runs[r].log)
            out << r << ',' << row.episode << ',' << format_double(row.ret) << ','
                << row.length << ',' << (row.exit_flag ? 1 : 0) << '\n';
    write_text_file(out.str(), path);
}

json transfer_summary_json(const std::vector<lfa::TransferResult>& runs, std::size_t cap) {
    std::vector<std::size_t> episodes;
    std::vector<bool> exited, diverged;
    std::vector<double> vals;
    for (const auto& r : runs) {
        episodes.push_back(r.episodes_to_exit);
        exited.push_back(r.exited);
        diverged.push_back(r.diverged);
        vals.push_back(static_cast<double>(r.episodes_to_exit));
    }
    return {{"format_version", 1},
            {"cap", cap},
            {"episodes_to_exit", episodes},
            {"exited", exited},
            {"diverged", diverged},
            {"mean", mean_of(vals)},
            {"std_dev", population_std(vals)}};
}

void write_ablation_csv(const std::vector<AblationCell>& cells, const std::string& path) {
    std::ostringstream out;
    out << "lambda_max,k,failed,trial0_mean,trial0_std,trial1_mean,trial1_std,trial2_mean,"
           "trial2_std,grand_mean,grand_std\n";
    for (const AblationCell& c : cells) {
        out << format_double(c.lambda_max) << ',' << c.k << ',' << (c.failed ? 1 : 0);
        for (std::size_t t = 0; t < 3; ++t) {
            if (t < c.trial_means.size())
                out << ',' << format_double(c.trial_means[t]) << ','
                    << format_double(c.trial_stds[t]);
            else
                out << ",,";
        }
        out << ',' << format_double(c.grand_mean) << ',' << format_double(c.grand_std) << '\n';
    }
    write_text_file(out.str(), path);
}

void write_gridworld_demo_csv(const GridworldDemo& demo, const std::string& path) {
    std::ostringstream out;
    out << "episode,low_corr_length,high_corr_length\n";
    const std::size_t n = std::max(demo.low_lengths.size(), demo.high_lengths.size());
    for (std::size_t e = 0; e < n; ++e) {
        out << e << ',';
        if (e < demo.low_lengths.size()) out << demo.low_lengths[e];
        out << ',';
        if (e < demo.high_lengths.size()) out << demo.high_lengths[e];
        out << '\n';
    }
    write_text_file(out.str(), path);
}

}  // namespace dsrl::harness
