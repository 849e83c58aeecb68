#include "dsrl/dsdqn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "dsrl/errors.hpp"

namespace dsrl::dsdqn {

std::span<const double> QNetwork::head_row(int a) const {
    if (a < 0 || a >= actions) throw ContractError("QNetwork::head_row: action out of range");
    return {head.data() + static_cast<std::size_t>(a) * feature_dim(), feature_dim()};
}

std::vector<double> QNetwork::features(std::span<const double> s) const {
    return nn::forward(trunk, s);
}

std::vector<double> QNetwork::q_from_features(std::span<const double> phi) const {
    if (phi.size() != feature_dim())
        throw ContractError("QNetwork::q_from_features: feature dim mismatch");
    std::vector<double> q(actions, 0.0);
    for (int a = 0; a < actions; ++a) {
        const double* row = head.data() + static_cast<std::size_t>(a) * phi.size();
        double acc = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) acc += row[i] * phi[i];
        q[a] = acc;
    }
    return q;
}

std::vector<double> QNetwork::q_values(std::span<const double> s) const {
    return q_from_features(features(s));
}

QNetwork make_qnetwork(std::size_t obs_dim, const std::vector<std::size_t>& trunk_hidden,
                       std::size_t feature_dim, int actions, RngStream& rng) {
    if (actions <= 0) throw ContractError("make_qnetwork: actions must be positive");
    std::vector<std::size_t> widths = trunk_hidden;
    widths.push_back(feature_dim);
    QNetwork net;
    net.trunk = nn::make_net(obs_dim, widths, nn::Activation::relu, nn::Activation::relu, rng);
    net.actions = actions;
    const double bound = std::sqrt(6.0 / static_cast<double>(feature_dim));
    net.head.resize(static_cast<std::size_t>(actions) * feature_dim);
    for (double& w : net.head) w = uniform_range(rng, -bound, bound);
    return net;
}

bool same_parameters(const QNetwork& a, const QNetwork& b) {
    if (a.actions != b.actions || a.head != b.head) return false;
    if (a.trunk.layers.size() != b.trunk.layers.size()) return false;
    for (std::size_t l = 0; l < a.trunk.layers.size(); ++l) {
        if (a.trunk.layers[l].weights != b.trunk.layers[l].weights) return false;
        if (a.trunk.layers[l].biases != b.trunk.layers[l].biases) return false;
    }
    return true;
}

nlohmann::json full_model_to_json(const QNetwork& net, const std::string& env_id,
                                  std::uint64_t train_seed) {
    return {{"format_version", kCheckpointFormatVersion},
            {"kind", "full_model"},
            {"env_id", env_id},
            {"train_seed", train_seed},
            {"actions", net.actions},
            {"feature_dim", net.feature_dim()},
            {"trunk", net_to_json(net.trunk)},
            {"head", net.head}};
}

QNetwork full_model_from_json(const nlohmann::json& j) {
    QNetwork net;
    net.trunk = net_from_json(j.at("trunk"));
    net.actions = j.at("actions").get<int>();
    net.head = j.at("head").get<std::vector<double>>();
    if (net.head.size() != static_cast<std::size_t>(net.actions) * net.feature_dim())
        throw ConfigError("head", "full model head shape mismatch");
    return net;
}

LambdaSchedule advance_lambda(LambdaSchedule s) {
    ++s.episodes;
    s.lambda = std::min(static_cast<double>(s.episodes) * s.delta, s.lambda_max);
    return s;
}

double EpsilonSchedule::value(std::uint64_t step) const {
    if (decay_steps == 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

int select_action(const QNetwork& net, std::span<const double> s, double eps, RngStream& rng) {
    if (eps < 0.0 || eps > 1.0) throw ContractError("select_action: eps outside [0,1]");
    if (uniform_double(rng) < eps) return static_cast<int>(uniform_index(rng, net.actions));
    const std::vector<double> q = net.q_values(s);
    int best = 0;
    for (int a = 1; a < net.actions; ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

std::vector<double> td_targets(const QNetwork& target, const std::vector<Transition>& batch,
                               double gamma) {
    if (gamma < 0.0 || gamma >= 1.0) throw ContractError("td_targets: gamma outside [0,1)");
    std::vector<double> y(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const Transition& t = batch[j];
        if (t.terminal) {
            y[j] = t.r;
        } else {
            const std::vector<double> q = target.q_values(t.s_next);
            y[j] = t.r + gamma * *std::max_element(q.begin(), q.end());
        }
    }
    return y;
}

void sync_target(const QNetwork& net, QNetwork& target, std::uint64_t step, std::uint64_t C) {
    if (C == 0) throw ContractError("sync_target: C must be >= 1");
    if (step % C == 0) target = net;
}

UpdateReport composite_update(QNetwork& net, const QNetwork& target, const ReplayBuffer& buf,
                              const LambdaSchedule& sched, const TrainConfig& cfg,
                              UpdateContext& ctx) {
    UpdateReport report;
    report.lambda = cfg.vanilla ? 0.0 : sched.lambda;
    if (buf.size() < cfg.batch_size) return report;  // not ready, skipped

    const std::size_t m = cfg.batch_size;
    const std::size_t n = net.feature_dim();
    const auto batch = buf.sample_batch(m, *ctx.replay_rng);
    const std::vector<double> y = td_targets(target, batch, cfg.gamma);

    nn::Gradient trunk_grad = nn::Gradient::zeros_like(net.trunk);
    std::vector<double> head_grad(net.head.size(), 0.0);
    std::vector<nn::Tape> tapes(m);
    std::vector<std::vector<double>> dphis(m);
    const std::vector<double> ones(m, 1.0);
    double l1 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        auto [phi, tape] = nn::forward_tape(net.trunk, batch[j].s);
        tapes[j] = std::move(tape);
        const std::span<const double> row = net.head_row(batch[j].a);
        double q = 0.0;
        for (std::size_t i = 0; i < n; ++i) q += row[i] * phi[i];
        const double delta = y[j] - q;
        l1 += delta * delta / static_cast<double>(m);
        const double dq = -2.0 * delta / static_cast<double>(m);

        double* hg = head_grad.data() + static_cast<std::size_t>(batch[j].a) * n;
        dphis[j].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            hg[i] += dq * phi[i];
            dphis[j][i] = dq * row[i];
        }
    }
    nn::backward_batch_accumulate(net.trunk, tapes, dphis, ones, trunk_grad);
    report.l1 = l1;
    if (!std::isfinite(l1)) throw DivergenceError("composite_update: non-finite L1 loss");

    // Pair-correlation term; the feature dim must admit a correlation.
    const double lambda = report.lambda;
    if (n >= 2) {
        std::vector<reprreg::FeaturePair> pairs;
        if (ctx.clusters != nullptr) {
            auto clustered = reprreg::sample_pairs_from_pool(*ctx.clusters, *ctx.reg_rng);
            report.pair_fallback = clustered.fallback;
            pairs = clustered.fallback
                        ? reprreg::sample_pairs_uniform(buf, ctx.clusters->model.k,
                                                        *ctx.reg_rng)
                        : std::move(clustered.pairs);
        } else {
            pairs = reprreg::sample_pairs_uniform(buf, cfg.sampler.l, *ctx.reg_rng);
        }
        if (!pairs.empty()) {
            if (lambda > 0.0) {
                reprreg::L2Result l2 = reprreg::l2_loss(net.trunk, pairs);
                report.l2 = l2.loss;
                trunk_grad.add_scaled(l2.trunk_grad, lambda);
            } else {
                report.l2 = reprreg::l2_value(net.trunk, pairs);
            }
        }
    }
    if (!std::isfinite(report.l2)) throw DivergenceError("composite_update: non-finite L2 loss");

    ctx.trunk_opt.learning_rate = cfg.alpha;
    ctx.head_opt.learning_rate = cfg.beta;
    nn::apply_update(net.trunk, trunk_grad, ctx.trunk_opt);
    nn::apply_update(net.head, head_grad, ctx.head_opt);
    if (!net.trunk.finite()) throw DivergenceError("composite_update: non-finite trunk parameters");
    report.applied = true;
    return report;
}

namespace {

reprreg::ClusterPool fit_sampler_pool(const envs::TaskSpec& task, const ReplayBuffer& buf,
                                      const SamplerConfig& sampler, RngStream& rng) {
    std::vector<std::vector<double>> pool;
    if (task.env_id == envs::EnvId::gridworld) {
        pool = envs::GridWorld::all_observations();  // the full state set
    } else {
        pool = buf.sample_states(std::min(sampler.pool, buf.size()), rng);
    }
    return reprreg::build_cluster_pool(pool, sampler.k, sampler.kmeans_iters,
                                       std::max<std::size_t>(1, sampler.restarts), rng);
}

}  // namespace

TrainResult train(const envs::TaskSpec& task, const TrainConfig& cfg, std::uint64_t train_seed) {
    auto env = envs::make_env(task);

    RngStream init_rng(derive_seed(train_seed, "init"));
    RngStream act_rng(derive_seed(train_seed, "act"));
    RngStream env_rng(derive_seed(train_seed, "env"));
    RngStream replay_rng(derive_seed(train_seed, "replay"));
    RngStream reg_rng(derive_seed(train_seed, "reg"));

    QNetwork net = make_qnetwork(env->observation_dim(), cfg.trunk_hidden, cfg.feature_dim,
                                 env->action_count(), init_rng);
    QNetwork target = net;

    ReplayBuffer buffer(cfg.buffer_capacity, env->action_count());
    LambdaSchedule schedule{0.0, cfg.vanilla ? 0.0 : cfg.delta_lambda,
                            cfg.vanilla ? 0.0 : cfg.lambda_max};

    UpdateContext ctx;
    ctx.trunk_opt = cfg.optimizer == nn::OptimizerState::Kind::adam
                        ? nn::OptimizerState::adam(cfg.alpha)
                        : nn::OptimizerState::sgd(cfg.alpha);
    ctx.head_opt = cfg.optimizer == nn::OptimizerState::Kind::adam
                       ? nn::OptimizerState::adam(cfg.beta)
                       : nn::OptimizerState::sgd(cfg.beta);
    ctx.replay_rng = &replay_rng;
    ctx.reg_rng = &reg_rng;

    reprreg::ClusterPool kmeans;
    bool kmeans_fitted = false;
    const bool clustered = cfg.sampler.kind == SamplerKind::clustered && cfg.sampler.k >= 2;

    TrainResult result;
    result.checkpoint =
        FeatureCheckpoint{net.trunk, net.feature_dim(), envs::to_string(task.env_id),
                          train_seed, 0};
    TrainingLog& log = result.log;
    log.best_moving_avg = -std::numeric_limits<double>::infinity();

    std::deque<double> recent_returns;
    std::uint64_t global_step = 0;

    for (std::size_t episode = 0; episode < cfg.episodes; ++episode) {
        if (clustered) {
            const bool due_refresh =
                kmeans_fitted && cfg.sampler.refresh_episodes > 0 && episode > 0 &&
                episode % cfg.sampler.refresh_episodes == 0 &&
                task.env_id != envs::EnvId::gridworld;  // gridworld pool never changes
            const bool warm = task.env_id == envs::EnvId::gridworld ||
                              buffer.size() >= cfg.sampler.pool;
            if ((!kmeans_fitted && warm) || due_refresh) {
                try {
                    kmeans = fit_sampler_pool(task, buffer, cfg.sampler, reg_rng);
                    kmeans_fitted = true;
                } catch (const ContractError&) {
                    // pool lacks k distinct states; stay on uniform pairs
                }
            }
        }
        ctx.clusters = (clustered && kmeans_fitted) ? &kmeans : nullptr;

        envs::EnvState state = env->reset(derive_seed(train_seed, "episode", episode));
        EpisodeRow row;
        row.episode = episode;
        row.lambda = cfg.vanilla ? 0.0 : schedule.lambda;
        row.epsilon = cfg.epsilon.value(global_step);

        double l1_sum = 0.0, l2_sum = 0.0;
        std::size_t updates = 0;
        try {
            while (!state.terminal && row.length < cfg.step_cap) {
                const double eps = cfg.epsilon.value(global_step);
                const int action = select_action(net, state.observation, eps, act_rng);
                envs::StepResult res = env->step(action, env_rng);
                buffer.push({state.observation, action, res.reward, res.next_observation,
                             res.terminal});
                if (buffer.size() >= std::max(cfg.learn_start, cfg.batch_size)) {
                    UpdateReport report =
                        composite_update(net, target, buffer, schedule, cfg, ctx);
                    if (report.applied) {
                        l1_sum += report.l1;
                        l2_sum += report.l2;
                        ++updates;
                        if (report.pair_fallback) ++log.pair_fallbacks;
                    }
                }
                ++global_step;
                sync_target(net, target, global_step, cfg.target_sync);
                row.ret += res.reward;
                ++row.length;
                state.observation = std::move(res.next_observation);
                state.terminal = res.terminal;
            }
        } catch (const DivergenceError& e) {
            log.aborted = true;
            log.abort_reason = e.what();
            log.total_steps = global_step;
            result.final_net = std::move(net);
            return result;
        }

        recent_returns.push_back(row.ret);
        if (recent_returns.size() > 10) recent_returns.pop_front();
        double avg = 0.0;
        for (double r : recent_returns) avg += r;
        avg /= static_cast<double>(recent_returns.size());
        row.moving_avg_return = avg;
        if (updates > 0) {
            row.l1 = l1_sum / static_cast<double>(updates);
            row.l2 = l2_sum / static_cast<double>(updates);
        }
        row.mean_pair_corr = row.l2;
        row.steps = global_step;
        log.episodes.push_back(row);

        if (avg > log.best_moving_avg) {
            log.best_moving_avg = avg;
            log.best_episode = episode;
            result.checkpoint.trunk = net.trunk;
            result.checkpoint.selection_episode = episode;
        }
        schedule = advance_lambda(schedule);
    }

    log.total_steps = global_step;
    result.final_net = std::move(net);
    return result;
}

}  // namespace dsrl::dsdqn
