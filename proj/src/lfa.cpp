#include "dsrl/lfa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "dsrl/errors.hpp"

namespace dsrl::lfa {

Featurizer Featurizer::from_checkpoint(FeatureCheckpoint ckpt) {
    Featurizer f;
    f.dim_ = ckpt.feature_dim;
    f.trunk_ = std::move(ckpt.trunk);
    return f;
}

Featurizer Featurizer::raw(std::size_t obs_dim) {
    Featurizer f;
    f.dim_ = obs_dim;
    return f;
}

std::vector<double> Featurizer::operator()(std::span<const double> s) const {
    if (trunk_) {
        if (s.size() != trunk_->input_dim())
            throw ConfigError("ckpt", "checkpoint expects observation dim " +
                                          std::to_string(trunk_->input_dim()) + ", got " +
                                          std::to_string(s.size()));
        return nn::forward(*trunk_, s);
    }
    if (s.size() != dim_)
        throw ConfigError("env", "raw featurizer expects observation dim " +
                                     std::to_string(dim_) + ", got " +
                                     std::to_string(s.size()));
    return {s.begin(), s.end()};
}

LinearQ::LinearQ(std::size_t feature_dim, int action_count)
    : n(feature_dim), actions(action_count), w(feature_dim * action_count, 0.0) {
    if (feature_dim == 0 || action_count <= 0)
        throw ContractError("LinearQ: empty feature or action space");
}

double LinearQ::q(int a, std::span<const double> phi) const {
    if (a < 0 || a >= actions) throw ContractError("LinearQ::q: action out of range");
    if (phi.size() != n) throw ContractError("LinearQ::q: feature dim mismatch");
    const double* row = w.data() + static_cast<std::size_t>(a) * n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += row[i] * phi[i];
    return acc;
}

int LinearQ::argmax(std::span<const double> phi) const {
    int best = 0;
    double best_q = q(0, phi);
    for (int a = 1; a < actions; ++a) {
        const double qa = q(a, phi);
        if (qa > best_q) {
            best_q = qa;
            best = a;
        }
    }
    return best;
}

void lfa_update(LinearQ& q, std::span<const double> phi_s, int a, double r,
                std::span<const double> phi_next, bool terminal, double alpha, double gamma) {
    if (alpha <= 0.0) throw ContractError("lfa_update: alpha must be positive");
    if (gamma < 0.0 || gamma >= 1.0) throw ContractError("lfa_update: gamma outside [0,1)");

    double target = r;
    if (!terminal) {
        double best = q.q(0, phi_next);
        for (int ap = 1; ap < q.actions; ++ap) best = std::max(best, q.q(ap, phi_next));
        target += gamma * best;
    }
    const double delta = target - q.q(a, phi_s);
    if (!std::isfinite(delta)) {
        std::ostringstream msg;
        msg << "lfa_update: non-finite TD error (target=" << target << ", action=" << a << ")";
        throw DivergenceError(msg.str());
    }
    double* row = q.w.data() + static_cast<std::size_t>(a) * q.n;
    for (std::size_t i = 0; i < q.n; ++i) row[i] += alpha * delta * phi_s[i];
}

bool ExitCondition::satisfied(double moving_avg) const {
    return direction == Direction::at_least ? moving_avg >= threshold
                                            : moving_avg <= threshold;
}

TransferResult run_transfer(const Featurizer& features, const envs::TaskSpec& task,
                            const ExitCondition& exit, const TransferConfig& cfg,
                            std::uint64_t run_seed) {
    if (exit.window == 0) throw ConfigError("exit.window", "window must be >= 1");
    auto env = envs::make_env(task);
    if (features.is_raw() && features.dim() != static_cast<std::size_t>(env->observation_dim()))
        throw ConfigError("env", "raw featurizer dim does not match environment");

    RngStream act_rng(derive_seed(run_seed, "lfa-act"));
    RngStream env_rng(derive_seed(run_seed, "lfa-env"));

    LinearQ q(features.dim(), env->action_count());
    TransferResult result;
    result.episodes_to_exit = cfg.episode_cap;

    std::deque<double> window_vals;
    for (std::size_t episode = 0; episode < cfg.episode_cap; ++episode) {
        envs::EnvState state = env->reset(derive_seed(run_seed, "lfa-episode", episode));
        std::vector<double> phi = features(state.observation);
        TransferEpisode row;
        row.episode = episode;

        const double eps = cfg.epsilon.value(episode);
        try {
            while (!state.terminal && row.length < cfg.step_cap) {
                int action;
                if (uniform_double(act_rng) < eps)
                    action = static_cast<int>(uniform_index(act_rng, env->action_count()));
                else
                    action = q.argmax(phi);
                envs::StepResult res = env->step(action, env_rng);
                const std::vector<double> phi_next = features(res.next_observation);
                lfa_update(q, phi, action, res.reward, phi_next, res.terminal, cfg.alpha,
                           cfg.gamma);
                row.ret += res.reward;
                ++row.length;
                phi = phi_next;
                state.terminal = res.terminal;
            }
        } catch (const DivergenceError&) {
            result.diverged = true;
            result.episodes_to_exit = cfg.episode_cap;
            result.log.push_back(row);
            return result;
        }

        const double metric_val = exit.metric == ExitCondition::Metric::moving_avg_return
                                      ? row.ret
                                      : static_cast<double>(row.length);
        window_vals.push_back(metric_val);
        if (window_vals.size() > exit.window) window_vals.pop_front();
        double avg = 0.0;
        for (double v : window_vals) avg += v;
        avg /= static_cast<double>(window_vals.size());

        row.exit_flag = exit.satisfied(avg);
        result.log.push_back(row);
        if (row.exit_flag) {
            result.exited = true;
            result.episodes_to_exit = episode;
            return result;
        }
    }
    return result;
}

}  // namespace dsrl::lfa
