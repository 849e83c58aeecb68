#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsrl/checkpoint.hpp"
#include "dsrl/dsdqn.hpp"
#include "dsrl/envs.hpp"
#include "dsrl/nn.hpp"

namespace dsrl::lfa {

// Frozen feature map: either a checkpointed trunk or the raw observation.
class Featurizer {
public:
    static Featurizer from_checkpoint(FeatureCheckpoint ckpt);
    static Featurizer raw(std::size_t obs_dim);

    std::vector<double> operator()(std::span<const double> s) const;
    std::size_t dim() const { return dim_; }
    bool is_raw() const { return !trunk_.has_value(); }

private:
    Featurizer() = default;
    std::optional<nn::DenseNet> trunk_;
    std::size_t dim_ = 0;
};

// Per-action linear Q-function over a fixed feature map.
struct LinearQ {
    std::size_t n = 0;
    int actions = 0;
    std::vector<double> w;  // actions x n, row-major

    LinearQ() = default;
    LinearQ(std::size_t feature_dim, int action_count);

    double q(int a, std::span<const double> phi) const;
    int argmax(std::span<const double> phi) const;  // lowest index on ties
};

// The bare sgd rule: delta = r + (terminal ? 0 : gamma * max_a' q(a', phi'))
// - q(a, phi); w(a) += alpha * delta * phi. Only w(a) changes.
void lfa_update(LinearQ& q, std::span<const double> phi_s, int a, double r,
                std::span<const double> phi_next, bool terminal, double alpha, double gamma);

struct ExitCondition {
    enum class Metric { moving_avg_return, moving_avg_length };
    enum class Direction { at_least, at_most };

    Metric metric = Metric::moving_avg_return;
    std::size_t window = 50;
    double threshold = 0.0;
    Direction direction = Direction::at_least;

    // Moving averages use the last min(window, episodes so far) entries, so
    // a trivial threshold exits at episode 0.
    bool satisfied(double moving_avg) const;
};

struct TransferConfig {
    double alpha = 1e-2;
    double gamma = 0.99;
    dsdqn::EpsilonSchedule epsilon{0.3, 0.01, 200};  // decays per episode
    std::size_t episode_cap = 10000;
    std::size_t step_cap = 2000;
};

struct TransferEpisode {
    std::size_t episode = 0;
    double ret = 0.0;
    std::size_t length = 0;
    bool exit_flag = false;
};

struct TransferResult {
    std::size_t episodes_to_exit = 0;  // episode index at exit, or the cap
    bool exited = false;
    bool diverged = false;
    std::vector<TransferEpisode> log;
};

// Runs epsilon-greedy LFA Q-learning until the exit condition holds or the
// episode cap is hit; divergence is recorded as a cap-valued run.
TransferResult run_transfer(const Featurizer& features, const envs::TaskSpec& task,
                            const ExitCondition& exit, const TransferConfig& cfg,
                            std::uint64_t run_seed);

}  // namespace dsrl::lfa
