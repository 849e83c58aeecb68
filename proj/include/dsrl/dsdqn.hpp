#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsrl/checkpoint.hpp"
#include "dsrl/envs.hpp"
#include "dsrl/nn.hpp"
#include "dsrl/replay.hpp"
#include "dsrl/reprreg.hpp"
#include "dsrl/rng.hpp"

namespace dsrl::dsdqn {

// Q(s,a) = dot(phi(s), w(a)): a feature trunk plus a bias-free per-action
// linear head.
struct QNetwork {
    nn::DenseNet trunk;        // raw state -> phi(s)
    std::vector<double> head;  // actions x feature_dim, row-major
    int actions = 0;

    std::size_t feature_dim() const { return trunk.output_dim(); }
    std::span<const double> head_row(int a) const;
    std::vector<double> features(std::span<const double> s) const;
    std::vector<double> q_values(std::span<const double> s) const;
    std::vector<double> q_from_features(std::span<const double> phi) const;
};

QNetwork make_qnetwork(std::size_t obs_dim, const std::vector<std::size_t>& trunk_hidden,
                       std::size_t feature_dim, int actions, RngStream& rng);

bool same_parameters(const QNetwork& a, const QNetwork& b);

// Trunk plus head, for resuming; bitwise round-trip like the feature
// checkpoint.
nlohmann::json full_model_to_json(const QNetwork& net, const std::string& env_id,
                                  std::uint64_t train_seed);
QNetwork full_model_from_json(const nlohmann::json& j);

// Regularization coefficient state, advanced once per episode:
// lambda <- min(lambda + delta, lambda_max). Tracked as an episode count so
// the trace equals min(episodes * delta, lambda_max) without accumulation
// drift.
struct LambdaSchedule {
    double lambda = 0.0;
    double delta = 0.0;
    double lambda_max = 0.0;
    std::uint64_t episodes = 0;
};

LambdaSchedule advance_lambda(LambdaSchedule s);

// Linear decay from start to end over decay_steps, then flat.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::uint64_t decay_steps = 20000;

    double value(std::uint64_t step) const;
};

// Epsilon-greedy with lowest-index tie-break on the greedy branch.
int select_action(const QNetwork& net, std::span<const double> s, double eps, RngStream& rng);

// y_j = r_j if terminal else r_j + gamma * max_a' Q(s'_j, a'; target).
std::vector<double> td_targets(const QNetwork& target, const std::vector<Transition>& batch,
                               double gamma);

// Full snapshot every C steps (both trunk and head).
void sync_target(const QNetwork& net, QNetwork& target, std::uint64_t step, std::uint64_t C);

enum class SamplerKind { uniform, clustered };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::clustered;
    std::size_t k = 25;                 // clusters / pairs for the clustered sampler
    std::size_t l = 32;                 // pairs for the uniform sampler
    std::size_t refresh_episodes = 100; // k-means refit period
    std::size_t pool = 5000;            // warm-up pool size for fitting
    std::size_t kmeans_iters = 20;
    std::size_t restarts = 2;
};

struct TrainConfig {
    std::vector<std::size_t> trunk_hidden{64};  // widths before the feature layer
    std::size_t feature_dim = 64;               // final hidden layer width n
    double alpha = 1e-3;                        // trunk learning rate
    double beta = 1e-3;                         // head learning rate
    double gamma = 0.99;
    nn::OptimizerState::Kind optimizer = nn::OptimizerState::Kind::adam;
    std::size_t batch_size = 32;
    std::uint64_t target_sync = 500;  // C, in steps
    std::size_t buffer_capacity = 50000;
    std::size_t learn_start = 1000;  // buffer size before updates begin
    double lambda_max = 0.01;
    double delta_lambda = 2e-4;
    bool vanilla = false;  // baseline mode: lambda pinned to 0
    SamplerConfig sampler;
    EpsilonSchedule epsilon;
    std::size_t episodes = 500;
    std::size_t step_cap = 2000;  // harness-enforced episode length cap
};

struct UpdateReport {
    bool applied = false;        // false: buffer not ready, update skipped
    bool pair_fallback = false;  // clustered sampler fell back to uniform
    double l1 = 0.0;
    double l2 = 0.0;  // mean pair correlation of the sampled pairs
    double lambda = 0.0;
};

struct UpdateContext {
    nn::OptimizerState trunk_opt;
    nn::OptimizerState head_opt;
    const reprreg::ClusterPool* clusters = nullptr;  // null -> uniform pairs
    RngStream* replay_rng = nullptr;
    RngStream* reg_rng = nullptr;  // pair sampling; separate so vanilla mode
                                   // does not shift the other streams
};

// One gradient step: trunk moves along grad(L1) + lambda * grad(L2), the
// head along grad(L1) only. Targets are constants (no gradient through the
// target network).
UpdateReport composite_update(QNetwork& net, const QNetwork& target, const ReplayBuffer& buf,
                              const LambdaSchedule& sched, const TrainConfig& cfg,
                              UpdateContext& ctx);

struct EpisodeRow {
    std::size_t episode = 0;
    double ret = 0.0;
    double moving_avg_return = 0.0;  // last 10 episodes including this one
    std::size_t length = 0;
    double l1 = 0.0;
    double l2 = 0.0;
    double lambda = 0.0;
    double mean_pair_corr = 0.0;
    double epsilon = 0.0;  // value at the first step of the episode
    std::uint64_t steps = 0;  // global step count after the episode
};

struct TrainingLog {
    std::vector<EpisodeRow> episodes;
    std::uint64_t total_steps = 0;
    std::size_t best_episode = 0;
    double best_moving_avg = 0.0;
    std::size_t pair_fallbacks = 0;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainResult {
    FeatureCheckpoint checkpoint;  // trunk at the best moving-average episode
    QNetwork final_net;
    TrainingLog log;
};

// The full training loop: epsilon-greedy acting, replay, TD targets from a
// periodically synced target network, composite loss with split learning
// rates, per-episode lambda advance, best-trunk checkpointing.
TrainResult train(const envs::TaskSpec& task, const TrainConfig& cfg, std::uint64_t train_seed);

}  // namespace dsrl::dsdqn
