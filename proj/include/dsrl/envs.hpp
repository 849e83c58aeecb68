#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dsrl/rng.hpp"

namespace dsrl::envs {

enum class EnvId { gridworld, mountaincar, minibreakout };

std::string to_string(EnvId id);
EnvId env_id_from_string(std::string_view s);

struct TaskSpec {
    EnvId env_id = EnvId::gridworld;
    double goal_perturbation_sigma = 0.0;
    std::uint64_t seed = 0;
    // Empty means the environment default. Gridworld reads two cell
    // coordinates, mountaincar one goal position, minibreakout ignores it.
    std::vector<double> goal_override;

    bool operator==(const TaskSpec&) const = default;
};

struct EnvState {
    std::vector<double> observation;
    bool terminal = false;
};

struct StepResult {
    std::vector<double> next_observation;
    double reward = 0.0;
    bool terminal = false;
};

int action_count(EnvId id);
int observation_dim(EnvId id);

// Harness-enforced per-episode step caps.
std::size_t default_step_cap(EnvId id);

// Shifts the goal by a seeded zero-mean Gaussian draw of the task's sigma,
// clamped to the environment's valid bounds. Sigma 0 returns the task
// unchanged; minibreakout never perturbs (its stochastic resets already
// vary the task).
TaskSpec perturb_goal(const TaskSpec& task, std::uint64_t trial_seed);

class Environment {
public:
    virtual ~Environment() = default;
    virtual EnvState reset(std::uint64_t episode_seed) = 0;
    virtual StepResult step(int action, RngStream& rng) = 0;
    virtual int action_count() const = 0;
    virtual int observation_dim() const = 0;
};

std::unique_ptr<Environment> make_env(const TaskSpec& task);

// 4x4 grid, agent starts at (0,0), goal defaults to (3,3). Observation is
// the normalized position (x,y)/3. Reward -1 per step, 0 on reaching the
// goal; off-grid moves are no-ops. Actions: 0 up, 1 right, 2 down, 3 left.
class GridWorld final : public Environment {
public:
    static constexpr int kSize = 4;
    static constexpr int kActionUp = 0;
    static constexpr int kActionRight = 1;
    static constexpr int kActionDown = 2;
    static constexpr int kActionLeft = 3;

    GridWorld() = default;
    explicit GridWorld(std::array<int, 2> goal_cell);

    EnvState reset(std::uint64_t episode_seed) override;
    StepResult step(int action, RngStream& rng) override;
    int action_count() const override { return 4; }
    int observation_dim() const override { return 2; }

    std::array<int, 2> position() const { return {x_, y_}; }
    std::array<int, 2> goal() const { return goal_; }

    // All 16 cell observations, row-major; the full state set.
    static std::vector<std::vector<double>> all_observations();

private:
    std::vector<double> observe() const;
    int x_ = 0;
    int y_ = 0;
    std::array<int, 2> goal_{kSize - 1, kSize - 1};
    bool terminal_ = true;
};

// Classic mountain car: position in [-1.2, 0.6], velocity in [-0.07, 0.07],
// actions 0 push-left / 1 coast / 2 push-right, reward -1 per step, terminal
// at position >= goal. Start position uniform in [-0.6, -0.4], velocity 0.
class MountainCar final : public Environment {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.6;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kForce = 0.001;
    static constexpr double kGravity = 0.0025;
    static constexpr double kDefaultGoal = 0.5;

    MountainCar() = default;
    explicit MountainCar(double goal_position, std::uint64_t task_seed = 0);

    EnvState reset(std::uint64_t episode_seed) override;
    StepResult step(int action, RngStream& rng) override;
    int action_count() const override { return 3; }
    int observation_dim() const override { return 2; }

    double goal_position() const { return goal_; }

private:
    double position_ = 0.0;
    double velocity_ = 0.0;
    double goal_ = kDefaultGoal;
    std::uint64_t task_seed_ = 0;
    bool terminal_ = true;
};

// MinAtar-style breakout on a 10x10 grid. Four binary channels (paddle,
// ball, trail, bricks) flattened to a 400-dim observation. Three brick
// rows, +1 per brick, wall repopulates when cleared, episode ends when the
// ball passes the paddle. Actions: 0 left, 1 stay, 2 right. The only
// randomness is the ball's start corner, drawn at reset.
class MiniBreakout final : public Environment {
public:
    static constexpr int kGrid = 10;
    static constexpr int kChannels = 4;  // paddle, ball, trail, brick
    static constexpr int kBrickRows = 3;

    explicit MiniBreakout(std::uint64_t task_seed = 0);

    EnvState reset(std::uint64_t episode_seed) override;
    StepResult step(int action, RngStream& rng) override;
    int action_count() const override { return 3; }
    int observation_dim() const override { return kChannels * kGrid * kGrid; }

private:
    std::vector<double> observe() const;
    int ball_x_ = 0, ball_y_ = 0;
    int last_x_ = 0, last_y_ = 0;
    int dir_ = 0;  // 0 up-left, 1 up-right, 2 down-right, 3 down-left
    int paddle_ = 0;
    bool strike_ = false;
    bool terminal_ = true;
    std::array<std::array<bool, kGrid>, kGrid> bricks_{};
    std::uint64_t task_seed_ = 0;
};

}  // namespace dsrl::envs
