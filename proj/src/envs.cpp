#include "dsrl/envs.hpp"

#include <algorithm>
#include <cmath>

#include "dsrl/errors.hpp"

namespace dsrl::envs {

std::string to_string(EnvId id) {
    switch (id) {
        case EnvId::gridworld: return "gridworld";
        case EnvId::mountaincar: return "mountaincar";
        case EnvId::minibreakout: return "minibreakout";
    }
    throw ContractError("to_string: bad EnvId");
}

EnvId env_id_from_string(std::string_view s) {
    if (s == "gridworld") return EnvId::gridworld;
    if (s == "mountaincar") return EnvId::mountaincar;
    if (s == "minibreakout") return EnvId::minibreakout;
    throw ConfigError("env", "unknown env id: " + std::string(s));
}

int action_count(EnvId id) {
    switch (id) {
        case EnvId::gridworld: return 4;
        case EnvId::mountaincar: return 3;
        case EnvId::minibreakout: return 3;
    }
    throw ContractError("action_count: bad EnvId");
}

int observation_dim(EnvId id) {
    switch (id) {
        case EnvId::gridworld: return 2;
        case EnvId::mountaincar: return 2;
        case EnvId::minibreakout:
            return MiniBreakout::kChannels * MiniBreakout::kGrid * MiniBreakout::kGrid;
    }
    throw ContractError("observation_dim: bad EnvId");
}

std::size_t default_step_cap(EnvId id) {
    switch (id) {
        case EnvId::gridworld: return 100;
        case EnvId::mountaincar: return 1000;
        case EnvId::minibreakout: return 2000;
    }
    throw ContractError("default_step_cap: bad EnvId");
}

TaskSpec perturb_goal(const TaskSpec& task, std::uint64_t trial_seed) {
    if (task.goal_perturbation_sigma < 0.0)
        throw ConfigError("goal_perturbation_sigma", "must be non-negative");
    if (task.goal_perturbation_sigma == 0.0 || task.env_id == EnvId::minibreakout)
        return task;

    RngStream rng(derive_seed(task.seed, "goal-perturb", trial_seed));
    TaskSpec out = task;
    if (task.env_id == EnvId::gridworld) {
        // Sigma is in normalized units; scale to cells and round.
        double gx = task.goal_override.size() == 2 ? task.goal_override[0]
                                                   : double(GridWorld::kSize - 1);
        double gy = task.goal_override.size() == 2 ? task.goal_override[1]
                                                   : double(GridWorld::kSize - 1);
        gx += gaussian(rng) * task.goal_perturbation_sigma * (GridWorld::kSize - 1);
        gy += gaussian(rng) * task.goal_perturbation_sigma * (GridWorld::kSize - 1);
        gx = std::clamp(std::round(gx), 0.0, double(GridWorld::kSize - 1));
        gy = std::clamp(std::round(gy), 0.0, double(GridWorld::kSize - 1));
        out.goal_override = {gx, gy};
    } else {
        double goal = task.goal_override.size() == 1 ? task.goal_override[0]
                                                     : MountainCar::kDefaultGoal;
        goal += gaussian(rng) * task.goal_perturbation_sigma;
        goal = std::clamp(goal, MountainCar::kMinPosition, MountainCar::kMaxPosition);
        out.goal_override = {goal};
    }
    return out;
}

std::unique_ptr<Environment> make_env(const TaskSpec& task) {
    switch (task.env_id) {
        case EnvId::gridworld: {
            std::array<int, 2> goal{GridWorld::kSize - 1, GridWorld::kSize - 1};
            if (task.goal_override.size() == 2)
                goal = {static_cast<int>(task.goal_override[0]),
                        static_cast<int>(task.goal_override[1])};
            else if (!task.goal_override.empty())
                throw ConfigError("goal_override", "gridworld expects two coordinates");
            return std::make_unique<GridWorld>(goal);
        }
        case EnvId::mountaincar: {
            double goal = MountainCar::kDefaultGoal;
            if (task.goal_override.size() == 1)
                goal = task.goal_override[0];
            else if (!task.goal_override.empty())
                throw ConfigError("goal_override", "mountaincar expects one coordinate");
            return std::make_unique<MountainCar>(goal, task.seed);
        }
        case EnvId::minibreakout:
            return std::make_unique<MiniBreakout>(task.seed);
    }
    throw ConfigError("env", "unknown env id");
}

// ---------------------------------------------------------------------------
// GridWorld

GridWorld::GridWorld(std::array<int, 2> goal_cell) : goal_(goal_cell) {
    if (goal_[0] < 0 || goal_[0] >= kSize || goal_[1] < 0 || goal_[1] >= kSize)
        throw ConfigError("goal_override", "gridworld goal outside the grid");
}

std::vector<double> GridWorld::observe() const {
    return {double(x_) / (kSize - 1), double(y_) / (kSize - 1)};
}

EnvState GridWorld::reset(std::uint64_t) {
    x_ = 0;
    y_ = 0;
    terminal_ = (x_ == goal_[0] && y_ == goal_[1]);
    return {observe(), terminal_};
}

StepResult GridWorld::step(int action, RngStream&) {
    if (terminal_) throw ContractError("GridWorld::step: episode is terminal");
    if (action < 0 || action >= 4) throw ContractError("GridWorld::step: action out of range");
    int nx = x_, ny = y_;
    switch (action) {
        case kActionUp: ny += 1; break;
        case kActionRight: nx += 1; break;
        case kActionDown: ny -= 1; break;
        case kActionLeft: nx -= 1; break;
    }
    if (nx >= 0 && nx < kSize && ny >= 0 && ny < kSize) {
        x_ = nx;
        y_ = ny;
    }
    terminal_ = (x_ == goal_[0] && y_ == goal_[1]);
    return {observe(), terminal_ ? 0.0 : -1.0, terminal_};
}

std::vector<std::vector<double>> GridWorld::all_observations() {
    std::vector<std::vector<double>> all;
    all.reserve(kSize * kSize);
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x)
            all.push_back({double(x) / (kSize - 1), double(y) / (kSize - 1)});
    return all;
}

// ---------------------------------------------------------------------------
// MountainCar

MountainCar::MountainCar(double goal_position, std::uint64_t task_seed)
    : goal_(goal_position), task_seed_(task_seed) {
    if (goal_ < kMinPosition || goal_ > kMaxPosition)
        throw ConfigError("goal_override", "mountaincar goal outside position bounds");
}

EnvState MountainCar::reset(std::uint64_t episode_seed) {
    RngStream rng(derive_seed(task_seed_, "mc-reset", episode_seed));
    position_ = uniform_range(rng, -0.6, -0.4);
    velocity_ = 0.0;
    terminal_ = false;
    return {{position_, velocity_}, terminal_};
}

StepResult MountainCar::step(int action, RngStream&) {
    if (terminal_) throw ContractError("MountainCar::step: episode is terminal");
    if (action < 0 || action >= 3)
        throw ContractError("MountainCar::step: action out of range");
    velocity_ += (action - 1) * kForce - kGravity * std::cos(3.0 * position_);
    velocity_ = std::clamp(velocity_, -kMaxSpeed, kMaxSpeed);
    position_ += velocity_;
    position_ = std::clamp(position_, kMinPosition, kMaxPosition);
    if (position_ <= kMinPosition && velocity_ < 0.0) velocity_ = 0.0;
    terminal_ = position_ >= goal_;
    return {{position_, velocity_}, -1.0, terminal_};
}

// ---------------------------------------------------------------------------
// MiniBreakout

MiniBreakout::MiniBreakout(std::uint64_t task_seed) : task_seed_(task_seed) {}

EnvState MiniBreakout::reset(std::uint64_t episode_seed) {
    RngStream rng(derive_seed(task_seed_, "mb-reset", episode_seed));
    for (auto& row : bricks_) row.fill(false);
    for (int y = 1; y <= kBrickRows; ++y)
        for (int x = 0; x < kGrid; ++x) bricks_[y][x] = true;
    paddle_ = kGrid / 2;
    ball_y_ = kBrickRows;
    if (uniform_index(rng, 2) == 0) {
        ball_x_ = 0;
        dir_ = 2;  // down-right
    } else {
        ball_x_ = kGrid - 1;
        dir_ = 3;  // down-left
    }
    last_x_ = ball_x_;
    last_y_ = ball_y_;
    strike_ = false;
    terminal_ = false;
    return {observe(), terminal_};
}

StepResult MiniBreakout::step(int action, RngStream&) {
    if (terminal_) throw ContractError("MiniBreakout::step: episode is terminal");
    if (action < 0 || action >= 3)
        throw ContractError("MiniBreakout::step: action out of range");

    if (action == 0) paddle_ = std::max(0, paddle_ - 1);
    else if (action == 2) paddle_ = std::min(kGrid - 1, paddle_ + 1);

    static constexpr int kFlipVertical[4] = {3, 2, 1, 0};
    static constexpr int kFlipHorizontal[4] = {1, 0, 3, 2};
    static constexpr int kFlipBoth[4] = {2, 3, 0, 1};

    last_x_ = ball_x_;
    last_y_ = ball_y_;
    int nx = ball_x_ + ((dir_ == 1 || dir_ == 2) ? 1 : -1);
    int ny = ball_y_ + ((dir_ == 2 || dir_ == 3) ? 1 : -1);

    double reward = 0.0;
    bool strike_toggle = false;
    if (nx < 0 || nx >= kGrid) {
        nx = std::clamp(nx, 0, kGrid - 1);
        dir_ = kFlipHorizontal[dir_];
    }
    if (ny < 0) {
        ny = 0;
        dir_ = kFlipVertical[dir_];
    } else if (bricks_[ny][nx]) {
        strike_toggle = true;
        if (!strike_) {
            reward += 1.0;
            strike_ = true;
            bricks_[ny][nx] = false;
            ny = last_y_;
            dir_ = kFlipVertical[dir_];
        }
    } else if (ny == kGrid - 1) {
        bool any_brick = false;
        for (const auto& row : bricks_)
            for (bool b : row) any_brick |= b;
        if (!any_brick)
            for (int y = 1; y <= kBrickRows; ++y)
                for (int x = 0; x < kGrid; ++x) bricks_[y][x] = true;
        if (ball_x_ == paddle_) {
            dir_ = kFlipVertical[dir_];
            ny = last_y_;
        } else if (nx == paddle_) {
            dir_ = kFlipBoth[dir_];
            ny = last_y_;
        } else {
            terminal_ = true;
        }
    }
    if (!strike_toggle) strike_ = false;
    ball_x_ = nx;
    ball_y_ = ny;
    return {observe(), reward, terminal_};
}

std::vector<double> MiniBreakout::observe() const {
    std::vector<double> obs(kChannels * kGrid * kGrid, 0.0);
    auto at = [&](int channel, int y, int x) -> double& {
        return obs[(channel * kGrid + y) * kGrid + x];
    };
    at(0, kGrid - 1, paddle_) = 1.0;
    at(1, ball_y_, ball_x_) = 1.0;
    at(2, last_y_, last_x_) = 1.0;
    for (int y = 0; y < kGrid; ++y)
        for (int x = 0; x < kGrid; ++x)
            if (bricks_[y][x]) at(3, y, x) = 1.0;
    return obs;
}

}  // namespace dsrl::envs
