#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsrl/dsdqn.hpp"
#include "dsrl/envs.hpp"
#include "dsrl/lfa.hpp"

namespace dsrl::harness {

// Everything one experiment needs; per-environment defaults overridable
// from a single JSON document.
struct ExperimentConfig {
    envs::TaskSpec task;
    dsdqn::TrainConfig train;
    lfa::TransferConfig transfer;
    lfa::ExitCondition exit;
    std::size_t trainings = 5;  // T: independent trainings per experiment
    std::size_t runs = 10;      // R: LFA runs per training
    std::uint64_t master_seed = 0;
    std::size_t jobs = 1;
};

ExperimentConfig default_config(envs::EnvId env);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);  // ConfigError names the field

struct TrialOutcome {
    std::size_t trial = 0;
    bool failed = false;
    std::string failure;
    std::vector<std::size_t> episodes_to_exit;  // length R, cap-valued when not exited
    std::vector<bool> exited;
    std::vector<bool> diverged;
    double mean = 0.0;
    double std_dev = 0.0;  // population, over this trial's runs
    double correlation_at_exit = 0.0;  // mean pair correlation of the checkpoint
    std::size_t selection_episode = 0;
};

struct TrialReport {
    std::size_t trainings = 0;
    std::size_t runs = 0;
    std::size_t cap = 0;
    std::vector<TrialOutcome> trials;
    double grand_mean = 0.0;  // over successful trials' means
    double std_dev = 0.0;     // population, over successful trials' means
    bool complete = true;
};

// T trainings, R LFA runs each, aggregated as per-trial means plus a grand
// mean and population standard deviation across trials. Training aborts
// mark the trial failed and flag the report incomplete.
TrialReport run_trials(const ExperimentConfig& cfg);

nlohmann::json trial_report_to_json(const TrialReport& report);

struct AblationCell {
    double lambda_max = 0.0;
    std::size_t k = 0;
    bool failed = false;
    std::string note;
    std::vector<double> trial_means;
    std::vector<double> trial_stds;
    double grand_mean = 0.0;
    double grand_std = 0.0;
};

// One T=3 trial set per (lambda_max, k) cell; per-cell errors are recorded
// without aborting the sweep.
std::vector<AblationCell> run_ablation_lambda_k(
    const ExperimentConfig& base,
    const std::vector<std::pair<double, std::size_t>>& grid);

enum class Pairing { all_pairs, clustered };

struct CorrelationReport {
    double mean = 0.0;
    std::size_t pairs = 0;
    std::size_t degenerate = 0;  // pairs hit by the variance guard
};

// Mean Pearson correlation of trunk features over the probe set; all_pairs
// uses every unordered pair, clustered mirrors the training-time estimator
// (k-means representatives paired cyclically).
CorrelationReport measure_mean_correlation(const nn::DenseNet& trunk,
                                           const std::vector<std::vector<double>>& probes,
                                           Pairing pairing, std::size_t k,
                                           std::uint64_t seed);

// Gridworld enumerates all 16 cells; other environments collect states from
// seeded random-policy rollouts.
std::vector<std::vector<double>> probe_states(const envs::TaskSpec& task, std::size_t count,
                                              std::uint64_t seed);

// A trunk whose features are nearly identical across states (pair
// correlation ~= 1): tiny weights under a spread bias vector. The
// known-bad feature set for transfer demonstrations.
nn::DenseNet make_high_correlation_trunk(std::size_t obs_dim, std::size_t feature_dim,
                                         std::uint64_t seed);

struct GridworldDemo {
    double low_corr = 0.0;   // measured mean pair correlation, trained trunk
    double high_corr = 0.0;  // measured, constant-plus-noise trunk
    std::vector<std::size_t> low_lengths;   // per-episode LFA lengths
    std::vector<std::size_t> high_lengths;
    std::size_t low_first_exit = 0;   // first episode the exit condition holds, or cap
    std::size_t high_first_exit = 0;
};

GridworldDemo run_gridworld_demo(std::uint64_t seed, std::size_t demo_episodes = 500);

// ---------------------------------------------------------------------------
// Artifact emission. All CSVs carry a header row; floats use 17 significant
// digits so artifacts round-trip exactly.

std::string format_double(double v);

void write_training_log_csv(const dsdqn::TrainingLog& log, const std::string& path);
void write_corr_trace_csv(const dsdqn::TrainingLog& log, const std::string& path);
void write_transfer_log_csv(const std::vector<lfa::TransferResult>& runs,
                            const std::string& path);
nlohmann::json transfer_summary_json(const std::vector<lfa::TransferResult>& runs,
                                     std::size_t cap);
void write_ablation_csv(const std::vector<AblationCell>& cells, const std::string& path);
void write_gridworld_demo_csv(const GridworldDemo& demo, const std::string& path);
void write_text_file(const std::string& text, const std::string& path);

// Derived seeds for the trial protocol, exposed for reuse and testing.
std::uint64_t training_seed(std::uint64_t master, std::size_t trial);
std::uint64_t transfer_seed(std::uint64_t master, std::size_t trial, std::size_t run);
std::uint64_t task_seed(std::uint64_t master, std::size_t trial, std::size_t run);

// Runs fn(0..n-1) on up to `jobs` threads; exceptions propagate after all
// workers join.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace dsrl::harness
