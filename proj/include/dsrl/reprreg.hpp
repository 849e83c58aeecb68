#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsrl/nn.hpp"
#include "dsrl/replay.hpp"
#include "dsrl/rng.hpp"

namespace dsrl::reprreg {

// Variance threshold below which a feature vector counts as constant; the
// correlation and its gradient are defined as zero there so the loss stays
// finite on collapsed (e.g. all-relu-dead) trunks.
inline constexpr double kVarianceGuard = 1e-12;

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;
};

// Pearson correlation coefficient between two equal-length vectors,
// requires n >= 2. Degenerate (near-constant) inputs yield 0.
PearsonResult pearson_checked(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

struct PearsonGrad {
    std::vector<double> dx;
    std::vector<double> dy;
};

// Analytic partials of the correlation w.r.t. both inputs; zero on
// degenerate inputs, matching the guarded value.
PearsonGrad pearson_grad(std::span<const double> x, std::span<const double> y);

struct FeaturePair {
    std::vector<double> s_a;
    std::vector<double> s_b;
};

struct L2Result {
    double loss = 0.0;
    nn::Gradient trunk_grad;
};

// Mean pairwise feature correlation (1/l) * sum corr(phi(s_a), phi(s_b))
// with its gradient backpropagated through both branches of every pair.
L2Result l2_loss(const nn::DenseNet& trunk, const std::vector<FeaturePair>& pairs);

// Value-only variant (skips the backward passes).
double l2_value(const nn::DenseNet& trunk, const std::vector<FeaturePair>& pairs);

// 2l independent uniform draws from the buffer, paired consecutively.
std::vector<FeaturePair> sample_pairs_uniform(const ReplayBuffer& buf, std::size_t l,
                                              RngStream& rng);

struct KMeansModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<double> inertia_trace;  // objective after each Lloyd iteration

    // Nearest centroid by squared Euclidean distance, lowest index on ties.
    std::size_t assign(std::span<const double> state) const;
};

double kmeans_inertia(const KMeansModel& model,
                      const std::vector<std::vector<double>>& states);

// Lloyd's algorithm with k-means++ seeding. Stops at the iteration budget
// or an assignment fixpoint; empty clusters are reseeded to the point
// farthest from its centroid. Requires at least k distinct states.
KMeansModel kmeans_fit(const std::vector<std::vector<double>>& states, std::size_t k,
                       std::size_t iters, RngStream& rng);

// Best of `restarts` independent fits by final inertia.
KMeansModel kmeans_fit_best(const std::vector<std::vector<double>>& states, std::size_t k,
                            std::size_t iters, std::size_t restarts, RngStream& rng);

struct ClusteredPairs {
    std::vector<FeaturePair> pairs;
    bool fallback = false;  // fewer than 2 non-empty clusters, used uniform sampling
};

// One representative per non-empty cluster, paired cyclically:
// (c0,c1), (c1,c2), ..., (c_last,c0). Cluster membership is evaluated on a
// bounded uniform candidate draw from the buffer (candidate_pool draws,
// default 4k); clusters without a candidate are skipped.
ClusteredPairs sample_pairs_clustered(const KMeansModel& model, const ReplayBuffer& buf,
                                      RngStream& rng, std::size_t candidate_pool = 0);

// Fitted model plus its fitting pool grouped by cluster, so per-update pair
// sampling needs no nearest-centroid work. Rebuilt at every refresh.
struct ClusterPool {
    KMeansModel model;
    std::vector<std::vector<std::vector<double>>> members;  // per cluster

    std::size_t nonempty_clusters() const;
};

ClusterPool build_cluster_pool(const std::vector<std::vector<double>>& states, std::size_t k,
                               std::size_t iters, std::size_t restarts, RngStream& rng);

// Same pairing rule as sample_pairs_clustered, drawing representatives from
// the pool's stored members.
ClusteredPairs sample_pairs_from_pool(const ClusterPool& pool, RngStream& rng);

}  // namespace dsrl::reprreg
