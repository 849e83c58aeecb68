#include "dsrl/reprreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsrl/errors.hpp"

namespace dsrl::reprreg {

namespace {

struct CenteredStats {
    std::vector<double> cx, cy;  // centered inputs
    double ssx = 0.0, ssy = 0.0;
    double cross = 0.0;
    bool degenerate = false;
};

CenteredStats center(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
    if (x.size() < 2) throw ContractError("pearson: need at least 2 components");
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    CenteredStats s;
    s.cx.resize(n);
    s.cy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.cx[i] = x[i] - mx;
        s.cy[i] = y[i] - my;
        s.ssx += s.cx[i] * s.cx[i];
        s.ssy += s.cy[i] * s.cy[i];
        s.cross += s.cx[i] * s.cy[i];
    }
    s.degenerate = (s.ssx / double(n) < kVarianceGuard) || (s.ssy / double(n) < kVarianceGuard);
    return s;
}

}  // namespace

PearsonResult pearson_checked(std::span<const double> x, std::span<const double> y) {
    const CenteredStats s = center(x, y);
    if (s.degenerate) return {0.0, true};
    return {s.cross / std::sqrt(s.ssx * s.ssy), false};
}

double pearson(std::span<const double> x, std::span<const double> y) {
    return pearson_checked(x, y).value;
}

PearsonGrad pearson_grad(std::span<const double> x, std::span<const double> y) {
    const CenteredStats s = center(x, y);
    PearsonGrad g;
    g.dx.assign(x.size(), 0.0);
    g.dy.assign(y.size(), 0.0);
    if (s.degenerate) return g;

    const double sxy = std::sqrt(s.ssx * s.ssy);
    const double rho = s.cross / sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        g.dx[i] = s.cy[i] / sxy - rho * s.cx[i] / s.ssx;
        g.dy[i] = s.cx[i] / sxy - rho * s.cy[i] / s.ssy;
    }
    return g;
}

L2Result l2_loss(const nn::DenseNet& trunk, const std::vector<FeaturePair>& pairs) {
    if (pairs.empty()) throw ContractError("l2_loss: empty pair list");
    const double inv = 1.0 / double(pairs.size());
    L2Result result;
    result.trunk_grad = nn::Gradient::zeros_like(trunk);
    std::vector<nn::Tape> tapes;
    std::vector<std::vector<double>> grads;
    tapes.reserve(2 * pairs.size());
    grads.reserve(2 * pairs.size());
    for (const FeaturePair& pair : pairs) {
        auto [fa, tape_a] = nn::forward_tape(trunk, pair.s_a);
        auto [fb, tape_b] = nn::forward_tape(trunk, pair.s_b);
        const PearsonResult corr = pearson_checked(fa, fb);
        result.loss += inv * corr.value;
        if (corr.degenerate) continue;
        PearsonGrad pg = pearson_grad(fa, fb);
        tapes.push_back(std::move(tape_a));
        grads.push_back(std::move(pg.dx));
        tapes.push_back(std::move(tape_b));
        grads.push_back(std::move(pg.dy));
    }
    const std::vector<double> scales(tapes.size(), inv);
    nn::backward_batch_accumulate(trunk, tapes, grads, scales, result.trunk_grad);
    return result;
}

double l2_value(const nn::DenseNet& trunk, const std::vector<FeaturePair>& pairs) {
    if (pairs.empty()) throw ContractError("l2_value: empty pair list");
    double loss = 0.0;
    for (const FeaturePair& pair : pairs)
        loss += pearson(nn::forward(trunk, pair.s_a), nn::forward(trunk, pair.s_b));
    return loss / double(pairs.size());
}

std::vector<FeaturePair> sample_pairs_uniform(const ReplayBuffer& buf, std::size_t l,
                                              RngStream& rng) {
    std::vector<FeaturePair> pairs;
    if (l == 0) return pairs;
    auto states = buf.sample_states(2 * l, rng);
    pairs.reserve(l);
    for (std::size_t i = 0; i < l; ++i)
        pairs.push_back({std::move(states[2 * i]), std::move(states[2 * i + 1])});
    return pairs;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

std::size_t count_distinct_at_least(const std::vector<std::vector<double>>& states,
                                    std::size_t target) {
    std::vector<const std::vector<double>*> distinct;
    for (const auto& s : states) {
        bool seen = false;
        for (const auto* d : distinct)
            if (*d == s) {
                seen = true;
                break;
            }
        if (!seen) {
            distinct.push_back(&s);
            if (distinct.size() >= target) return distinct.size();
        }
    }
    return distinct.size();
}

}  // namespace

std::size_t KMeansModel::assign(std::span<const double> state) const {
    if (centroids.empty()) throw ContractError("KMeansModel::assign: model not fitted");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = sq_dist(state, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

double kmeans_inertia(const KMeansModel& model,
                      const std::vector<std::vector<double>>& states) {
    double total = 0.0;
    for (const auto& s : states) total += sq_dist(s, model.centroids[model.assign(s)]);
    return total;
}

KMeansModel kmeans_fit(const std::vector<std::vector<double>>& states, std::size_t k,
                       std::size_t iters, RngStream& rng) {
    if (k == 0) throw ContractError("kmeans_fit: k must be positive");
    if (states.size() < k || count_distinct_at_least(states, k) < k)
        throw ContractError("kmeans_fit: fewer than k distinct states");
    const std::size_t n = states.size();
    const std::size_t dim = states.front().size();

    KMeansModel model;
    model.k = k;
    model.dim = dim;

    // k-means++ seeding
    model.centroids.push_back(states[uniform_index(rng, n)]);
    std::vector<double> d2(n);
    while (model.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : model.centroids) best = std::min(best, sq_dist(states[i], c));
            d2[i] = best;
            total += best;
        }
        double r = uniform_double(rng) * total;
        std::size_t pick = n;
        std::size_t last_positive = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            last_positive = i;
            r -= d2[i];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
        if (pick == n) pick = last_positive;  // rounding slack at the tail
        model.centroids.push_back(states[pick]);
    }
    model.inertia_trace.push_back(kmeans_inertia(model, states));

    std::vector<std::size_t> assignment(n, k);
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = model.assign(states[i]);
            if (a != assignment[i]) {
                assignment[i] = a;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assignment[i]];
            for (std::size_t d = 0; d < dim; ++d) sums[assignment[i]][d] += states[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d)
                model.centroids[c][d] = sums[c][d] / double(counts[c]);
        }
        // Reseed empty clusters to points farthest from their centroid.
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || counts[assignment[i]] <= 1) continue;
                const double d = sq_dist(states[i], model.centroids[assignment[i]]);
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst < 0.0) continue;
            taken[worst_i] = true;
            model.centroids[c] = states[worst_i];
        }
        model.inertia_trace.push_back(kmeans_inertia(model, states));
    }
    return model;
}

KMeansModel kmeans_fit_best(const std::vector<std::vector<double>>& states, std::size_t k,
                            std::size_t iters, std::size_t restarts, RngStream& rng) {
    if (restarts == 0) throw ContractError("kmeans_fit_best: restarts must be positive");
    std::vector<std::uint64_t> seeds(restarts);
    for (auto& s : seeds) s = rng();
    KMeansModel best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed : seeds) {
        RngStream sub(seed);
        KMeansModel fit = kmeans_fit(states, k, iters, sub);
        const double inertia = kmeans_inertia(fit, states);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best = std::move(fit);
        }
    }
    return best;
}

std::size_t ClusterPool::nonempty_clusters() const {
    std::size_t n = 0;
    for (const auto& m : members) n += m.empty() ? 0 : 1;
    return n;
}

ClusterPool build_cluster_pool(const std::vector<std::vector<double>>& states, std::size_t k,
                               std::size_t iters, std::size_t restarts, RngStream& rng) {
    ClusterPool pool;
    pool.model = kmeans_fit_best(states, k, iters, restarts, rng);
    pool.members.resize(pool.model.k);
    for (const auto& s : states) pool.members[pool.model.assign(s)].push_back(s);
    return pool;
}

ClusteredPairs sample_pairs_from_pool(const ClusterPool& pool, RngStream& rng) {
    std::vector<const std::vector<double>*> reps;
    for (const auto& cluster : pool.members) {
        if (cluster.empty()) continue;
        reps.push_back(&cluster[uniform_index(rng, cluster.size())]);
    }
    ClusteredPairs out;
    if (reps.size() < 2) {
        out.fallback = true;
        return out;  // caller falls back to uniform buffer pairs
    }
    out.pairs.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i)
        out.pairs.push_back({*reps[i], *reps[(i + 1) % reps.size()]});
    return out;
}

ClusteredPairs sample_pairs_clustered(const KMeansModel& model, const ReplayBuffer& buf,
                                      RngStream& rng, std::size_t candidate_pool) {
    if (model.centroids.empty())
        throw ContractError("sample_pairs_clustered: model not fitted");
    const std::size_t pool =
        candidate_pool > 0 ? candidate_pool : std::max<std::size_t>(4 * model.k, 16);
    const auto candidates = buf.sample_states(pool, rng);

    std::vector<std::vector<std::size_t>> members(model.k);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        members[model.assign(candidates[i])].push_back(i);

    std::vector<std::size_t> reps;
    for (std::size_t c = 0; c < model.k; ++c) {
        if (members[c].empty()) continue;
        reps.push_back(members[c][uniform_index(rng, members[c].size())]);
    }

    ClusteredPairs out;
    if (reps.size() < 2) {
        out.pairs = sample_pairs_uniform(buf, model.k, rng);
        out.fallback = true;
        return out;
    }
    out.pairs.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const std::size_t j = (i + 1) % reps.size();
        out.pairs.push_back({candidates[reps[i]], candidates[reps[j]]});
    }
    return out;
}

}  // namespace dsrl::reprreg
