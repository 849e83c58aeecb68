#include "dsrl/replay.hpp"

#include <cmath>

#include "dsrl/errors.hpp"

namespace dsrl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, int action_count)
    : capacity_(capacity), action_count_(action_count) {
    if (capacity == 0) throw ContractError("ReplayBuffer: capacity must be positive");
    if (action_count <= 0) throw ContractError("ReplayBuffer: action_count must be positive");
    storage_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
    if (t.a < 0 || t.a >= action_count_)
        throw ContractError("ReplayBuffer::push: action outside the recorded action set");
    for (double v : t.s)
        if (!std::isfinite(v)) throw ContractError("ReplayBuffer::push: non-finite state");
    for (double v : t.s_next)
        if (!std::isfinite(v)) throw ContractError("ReplayBuffer::push: non-finite next state");
    if (!std::isfinite(t.r)) throw ContractError("ReplayBuffer::push: non-finite reward");

    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
    ++count_;
}

std::vector<Transition> ReplayBuffer::sample_batch(std::size_t m, RngStream& rng) const {
    if (size() == 0) throw NotReadyError("ReplayBuffer::sample_batch: buffer is empty");
    std::vector<Transition> batch;
    batch.reserve(m);
    for (std::size_t i = 0; i < m; ++i) batch.push_back(storage_[uniform_index(rng, size())]);
    return batch;
}

std::vector<std::vector<double>> ReplayBuffer::sample_states(std::size_t count,
                                                             RngStream& rng) const {
    if (size() == 0) throw NotReadyError("ReplayBuffer::sample_states: buffer is empty");
    std::vector<std::vector<double>> states;
    states.reserve(count);
    for (std::size_t i = 0; i < count; ++i) states.push_back(storage_[uniform_index(rng, size())].s);
    return states;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size()) throw ContractError("ReplayBuffer::at: index out of range");
    if (count_ <= capacity_) return storage_[i];
    return storage_[(next_ + i) % capacity_];
}

}  // namespace dsrl
