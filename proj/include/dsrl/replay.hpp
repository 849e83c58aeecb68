#pragma once

#include <cstddef>
#include <vector>

#include "dsrl/rng.hpp"

namespace dsrl {

struct Transition {
    std::vector<double> s;
    int a = 0;
    double r = 0.0;
    std::vector<double> s_next;
    bool terminal = false;
};

// Fixed-capacity ring buffer with uniform with-replacement sampling.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int action_count);

    void push(Transition t);
    std::size_t size() const { return count_ < capacity_ ? count_ : capacity_; }
    std::size_t capacity() const { return capacity_; }
    int action_count() const { return action_count_; }

    // Uniform draws with replacement; NotReadyError on an empty buffer. The
    // training loop defers learning until size >= m.
    std::vector<Transition> sample_batch(std::size_t m, RngStream& rng) const;

    // Uniform independent draws of the s field; NotReadyError when empty.
    std::vector<std::vector<double>> sample_states(std::size_t count, RngStream& rng) const;

    // i = 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const;

private:
    std::size_t capacity_;
    int action_count_;
    std::vector<Transition> storage_;
    std::size_t next_ = 0;   // ring write position
    std::size_t count_ = 0;  // total insertions
};

}  // namespace dsrl
