#pragma once

#include <utility>
#include <vector>

#include "msreid/rng.hpp"

namespace msreid {

// Cycles through a fixed pool in shuffled order, reshuffling on wrap, so a
// draw of n always returns n items (with repeats once the pool is exhausted).
class BlockSampler {
public:
    BlockSampler() = default;
    BlockSampler(std::vector<int> pool, RandomStream& rng) : order_(std::move(pool)) {
        if (!order_.empty()) rng.shuffle(order_);
    }

    bool empty() const { return order_.empty(); }

    void draw(int n, RandomStream& rng, std::vector<int>& out) {
        if (order_.empty()) return;
        for (int i = 0; i < n; ++i) {
            if (cursor_ == order_.size()) {
                rng.shuffle(order_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
    }

private:
    std::vector<int> order_;
    std::size_t cursor_ = 0;
};

}  // namespace msreid
