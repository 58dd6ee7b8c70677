/*
   Copyright 2026 The kelr Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

        http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef KELR_PARALLEL_HPP
#define KELR_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace kelr {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> value{0};
    return value;
}
}  // namespace detail

/// Caps the number of worker threads used by the library. 0 means hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_setting().store(n); }

inline unsigned thread_count() {
    unsigned n = detail::thread_setting().load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Runs fn(i) for every i in [0, n). Items are handed out dynamically, so fn must
/// not depend on which thread runs it; results that need a deterministic order are
/// written to per-item slots and combined afterwards.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// Pairwise (binary counter) summation of equally sized vectors pushed in a fixed order.
/// The tree shape depends only on the number of pushed leaves, never on threading.
class PairwiseAccumulator {
public:
    explicit PairwiseAccumulator(std::size_t width) : width_(width) {}

    void push(std::vector<double> leaf) {
        std::size_t level = 0;
        while (!stack_.empty() && stack_.back().first == level) {
            add_into(stack_.back().second, leaf);
            stack_.pop_back();
            ++level;
        }
        stack_.emplace_back(level, std::move(leaf));
    }

    /// Combines the remaining partial sums from the most recent to the oldest.
    std::vector<double> total() const {
        std::vector<double> sum(width_, 0.0);
        if (stack_.empty()) return sum;
        sum = stack_.back().second;
        for (auto it = stack_.rbegin() + 1; it != stack_.rend(); ++it) add_into(it->second, sum);
        return sum;
    }

private:
    static void add_into(const std::vector<double>& older, std::vector<double>& newer) {
        for (std::size_t k = 0; k < newer.size(); ++k) newer[k] = older[k] + newer[k];
    }

    std::size_t width_;
    std::vector<std::pair<std::size_t, std::vector<double>>> stack_;
};

/// Deterministic blocked reduction over [0, n): leaf(begin, end, out) accumulates a block
/// into `out` (width entries, zero-initialized); block partials are combined pairwise.
template <class LeafFn>
std::vector<double> blocked_sum(std::size_t n, std::size_t width, std::size_t block, LeafFn&& leaf) {
    const std::size_t n_blocks = (n + block - 1) / block;
    PairwiseAccumulator acc(width);
    constexpr std::size_t kBatch = 64;
    std::vector<std::vector<double>> partial;
    for (std::size_t first = 0; first < n_blocks; first += kBatch) {
        const std::size_t count = std::min(kBatch, n_blocks - first);
        partial.assign(count, std::vector<double>(width, 0.0));
        parallel_for(count, [&](std::size_t j) {
            const std::size_t b = first + j;
            const std::size_t begin = b * block;
            const std::size_t end = std::min(n, begin + block);
            leaf(begin, end, std::span<double>(partial[j]));
        });
        for (auto& p : partial) acc.push(std::move(p));
    }
    return acc.total();
}

}  // namespace kelr

#endif  // KELR_PARALLEL_HPP
