#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace icbs {

// Runs fn(shard_index, begin, end) over [0, count) split into fixed-size
// shards. The shard boundaries depend only on shard_size, never on the
// thread count, so callers that write disjoint outputs per shard (or reduce
// per-shard partials in shard order) get results that are bit-identical
// between threads=1 and threads=t.
inline void parallel_shards(std::int64_t count, std::int64_t shard_size, int threads,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
    if (count <= 0) return;
    shard_size = std::max<std::int64_t>(1, shard_size);
    const int num_shards = static_cast<int>((count + shard_size - 1) / shard_size);
    auto run_shard = [&](int s) {
        const std::int64_t begin = static_cast<std::int64_t>(s) * shard_size;
        const std::int64_t end = std::min<std::int64_t>(begin + shard_size, count);
        fn(s, begin, end);
    };

    if (threads <= 1 || num_shards == 1) {
        for (int s = 0; s < num_shards; ++s) run_shard(s);
        return;
    }

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= num_shards || failed.load()) return;
            try {
                run_shard(s);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    const int n_workers = std::min<int>(threads, num_shards);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace icbs
