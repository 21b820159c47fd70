#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hcr {

/// Worker count: HCR_THREADS if set (clamped to >= 1), else hardware
/// concurrency.
inline int worker_count() {
    static const int n = [] {
        if (const char* env = std::getenv("HCR_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return n;
}

namespace detail {

class ThreadPool {
public:
    explicit ThreadPool(int threads) {
        for (int i = 0; i < threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void run(const std::function<void(int)>& task, int n_tasks) {
        std::unique_lock<std::mutex> lk(mu_);
        task_ = &task;
        remaining_ = n_tasks;
        next_ = 0;
        total_ = n_tasks;
        cv_.notify_all();
        done_cv_.wait(lk, [this] { return remaining_ == 0; });
        task_ = nullptr;
    }

private:
    void worker_loop() {
        std::unique_lock<std::mutex> lk(mu_);
        for (;;) {
            cv_.wait(lk, [this] { return stop_ || (task_ && next_ < total_); });
            if (stop_) return;
            while (task_ && next_ < total_) {
                int idx = next_++;
                const auto* t = task_;
                lk.unlock();
                (*t)(idx);
                lk.lock();
                if (--remaining_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int)>* task_ = nullptr;
    int next_ = 0;
    int total_ = 0;
    int remaining_ = 0;
    bool stop_ = false;
};

inline ThreadPool& pool() {
    static ThreadPool p(worker_count());
    return p;
}

}  // namespace detail

/// Runs fn(begin, end) over a partition of [0, n) into contiguous chunks.
///
/// Each index is processed by exactly one invocation, so results are
/// bit-identical for any worker count as long as fn writes only to
/// locations owned by its indices.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        if (n > 0) fn(0, n);
        return;
    }
    const int chunks = static_cast<int>(std::min<std::int64_t>(n, workers * 4));
    const std::int64_t chunk = (n + chunks - 1) / chunks;
    std::function<void(int)> task = [&](int c) {
        const std::int64_t lo = c * chunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        if (lo < hi) fn(lo, hi);
    };
    detail::pool().run(task, chunks);
}

}  // namespace hcr
