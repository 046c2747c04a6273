#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace iagc {

// Fork-join pool for data-parallel kernels. Work is split into contiguous
// chunks with fixed boundaries, each chunk writing a disjoint output range,
// so results are bit-identical for any worker count. A new job is published
// only after every worker has gone idle, which keeps the shared job fields
// race-free without per-chunk synchronization.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    void set_threads(unsigned n) {
        if (n < 1) n = 1;
        std::lock_guard<std::mutex> api(api_mutex_);
        stop_workers();
        threads_ = n;
        if (threads_ > 1) start_workers(threads_ - 1);
    }

    unsigned threads() const { return threads_; }

    // fn(begin, end) over [0, n). Serial when the range is too small to
    // amortize dispatch.
    void parallel_for(std::size_t n, std::size_t grain,
                      const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        if (grain < 1) grain = 1;
        if (threads_ <= 1 || n < 2 * grain) {
            fn(0, n);
            return;
        }
        std::lock_guard<std::mutex> api(api_mutex_);

        std::size_t chunks = (n + grain - 1) / grain;
        const std::size_t max_chunks = static_cast<std::size_t>(threads_) * 4;
        if (chunks > max_chunks) chunks = max_chunks;
        const std::size_t chunk = (n + chunks - 1) / chunks;
        chunks = (n + chunk - 1) / chunk;

        {
            // No worker may still be draining the previous job when the
            // shared fields are overwritten.
            std::unique_lock<std::mutex> lk(mutex_);
            idle_cv_.wait(lk, [&] { return active_ == 0; });
            job_fn_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk;
            next_chunk_.store(0, std::memory_order_relaxed);
            pending_.store(static_cast<std::int64_t>(chunks), std::memory_order_relaxed);
            ++epoch_;
        }
        wake_cv_.notify_all();

        run_chunks();

        std::unique_lock<std::mutex> lk(mutex_);
        done_cv_.wait(lk, [&] { return pending_.load(std::memory_order_acquire) == 0; });
        job_fn_ = nullptr;
    }

    ~ThreadPool() { stop_workers(); }

private:
    ThreadPool() {
        unsigned hw = std::thread::hardware_concurrency();
        threads_ = hw ? hw : 1;
        if (threads_ > 1) start_workers(threads_ - 1);
    }

    void start_workers(unsigned n) {
        stop_ = false;
        for (unsigned i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            stop_ = true;
            ++epoch_;
        }
        wake_cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
        stop_ = false;
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mutex_);
                wake_cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
                if (stop_) return;
                seen = epoch_;
                ++active_;
            }
            run_chunks();
            {
                std::lock_guard<std::mutex> lk(mutex_);
                --active_;
            }
            idle_cv_.notify_all();
        }
    }

    void run_chunks() {
        const auto* fn = job_fn_;
        if (!fn) return;
        for (;;) {
            const std::size_t begin = next_chunk_.fetch_add(1, std::memory_order_relaxed) * job_chunk_;
            if (begin >= job_n_) break;
            std::size_t end = begin + job_chunk_;
            if (end > job_n_) end = job_n_;
            (*fn)(begin, end);
            if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lk(mutex_);
                done_cv_.notify_all();
            }
        }
    }

    std::mutex api_mutex_;  // serializes parallel_for callers
    std::vector<std::thread> workers_;
    unsigned threads_ = 1;

    std::mutex mutex_;
    std::condition_variable wake_cv_, done_cv_, idle_cv_;
    std::uint64_t epoch_ = 0;
    unsigned active_ = 0;
    bool stop_ = false;

    const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
    std::size_t job_n_ = 0;
    std::size_t job_chunk_ = 1;
    std::atomic<std::size_t> next_chunk_{0};
    std::atomic<std::int64_t> pending_{0};
};

inline void parallel_for(std::size_t n, std::size_t grain,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    ThreadPool::instance().parallel_for(n, grain, fn);
}

}  // namespace iagc
