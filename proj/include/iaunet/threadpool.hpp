#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace iaunet::nn {

// Minimal persistent worker pool used to split kernel work across rows.
// Partitioning is static, so results never depend on the thread count:
// every output element is produced by exactly one worker with a fixed
// reduction order.
class ThreadPool {
  public:
    static ThreadPool& instance();

    // Runs fn(begin, end) over [0, n) split into contiguous chunks.
    // Falls back to inline execution for small n or a single worker.
    void parallel_for(std::int64_t n, std::int64_t grain, const std::function<void(std::int64_t, std::int64_t)>& fn);

    int workers() const { return static_cast<int>(threads_.size()) + 1; }

    ~ThreadPool();

  private:
    explicit ThreadPool(int workers);
    void worker_loop(std::size_t slot);

    struct Job {
        const std::function<void(std::int64_t, std::int64_t)>* fn = nullptr;
        std::int64_t begin = 0;
        std::int64_t end = 0;
        bool ready = false;
    };

    std::vector<std::thread> threads_;
    std::vector<Job> jobs_;
    std::mutex mu_;
    std::condition_variable cv_job_;
    std::condition_variable cv_done_;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

// Worker cap: min(hardware_concurrency, IAUNET_THREADS) with IAUNET_THREADS
// defaulting to the hardware count.
int configured_thread_count();

}  // namespace iaunet::nn
