#include "iaunet/threadpool.hpp"

#include <algorithm>
#include <cstdlib>

namespace iaunet::nn {

int configured_thread_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("IAUNET_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool(configured_thread_count());
    return pool;
}

ThreadPool::ThreadPool(int workers) {
    int extra = std::max(0, workers - 1);
    jobs_.resize(static_cast<std::size_t>(extra));
    threads_.reserve(static_cast<std::size_t>(extra));
    for (int i = 0; i < extra; ++i) {
        threads_.emplace_back([this, i] { worker_loop(static_cast<std::size_t>(i)); });
    }
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard<std::mutex> lk(mu_);
        stop_ = true;
    }
    cv_job_.notify_all();
    for (auto& t : threads_) t.join();
}

void ThreadPool::worker_loop(std::size_t slot) {
    std::uint64_t seen = 0;
    for (;;) {
        const std::function<void(std::int64_t, std::int64_t)>* fn = nullptr;
        std::int64_t b = 0, e = 0;
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_job_.wait(lk, [&] { return stop_ || (generation_ != seen && jobs_[slot].ready); });
            if (stop_) return;
            seen = generation_;
            fn = jobs_[slot].fn;
            b = jobs_[slot].begin;
            e = jobs_[slot].end;
            jobs_[slot].ready = false;
        }
        if (fn && b < e) (*fn)(b, e);
        {
            std::lock_guard<std::mutex> lk(mu_);
            --pending_;
        }
        cv_done_.notify_one();
    }
}

void ThreadPool::parallel_for(std::int64_t n, std::int64_t grain,
                              const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int nw = workers();
    if (nw <= 1 || n <= grain) {
        fn(0, n);
        return;
    }
    const std::int64_t chunks = std::min<std::int64_t>(nw, std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, grain)));
    const std::int64_t per = (n + chunks - 1) / chunks;
    {
        std::lock_guard<std::mutex> lk(mu_);
        ++generation_;
        pending_ = 0;
        for (std::int64_t c = 1; c < chunks; ++c) {
            const std::int64_t b = c * per;
            const std::int64_t e = std::min<std::int64_t>(n, b + per);
            if (b >= e) break;
            Job& j = jobs_[static_cast<std::size_t>(c - 1)];
            j.fn = &fn;
            j.begin = b;
            j.end = e;
            j.ready = true;
            ++pending_;
        }
    }
    cv_job_.notify_all();
    fn(0, std::min<std::int64_t>(n, per));
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [&] { return pending_ == 0; });
}

}  // namespace iaunet::nn
