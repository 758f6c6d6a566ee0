#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "estop/experiments.hpp"

namespace estop {

int worker_count(int n_tasks) {
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ESTOP_LAB_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) workers = cap;
    }
    return std::clamp(workers, 1, std::max(n_tasks, 1));
}

std::vector<std::optional<std::string>> parallel_for(int n, const std::function<void(int)>& task) {
    std::vector<std::optional<std::string>> errors(static_cast<std::size_t>(std::max(n, 0)));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                task(i);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(i)] = e.what();
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = "unknown error";
            }
        }
    };
    const int workers = worker_count(n);
    if (workers == 1) {
        work();
        return errors;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return errors;
}

}  // namespace estop
