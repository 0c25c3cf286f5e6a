#include "odesurv/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>

namespace odesurv {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void parallel_chunks(int n, int workers,
                     const std::function<void(int begin, int end)>& fn) {
    if (n <= 0) return;
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        fn(0, n);
        return;
    }
    const int chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(workers);
    for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

double pairwise_sum(std::span<const double> values) {
    if (values.empty()) return 0.0;
    std::vector<double> work(values.begin(), values.end());
    std::size_t m = work.size();
    while (m > 1) {
        std::size_t half = m / 2;
        for (std::size_t i = 0; i < half; ++i) work[i] = work[2 * i] + work[2 * i + 1];
        if (m % 2 == 1) {
            work[half] = work[m - 1];
            m = half + 1;
        } else {
            m = half;
        }
    }
    return work[0];
}

std::vector<double> pairwise_sum_rows(std::span<const double> rows, int n, int width) {
    std::vector<double> work(rows.begin(), rows.end());
    if (n == 0) return std::vector<double>(width, 0.0);
    int m = n;
    while (m > 1) {
        int half = m / 2;
        for (int i = 0; i < half; ++i) {
            double* dst = work.data() + static_cast<std::size_t>(i) * width;
            const double* a = work.data() + static_cast<std::size_t>(2 * i) * width;
            const double* b = work.data() + static_cast<std::size_t>(2 * i + 1) * width;
            for (int j = 0; j < width; ++j) dst[j] = a[j] + b[j];
        }
        if (m % 2 == 1) {
            double* dst = work.data() + static_cast<std::size_t>(half) * width;
            const double* a = work.data() + static_cast<std::size_t>(m - 1) * width;
            std::copy(a, a + width, dst);
            m = half + 1;
        } else {
            m = half;
        }
    }
    work.resize(width);
    return work;
}

}  // namespace odesurv
