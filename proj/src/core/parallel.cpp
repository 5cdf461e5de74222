#include "csplat/core/parallel.hpp"

#include <algorithm>

namespace csplat {

namespace {
int g_workers = 0;
}

void set_worker_count(int n) { g_workers = n < 0 ? 0 : n; }

int worker_count() {
    if (g_workers > 0) return g_workers;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        fn(0, n);
        return;
    }
    // Fixed chunking: ~4 chunks per worker at the default count keeps load
    // balanced while chunk boundaries stay independent of the actual count.
    const std::size_t chunk = std::max<std::size_t>(1, n / 64 + 1);
    std::atomic<std::size_t> cursor{0};
    auto body = [&] {
        for (;;) {
            const std::size_t begin = cursor.fetch_add(chunk);
            if (begin >= n) break;
            fn(begin, std::min(begin + chunk, n));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
}

double pairwise_sum(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace csplat
