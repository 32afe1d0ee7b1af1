#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace csbg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad shapes, out-of-range parameters, malformed inputs.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable or corrupt file contents (streams, checkpoints, PGM).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A non-finite value appeared while iterating. Carries the iteration index
/// and, once the pipeline has seen it, the batch index.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, std::size_t iteration, long batch = -1)
        : std::runtime_error(what), iteration_(iteration), batch_(batch) {}

    std::size_t iteration() const noexcept { return iteration_; }
    long batch() const noexcept { return batch_; }

private:
    std::size_t iteration_;
    long batch_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

/// Worker cap from CSV_THREADS (unset or 0 means hardware concurrency).
inline unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CSV_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, hw));
    }
    return hw;
}

/// Runs fn(i) for i in [0, count). Work is split into contiguous chunks, one
/// per worker; fn must only write state owned by index i. Small jobs stay on
/// the calling thread.
template <class Fn>
void parallel_for(std::size_t count, std::size_t cost_per_item, Fn&& fn) {
    constexpr std::size_t kMinParallelWork = std::size_t{1} << 18;
    unsigned workers = worker_count();
    if (workers <= 1 || count < 2 || count * cost_per_item < kMinParallelWork) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
}

}  // namespace csbg
