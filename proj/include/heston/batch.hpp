#pragma once

// Lockstep simulation of many independent paths.
//
// Paths are split into fixed-size chunks handed to workers; inside a chunk,
// kBatchLanes lanes advance together through the SIMD kernels and a lane that
// finishes is refilled with the next path of the chunk. Path noise depends only
// on (seed, path, step), so per-path results do not depend on lane placement,
// chunk assignment or worker count.
//
// A handler receives lane callbacks:
//   bool begin(std::size_t lane, std::uint64_t path, const PathState& s0);  // false: done at t0
//   bool step(std::size_t lane, const PathState& pre, const PathState& post, std::size_t k);
//   void horizon(std::size_t lane, const PathState& last);
// and the factory builds one handler per worker: factory(worker_index).

#include "heston/detail/stepping.hpp"
#include "heston/model.hpp"
#include "heston/sde.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace heston {

inline constexpr std::size_t kBatchLanes = 256;
inline constexpr std::uint64_t kChunkPaths = 4096;

struct BatchPlan {
    HestonParams params;
    Scheme scheme = Scheme::FullTruncation;
    double dt = 1e-3;
    std::size_t max_steps = 0; // paths reaching this many steps get horizon()
    std::uint64_t seed = 0;
    PathState start;
    std::uint64_t first_path = 0;
    std::uint64_t n_paths = 0;
    unsigned workers = 1;
};

namespace detail {

template <class Handler>
void run_chunk(const BatchPlan& plan, const simd::StepCoefficients& coef, Handler& h, std::uint64_t begin,
               std::uint64_t end) {
    constexpr std::size_t L = kBatchLanes;
    std::array<double, L> x{};
    std::array<double, L> y{};
    std::array<double, L> z1{};
    std::array<double, L> z2{};
    std::array<std::uint64_t, L> path{};
    std::array<std::uint64_t, L> step{};
    std::array<bool, L> live{};
    std::uint64_t next = begin;
    std::size_t n_live = 0;

    auto fill = [&](std::size_t lane) {
        while (next < end) {
            const std::uint64_t id = next++;
            if (h.begin(lane, id, plan.start) && plan.max_steps > 0) {
                x[lane] = plan.start.x;
                y[lane] = plan.start.y;
                path[lane] = id;
                step[lane] = 0;
                live[lane] = true;
                return;
            }
            if (plan.max_steps == 0) h.horizon(lane, plan.start);
        }
        // Parked lanes keep finite dummy values so the kernels stay well defined.
        x[lane] = 0.0;
        y[lane] = plan.params.theta;
        path[lane] = 0;
        step[lane] = 0;
        live[lane] = false;
    };

    const std::size_t lanes = static_cast<std::size_t>(std::min<std::uint64_t>(L, end - begin));
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        fill(lane);
        if (live[lane]) ++n_live;
    }
    while (n_live > 0) {
        std::array<double, L> x_pre = x;
        std::array<double, L> y_pre = y;
        advance_lanes(plan.params, plan.scheme, coef, plan.seed, path.data(), step.data(), lanes, x.data(),
                      y.data(), z1.data(), z2.data());
        for (std::size_t lane = 0; lane < lanes; ++lane) {
            if (!live[lane]) continue;
            const std::size_t k = static_cast<std::size_t>(step[lane]);
            const PathState pre{plan.start.t + static_cast<double>(k) * plan.dt, x_pre[lane], y_pre[lane]};
            const PathState post{plan.start.t + static_cast<double>(k + 1) * plan.dt, x[lane], y[lane]};
            step[lane] = k + 1;
            bool alive = h.step(lane, pre, post, k + 1);
            if (alive && k + 1 >= plan.max_steps) {
                h.horizon(lane, post);
                alive = false;
            }
            if (!alive) {
                fill(lane);
                if (!live[lane]) --n_live;
            }
        }
    }
}

} // namespace detail

template <class Factory>
void run_batch(const BatchPlan& plan, Factory&& factory) {
    plan.params.validate();
    if (plan.start.y < 0.0) throw ParameterError("paths must start in the closed half-plane");
    if (!(plan.dt > 0.0)) throw ParameterError("dt must be positive");
    const simd::StepCoefficients coef = detail::step_coefficients(plan.params, plan.scheme, plan.dt);
    const std::uint64_t n_chunks = (plan.n_paths + kChunkPaths - 1) / kChunkPaths;
    std::atomic<std::uint64_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&](unsigned w) {
        try {
            auto handler = factory(w);
            for (;;) {
                const std::uint64_t c = cursor.fetch_add(1);
                if (c >= n_chunks) break;
                const std::uint64_t b = plan.first_path + c * kChunkPaths;
                const std::uint64_t e = std::min(plan.first_path + plan.n_paths, b + kChunkPaths);
                detail::run_chunk(plan, coef, handler, b, e);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            cursor.store(n_chunks);
        }
    };

    const unsigned n_workers = std::max(1u, std::min<unsigned>(plan.workers, static_cast<unsigned>(n_chunks)));
    if (n_workers == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace heston
