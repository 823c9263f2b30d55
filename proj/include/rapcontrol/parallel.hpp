#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rapcontrol/learner.hpp"
#include "rapcontrol/value_store.hpp"

namespace rap {

struct ParallelConfig {
    std::int32_t workers = 1;
    enum class Mode { Shared, Distributed } mode = Mode::Shared;
    /// Per-worker seeds; derived from the learner seed when empty. Identical
    /// seeds are allowed (workers then behave identically).
    std::vector<std::uint64_t> seeds;
    /// Shared mode: global episode budget. Distributed mode: episodes per
    /// worker.
    std::int64_t episode_budget = 10000;
    /// Fresh evaluation rollouts per candidate policy in distributed mode
    /// (0: 1 for deterministic instances, 30 otherwise).
    int eval_rollouts = 0;
};

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct SharedRunResult {
    std::int64_t episodes = 0;
    std::int64_t wall_us = 0;            // total run time
    std::int64_t threshold_wall_us = -1; // time of the first eval at/below the stop threshold
    std::int64_t threshold_episode = -1;
    double final_greedy_cost = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::int64_t> episodes_per_worker;
};

/**
 * Shared-value-function sampling: every worker runs independent episodes
 * against one hash table (the slot-atomic shared mode). Episode indices are
 * claimed from a global counter so annealing matches the sequential run;
 * with one worker this is exactly the sequential learner. Periodic greedy
 * evaluations raise a stop flag once the error threshold is reached — up to
 * one in-flight episode per worker may still complete after that.
 */
inline SharedRunResult run_shared(const Env& env, const FeatureSchema& schema, HashQTable& store,
                                  LearnerConfig base_config, const ParallelConfig& par) {
    if (par.workers < 1) throw std::invalid_argument("run_shared: need at least one worker");
    SharedRunResult result;
    const auto t0 = std::chrono::steady_clock::now();

    if (par.workers == 1) {
        LearnerConfig cfg = base_config;
        cfg.episodes = par.episode_budget;
        if (!par.seeds.empty()) cfg.seed = par.seeds[0];
        Learner learner(env, schema, store, cfg);
        const TrainResult tr = learner.train();
        result.episodes = tr.episodes_run;
        result.threshold_episode = tr.threshold_episode;
        result.threshold_wall_us = tr.threshold_wall_us;
        result.final_greedy_cost = tr.final_greedy_cost;
        result.episodes_per_worker = {tr.episodes_run};
        result.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        return result;
    }

    std::atomic<std::int64_t> next_episode{1};
    std::atomic<bool> stop{false};
    std::atomic<std::int64_t> threshold_wall{-1};
    std::atomic<std::int64_t> threshold_episode{-1};
    std::mutex result_mutex;
    std::vector<std::int64_t> per_worker(static_cast<std::size_t>(par.workers), 0);
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(par.workers));
    double final_greedy = std::numeric_limits<double>::quiet_NaN();

    auto worker_fn = [&](std::int32_t w) {
        try {
            LearnerConfig cfg = base_config;
            cfg.seed = w < static_cast<std::int32_t>(par.seeds.size())
                           ? par.seeds[static_cast<std::size_t>(w)]
                           : derive_seed(base_config.seed, static_cast<std::uint64_t>(w));
            Learner learner(env, schema, store, cfg);
            Rng eval_rng(cfg.seed ^ 0x5851f42d4c957f2dull);
            const int eval_rollouts =
                cfg.eval_rollouts > 0 ? cfg.eval_rollouts : (env.deterministic() ? 1 : 30);
            while (!stop.load(std::memory_order_acquire)) {
                const std::int64_t episode = next_episode.fetch_add(1, std::memory_order_relaxed);
                if (episode > par.episode_budget) break;
                learner.training_episode(episode);
                ++per_worker[static_cast<std::size_t>(w)];
                if (cfg.eval_every > 0 && episode % cfg.eval_every == 0 &&
                    cfg.stop_error_threshold >= 0.0 && !std::isnan(cfg.known_optimum)) {
                    const double greedy_cost = learner.evaluate_greedy(eval_rollouts, eval_rng);
                    {
                        std::lock_guard<std::mutex> lock(result_mutex);
                        final_greedy = greedy_cost;
                    }
                    if (learner.error_of(greedy_cost) <= cfg.stop_error_threshold) {
                        const std::int64_t us = std::chrono::duration_cast<std::chrono::microseconds>(
                                                    std::chrono::steady_clock::now() - t0)
                                                    .count();
                        std::int64_t expected = -1;
                        threshold_wall.compare_exchange_strong(expected, us);
                        expected = -1;
                        threshold_episode.compare_exchange_strong(expected, episode);
                        stop.store(true, std::memory_order_release);
                    }
                }
            }
        } catch (...) {
            failures[static_cast<std::size_t>(w)] = std::current_exception();
            stop.store(true, std::memory_order_release);
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(par.workers));
    for (std::int32_t w = 0; w < par.workers; ++w) threads.emplace_back(worker_fn, w);
    for (auto& t : threads) t.join();
    for (auto& failure : failures)
        if (failure) std::rethrow_exception(failure);

    result.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    result.threshold_wall_us = threshold_wall.load();
    result.threshold_episode = threshold_episode.load();
    for (std::int64_t n : per_worker) result.episodes += n;
    result.episodes_per_worker = per_worker;
    result.final_greedy_cost = final_greedy;
    return result;
}

struct WorkerSummary {
    std::int32_t worker = 0;
    std::uint64_t seed = 0;
    std::int64_t episodes = 0;
    double evaluated_cost = std::numeric_limits<double>::infinity();
};

struct DistributedRunResult {
    std::int32_t selected_worker = -1;
    double selected_cost = std::numeric_limits<double>::infinity();
    std::vector<WorkerSummary> workers;
    std::unique_ptr<QValueStore> selected_store;
    std::int64_t wall_us = 0;
};

/**
 * Independent-worker sampling: each worker trains a private store for its
 * episode budget, each resulting greedy policy is evaluated by fresh
 * rollouts from the initial state, and the arg-min policy is returned (ties
 * to the lowest worker id). With fixed seeds the outcome is reproducible
 * bit-for-bit regardless of scheduling, because workers share nothing.
 */
inline DistributedRunResult run_distributed(
    const Env& env, const FeatureSchema& schema, LearnerConfig base_config,
    const ParallelConfig& par,
    const std::function<std::unique_ptr<QValueStore>()>& store_factory) {
    if (par.workers < 1) throw std::invalid_argument("run_distributed: need at least one worker");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::unique_ptr<QValueStore>> stores(static_cast<std::size_t>(par.workers));
    std::vector<WorkerSummary> summaries(static_cast<std::size_t>(par.workers));
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(par.workers));

    auto worker_fn = [&](std::int32_t w) {
        try {
            stores[static_cast<std::size_t>(w)] = store_factory();
            LearnerConfig cfg = base_config;
            cfg.episodes = par.episode_budget;
            cfg.seed = w < static_cast<std::int32_t>(par.seeds.size())
                           ? par.seeds[static_cast<std::size_t>(w)]
                           : derive_seed(base_config.seed, static_cast<std::uint64_t>(w));
            Learner learner(env, schema, *stores[static_cast<std::size_t>(w)], cfg);
            const TrainResult tr = learner.train();
            const int rollouts =
                par.eval_rollouts > 0 ? par.eval_rollouts : (env.deterministic() ? 1 : 30);
            Rng eval_rng(derive_seed(cfg.seed, 0xeb41));
            WorkerSummary& s = summaries[static_cast<std::size_t>(w)];
            s.worker = w;
            s.seed = cfg.seed;
            s.episodes = tr.episodes_run;
            s.evaluated_cost = learner.evaluate_greedy(rollouts, eval_rng);
        } catch (...) {
            failures[static_cast<std::size_t>(w)] = std::current_exception();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(par.workers));
    for (std::int32_t w = 0; w < par.workers; ++w) threads.emplace_back(worker_fn, w);
    for (auto& t : threads) t.join();
    for (auto& failure : failures)
        if (failure) std::rethrow_exception(failure);

    DistributedRunResult result;
    result.workers = summaries;
    for (std::int32_t w = 0; w < par.workers; ++w) {
        const double cost = summaries[static_cast<std::size_t>(w)].evaluated_cost;
        if (cost < result.selected_cost) {
            result.selected_cost = cost;
            result.selected_worker = w;
        }
    }
    if (result.selected_worker < 0)
        throw std::runtime_error("run_distributed: no worker produced an evaluable policy");
    result.selected_store = std::move(stores[static_cast<std::size_t>(result.selected_worker)]);
    result.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return result;
}

}  // namespace rap
