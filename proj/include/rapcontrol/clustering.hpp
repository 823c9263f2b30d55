#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "rapcontrol/learner.hpp"

namespace rap {

/**
 * Weighted expected slack of a task: Σ_{s ∈ Γ(v)} w(s) · (due − release −
 * E[D(s, v)]). Weights default to uniform over the capable states.
 * Release/due dates come from the benchmark layer; call default_slacks for
 * pure-makespan instances.
 */
inline double weighted_expected_slack(const Instance& inst, OperationId task, std::int64_t release,
                                      std::int64_t due, const std::vector<double>* weights = nullptr) {
    const auto& capable = inst.capable_states(task);
    if (capable.empty())
        throw std::invalid_argument("weighted_expected_slack: task " + std::to_string(task) +
                                    " has no capable state");
    if (release < 0 || due < 0)
        throw std::invalid_argument(
            "weighted_expected_slack: release/due dates are supplied by the benchmark layer");
    double slack = 0.0;
    for (std::size_t i = 0; i < capable.size(); ++i) {
        const double w = weights ? (*weights)[i] : 1.0 / static_cast<double>(capable.size());
        const DurationDist* d = inst.duration(capable[i], task);
        slack += w * (static_cast<double>(due - release) - d->mean());
    }
    return slack;
}

/// Slack values for every task. With due dates absent (pure makespan
/// instances) the slack falls back to horizon minus the earliest-start bound
/// along the precedence DAG, so clustering stays usable beyond due-date
/// measures.
inline std::vector<double> default_slacks(const Instance& inst, const PerformanceMeasure& measure,
                                          const std::vector<std::int64_t>* release_by_task = nullptr) {
    std::vector<double> slack(static_cast<std::size_t>(inst.operation_count()), 0.0);
    const bool has_dues = !measure.task_due.empty() || !measure.job_due.empty();
    if (has_dues) {
        for (OperationId t : inst.tasks()) {
            std::int64_t due = -1;
            if (static_cast<std::size_t>(t) < measure.task_due.size())
                due = measure.task_due[static_cast<std::size_t>(t)];
            if (due < 0 && static_cast<std::size_t>(t) < measure.task_job.size()) {
                const std::int32_t j = measure.task_job[static_cast<std::size_t>(t)];
                if (j >= 0 && j < measure.job_count()) due = measure.job_due[static_cast<std::size_t>(j)];
            }
            std::int64_t release = 0;
            if (release_by_task && static_cast<std::size_t>(t) < release_by_task->size())
                release = std::max<std::int64_t>(0, (*release_by_task)[static_cast<std::size_t>(t)]);
            else if (static_cast<std::size_t>(t) < measure.task_job.size()) {
                const std::int32_t j = measure.task_job[static_cast<std::size_t>(t)];
                if (j >= 0 && static_cast<std::size_t>(j) < measure.job_release.size())
                    release = std::max<std::int64_t>(0, measure.job_release[static_cast<std::size_t>(j)]);
            }
            slack[static_cast<std::size_t>(t)] =
                due >= 0 ? weighted_expected_slack(inst, t, release, due) : 0.0;
        }
        return slack;
    }
    // Earliest-start bound: longest expected path through the predecessors.
    std::vector<double> est(static_cast<std::size_t>(inst.operation_count()), 0.0);
    std::vector<OperationId> order = inst.tasks();
    // topological order via repeated relaxation (task DAGs are small)
    for (std::size_t pass = 0; pass < order.size(); ++pass) {
        bool changed = false;
        for (OperationId t : order)
            for (OperationId u : inst.predecessors(t)) {
                double mean = 0.0;
                const auto& caps = inst.capable_states(u);
                for (StateId s : caps) mean += inst.duration(s, u)->mean();
                if (!caps.empty()) mean /= static_cast<double>(caps.size());
                const double candidate = est[static_cast<std::size_t>(u)] + mean;
                if (candidate > est[static_cast<std::size_t>(t)]) {
                    est[static_cast<std::size_t>(t)] = candidate;
                    changed = true;
                }
            }
        if (!changed) break;
    }
    const double horizon = static_cast<double>(inst.expected_horizon());
    for (OperationId t : inst.tasks()) slack[static_cast<std::size_t>(t)] = horizon - est[static_cast<std::size_t>(t)];
    return slack;
}

/// Ordered task clusters: earlier clusters hold the most constrained
/// (smallest-slack) tasks, and precedence has priority — a constrained pair
/// never puts the predecessor in a later cluster.
struct ClusterPlan {
    std::vector<std::vector<OperationId>> clusters;
    std::int32_t target_size = 0;
    std::vector<double> slack;  // indexed by operation id

    std::int32_t cluster_of(OperationId task) const {
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (OperationId t : clusters[i])
                if (t == task) return static_cast<std::int32_t>(i);
        return -1;
    }
};

/**
 * Partitions the tasks into ordered clusters of the target size: a Kahn
 * frontier over the precedence DAG, always taking the smallest-slack
 * available task (ties by id). Handling the most constrained tasks first is
 * the clustering criterion; precedence feasibility is guaranteed because a
 * task enters the frontier only after its predecessors are placed.
 */
inline ClusterPlan build_clusters(const Instance& inst, const std::vector<double>& slack,
                                  std::int32_t target_size) {
    if (target_size < 1) throw std::invalid_argument("build_clusters: target size must be >= 1");
    ClusterPlan plan;
    plan.target_size = target_size;
    plan.slack = slack;

    std::unordered_map<OperationId, std::int32_t> indegree;
    std::unordered_map<OperationId, std::vector<OperationId>> successors;
    for (OperationId t : inst.tasks()) indegree[t] = 0;
    for (const auto& [u, v] : inst.precedence()) {
        ++indegree[v];
        successors[u].push_back(v);
    }
    using Entry = std::pair<double, OperationId>;  // (slack, id), min-first
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
    for (OperationId t : inst.tasks())
        if (indegree[t] == 0) frontier.push({slack[static_cast<std::size_t>(t)], t});

    std::vector<OperationId> current;
    while (!frontier.empty()) {
        const auto [s, t] = frontier.top();
        frontier.pop();
        current.push_back(t);
        if (static_cast<std::int32_t>(current.size()) == target_size) {
            plan.clusters.push_back(std::move(current));
            current.clear();
        }
        for (OperationId v : successors[t])
            if (--indegree[v] == 0) frontier.push({slack[static_cast<std::size_t>(v)], v});
    }
    if (!current.empty()) plan.clusters.push_back(std::move(current));
    return plan;
}

/// One trained cluster level: the masked-state key of every state the greedy
/// policy encountered while recording, mapped to its chosen action.
struct FrozenLevel {
    std::vector<char> own_tasks;   // tasks decided by this level
    std::vector<char> mask;        // tasks of later clusters, treated as finished in keys
    std::unordered_map<std::uint64_t, ControlAction> decisions;
};

/**
 * Hierarchical policy produced by sequential cluster training. At each
 * state the earliest level with an assignable own task decides: its stored
 * greedy action when the masked state was seen during recording, otherwise
 * the immediate-cost base policy restricted to that level's tasks (counted
 * as a fallback). States no level claims wait when possible.
 */
class CompositePolicy {
public:
    CompositePolicy(const Instance& inst, const FeatureSchema& schema)
        : inst_(&inst), schema_(&schema) {}

    std::vector<FrozenLevel>& levels() { return levels_; }
    const std::vector<FrozenLevel>& levels() const { return levels_; }

    /// Decision of the frozen levels, or nullopt when no level claims the
    /// state (the learner or the wait fallback acts then). The earliest
    /// claiming level with a recorded decision acts; when every claiming
    /// level misses, the fallback runs the immediate-cost base policy over
    /// the pooled tasks of all claiming levels, so urgent tasks of later
    /// frozen clusters are not starved by earlier ones.
    std::optional<ControlAction> frozen_action(const Env& env, const EnvState& s,
                                               std::size_t level_limit) const {
        FeatureVector digits;
        bool extracted = false;
        std::vector<const FrozenLevel*> claiming;
        for (std::size_t i = 0; i < std::min(level_limit, levels_.size()); ++i) {
            const FrozenLevel& level = levels_[i];
            bool claims = false;
            for (OperationId t : inst_->tasks())
                if (level.own_tasks[static_cast<std::size_t>(t)] && env.task_assignable(s, t)) {
                    claims = true;
                    break;
                }
            if (!claims) continue;
            if (!extracted) {
                extract_state_block(s, *inst_, *schema_, digits);
                extracted = true;
            }
            const std::uint64_t key = masked_fingerprint_of(digits, level.mask);
            auto it = level.decisions.find(key);
            if (it != level.decisions.end() && action_legal(env, s, it->second, level)) {
                ++frozen_hits_;
                return it->second;
            }
            claiming.push_back(&level);
        }
        if (claiming.empty()) return std::nullopt;
        ++fallbacks_;
        return pooled_fallback(env, s, claiming);
    }

    /// Full composite decision for evaluation episodes.
    ControlAction act(const Env& env, const EnvState& s) const {
        const auto frozen = frozen_action(env, s, levels_.size());
        if (frozen) return *frozen;
        if (env.wait_available(s) && s.pending_task == kNone) return ControlAction::wait();
        std::vector<ControlAction> actions;
        env.flat_actions(s, actions);
        return base_policy_action(env, s, actions);
    }

    std::int64_t fallback_count() const { return fallbacks_; }
    std::int64_t frozen_hit_count() const { return frozen_hits_; }
    void reset_counters() const { fallbacks_ = frozen_hits_ = 0; }

private:
    std::uint64_t masked_fingerprint_of(const FeatureVector& digits,
                                        const std::vector<char>& mask) const {
        FeatureVector patched = digits;
        const std::size_t task_offset = static_cast<std::size_t>(schema_->task_block_offset());
        const std::size_t per_task = schema_->one_hot() ? 4 : 1;
        const auto& ids = schema_->task_ids();
        for (std::size_t slot = 0; slot < ids.size(); ++slot) {
            if (!mask[static_cast<std::size_t>(ids[slot])]) continue;
            const std::size_t base = task_offset + slot * per_task;
            if (schema_->one_hot()) {
                patched[base + 0] = 0;
                patched[base + 1] = 0;
                patched[base + 2] = 0;
                patched[base + 3] = 1;
            } else {
                patched[base] = kTaskFinished;
            }
        }
        return fingerprint(patched);
    }

    bool action_legal(const Env& env, const EnvState& s, const ControlAction& a,
                      const FrozenLevel& level) const {
        switch (a.kind) {
            case ControlAction::Kind::Wait:
                return env.wait_available(s) && s.pending_task == kNone;
            case ControlAction::Kind::Assign:
                if (inst_->is_task(a.op) && !level.own_tasks[static_cast<std::size_t>(a.op)])
                    return false;
                return env.assign_available(s, a.op, a.resource);
            default:
                return false;  // recorded decisions are resolved to assigns
        }
    }

    ControlAction pooled_fallback(const Env& env, const EnvState& s,
                                  const std::vector<const FrozenLevel*>& claiming) const {
        std::vector<ControlAction> actions;
        env.flat_actions(s, actions);
        std::vector<ControlAction> pooled;
        for (const auto& a : actions) {
            if (a.kind != ControlAction::Kind::Assign || !inst_->is_task(a.op)) continue;
            for (const FrozenLevel* level : claiming)
                if (level->own_tasks[static_cast<std::size_t>(a.op)]) {
                    pooled.push_back(a);
                    break;
                }
        }
        if (pooled.empty()) return base_policy_action(env, s, actions);
        return base_policy_action(env, s, pooled);
    }

    const Instance* inst_;
    const FeatureSchema* schema_;
    std::vector<FrozenLevel> levels_;
    mutable std::int64_t fallbacks_ = 0;
    mutable std::int64_t frozen_hits_ = 0;
};

struct SequentialOptions {
    LearnerConfig learner;           // per-cluster budget and schedules
    std::int64_t freeze_episodes = 25;
    Env::Options env;
};

struct SequentialTrainResult {
    ClusterPlan plan;
    std::vector<TrainResult> cluster_results;
    std::vector<double> cluster_seconds;
    double total_seconds = 0.0;
    std::int64_t fallback_count = 0;
};

/**
 * Sequential cluster-by-cluster training: cluster j's episodes expose only
 * the tasks of clusters 1..j, earlier clusters act through their frozen
 * greedy policies, and only cluster-j decisions are recorded and updated.
 * After each cluster a recording pass stores the greedy action per
 * encountered (masked) state, which freezes the cluster.
 */
inline SequentialTrainResult sequential_train(const Instance& inst, const PerformanceMeasure& measure,
                                              const ClusterPlan& plan, QValueStore& store,
                                              const FeatureSchema& schema,
                                              const SequentialOptions& opts,
                                              CompositePolicy& policy) {
    SequentialTrainResult result;
    result.plan = plan;
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<char> exposed(static_cast<std::size_t>(inst.operation_count()), 0);
    for (std::size_t j = 0; j < plan.clusters.size(); ++j) {
        const auto t_cluster = std::chrono::steady_clock::now();
        std::vector<char> own(static_cast<std::size_t>(inst.operation_count()), 0);
        for (OperationId t : plan.clusters[j]) {
            exposed[static_cast<std::size_t>(t)] = 1;
            own[static_cast<std::size_t>(t)] = 1;
        }
        Env::Options env_opts = opts.env;
        env_opts.exposed_tasks = exposed;
        Env env(inst, measure, env_opts);

        EpisodeHooks hooks;
        hooks.external_controller = [&policy, &env, j](const EnvState& s) {
            return policy.frozen_action(env, s, j);
        };
        hooks.action_filter = [&inst, own](const EnvState& s, std::vector<ControlAction>& actions) {
            std::erase_if(actions, [&](const ControlAction& a) {
                switch (a.kind) {
                    case ControlAction::Kind::Wait: return false;
                    case ControlAction::Kind::Assign:
                        return inst.is_task(a.op) && !own[static_cast<std::size_t>(a.op)];
                    case ControlAction::Kind::SelectTask:
                        return !own[static_cast<std::size_t>(a.op)];
                    case ControlAction::Kind::SelectResource: return false;
                }
                return false;
            });
        };

        LearnerConfig cfg = opts.learner;
        cfg.seed = opts.learner.seed + 0x9e3779b9u * (j + 1);
        Learner learner(env, schema, store, cfg);
        learner.set_hooks(hooks);
        result.cluster_results.push_back(learner.train());

        // Freeze: record the greedy decision per encountered masked state.
        FrozenLevel level;
        level.own_tasks = own;
        level.mask.assign(static_cast<std::size_t>(inst.operation_count()), 0);
        for (OperationId t : inst.tasks())
            if (!exposed[static_cast<std::size_t>(t)]) level.mask[static_cast<std::size_t>(t)] = 1;
        Rng record_rng(cfg.seed ^ 0x51ed2700fcafe137ull);
        for (std::int64_t e = 0; e < opts.freeze_episodes; ++e) {
            ControlAction pending_select{};
            bool has_pending = false;
            learner.run_episode(
                [&](const EnvState& s, const std::vector<ControlAction>& actions, Rng&) {
                    ControlAction choice = learner.greedy_action(s, actions);
                    // Resolve decomposed pairs into a single assign record.
                    if (choice.kind == ControlAction::Kind::SelectTask) {
                        pending_select = choice;
                        has_pending = true;
                    } else if (choice.kind == ControlAction::Kind::SelectResource && has_pending) {
                        const std::uint64_t key =
                            masked_state_fingerprint(s, inst, schema, level.mask);
                        level.decisions.emplace(
                            key, ControlAction::assign(s.pending_task, choice.resource));
                        has_pending = false;
                    } else {
                        const std::uint64_t key =
                            masked_state_fingerprint(s, inst, schema, level.mask);
                        level.decisions.emplace(key, choice);
                    }
                    return choice;
                },
                record_rng);
        }
        policy.levels().push_back(std::move(level));

        result.cluster_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_cluster).count());
    }
    result.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.fallback_count = policy.fallback_count();
    return result;
}

}  // namespace rap
