#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rapcontrol/distribution.hpp"

namespace rap {

using ResourceId = std::int32_t;
using StateId = std::int32_t;
using OperationId = std::int32_t;

inline constexpr std::int32_t kNone = -1;

/**
 * An immutable resource allocation problem: reusable resources with
 * (stochastic) states, operations with (stochastic) durations and effects,
 * a task subset that must be completed, and precedence constraints between
 * tasks. Build instances through InstanceBuilder or the encoders; validate
 * with rap::validate before simulating.
 *
 * Deterministic problems are represented with point-mass distributions, so
 * one code path serves both cases.
 */
class Instance {
public:
    std::int32_t resource_count() const { return resource_count_; }
    std::int32_t state_count() const { return state_count_; }
    std::int32_t operation_count() const { return operation_count_; }

    bool is_task(OperationId op) const { return task_flag_[static_cast<std::size_t>(op)] != 0; }
    const std::vector<OperationId>& tasks() const { return tasks_; }
    std::int32_t task_count() const { return static_cast<std::int32_t>(tasks_.size()); }

    const std::vector<std::pair<OperationId, OperationId>>& precedence() const { return precedence_; }
    const std::vector<OperationId>& predecessors(OperationId task) const {
        return predecessors_[static_cast<std::size_t>(task)];
    }

    /// Duration distribution for executing `op` in resource-state `s`, or
    /// nullptr when the pair is outside the capability domain.
    const DurationDist* duration(StateId s, OperationId op) const {
        const std::int32_t idx = pair_index_[cell(s, op)];
        return idx < 0 ? nullptr : &durations_[static_cast<std::size_t>(idx)];
    }
    const StateDist* effect(StateId s, OperationId op) const {
        const std::int32_t idx = pair_index_[cell(s, op)];
        if (idx < 0) return nullptr;
        const StateDist& e = effects_[static_cast<std::size_t>(idx)];
        return e.support.empty() ? nullptr : &e;
    }
    bool capable(StateId s, OperationId op) const { return pair_index_[cell(s, op)] >= 0; }

    const StateDist& initial(ResourceId r) const { return initial_[static_cast<std::size_t>(r)]; }

    /// Operations executable from state `s` (the domain slice of d).
    const std::vector<OperationId>& operations_in_state(StateId s) const {
        return state_ops_[static_cast<std::size_t>(s)];
    }
    /// States from which `op` can be executed (Γ(op)).
    const std::vector<StateId>& capable_states(OperationId op) const {
        return op_states_[static_cast<std::size_t>(op)];
    }
    const std::vector<std::pair<StateId, OperationId>>& capability_pairs() const { return pairs_; }

    /// Episode-level cap on non-task operation starts; bounds the state space.
    std::int32_t non_task_cap() const { return non_task_cap_; }

    bool deterministic() const { return deterministic_; }

    /// Sum over capability pairs of the maximum duration. Serves as the
    /// default failure-penalty unit and as a horizon bound: it dominates any
    /// achievable completion time of a non-preemptive schedule.
    std::int64_t duration_bound() const { return duration_bound_; }

    /// Sum over tasks of the largest expected duration among capable states,
    /// plus the non-task allowance; default clamp horizon for time features.
    std::int64_t expected_horizon() const { return expected_horizon_; }

private:
    friend class InstanceBuilder;
    friend Instance rebuild_for_disturbance(const Instance&, std::int32_t);

    std::size_t cell(StateId s, OperationId op) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(operation_count_) +
               static_cast<std::size_t>(op);
    }

    std::int32_t resource_count_ = 0;
    std::int32_t state_count_ = 0;
    std::int32_t operation_count_ = 0;
    std::vector<char> task_flag_;
    std::vector<OperationId> tasks_;
    std::vector<std::pair<OperationId, OperationId>> precedence_;
    std::vector<std::vector<OperationId>> predecessors_;
    std::vector<std::pair<StateId, OperationId>> pairs_;
    std::vector<std::int32_t> pair_index_;  // dense (state, op) -> index or -1
    std::vector<DurationDist> durations_;
    std::vector<StateDist> effects_;  // parallel to durations_; may be empty per slot
    std::vector<StateDist> initial_;
    std::vector<std::vector<OperationId>> state_ops_;
    std::vector<std::vector<StateId>> op_states_;
    std::int32_t non_task_cap_ = 0;
    bool deterministic_ = true;
    std::int64_t duration_bound_ = 0;
    std::int64_t expected_horizon_ = 0;
};

/// Incremental construction of an Instance. The builder accepts structurally
/// broken input (mismatched domains, bad distributions); rap::validate is the
/// place where those problems are reported.
class InstanceBuilder {
public:
    ResourceId add_resource() { return resources_++; }
    StateId add_state() { return states_++; }
    OperationId add_operation(bool task) {
        task_flags_.push_back(task ? 1 : 0);
        return static_cast<OperationId>(task_flags_.size() - 1);
    }
    void add_resources(std::int32_t n) { resources_ += n; }
    void add_states(std::int32_t n) { states_ += n; }

    void add_precedence(OperationId before, OperationId after) {
        precedence_.emplace_back(before, after);
    }

    void set_duration(StateId s, OperationId op, DurationDist dist) {
        durations_[key(s, op)] = std::move(dist);
    }
    void set_effect(StateId s, OperationId op, StateDist dist) {
        effects_[key(s, op)] = std::move(dist);
    }
    void set_initial(ResourceId r, StateDist dist) { initial_[r] = std::move(dist); }

    /// 0 keeps the default of 2 * |operations|.
    void set_non_task_cap(std::int32_t cap) { non_task_cap_ = cap; }

    Instance build() const {
        Instance out;
        out.resource_count_ = resources_;
        out.state_count_ = states_;
        out.operation_count_ = static_cast<std::int32_t>(task_flags_.size());
        out.task_flag_ = task_flags_;
        for (OperationId o = 0; o < out.operation_count_; ++o)
            if (task_flags_[static_cast<std::size_t>(o)]) out.tasks_.push_back(o);
        out.precedence_ = precedence_;
        out.predecessors_.assign(task_flags_.size(), {});
        for (const auto& [u, v] : precedence_)
            if (v >= 0 && v < out.operation_count_)
                out.predecessors_[static_cast<std::size_t>(v)].push_back(u);

        out.pair_index_.assign(
            static_cast<std::size_t>(states_) * static_cast<std::size_t>(out.operation_count_), -1);
        out.state_ops_.assign(static_cast<std::size_t>(states_), {});
        out.op_states_.assign(task_flags_.size(), {});
        std::vector<std::int64_t> keys;
        keys.reserve(durations_.size());
        for (const auto& [k, dist] : durations_) keys.push_back(k);
        std::sort(keys.begin(), keys.end());  // deterministic capability order
        for (std::int64_t k : keys) {
            const StateId s = static_cast<StateId>(k >> 32);
            const OperationId op = static_cast<OperationId>(k & 0xffffffff);
            out.pair_index_[out.cell(s, op)] = static_cast<std::int32_t>(out.durations_.size());
            out.durations_.push_back(durations_.at(k));
            auto it = effects_.find(k);
            out.effects_.push_back(it == effects_.end() ? StateDist{} : it->second);
            out.pairs_.emplace_back(s, op);
            out.state_ops_[static_cast<std::size_t>(s)].push_back(op);
            out.op_states_[static_cast<std::size_t>(op)].push_back(s);
        }
        // Effect-only pairs stay out of the capability domain but must be
        // visible to validation; they are tracked separately.
        out.initial_.assign(static_cast<std::size_t>(resources_), StateDist{});
        for (const auto& [r, dist] : initial_)
            if (r >= 0 && r < resources_) out.initial_[static_cast<std::size_t>(r)] = dist;

        out.non_task_cap_ = non_task_cap_ > 0 ? non_task_cap_ : 2 * out.operation_count_;

        out.deterministic_ = true;
        for (const auto& d : out.durations_)
            if (!d.support.empty() && !d.is_point()) out.deterministic_ = false;
        for (const auto& e : out.effects_)
            if (!e.support.empty() && !e.is_point()) out.deterministic_ = false;
        for (const auto& i : out.initial_)
            if (!i.support.empty() && !i.is_point()) out.deterministic_ = false;

        out.duration_bound_ = 0;
        for (const auto& d : out.durations_)
            if (!d.support.empty()) out.duration_bound_ += d.max_value();

        double horizon = 0.0;
        for (OperationId t : out.tasks_) {
            double worst = 1.0;
            for (StateId s : out.op_states_[static_cast<std::size_t>(t)]) {
                const DurationDist* dd = out.duration(s, t);
                if (dd && !dd->support.empty()) worst = std::max(worst, dd->mean());
            }
            horizon += worst;
        }
        double non_task_worst = 0.0;
        for (const auto& [s, op] : out.pairs_)
            if (!out.is_task(op)) {
                const DurationDist* dd = out.duration(s, op);
                if (dd && !dd->support.empty()) non_task_worst = std::max(non_task_worst, dd->mean());
            }
        horizon += non_task_worst * out.non_task_cap_;
        out.expected_horizon_ = static_cast<std::int64_t>(horizon) + 1;
        return out;
    }

    /// Pairs present in the effect map but not the duration map (domain
    /// mismatches the builder cannot represent in the dense index).
    std::vector<std::pair<StateId, OperationId>> effect_only_pairs() const {
        std::vector<std::pair<StateId, OperationId>> out;
        for (const auto& [k, dist] : effects_)
            if (!durations_.count(k))
                out.emplace_back(static_cast<StateId>(k >> 32),
                                 static_cast<OperationId>(k & 0xffffffff));
        return out;
    }
    /// Pairs with a duration but no effect.
    std::vector<std::pair<StateId, OperationId>> duration_only_pairs() const {
        std::vector<std::pair<StateId, OperationId>> out;
        for (const auto& [k, dist] : durations_)
            if (!effects_.count(k))
                out.emplace_back(static_cast<StateId>(k >> 32),
                                 static_cast<OperationId>(k & 0xffffffff));
        return out;
    }

private:
    static std::int64_t key(StateId s, OperationId op) {
        return (static_cast<std::int64_t>(s) << 32) | static_cast<std::uint32_t>(op);
    }

    std::int32_t resources_ = 0;
    std::int32_t states_ = 0;
    std::vector<char> task_flags_;
    std::vector<std::pair<OperationId, OperationId>> precedence_;
    std::unordered_map<std::int64_t, DurationDist> durations_;
    std::unordered_map<std::int64_t, StateDist> effects_;
    std::unordered_map<std::int32_t, StateDist> initial_;
    std::int32_t non_task_cap_ = 0;
};

struct Violation {
    enum class Code {
        EmptyResources,
        EmptyStates,
        EmptyOperations,
        BadPrecedence,
        CyclicPrecedence,
        DomainMismatch,
        TaskWithoutCapability,
        BadDuration,
        BadEffect,
        BadInitial,
        UnreachableTask,
    };
    Code code;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    bool has(Violation::Code c) const {
        for (const auto& v : violations)
            if (v.code == c) return true;
        return false;
    }
};

namespace detail {

inline bool precedence_is_acyclic(const Instance& inst) {
    const std::size_t n = static_cast<std::size_t>(inst.operation_count());
    std::vector<std::int32_t> indegree(n, 0);
    std::vector<std::vector<OperationId>> succ(n);
    for (const auto& [u, v] : inst.precedence()) {
        if (u < 0 || v < 0 || u >= inst.operation_count() || v >= inst.operation_count()) continue;
        succ[static_cast<std::size_t>(u)].push_back(v);
        ++indegree[static_cast<std::size_t>(v)];
    }
    std::deque<OperationId> frontier;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) frontier.push_back(static_cast<OperationId>(i));
    std::size_t seen = 0;
    while (!frontier.empty()) {
        const OperationId u = frontier.front();
        frontier.pop_front();
        ++seen;
        for (OperationId v : succ[static_cast<std::size_t>(u)])
            if (--indegree[static_cast<std::size_t>(v)] == 0) frontier.push_back(v);
    }
    return seen == n;
}

}  // namespace detail

/**
 * Structural validation. The report lists every violated invariant; an empty
 * report means the instance is usable by the simulation and learning layers.
 *
 * `extra_effect_pairs` carries effect-without-duration pairs from the
 * builder, which the dense instance representation cannot hold.
 */
inline ValidationReport validate(
    const Instance& inst,
    const std::vector<std::pair<StateId, OperationId>>& extra_effect_pairs = {}) {
    ValidationReport report;
    auto add = [&](Violation::Code c, std::string msg) {
        report.violations.push_back({c, std::move(msg)});
    };

    if (inst.resource_count() <= 0) add(Violation::Code::EmptyResources, "no resources");
    if (inst.state_count() <= 0) add(Violation::Code::EmptyStates, "no resource states");
    if (inst.operation_count() <= 0) add(Violation::Code::EmptyOperations, "no operations");
    if (!report.ok()) return report;

    for (const auto& [u, v] : inst.precedence()) {
        const bool in_range = u >= 0 && v >= 0 && u < inst.operation_count() && v < inst.operation_count();
        if (!in_range || !inst.is_task(u) || !inst.is_task(v) || u == v)
            add(Violation::Code::BadPrecedence,
                "precedence pair (" + std::to_string(u) + ", " + std::to_string(v) +
                    ") is not over distinct tasks");
    }
    if (!detail::precedence_is_acyclic(inst))
        add(Violation::Code::CyclicPrecedence, "cyclic precedence: not a strict partial order");

    for (const auto& [s, op] : extra_effect_pairs)
        add(Violation::Code::DomainMismatch,
            "effect defined without duration for state " + std::to_string(s) + ", operation " +
                std::to_string(op));

    for (const auto& [s, op] : inst.capability_pairs()) {
        const DurationDist* d = inst.duration(s, op);
        for (const std::string& p : d->problems())
            add(Violation::Code::BadDuration,
                "duration(" + std::to_string(s) + ", " + std::to_string(op) + "): " + p);
        const StateDist* e = inst.effect(s, op);
        if (e == nullptr) {
            add(Violation::Code::DomainMismatch,
                "duration defined without effect for state " + std::to_string(s) + ", operation " +
                    std::to_string(op));
        } else {
            for (const std::string& p : e->problems(inst.state_count()))
                add(Violation::Code::BadEffect,
                    "effect(" + std::to_string(s) + ", " + std::to_string(op) + "): " + p);
        }
    }

    for (ResourceId r = 0; r < inst.resource_count(); ++r) {
        const StateDist& init = inst.initial(r);
        if (init.support.empty()) {
            add(Violation::Code::BadInitial, "resource " + std::to_string(r) + " has no initial distribution");
            continue;
        }
        for (const std::string& p : init.problems(inst.state_count()))
            add(Violation::Code::BadInitial, "initial(" + std::to_string(r) + "): " + p);
    }

    for (OperationId t : inst.tasks())
        if (inst.capable_states(t).empty())
            add(Violation::Code::TaskWithoutCapability,
                "task " + std::to_string(t) + " has no capable (state, task) pair");

    // Relaxed reachability: grow the set of resource states reachable from
    // the initial supports by applying any executable operation's effects,
    // then require every task to be executable in some reachable state.
    // Ignores precedence and single-execution constraints, so it only flags
    // certainly-dead tasks (e.g., a TSP city cut off from the start).
    if (report.ok()) {
        std::vector<char> reachable(static_cast<std::size_t>(inst.state_count()), 0);
        std::deque<StateId> frontier;
        for (ResourceId r = 0; r < inst.resource_count(); ++r)
            for (const auto& atom : inst.initial(r).support)
                if (!reachable[static_cast<std::size_t>(atom.state)]) {
                    reachable[static_cast<std::size_t>(atom.state)] = 1;
                    frontier.push_back(atom.state);
                }
        while (!frontier.empty()) {
            const StateId s = frontier.front();
            frontier.pop_front();
            for (OperationId op : inst.operations_in_state(s)) {
                const StateDist* e = inst.effect(s, op);
                if (!e) continue;
                for (const auto& atom : e->support)
                    if (!reachable[static_cast<std::size_t>(atom.state)]) {
                        reachable[static_cast<std::size_t>(atom.state)] = 1;
                        frontier.push_back(atom.state);
                    }
            }
        }
        for (OperationId t : inst.tasks()) {
            bool executable = false;
            for (StateId s : inst.capable_states(t))
                if (reachable[static_cast<std::size_t>(s)]) {
                    executable = true;
                    break;
                }
            if (!executable)
                add(Violation::Code::UnreachableTask,
                    "task " + std::to_string(t) + " is not executable from any reachable state");
        }
    }

    return report;
}

}  // namespace rap
