#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rapcontrol/instance.hpp"
#include "rapcontrol/measure.hpp"

namespace rap {

/**
 * A (partial) resource allocator function: operations with starting times on
 * resources, plus one realized sample path (durations, effect states, initial
 * states) so that feasibility checks and measure evaluation are deterministic
 * for stochastic instances. For deterministic instances the realized fields
 * can be left unset and are derived from the point-mass distributions.
 */
class Schedule {
public:
    struct Entry {
        ResourceId resource = 0;
        std::int64_t start = 0;
        OperationId op = 0;
        std::int64_t realized_duration = kNone;  // kNone: derive from point mass
        StateId realized_effect = kNone;         // kNone: derive from point mass
    };

    /// Returns false (and ignores the entry) when the (resource, start) key
    /// is already occupied; a resource starts at most one operation at a time.
    bool add(Entry e) {
        for (const Entry& existing : entries_)
            if (existing.resource == e.resource && existing.start == e.start) return false;
        entries_.push_back(e);
        return true;
    }

    bool add(ResourceId r, std::int64_t start, OperationId op, std::int64_t realized_duration = kNone,
             StateId realized_effect = kNone) {
        return add(Entry{r, start, op, realized_duration, realized_effect});
    }

    const std::vector<Entry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    void set_realized_initial(ResourceId r, StateId s) {
        if (static_cast<std::size_t>(r) >= realized_initial_.size())
            realized_initial_.resize(static_cast<std::size_t>(r) + 1, kNone);
        realized_initial_[static_cast<std::size_t>(r)] = s;
    }
    StateId realized_initial(ResourceId r) const {
        if (static_cast<std::size_t>(r) >= realized_initial_.size()) return kNone;
        return realized_initial_[static_cast<std::size_t>(r)];
    }

    /// Entries of one resource ordered by start time.
    std::vector<Entry> resource_timeline(ResourceId r) const {
        std::vector<Entry> out;
        for (const Entry& e : entries_)
            if (e.resource == r) out.push_back(e);
        std::sort(out.begin(), out.end(),
                  [](const Entry& a, const Entry& b) { return a.start < b.start; });
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::vector<StateId> realized_initial_;
};

namespace detail {

inline StateId initial_state_for(const Instance& inst, const Schedule& sched, ResourceId r) {
    const StateId realized = sched.realized_initial(r);
    if (realized != kNone) return realized;
    const StateDist& init = inst.initial(r);
    if (init.support.empty())
        throw std::invalid_argument("resource " + std::to_string(r) + " has no initial state");
    if (!init.is_point())
        throw std::invalid_argument("stochastic initial state of resource " + std::to_string(r) +
                                    " requires a realized value");
    return init.support.front().state;
}

inline std::int64_t realized_duration_for(const Instance& inst, const Schedule::Entry& e,
                                          StateId state_before, bool* known = nullptr) {
    if (known) *known = true;
    if (e.realized_duration != kNone) return e.realized_duration;
    const DurationDist* d = inst.duration(state_before, e.op);
    if (d != nullptr && d->is_point()) return d->min_value();
    if (known) {
        *known = false;
        return 1;
    }
    throw std::invalid_argument("entry (resource " + std::to_string(e.resource) + ", t=" +
                                std::to_string(e.start) + ") needs a realized duration");
}

inline StateId realized_effect_for(const Instance& inst, const Schedule::Entry& e,
                                   StateId state_before) {
    if (e.realized_effect != kNone) return e.realized_effect;
    const StateDist* eff = inst.effect(state_before, e.op);
    if (eff != nullptr && eff->is_point()) return eff->support.front().state;
    if (eff == nullptr) return state_before;  // undefined assignment: state left unchanged
    throw std::invalid_argument("entry (resource " + std::to_string(e.resource) + ", t=" +
                                std::to_string(e.start) + ") needs a realized effect state");
}

}  // namespace detail

/**
 * State of resource `r` at time `t` under the given schedule:
 * the initial state at t = 0, the previous state when nothing starts at
 * (r, t), and the effect state of the operation starting at t otherwise.
 *
 * Requires a deterministic instance or realized values on the schedule.
 * Throws std::invalid_argument when an entry's assignment is outside the
 * effect domain for the tracked state.
 */
inline StateId resource_state_at(const Instance& inst, const Schedule& sched, ResourceId r,
                                 std::int64_t t) {
    StateId state = detail::initial_state_for(inst, sched, r);
    for (const auto& e : sched.resource_timeline(r)) {
        if (e.start > t) break;
        if (!inst.capable(state, e.op))
            throw std::invalid_argument("operation " + std::to_string(e.op) +
                                        " is not executable in state " + std::to_string(state));
        state = detail::realized_effect_for(inst, e, state);
    }
    return state;
}

struct FeasibilityViolation {
    int property = 0;  // 1..4, the four feasibility predicates
    std::string detail;
};

struct FeasibilityVerdict {
    bool feasible = true;
    std::vector<FeasibilityViolation> violations;

    bool violates(int property) const {
        for (const auto& v : violations)
            if (v.property == property) return true;
        return false;
    }
};

/**
 * Checks the four feasibility properties of a complete solution:
 *  1. every task appears in exactly one entry;
 *  2. each resource executes at most one operation at a time;
 *  3. precedence-constrained tasks do not start before their predecessors
 *     complete;
 *  4. every assignment is inside the capability domain for the resource
 *     state at the start time.
 *
 * The verdict enumerates every violated property with the offending entries.
 */
inline FeasibilityVerdict check_feasibility(const Instance& inst, const Schedule& sched) {
    FeasibilityVerdict verdict;
    auto flag = [&](int property, std::string detail) {
        verdict.feasible = false;
        verdict.violations.push_back({property, std::move(detail)});
    };

    // Property 1: task multiplicity.
    std::vector<std::int32_t> occurrences(static_cast<std::size_t>(inst.operation_count()), 0);
    for (const auto& e : sched.entries())
        if (e.op >= 0 && e.op < inst.operation_count() && inst.is_task(e.op))
            ++occurrences[static_cast<std::size_t>(e.op)];
    for (OperationId t : inst.tasks()) {
        const std::int32_t n = occurrences[static_cast<std::size_t>(t)];
        if (n == 0)
            flag(1, "task " + std::to_string(t) + " is not scheduled");
        else if (n > 1)
            flag(1, "task " + std::to_string(t) + " is scheduled " + std::to_string(n) + " times");
    }

    // Properties 2 and 4 need the per-resource state trajectory; completion
    // times are collected for property 3 on the way.
    std::vector<std::vector<std::int64_t>> completions(
        static_cast<std::size_t>(inst.operation_count()));
    std::vector<std::vector<std::int64_t>> starts(static_cast<std::size_t>(inst.operation_count()));

    for (ResourceId r = 0; r < inst.resource_count(); ++r) {
        const auto timeline = sched.resource_timeline(r);
        if (timeline.empty()) continue;
        StateId state = detail::initial_state_for(inst, sched, r);
        std::int64_t busy_until = 0;
        bool first = true;
        for (const auto& e : timeline) {
            if (!first && e.start < busy_until)
                flag(2, "resource " + std::to_string(r) + " starts operation " + std::to_string(e.op) +
                            " at t=" + std::to_string(e.start) + " while busy until t=" +
                            std::to_string(busy_until));
            const bool valid = inst.capable(state, e.op);
            if (!valid)
                flag(4, "operation " + std::to_string(e.op) + " started at t=" + std::to_string(e.start) +
             " is not executable in state " + std::to_string(state) + " of resource " +
                            std::to_string(r));
            bool duration_known = false;
            const std::int64_t dur = detail::realized_duration_for(inst, e, state, &duration_known);
            const std::int64_t completion = e.start + (duration_known ? dur : 1);
            busy_until = std::max(busy_until, completion);
            if (e.op >= 0 && e.op < inst.operation_count()) {
                starts[static_cast<std::size_t>(e.op)].push_back(e.start);
                completions[static_cast<std::size_t>(e.op)].push_back(completion);
            }
            if (valid) state = detail::realized_effect_for(inst, e, state);
            first = false;
        }
    }

    // Property 3: precedence.
    for (const auto& [u, v] : inst.precedence()) {
        if (u < 0 || v < 0 || u >= inst.operation_count() || v >= inst.operation_count()) continue;
        for (std::int64_t cu : completions[static_cast<std::size_t>(u)])
            for (std::int64_t sv : starts[static_cast<std::size_t>(v)])
                if (cu > sv)
                    flag(3, "task " + std::to_string(v) + " starts at t=" + std::to_string(sv) +
                                " before predecessor " + std::to_string(u) + " completes at t=" +
                                std::to_string(cu));
    }

    return verdict;
}

/**
 * Evaluates a performance measure on a schedule (assumed feasible under the
 * given realization). γ-composable measures fold per-entry contributions;
 * late-job counting scores completed jobs only.
 */
inline double evaluate_measure(const PerformanceMeasure& measure, const Instance& inst,
                               const Schedule& sched) {
    if (measure.kind == PerformanceMeasure::Kind::LateJobCount) {
        const std::int32_t jobs = measure.job_count();
        std::vector<std::int64_t> finish(static_cast<std::size_t>(jobs), -1);
        std::vector<std::int32_t> scheduled(static_cast<std::size_t>(jobs), 0);
        std::vector<std::int32_t> expected(static_cast<std::size_t>(jobs), 0);
        for (OperationId t : inst.tasks()) {
            if (static_cast<std::size_t>(t) >= measure.task_job.size()) continue;
            const std::int32_t j = measure.task_job[static_cast<std::size_t>(t)];
            if (j >= 0 && j < jobs) ++expected[static_cast<std::size_t>(j)];
        }
        for (ResourceId r = 0; r < inst.resource_count(); ++r) {
            const auto timeline = sched.resource_timeline(r);
            if (timeline.empty()) continue;
            StateId state = detail::initial_state_for(inst, sched, r);
            for (const auto& e : timeline) {
                const std::int64_t dur = detail::realized_duration_for(inst, e, state);
                if (e.op >= 0 && static_cast<std::size_t>(e.op) < measure.task_job.size() &&
                    inst.is_task(e.op)) {
                    const std::int32_t j = measure.task_job[static_cast<std::size_t>(e.op)];
                    if (j >= 0 && j < jobs) {
                        ++scheduled[static_cast<std::size_t>(j)];
                        finish[static_cast<std::size_t>(j)] =
                            std::max(finish[static_cast<std::size_t>(j)], e.start + dur);
                    }
                }
                state = detail::realized_effect_for(inst, e, state);
            }
        }
        double late = 0.0;
        for (std::int32_t j = 0; j < jobs; ++j)
            if (expected[static_cast<std::size_t>(j)] > 0 &&
                scheduled[static_cast<std::size_t>(j)] == expected[static_cast<std::size_t>(j)] &&
                finish[static_cast<std::size_t>(j)] > measure.job_due[static_cast<std::size_t>(j)])
                late += 1.0;
        return late;
    }

    double value = measure.identity();
    for (ResourceId r = 0; r < inst.resource_count(); ++r) {
        const auto timeline = sched.resource_timeline(r);
        if (timeline.empty()) continue;
        StateId state = detail::initial_state_for(inst, sched, r);
        for (const auto& e : timeline) {
            const std::int64_t dur = detail::realized_duration_for(inst, e, state);
            value = measure.combine(value,
                                    measure.entry_contribution(e.op, r, e.start, e.start + dur));
            state = detail::realized_effect_for(inst, e, state);
        }
    }
    return value;
}

}  // namespace rap
