#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rapcontrol/instance.hpp"
#include "rapcontrol/measure.hpp"
#include "rapcontrol/schedule.hpp"

namespace rap {

/// One resource inside an environment state: its current state id, the
/// operation it is executing (kNone when idle) and when that operation
/// started. The state id stays at its assign-time value while executing;
/// the effect is applied at completion.
struct ResourceStatus {
    StateId state = 0;
    OperationId executing = kNone;
    std::int64_t started_at = 0;

    bool idle() const { return executing == kNone; }
    bool operator==(const ResourceStatus&) const = default;
};

/**
 * Compact SSP state for γ-composable measures: current time, running
 * performance of the partial solution, per-resource status, the unfinished
 * task set, and the pending-task slot used by action-space decomposition.
 */
struct EnvState {
    std::int64_t now = 0;
    double perf = 0.0;
    std::vector<ResourceStatus> resources;
    std::vector<std::uint64_t> unfinished;  // task bitset indexed by operation id
    std::int32_t unfinished_count = 0;
    OperationId pending_task = kNone;
    std::int32_t non_task_started = 0;

    bool task_unfinished(OperationId op) const {
        return (unfinished[static_cast<std::size_t>(op) >> 6] >>
                (static_cast<std::size_t>(op) & 63)) & 1u;
    }
    void clear_task(OperationId op) {
        unfinished[static_cast<std::size_t>(op) >> 6] &=
            ~(std::uint64_t{1} << (static_cast<std::size_t>(op) & 63));
        --unfinished_count;
    }
    void set_task(OperationId op) {
        unfinished[static_cast<std::size_t>(op) >> 6] |=
            std::uint64_t{1} << (static_cast<std::size_t>(op) & 63);
        ++unfinished_count;
    }
    std::int32_t started_operation_count() const {
        std::int32_t running = 0;
        for (const auto& r : resources)
            if (!r.idle()) ++running;
        return running;
    }

    bool operator==(const EnvState& other) const {
        return now == other.now && perf == other.perf && resources == other.resources &&
               unfinished == other.unfinished && pending_task == other.pending_task &&
               non_task_started == other.non_task_started;
    }
};

struct EnvStateHash {
    std::size_t operator()(const EnvState& s) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](std::uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ull;
        };
        mix(static_cast<std::uint64_t>(s.now));
        std::uint64_t perf_bits;
        static_assert(sizeof(perf_bits) == sizeof(s.perf));
        __builtin_memcpy(&perf_bits, &s.perf, sizeof(perf_bits));
        mix(perf_bits);
        for (const auto& r : s.resources) {
            mix(static_cast<std::uint64_t>(r.state));
            mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.executing)));
            mix(static_cast<std::uint64_t>(r.started_at));
        }
        for (std::uint64_t w : s.unfinished) mix(w);
        mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.pending_task)));
        mix(static_cast<std::uint64_t>(s.non_task_started));
        return static_cast<std::size_t>(h);
    }
};

/// A control decision: wait one tick (or until the next completion when
/// wait-skipping is active), start an operation on a resource, or — with
/// action-space decomposition — select a task, then select a resource.
struct ControlAction {
    enum class Kind : std::uint8_t { Wait, Assign, SelectTask, SelectResource };
    Kind kind = Kind::Wait;
    OperationId op = kNone;
    ResourceId resource = kNone;

    static ControlAction wait() { return {Kind::Wait, kNone, kNone}; }
    static ControlAction assign(OperationId op, ResourceId r) { return {Kind::Assign, op, r}; }
    static ControlAction select_task(OperationId op) { return {Kind::SelectTask, op, kNone}; }
    static ControlAction select_resource(ResourceId r) { return {Kind::SelectResource, kNone, r}; }

    bool operator==(const ControlAction&) const = default;
};

inline std::string to_string(const ControlAction& a) {
    switch (a.kind) {
        case ControlAction::Kind::Wait: return "wait";
        case ControlAction::Kind::Assign:
            return "assign(op=" + std::to_string(a.op) + ", r=" + std::to_string(a.resource) + ")";
        case ControlAction::Kind::SelectTask: return "select_task(" + std::to_string(a.op) + ")";
        case ControlAction::Kind::SelectResource:
            return "select_resource(" + std::to_string(a.resource) + ")";
    }
    return "?";
}

struct CompletionEvent {
    ResourceId resource = 0;
    OperationId op = 0;
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
    StateId next_state = 0;
};

struct TransitionOutcome {
    EnvState next;
    double cost = 0.0;
    std::vector<CompletionEvent> finished;
};

enum class TerminalStatus { Running, Success, Failure };

/**
 * Completion rate of a running operation: the probability that it finishes
 * exactly after `now - start` elapsed time units given that it has not
 * finished earlier, P(D = elapsed) / P(D >= elapsed).
 *
 * Requires P(D >= elapsed) > 0; past the maximum support the operation must
 * already have completed and the call is a contract violation.
 */
inline double completion_rate(const DurationDist& dist, std::int64_t start, std::int64_t now) {
    const std::int64_t elapsed = now - start;
    if (elapsed < dist.min_value()) return 0.0;
    if (elapsed > dist.max_value())
        throw std::logic_error("completion_rate: elapsed time " + std::to_string(elapsed) +
                               " exceeds the maximum duration " + std::to_string(dist.max_value()));
    const double tail = dist.tail(elapsed);
    if (tail <= 0.0)
        throw std::logic_error("completion_rate: operation has no surviving probability mass");
    return dist.pmf(elapsed) / tail;
}

/**
 * The reformulated stochastic-shortest-path environment over a validated
 * instance. Environments are cheap immutable views (instance + measure +
 * options); all per-episode data lives in EnvState, which step() consumes
 * and returns by value, so independent episodes can run concurrently against
 * one shared instance.
 */
class Env {
public:
    struct Options {
        bool decompose = false;
        bool wait_skip = true;
        /// Cost multiplier per unfinished task on entering a failure state;
        /// <= 0 selects the instance duration bound, which dominates any
        /// achievable makespan.
        double failure_penalty = 0.0;
        /// Training-shaper for sparse measures: adds this weight times the
        /// normalized completion time of every finished task to the step
        /// cost. Breaks ties between equal-κ schedules toward finishing
        /// early; keep the total well below one measure unit. Zero keeps
        /// costs exactly Δκ (the default).
        double earliness_shaping = 0.0;
        /// Tasks exposed to episodes; empty means all. Used by task
        /// clustering to train on prefixes of the task set.
        std::vector<char> exposed_tasks;
    };

    Env(const Instance& inst, PerformanceMeasure measure) : Env(inst, std::move(measure), Options{}) {}

    Env(const Instance& inst, PerformanceMeasure measure, Options opts)
        : inst_(&inst), measure_(std::move(measure)), opts_(std::move(opts)) {
        failure_penalty_ = opts_.failure_penalty > 0.0
                               ? opts_.failure_penalty
                               : static_cast<double>(std::max<std::int64_t>(1, inst.duration_bound()));
        if (measure_.kind == PerformanceMeasure::Kind::LateJobCount) {
            job_tasks_.resize(static_cast<std::size_t>(measure_.job_count()));
            for (OperationId t : inst.tasks()) {
                if (static_cast<std::size_t>(t) >= measure_.task_job.size()) continue;
                const std::int32_t j = measure_.task_job[static_cast<std::size_t>(t)];
                if (j >= 0 && j < measure_.job_count())
                    job_tasks_[static_cast<std::size_t>(j)].push_back(t);
            }
        }
    }

    const Instance& instance() const { return *inst_; }
    const PerformanceMeasure& measure() const { return measure_; }
    const Options& options() const { return opts_; }
    double failure_penalty() const { return failure_penalty_; }

    /// Samples the initial state: time zero, identity performance, all
    /// resources idle with states drawn independently from i(r), every
    /// (exposed) task unfinished.
    EnvState initial_state(Rng& rng) const {
        EnvState s;
        s.now = 0;
        s.perf = measure_.identity();
        s.resources.resize(static_cast<std::size_t>(inst_->resource_count()));
        for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
            const StateDist& init = inst_->initial(r);
            if (init.support.empty())
                throw std::invalid_argument("initial_state: resource " + std::to_string(r) +
                                            " has no initial distribution");
            s.resources[static_cast<std::size_t>(r)] = {init.sample(rng), kNone, 0};
        }
        s.unfinished.assign((static_cast<std::size_t>(inst_->operation_count()) + 63) / 64, 0);
        s.unfinished_count = 0;
        for (OperationId t : inst_->tasks()) {
            if (!opts_.exposed_tasks.empty() && !opts_.exposed_tasks[static_cast<std::size_t>(t)])
                continue;
            s.set_task(t);
        }
        return s;
    }

    bool wait_available(const EnvState& s) const {
        for (const auto& r : s.resources)
            if (!r.idle()) return true;
        return false;
    }

    /// Legality of starting `op` on `r`: the resource is idle, can process
    /// the operation from its current state, tasks are started at most once
    /// with satisfied precedence, and non-task starts respect the episode cap.
    bool assign_available(const EnvState& s, OperationId op, ResourceId r) const {
        const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
        if (!status.idle()) return false;
        if (!inst_->capable(status.state, op)) return false;
        if (inst_->is_task(op)) {
            if (!s.task_unfinished(op)) return false;
            for (const auto& rs : s.resources)
                if (rs.executing == op) return false;
            for (OperationId pred : inst_->predecessors(op))
                if (task_visible(pred) && !task_finished(s, pred)) return false;
        } else {
            if (s.non_task_started >= inst_->non_task_cap()) return false;
        }
        return true;
    }

    /// True when the task can be started on some resource right now.
    bool task_assignable(const EnvState& s, OperationId op) const {
        if (!s.task_unfinished(op)) return false;
        for (const auto& rs : s.resources)
            if (rs.executing == op) return false;
        for (OperationId pred : inst_->predecessors(op))
            if (task_visible(pred) && !task_finished(s, pred)) return false;
        for (StateId cap : inst_->capable_states(op)) {
            for (const auto& rs : s.resources)
                if (rs.idle() && rs.state == cap) return true;
        }
        return false;
    }

    /// Flat action space: wait iff an operation is running; assign(v, r) per
    /// the availability rules. Decomposition replaces assigns by select-task
    /// then select-resource decisions.
    void legal_actions(const EnvState& s, std::vector<ControlAction>& out) const {
        out.clear();
        if (s.unfinished_count == 0) return;
        if (opts_.decompose) {
            decomposed_actions(s, out);
            return;
        }
        flat_actions(s, out);
    }

    std::vector<ControlAction> legal_actions(const EnvState& s) const {
        std::vector<ControlAction> out;
        legal_actions(s, out);
        return out;
    }

    void flat_actions(const EnvState& s, std::vector<ControlAction>& out) const {
        if (wait_available(s)) out.push_back(ControlAction::wait());
        for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
            const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
            if (!status.idle()) continue;
            for (OperationId op : inst_->operations_in_state(status.state))
                if (assign_available(s, op, r)) out.push_back(ControlAction::assign(op, r));
        }
        std::sort(out.begin(), out.end(), [](const ControlAction& a, const ControlAction& b) {
            if (a.kind != b.kind) return a.kind < b.kind;
            if (a.op != b.op) return a.op < b.op;
            return a.resource < b.resource;
        });
    }

    /// Two-phase action space: with no pending task, select a task (or wait);
    /// with a pending task, select an executing resource for it.
    void decomposed_actions(const EnvState& s, std::vector<ControlAction>& out) const {
        if (s.pending_task != kNone) {
            const OperationId v = s.pending_task;
            for (StateId cap : inst_->capable_states(v))
                for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
                    const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
                    if (status.idle() && status.state == cap)
                        out.push_back(ControlAction::select_resource(r));
                }
            std::sort(out.begin(), out.end(), [](const ControlAction& a, const ControlAction& b) {
                return a.resource < b.resource;
            });
            out.erase(std::unique(out.begin(), out.end()), out.end());
            return;
        }
        if (wait_available(s)) out.push_back(ControlAction::wait());
        for (OperationId t : inst_->tasks())
            if (task_visible(t) && task_assignable(s, t))
                out.push_back(ControlAction::select_task(t));
        // Non-task operations are not decomposed; they appear as plain
        // assigns alongside the task selections.
        for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
            const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
            if (!status.idle()) continue;
            for (OperationId op : inst_->operations_in_state(status.state))
                if (!inst_->is_task(op) && assign_available(s, op, r))
                    out.push_back(ControlAction::assign(op, r));
        }
    }

    TerminalStatus status(const EnvState& s) const {
        if (s.unfinished_count == 0) return TerminalStatus::Success;
        if (wait_available(s)) return TerminalStatus::Running;
        if (s.pending_task != kNone) return TerminalStatus::Running;
        for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
            const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
            if (!status.idle()) continue;
            for (OperationId op : inst_->operations_in_state(status.state))
                if (assign_available(s, op, r)) return TerminalStatus::Running;
        }
        return TerminalStatus::Failure;
    }

    /**
     * Applies a control action. Assign and select actions keep the clock;
     * wait advances it one tick (or to the next completion when wait-skipping
     * is on), finishing each running operation independently with its
     * completion rate and sampling its effect. The cost is the measure
     * increment Δκ of the transition, plus the failure penalty when the
     * transition enters a failure state.
     */
    TransitionOutcome step(const EnvState& s, const ControlAction& a, Rng& rng) const {
        switch (a.kind) {
            case ControlAction::Kind::Wait: {
                if (!wait_available(s)) throw std::logic_error("step: wait with no running operation");
                if (s.pending_task != kNone) throw std::logic_error("step: wait with a pending task");
                return opts_.wait_skip ? wait_to_next_event(s, rng) : elementary_wait(s, rng);
            }
            case ControlAction::Kind::Assign: return apply_assign(s, a.op, a.resource);
            case ControlAction::Kind::SelectTask: {
                if (s.pending_task != kNone) throw std::logic_error("step: task already pending");
                if (!task_visible(a.op) || !task_assignable(s, a.op))
                    throw std::logic_error("step: illegal task selection " + to_string(a));
                TransitionOutcome out;
                out.next = s;
                out.next.pending_task = a.op;
                out.cost = 0.0;
                return out;
            }
            case ControlAction::Kind::SelectResource: {
                if (s.pending_task == kNone) throw std::logic_error("step: no pending task");
                TransitionOutcome out = apply_assign(s, s.pending_task, a.resource);
                out.next.pending_task = kNone;
                return out;
            }
        }
        throw std::logic_error("step: unknown action");
    }

    /// One elementary wait tick, exposed for tests; step() composes these
    /// when wait-skipping is enabled.
    TransitionOutcome elementary_wait(const EnvState& s, Rng& rng) const {
        TransitionOutcome out;
        out.next = s;
        out.next.now = s.now + 1;
        const double before = s.perf;
        for (ResourceId r = 0; r < inst_->resource_count(); ++r) {
            ResourceStatus& status = out.next.resources[static_cast<std::size_t>(r)];
            if (status.idle()) continue;
            const DurationDist* dist = inst_->duration(status.state, status.executing);
            const double rate = completion_rate(*dist, status.started_at, out.next.now);
            if (rate <= 0.0) continue;
            if (rate < 1.0 && uniform01(rng) >= rate) continue;
            complete_operation(out, r, status, rng);
        }
        out.cost = out.next.perf - before;
        if (opts_.earliness_shaping > 0.0) {
            const double horizon = static_cast<double>(std::max<std::int64_t>(1, inst_->duration_bound()));
            for (const auto& ev : out.finished)
                if (inst_->is_task(ev.op))
                    out.cost += opts_.earliness_shaping * static_cast<double>(ev.finished_at) / horizon;
        }
        if (out.next.unfinished_count > 0 && status(out.next) == TerminalStatus::Failure)
            out.cost += failure_penalty_ * out.next.unfinished_count;
        return out;
    }

    /// Composes elementary waits until at least one completion occurs; the
    /// cost is the sum of the elementary Δκ costs. Equivalent in distribution
    /// to stepping tick by tick, but skips the states in between — for
    /// non-decreasing measures an optimal policy only starts operations right
    /// after completions or initially.
    TransitionOutcome wait_to_next_event(const EnvState& s, Rng& rng) const {
        if (!wait_available(s)) throw std::logic_error("wait_to_next_event: nothing is running");
        TransitionOutcome out;
        out.next = s;
        double total_cost = 0.0;
        const std::int64_t guard = inst_->duration_bound() + s.now + 2;
        while (out.finished.empty()) {
            TransitionOutcome tick = elementary_wait(out.next, rng);
            total_cost += tick.cost;
            out.next = std::move(tick.next);
            for (auto& ev : tick.finished) out.finished.push_back(ev);
            if (out.next.now > guard)
                throw std::logic_error("wait_to_next_event: no completion within the duration bound");
        }
        out.cost = total_cost;
        return out;
    }

    bool deterministic() const { return inst_->deterministic(); }

    /// Expected immediate cost of an action, used by the greedy base policy.
    /// Assign and select actions incur no completion, hence zero cost; a wait
    /// has positive expected Δκ for completion-driven measures.
    double expected_immediate_cost(const EnvState& s, const ControlAction& a) const {
        if (a.kind == ControlAction::Kind::Wait) return 1.0;
        return 0.0;
    }

    /// Eager estimate of the eventual completion contribution of starting an
    /// operation now; breaks ties between zero-cost assigns (nearest-neighbor
    /// on TSP encodings, shortest expected processing time on job shops).
    double expected_completion_contribution(const EnvState& s, OperationId op, ResourceId r) const {
        const ResourceStatus& status = s.resources[static_cast<std::size_t>(r)];
        const DurationDist* dist = inst_->duration(status.state, op);
        if (dist == nullptr || dist->support.empty()) return 0.0;
        const double finish = static_cast<double>(s.now) + dist->mean();
        switch (measure_.kind) {
            case PerformanceMeasure::Kind::Makespan:
                return std::max(0.0, finish - s.perf);
            case PerformanceMeasure::Kind::TotalLateness: {
                if (op < 0 || static_cast<std::size_t>(op) >= measure_.task_due.size()) return 0.0;
                const std::int64_t due = measure_.task_due[static_cast<std::size_t>(op)];
                return due < 0 ? 0.0 : std::max(0.0, finish - static_cast<double>(due));
            }
            case PerformanceMeasure::Kind::LateJobCount: {
                // Earliest-due-date urgency: rank by remaining slack so the
                // dispatch heuristics serve due-date measures, scaled down to
                // stay commensurable with the 0/1 completion costs.
                if (op < 0 || static_cast<std::size_t>(op) >= measure_.task_job.size()) return 0.0;
                const std::int32_t j = measure_.task_job[static_cast<std::size_t>(op)];
                if (j < 0) return 0.0;
                const double due = static_cast<double>(measure_.job_due[static_cast<std::size_t>(j)]);
                const double horizon = static_cast<double>(std::max<std::int64_t>(1, inst_->expected_horizon()));
                return (due - finish) / horizon;
            }
            case PerformanceMeasure::Kind::Custom:
                return 0.0;
        }
        return 0.0;
    }

private:
    bool task_visible(OperationId t) const {
        return opts_.exposed_tasks.empty() || opts_.exposed_tasks[static_cast<std::size_t>(t)];
    }
    static bool task_finished(const EnvState& s, OperationId t) { return !s.task_unfinished(t); }

    TransitionOutcome apply_assign(const EnvState& s, OperationId op, ResourceId r) const {
        if (!assign_available(s, op, r))
            throw std::logic_error("step: illegal assignment " + to_string(ControlAction::assign(op, r)));
        TransitionOutcome out;
        out.next = s;
        ResourceStatus& status = out.next.resources[static_cast<std::size_t>(r)];
        status.executing = op;
        status.started_at = s.now;
        if (!inst_->is_task(op)) ++out.next.non_task_started;
        out.cost = 0.0;  // no completion event, Δκ = 0
        return out;
    }

    // Stochastic branches are resolved in ascending resource order (the
    // caller iterates resources that way) so runs are reproducible per seed.
    void complete_operation(TransitionOutcome& out, ResourceId r, ResourceStatus& status,
                            Rng& rng) const {
        const OperationId op = status.executing;
        const std::int64_t finish = out.next.now;
        const StateDist* eff = inst_->effect(status.state, op);
        if (eff == nullptr)
            throw std::logic_error("step: operation " + std::to_string(op) + " has no effect entry");
        CompletionEvent ev;
        ev.resource = r;
        ev.op = op;
        ev.started_at = status.started_at;
        ev.finished_at = finish;
        ev.next_state = eff->is_point() ? eff->support.front().state : eff->sample(rng);
        out.finished.push_back(ev);
        status.state = ev.next_state;
        status.executing = kNone;

        if (inst_->is_task(op)) {
            out.next.clear_task(op);
            apply_completion_to_perf(out.next, op, r, ev.started_at, finish);
        } else if (measure_.kind == PerformanceMeasure::Kind::Makespan ||
                   measure_.kind == PerformanceMeasure::Kind::Custom) {
            apply_completion_to_perf(out.next, op, r, ev.started_at, finish);
        }
    }

    void apply_completion_to_perf(EnvState& s, OperationId op, ResourceId r, std::int64_t start,
                                  std::int64_t finish) const {
        if (measure_.kind == PerformanceMeasure::Kind::LateJobCount) {
            const std::int32_t j = measure_.task_job[static_cast<std::size_t>(op)];
            if (j < 0) return;
            for (OperationId other : job_tasks_[static_cast<std::size_t>(j)])
                if (task_visible(other) && s.task_unfinished(other)) return;  // job not yet complete
            if (finish > measure_.job_due[static_cast<std::size_t>(j)]) s.perf += 1.0;
            return;
        }
        s.perf = measure_.combine(s.perf, measure_.entry_contribution(op, r, start, finish));
    }

    const Instance* inst_;
    PerformanceMeasure measure_;
    Options opts_;
    double failure_penalty_ = 0.0;
    std::vector<std::vector<OperationId>> job_tasks_;
};

}  // namespace rap
