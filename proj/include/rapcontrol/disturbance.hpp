#pragma once

#include <string>
#include <vector>

#include "rapcontrol/serialize.hpp"

namespace rap {

/**
 * An unexpected event hitting a running experiment at a trigger episode.
 * After the event the learner either continues with its current (obsolete)
 * value function or restarts it from scratch.
 */
struct DisturbanceEvent {
    enum class Kind { ResourceBreakdown, NewResource, NewJob, JobCancellation };
    enum class PostMode { Continue, Restart };

    Kind kind = Kind::ResourceBreakdown;
    std::int64_t trigger_episode = 100;
    PostMode post = PostMode::Continue;

    ResourceId resource = kNone;  // breakdown target / template to clone
    std::int32_t job = -1;        // cancellation target

    struct NewJobSpec {
        /// Per operation: alternatives as (resource, duration) pairs; the
        /// capability is attached to the resource's current initial state.
        std::vector<std::vector<std::pair<ResourceId, std::int64_t>>> ops;
        std::int64_t release = 0;
        std::int64_t due = -1;
    } new_job;
};

struct DisturbedProblem {
    ProblemBundle bundle;
    std::vector<std::string> warnings;
};

namespace detail_disturb {

/// Rebuilds a builder holding an exact copy of the instance, optionally
/// skipping capability pairs and precedence edges via predicates.
template <typename PairFilter, typename PrecFilter>
InstanceBuilder copy_instance(const Instance& inst, PairFilter keep_pair, PrecFilter keep_prec,
                              const std::vector<char>& task_flags) {
    InstanceBuilder b;
    b.add_resources(inst.resource_count());
    b.add_states(inst.state_count());
    for (OperationId op = 0; op < inst.operation_count(); ++op)
        b.add_operation(task_flags[static_cast<std::size_t>(op)] != 0);
    for (const auto& [u, v] : inst.precedence())
        if (keep_prec(u, v)) b.add_precedence(u, v);
    for (const auto& [s, op] : inst.capability_pairs()) {
        if (!keep_pair(s, op)) continue;
        b.set_duration(s, op, *inst.duration(s, op));
        if (const StateDist* e = inst.effect(s, op)) b.set_effect(s, op, *e);
    }
    for (ResourceId r = 0; r < inst.resource_count(); ++r) b.set_initial(r, inst.initial(r));
    b.set_non_task_cap(inst.non_task_cap());
    return b;
}

inline std::vector<char> task_flags_of(const Instance& inst) {
    std::vector<char> flags(static_cast<std::size_t>(inst.operation_count()), 0);
    for (OperationId t : inst.tasks()) flags[static_cast<std::size_t>(t)] = 1;
    return flags;
}

}  // namespace detail_disturb

/// Refreshes late-job measure metadata after job-list changes.
inline void rebuild_measure(ProblemBundle& bundle) {
    if (bundle.measure.kind != PerformanceMeasure::Kind::LateJobCount) return;
    std::vector<std::int32_t> job_by_task(
        static_cast<std::size_t>(bundle.instance.operation_count()), -1);
    std::vector<std::int64_t> due_by_job, release_by_job;
    for (std::size_t j = 0; j < bundle.jobs.size(); ++j) {
        due_by_job.push_back(bundle.jobs[j].due);
        release_by_job.push_back(bundle.jobs[j].release);
        for (OperationId t : bundle.jobs[j].tasks)
            job_by_task[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(j);
    }
    bundle.measure = PerformanceMeasure::late_job_count(job_by_task, due_by_job, release_by_job);
}

/**
 * Applies a disturbance to a problem, returning the modified bundle.
 * Operation and resource ids are stable across the event, so value stores
 * keyed on schema digits stay meaningful in continue mode (build the schema
 * with headroom when new resources, jobs or states are expected).
 *
 *  - breakdown: the resource's initial state moves to a fresh dead state
 *    with no capabilities; it can never execute anything again.
 *  - new resource: a clone of a template resource (same initial
 *    distribution, hence the same capabilities through the shared states).
 *  - new job: fresh task ids appended with a precedence chain and job
 *    metadata.
 *  - cancellation: the job's tasks lose their task flag and capabilities;
 *    episodes no longer need (or can) run them.
 */
inline DisturbedProblem apply_disturbance(const ProblemBundle& bundle,
                                          const DisturbanceEvent& event) {
    using detail_disturb::copy_instance;
    using detail_disturb::task_flags_of;

    DisturbedProblem out;
    const Instance& inst = bundle.instance;
    auto keep_all_pairs = [](StateId, OperationId) { return true; };
    auto keep_all_prec = [](OperationId, OperationId) { return true; };

    switch (event.kind) {
        case DisturbanceEvent::Kind::ResourceBreakdown: {
            if (event.resource < 0 || event.resource >= inst.resource_count())
                throw ConfigError("breakdown: resource out of range");
            InstanceBuilder b =
                copy_instance(inst, keep_all_pairs, keep_all_prec, task_flags_of(inst));
            const StateId dead = b.add_state();
            b.set_initial(event.resource, StateDist::point(dead));
            out.bundle = bundle;
            out.bundle.instance = b.build();
            const auto report = validate(out.bundle.instance);
            if (report.has(Violation::Code::UnreachableTask))
                out.warnings.push_back(
                    "breakdown leaves tasks without a capable machine; episodes may fail");
            break;
        }
        case DisturbanceEvent::Kind::NewResource: {
            if (event.resource < 0 || event.resource >= inst.resource_count())
                throw ConfigError("new resource: template out of range");
            InstanceBuilder b =
                copy_instance(inst, keep_all_pairs, keep_all_prec, task_flags_of(inst));
            const ResourceId clone = b.add_resource();
            b.set_initial(clone, inst.initial(event.resource));
            out.bundle = bundle;
            out.bundle.instance = b.build();
            break;
        }
        case DisturbanceEvent::Kind::NewJob: {
            if (event.new_job.ops.empty()) throw ConfigError("new job: no operations");
            auto flags = task_flags_of(inst);
            InstanceBuilder b = copy_instance(inst, keep_all_pairs, keep_all_prec, flags);
            JobInfo job;
            job.release = event.new_job.release;
            job.due = event.new_job.due;
            OperationId prev = kNone;
            for (const auto& alternatives : event.new_job.ops) {
                if (alternatives.empty()) throw ConfigError("new job: operation without machines");
                const OperationId op = b.add_operation(true);
                for (const auto& [r, duration] : alternatives) {
                    if (r < 0 || r >= inst.resource_count())
                        throw ConfigError("new job: resource out of range");
                    const StateDist& init = inst.initial(r);
                    for (const auto& atom : init.support) {
                        b.set_duration(atom.state, op, DurationDist::point(duration));
                        b.set_effect(atom.state, op, StateDist::point(atom.state));
                    }
                }
                if (prev != kNone) b.add_precedence(prev, op);
                prev = op;
                job.tasks.push_back(op);
            }
            out.bundle = bundle;
            out.bundle.instance = b.build();
            out.bundle.jobs.push_back(job);
            rebuild_measure(out.bundle);
            break;
        }
        case DisturbanceEvent::Kind::JobCancellation: {
            if (event.job < 0 || event.job >= static_cast<std::int32_t>(bundle.jobs.size())) {
                out.bundle = bundle;
                out.warnings.push_back("cancellation: job " + std::to_string(event.job) +
                                       " does not exist; no-op");
                break;
            }
            const JobInfo& victim = bundle.jobs[static_cast<std::size_t>(event.job)];
            if (victim.tasks.empty()) {
                out.bundle = bundle;
                out.warnings.push_back("cancellation: job " + std::to_string(event.job) +
                                       " already gone; no-op");
                break;
            }
            std::vector<char> cancelled(static_cast<std::size_t>(inst.operation_count()), 0);
            for (OperationId t : victim.tasks) cancelled[static_cast<std::size_t>(t)] = 1;
            auto flags = task_flags_of(inst);
            for (OperationId t : victim.tasks) flags[static_cast<std::size_t>(t)] = 0;
            InstanceBuilder b = copy_instance(
                inst,
                [&](StateId, OperationId op) { return !cancelled[static_cast<std::size_t>(op)]; },
                [&](OperationId u, OperationId v) {
                    return !cancelled[static_cast<std::size_t>(u)] &&
                           !cancelled[static_cast<std::size_t>(v)];
                },
                flags);
            out.bundle = bundle;
            out.bundle.instance = b.build();
            out.bundle.jobs[static_cast<std::size_t>(event.job)].tasks.clear();
            rebuild_measure(out.bundle);
            break;
        }
    }
    return out;
}

}  // namespace rap
