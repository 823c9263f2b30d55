#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rapcontrol/encode.hpp"
#include "rapcontrol/schedule.hpp"
#include "rapcontrol/serialize.hpp"

namespace rap {

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Parameterizable plant-style generator: random jobs over a machine park
 * with optional product-type setup times (non-task operations), cooling
 * tasks that occupy no real machine (dedicated dummy resources), and
 * preemption points that split long tasks at fixed period boundaries.
 *
 * A feasible reference schedule is constructed first; release and due dates
 * are derived around it so that the reference has zero late jobs and the
 * slack ratio hits the target. The optimal late-job count is therefore 0 by
 * construction.
 */
struct GeneratorSpec {
    std::int32_t machines = 16;
    std::int32_t jobs = 100;
    std::int32_t min_tasks_per_job = 2;
    std::int32_t max_tasks_per_job = 3;
    std::int64_t min_duration = 5;
    std::int64_t max_duration = 25;
    /// 0 keeps durations deterministic; otherwise each duration becomes a
    /// two-point distribution at (1 ± spread) of the base value and due
    /// dates are derived from the worst-case realization.
    double duration_spread = 0.0;
    /// Target optimal slack ratio Φ, in [-0.5, 0.9]; zero-late-job
    /// construction requires a nonnegative target.
    double target_slack = 0.1;
    bool setup_times = false;
    std::int32_t product_types = 3;
    std::int64_t min_setup = 2;
    std::int64_t max_setup = 6;
    bool cooling_tasks = false;
    double cooling_probability = 0.15;
    std::int64_t cooling_duration = 8;
    std::int64_t preemption_period = 0;  // 0 = off
    std::uint64_t seed = 1;
};

struct GeneratedProblem {
    ProblemBundle bundle;   // measure: late-job count, known optimum 0
    Schedule reference;
    double achieved_slack = 0.0;
    std::int32_t task_count = 0;
    std::int32_t setup_operation_count = 0;
    std::int32_t cooling_task_count = 0;
    std::int32_t preemption_splits = 0;
};

/// Mean over jobs of (due − finish) / (due − release); positive when jobs
/// finish early, zero when every job is just in time.
inline double slack_ratio(const std::vector<std::int64_t>& job_finish,
                          const std::vector<JobInfo>& jobs) {
    if (jobs.empty()) throw std::invalid_argument("slack_ratio: no jobs");
    double sum = 0.0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const std::int64_t denom = jobs[j].due - jobs[j].release;
        if (denom <= 0)
            throw std::invalid_argument("slack_ratio: job " + std::to_string(j) +
                                        " has due <= release");
        sum += static_cast<double>(jobs[j].due - job_finish[j]) / static_cast<double>(denom);
    }
    return sum / static_cast<double>(jobs.size());
}

/// Job finish times (latest task completion) of a schedule; entries must
/// carry realized durations (reference schedules and episode replays do).
inline std::vector<std::int64_t> job_finish_times(const ProblemBundle& bundle,
                                                  const Schedule& sched) {
    std::vector<std::int64_t> finish(bundle.jobs.size(), 0);
    std::vector<std::int32_t> job_of(static_cast<std::size_t>(bundle.instance.operation_count()),
                                     -1);
    for (std::size_t j = 0; j < bundle.jobs.size(); ++j)
        for (OperationId t : bundle.jobs[j].tasks)
            job_of[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(j);
    for (const auto& e : sched.entries()) {
        if (e.op < 0 || e.op >= bundle.instance.operation_count()) continue;
        const std::int32_t j = job_of[static_cast<std::size_t>(e.op)];
        if (j < 0) continue;
        if (e.realized_duration == kNone)
            throw std::invalid_argument("job_finish_times: entry without a realized duration");
        finish[static_cast<std::size_t>(j)] =
            std::max(finish[static_cast<std::size_t>(j)], e.start + e.realized_duration);
    }
    return finish;
}

inline GeneratedProblem generate_instance(const GeneratorSpec& spec) {
    if (spec.machines < 1 || spec.jobs < 1) throw GenerationError("need machines and jobs");
    if (spec.min_tasks_per_job < 1 || spec.max_tasks_per_job < spec.min_tasks_per_job)
        throw GenerationError("bad tasks-per-job range");
    if (spec.min_duration < 1 || spec.max_duration < spec.min_duration)
        throw GenerationError("bad duration range");
    if (spec.target_slack < -0.5 || spec.target_slack > 0.9)
        throw GenerationError("target slack ratio outside [-0.5, 0.9]");
    if (spec.target_slack < 0.0)
        throw GenerationError(
            "negative slack targets cannot produce a zero-late-job reference schedule");
    if (spec.duration_spread < 0.0 || spec.duration_spread >= 1.0)
        throw GenerationError("duration spread must lie in [0, 1)");

    Rng rng(spec.seed);
    auto rand_int = [&rng](std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };

    InstanceBuilder builder;
    std::vector<StateId> machine_state_of_type;  // machines x types when setups are on
    std::vector<ResourceId> machines;
    const std::int32_t types = spec.setup_times ? std::max(1, spec.product_types) : 1;
    for (std::int32_t m = 0; m < spec.machines; ++m) {
        machines.push_back(builder.add_resource());
        for (std::int32_t ty = 0; ty < types; ++ty) machine_state_of_type.push_back(builder.add_state());
    }
    auto state_of = [&](std::int32_t machine, std::int32_t type) {
        return machine_state_of_type[static_cast<std::size_t>(machine) * types +
                                     static_cast<std::size_t>(type)];
    };
    std::vector<std::int32_t> initial_type(static_cast<std::size_t>(spec.machines), 0);
    for (std::int32_t m = 0; m < spec.machines; ++m) {
        initial_type[static_cast<std::size_t>(m)] = static_cast<std::int32_t>(rng() % types);
        builder.set_initial(machines[static_cast<std::size_t>(m)],
                            StateDist::point(state_of(m, initial_type[static_cast<std::size_t>(m)])));
    }

    struct PlannedTask {
        std::int32_t machine;   // -1 for cooling tasks
        std::int64_t base_duration;
        std::int32_t job;
    };
    std::vector<std::vector<PlannedTask>> planned(static_cast<std::size_t>(spec.jobs));
    std::vector<std::int32_t> job_type(static_cast<std::size_t>(spec.jobs), 0);
    for (std::int32_t j = 0; j < spec.jobs; ++j) {
        job_type[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(rng() % types);
        const std::int64_t n = rand_int(spec.min_tasks_per_job, spec.max_tasks_per_job);
        for (std::int64_t k = 0; k < n; ++k) {
            PlannedTask t;
            t.machine = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(spec.machines));
            t.base_duration = rand_int(spec.min_duration, spec.max_duration);
            t.job = j;
            planned[static_cast<std::size_t>(j)].push_back(t);
            if (spec.cooling_tasks && uniform01(rng) < spec.cooling_probability) {
                PlannedTask cool;
                cool.machine = -1;
                cool.base_duration = spec.cooling_duration;
                cool.job = j;
                planned[static_cast<std::size_t>(j)].push_back(cool);
            }
        }
    }

    // Preemption points: split tasks crossing period boundaries into chained
    // pieces at generation time.
    GeneratedProblem out;
    if (spec.preemption_period > 0) {
        for (auto& chain : planned) {
            std::vector<PlannedTask> split;
            for (const auto& t : chain) {
                if (t.machine < 0 || t.base_duration <= spec.preemption_period) {
                    split.push_back(t);
                    continue;
                }
                std::int64_t remaining = t.base_duration;
                while (remaining > spec.preemption_period) {
                    PlannedTask piece = t;
                    piece.base_duration = spec.preemption_period;
                    split.push_back(piece);
                    remaining -= spec.preemption_period;
                    ++out.preemption_splits;
                }
                PlannedTask last = t;
                last.base_duration = remaining;
                split.push_back(last);
            }
            chain = std::move(split);
        }
    }

    // Setup duration matrix between product types.
    std::vector<std::int64_t> setup(static_cast<std::size_t>(types) * types, 0);
    if (spec.setup_times)
        for (std::int32_t a = 0; a < types; ++a)
            for (std::int32_t b = 0; b < types; ++b)
                if (a != b)
                    setup[static_cast<std::size_t>(a) * types + b] =
                        rand_int(spec.min_setup, spec.max_setup);

    // Declare operations: per-job task chains, per-cooling-task dummy
    // resources, one setup operation per (machine, from, to) transition used.
    struct BuiltTask {
        OperationId op;
        std::int32_t machine;       // -1: cooling (dedicated dummy resource)
        ResourceId dummy = kNone;
        StateId dummy_state = kNone;
        std::int64_t base_duration;
    };
    std::vector<std::vector<BuiltTask>> built(static_cast<std::size_t>(spec.jobs));
    std::vector<JobInfo> jobs(static_cast<std::size_t>(spec.jobs));
    for (std::int32_t j = 0; j < spec.jobs; ++j) {
        OperationId prev = kNone;
        for (const auto& t : planned[static_cast<std::size_t>(j)]) {
            BuiltTask bt;
            bt.op = builder.add_operation(true);
            bt.machine = t.machine;
            bt.base_duration = t.base_duration;
            if (t.machine < 0) {
                bt.dummy = builder.add_resource();
                bt.dummy_state = builder.add_state();
                builder.set_initial(bt.dummy, StateDist::point(bt.dummy_state));
                ++out.cooling_task_count;
            }
            if (prev != kNone) builder.add_precedence(prev, bt.op);
            prev = bt.op;
            built[static_cast<std::size_t>(j)].push_back(bt);
            jobs[static_cast<std::size_t>(j)].tasks.push_back(bt.op);
            ++out.task_count;
        }
    }

    auto duration_dist = [&](std::int64_t base) {
        if (spec.duration_spread <= 0.0) return DurationDist::point(base);
        const std::int64_t lo =
            std::max<std::int64_t>(1, static_cast<std::int64_t>(base * (1.0 - spec.duration_spread)));
        const std::int64_t hi = std::max<std::int64_t>(
            lo + 1, static_cast<std::int64_t>(std::ceil(base * (1.0 + spec.duration_spread))));
        return DurationDist({{lo, 0.5}, {hi, 0.5}});
    };
    auto worst_duration = [&](std::int64_t base) {
        if (spec.duration_spread <= 0.0) return base;
        return duration_dist(base).max_value();
    };

    // Task capabilities.
    for (std::int32_t j = 0; j < spec.jobs; ++j)
        for (const auto& bt : built[static_cast<std::size_t>(j)]) {
            if (bt.machine < 0) {
                builder.set_duration(bt.dummy_state, bt.op, duration_dist(bt.base_duration));
                builder.set_effect(bt.dummy_state, bt.op, StateDist::point(bt.dummy_state));
            } else {
                const StateId s = state_of(bt.machine, job_type[static_cast<std::size_t>(j)]);
                builder.set_duration(s, bt.op, duration_dist(bt.base_duration));
                builder.set_effect(s, bt.op, StateDist::point(s));
            }
        }

    // Setup operations: one op per (from-type, to-type) pair, runnable on
    // any machine in the from-state, moving it to the to-state.
    std::vector<OperationId> setup_op(static_cast<std::size_t>(types) * types, kNone);
    if (spec.setup_times)
        for (std::int32_t a = 0; a < types; ++a)
            for (std::int32_t b = 0; b < types; ++b) {
                if (a == b) continue;
                const OperationId op = builder.add_operation(false);
                setup_op[static_cast<std::size_t>(a) * types + b] = op;
                ++out.setup_operation_count;
                for (std::int32_t m = 0; m < spec.machines; ++m) {
                    builder.set_duration(state_of(m, a), op,
                                         DurationDist::point(setup[static_cast<std::size_t>(a) * types + b]));
                    builder.set_effect(state_of(m, a), op, StateDist::point(state_of(m, b)));
                }
            }

    // Reference schedule: randomized list scheduling over the job chains.
    Schedule reference;
    std::vector<std::int64_t> machine_free(static_cast<std::size_t>(spec.machines), 0);
    std::vector<std::int32_t> machine_type = initial_type;
    std::vector<std::int64_t> job_free(static_cast<std::size_t>(spec.jobs), 0);
    std::vector<std::size_t> next_task(static_cast<std::size_t>(spec.jobs), 0);
    std::vector<std::int64_t> job_start(static_cast<std::size_t>(spec.jobs), -1);
    std::vector<std::int64_t> job_finish(static_cast<std::size_t>(spec.jobs), 0);

    std::vector<std::int32_t> pending;
    for (std::int32_t j = 0; j < spec.jobs; ++j) pending.push_back(j);
    while (!pending.empty()) {
        const std::size_t pick = static_cast<std::size_t>(rng() % pending.size());
        const std::int32_t j = pending[pick];
        const BuiltTask& bt = built[static_cast<std::size_t>(j)][next_task[static_cast<std::size_t>(j)]];
        std::int64_t start;
        const std::int64_t dur = worst_duration(bt.base_duration);
        if (bt.machine < 0) {
            start = job_free[static_cast<std::size_t>(j)];
            reference.add(bt.dummy, start, bt.op, dur);
        } else {
            const std::size_t m = static_cast<std::size_t>(bt.machine);
            const std::int32_t want = job_type[static_cast<std::size_t>(j)];
            if (spec.setup_times && machine_type[m] != want) {
                const std::int64_t sd =
                    setup[static_cast<std::size_t>(machine_type[m]) * types + want];
                const OperationId op =
                    setup_op[static_cast<std::size_t>(machine_type[m]) * types + want];
                reference.add(machines[m], machine_free[m], op, sd);
                machine_free[m] += sd;
                machine_type[m] = want;
            }
            start = std::max(machine_free[m], job_free[static_cast<std::size_t>(j)]);
            reference.add(machines[m], start, bt.op, dur);
            machine_free[m] = start + dur;
        }
        if (job_start[static_cast<std::size_t>(j)] < 0) job_start[static_cast<std::size_t>(j)] = start;
        job_free[static_cast<std::size_t>(j)] = start + dur;
        job_finish[static_cast<std::size_t>(j)] = start + dur;
        if (++next_task[static_cast<std::size_t>(j)] >=
            built[static_cast<std::size_t>(j)].size()) {
            pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }

    // Release and due dates around the reference: A at the job's first start
    // minus jitter, B = F + θ (F − A) with θ = Φ / (1 − Φ), which makes every
    // job's slack ratio the target exactly up to integer rounding. A short
    // trim pass then nudges individual due dates (never below the finish
    // time) until the mean ratio sits inside half the tolerance.
    const double theta = spec.target_slack / (1.0 - spec.target_slack);
    for (std::int32_t j = 0; j < spec.jobs; ++j) {
        JobInfo& job = jobs[static_cast<std::size_t>(j)];
        const std::int64_t jitter = rand_int(0, 3);
        job.release = std::max<std::int64_t>(0, job_start[static_cast<std::size_t>(j)] - jitter);
        const std::int64_t f = job_finish[static_cast<std::size_t>(j)];
        job.due = f + static_cast<std::int64_t>(std::llround(theta * static_cast<double>(f - job.release)));
        if (job.due <= job.release)
            throw GenerationError("degenerate job window for job " + std::to_string(j));
    }
    for (std::int64_t pass = 0; pass < 100 * spec.jobs; ++pass) {
        const double mean = slack_ratio(job_finish, jobs);
        if (std::abs(mean - spec.target_slack) <= 0.005) break;
        JobInfo& job = jobs[static_cast<std::size_t>(pass % spec.jobs)];
        const std::int64_t f = job_finish[static_cast<std::size_t>(pass % spec.jobs)];
        if (mean < spec.target_slack)
            ++job.due;
        else if (job.due > f && job.due - 1 > job.release)
            --job.due;
    }

    out.bundle.instance = builder.build();
    std::vector<std::int32_t> job_by_task(
        static_cast<std::size_t>(out.bundle.instance.operation_count()), -1);
    std::vector<std::int64_t> due_by_job, release_by_job;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        due_by_job.push_back(jobs[j].due);
        release_by_job.push_back(jobs[j].release);
        for (OperationId t : jobs[j].tasks)
            job_by_task[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(j);
    }
    out.bundle.measure = PerformanceMeasure::late_job_count(job_by_task, due_by_job, release_by_job);
    out.bundle.jobs = jobs;
    out.bundle.known_optimum = 0.0;
    out.reference = reference;
    out.achieved_slack = slack_ratio(job_finish, jobs);

    const auto verdict = check_feasibility(out.bundle.instance, out.reference);
    if (!verdict.feasible)
        throw GenerationError("internal: reference schedule is infeasible (" +
                              (verdict.violations.empty() ? std::string("?")
                                                          : verdict.violations.front().detail) +
                              ")");
    for (std::size_t j = 0; j < jobs.size(); ++j)
        if (job_finish[j] > jobs[j].due)
            throw GenerationError("internal: reference schedule has a late job");
    if (std::abs(out.achieved_slack - spec.target_slack) > 0.01)
        throw GenerationError("achieved slack ratio " + std::to_string(out.achieved_slack) +
                              " missed the target " + std::to_string(spec.target_slack));
    return out;
}

/**
 * Benchmark-style FJSP generator with a constructively known optimal
 * makespan: one machine is saturated by single-machine operations over
 * [0, T), so T is simultaneously the reference schedule's makespan and a
 * machine-load lower bound. Alternatives are only added to operations on
 * other machines, which leaves the bound intact.
 */
struct BenchmarkSpec {
    std::int32_t machines = 6;
    std::int32_t jobs = 6;
    std::int32_t ops_per_job = 6;
    std::int64_t min_duration = 4;
    std::int64_t max_duration = 12;
    /// Fraction of off-critical operations receiving one extra machine
    /// alternative (average flexibility ≈ 1 + fraction).
    double extra_alternative_fraction = 0.15;
    std::uint64_t seed = 1;
};

struct GeneratedBenchmark {
    JobShopSpec spec;
    std::int64_t optimum = 0;
    std::int32_t critical_machine = 0;  // the saturated machine
    double flexibility = 1.0;
};

inline GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec) {
    if (spec.machines < 2 || spec.jobs < 1 || spec.ops_per_job < 1)
        throw GenerationError("benchmark spec needs >= 2 machines and >= 1 job/op");
    Rng rng(spec.seed);
    auto rand_int = [&rng](std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };

    struct Op {
        std::int32_t machine;
        std::int64_t duration;
    };
    std::vector<std::vector<Op>> jobs(static_cast<std::size_t>(spec.jobs));
    for (auto& job : jobs) {
        // visit machines in a random order, repeating when ops exceed machines
        std::vector<std::int32_t> order(static_cast<std::size_t>(spec.machines));
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng() % i]);
        for (std::int32_t o = 0; o < spec.ops_per_job; ++o)
            job.push_back({order[static_cast<std::size_t>(o) % order.size()],
                           rand_int(spec.min_duration, spec.max_duration)});
    }

    // Greedy reference schedule.
    std::vector<std::int64_t> machine_free(static_cast<std::size_t>(spec.machines), 0);
    std::vector<std::int64_t> job_free(static_cast<std::size_t>(spec.jobs), 0);
    std::vector<std::size_t> next_op(static_cast<std::size_t>(spec.jobs), 0);
    struct Placed {
        std::int32_t machine;
        std::int64_t start, duration;
    };
    std::vector<Placed> placed;
    std::vector<std::int32_t> remaining;
    for (std::int32_t j = 0; j < spec.jobs; ++j) remaining.push_back(j);
    while (!remaining.empty()) {
        const std::size_t pick = static_cast<std::size_t>(rng() % remaining.size());
        const std::int32_t j = remaining[pick];
        const Op& op = jobs[static_cast<std::size_t>(j)][next_op[static_cast<std::size_t>(j)]];
        const std::size_t m = static_cast<std::size_t>(op.machine);
        const std::int64_t start = std::max(machine_free[m], job_free[static_cast<std::size_t>(j)]);
        placed.push_back({op.machine, start, op.duration});
        machine_free[m] = start + op.duration;
        job_free[static_cast<std::size_t>(j)] = start + op.duration;
        if (++next_op[static_cast<std::size_t>(j)] >= jobs[static_cast<std::size_t>(j)].size())
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    const std::int64_t makespan = *std::max_element(machine_free.begin(), machine_free.end());

    // Saturate the latest-finishing machine with filler jobs in its gaps so
    // its load equals the makespan exactly.
    std::int32_t critical = 0;
    for (std::int32_t m = 1; m < spec.machines; ++m)
        if (machine_free[static_cast<std::size_t>(m)] >
            machine_free[static_cast<std::size_t>(critical)])
            critical = m;
    std::vector<std::pair<std::int64_t, std::int64_t>> windows;  // busy windows on critical
    for (const auto& p : placed)
        if (p.machine == critical) windows.emplace_back(p.start, p.start + p.duration);
    std::sort(windows.begin(), windows.end());
    std::vector<std::int64_t> filler_durations;
    std::int64_t cursor = 0;
    for (const auto& [start, end] : windows) {
        if (start > cursor) filler_durations.push_back(start - cursor);
        cursor = std::max(cursor, end);
    }
    if (cursor < makespan) filler_durations.push_back(makespan - cursor);

    GeneratedBenchmark out;
    out.spec.machine_count = spec.machines;
    out.critical_machine = critical;
    out.optimum = makespan;
    std::size_t total_ops = 0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        JobShopSpec::Job job;
        for (const auto& op : jobs[j]) {
            JobShopSpec::Op spec_op;
            spec_op.alternatives.emplace_back(op.machine, op.duration);
            job.ops.push_back(std::move(spec_op));
            ++total_ops;
        }
        out.spec.jobs.push_back(std::move(job));
    }
    for (std::int64_t dur : filler_durations) {
        JobShopSpec::Job filler;
        JobShopSpec::Op op;
        op.alternatives.emplace_back(critical, dur);
        filler.ops.push_back(std::move(op));
        out.spec.jobs.push_back(std::move(filler));
        ++total_ops;
    }

    // Flexibility: extra equal-duration alternatives on off-critical ops.
    std::size_t to_add = static_cast<std::size_t>(
        std::llround(spec.extra_alternative_fraction * static_cast<double>(total_ops)));
    std::size_t added = 0;
    for (std::size_t j = 0; j < jobs.size() && added < to_add; ++j)
        for (auto& op : out.spec.jobs[j].ops) {
            if (added >= to_add) break;
            if (op.alternatives.front().first == critical) continue;
            std::int32_t other =
                static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(spec.machines));
            if (other == op.alternatives.front().first) other = (other + 1) % spec.machines;
            op.alternatives.emplace_back(other, op.alternatives.front().second);
            ++added;
        }
    out.flexibility = out.spec.average_flexibility();
    return out;
}

}  // namespace rap
