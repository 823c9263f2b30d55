#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rapcontrol/instance.hpp"

namespace rap {

/**
 * A composable performance measure over (partial) solutions. The value of a
 * solution is a γ-fold of per-completion contributions, which lets the
 * simulation environment maintain the running performance incrementally and
 * charge each transition its exact Δκ.
 *
 * Lateness-style measures carry task metadata (due dates, job grouping)
 * supplied by the benchmark layer.
 */
struct PerformanceMeasure {
    enum class Kind { Makespan, TotalLateness, LateJobCount, Custom };
    enum class Composition { Max, Min, Sum };

    Kind kind = Kind::Makespan;
    Composition composition = Composition::Max;
    bool regular = true;

    // Task metadata, indexed by operation id (kNone / empty where absent).
    std::vector<std::int64_t> task_due;   // due date per task
    std::vector<std::int32_t> task_job;   // job index per task
    std::vector<std::int64_t> job_due;    // due date per job
    std::vector<std::int64_t> job_release;

    // Custom measures: contribution of one completed entry.
    std::function<double(OperationId, ResourceId, std::int64_t start, std::int64_t finish)>
        custom_contribution;

    std::int32_t job_count() const { return static_cast<std::int32_t>(job_due.size()); }

    double identity() const {
        switch (composition) {
            case Composition::Max: return 0.0;  // completion times are nonnegative
            case Composition::Min: return std::numeric_limits<double>::infinity();
            case Composition::Sum: return 0.0;
        }
        return 0.0;
    }

    double combine(double a, double b) const {
        switch (composition) {
            case Composition::Max: return std::max(a, b);
            case Composition::Min: return std::min(a, b);
            case Composition::Sum: return a + b;
        }
        return a;
    }

    /// Contribution of a single completed entry to the measure. Late-job
    /// counting is handled at the environment/evaluation level because it
    /// needs job grouping, not per-entry values.
    double entry_contribution(OperationId op, ResourceId r, std::int64_t start,
                              std::int64_t finish) const {
        switch (kind) {
            case Kind::Makespan:
                return static_cast<double>(finish);
            case Kind::TotalLateness: {
                if (op < 0 || static_cast<std::size_t>(op) >= task_due.size()) return 0.0;
                const std::int64_t due = task_due[static_cast<std::size_t>(op)];
                if (due < 0) return 0.0;
                return static_cast<double>(std::max<std::int64_t>(0, finish - due));
            }
            case Kind::LateJobCount:
                return 0.0;
            case Kind::Custom:
                return custom_contribution ? custom_contribution(op, r, start, finish) : 0.0;
        }
        return 0.0;
    }

    static PerformanceMeasure makespan() {
        PerformanceMeasure m;
        m.kind = Kind::Makespan;
        m.composition = Composition::Max;
        return m;
    }

    static PerformanceMeasure total_lateness(std::vector<std::int64_t> due_by_task) {
        PerformanceMeasure m;
        m.kind = Kind::TotalLateness;
        m.composition = Composition::Sum;
        m.task_due = std::move(due_by_task);
        return m;
    }

    static PerformanceMeasure late_job_count(std::vector<std::int32_t> job_by_task,
                                             std::vector<std::int64_t> due_by_job,
                                             std::vector<std::int64_t> release_by_job = {}) {
        PerformanceMeasure m;
        m.kind = Kind::LateJobCount;
        m.composition = Composition::Sum;
        m.task_job = std::move(job_by_task);
        m.job_due = std::move(due_by_job);
        m.job_release = std::move(release_by_job);
        return m;
    }

    static PerformanceMeasure custom(
        Composition comp,
        std::function<double(OperationId, ResourceId, std::int64_t, std::int64_t)> contribution) {
        PerformanceMeasure m;
        m.kind = Kind::Custom;
        m.composition = comp;
        m.custom_contribution = std::move(contribution);
        return m;
    }
};

}  // namespace rap
