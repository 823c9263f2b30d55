#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rapcontrol/env.hpp"
#include "rapcontrol/instance.hpp"

namespace rap {

/// Feature digits for one (state, action) pair; integral values bounded by
/// the schema radices. Normalize to doubles for the regression store.
using FeatureVector = std::vector<std::int32_t>;

/// Task phase codes used in the task-state feature block.
enum TaskCode : std::int32_t {
    kTaskNotAvailable = 0,
    kTaskReady = 1,
    kTaskProcessing = 2,
    kTaskFinished = 3,
};

struct SchemaOptions {
    /// Expand the task-state block into 4 indicator components per task
    /// (used by the regression store; the hash store needs packed digits).
    bool one_hot = false;
    /// Use expected remaining/finish times computed from duration means
    /// instead of raw elapsed times; appends one extra component for the
    /// action's expected finish.
    bool model_aware = false;
    /// Clamp for relative time components; 0 derives it from the instance's
    /// expected-duration horizon.
    std::int64_t horizon = 0;
    /// Extra state component carrying the running performance relative to
    /// the clock (now − κ̄ for max-composed measures, κ̄ itself for
    /// sum-composed ones; see perf_is_time). Relative-time features alone
    /// alias states that differ in accumulated performance, which corrupts
    /// value estimates whose targets depend on Δκ.
    bool perf_offset = false;
    /// κ̄ is a completion time (makespan-like) rather than an accumulated
    /// count/penalty; keeps the component invariant under time shifts.
    bool perf_is_time = true;
    /// Capacity headroom so the digit layout (and therefore hash keys)
    /// survives disturbances that add resources, operations or tasks.
    std::int32_t max_resources = 0;
    std::int32_t max_states = 0;
    std::int32_t max_operations = 0;
    std::int32_t max_tasks = 0;
};

/**
 * Layout of the numeric feature vector for state-action pairs: per resource
 * its state id, the executing operation (0 = idle) and the relative start
 * time of the unfinished operation; per task a phase code; and the acting
 * operation/resource ids. Temporal components are relative to the current
 * time, so shifting a trajectory in absolute time leaves features unchanged.
 *
 * In packed mode every component is a digit of a mixed-radix number; the
 * model-free layout has 3·|R| + |T| + 2 components.
 */
class FeatureSchema {
public:
    struct Component {
        std::string name;
        std::int64_t radix = 1;
    };

    static FeatureSchema build(const Instance& inst, SchemaOptions opts = {}) {
        FeatureSchema s;
        s.opts_ = opts;
        s.resources_ = std::max(opts.max_resources, inst.resource_count());
        s.states_ = std::max(opts.max_states, inst.state_count());
        s.operations_ = std::max(opts.max_operations, inst.operation_count());
        s.horizon_ = opts.horizon > 0 ? opts.horizon : inst.expected_horizon();
        s.task_ids_ = inst.tasks();
        const std::int32_t task_slots = std::max<std::int32_t>(
            opts.max_tasks, static_cast<std::int32_t>(s.task_ids_.size()));
        s.task_slots_ = task_slots;

        const std::int64_t op_radix = static_cast<std::int64_t>(s.operations_) + 1;
        const std::int64_t time_radix = s.horizon_ + 1;
        for (std::int32_t r = 0; r < s.resources_; ++r) {
            s.components_.push_back({"r" + std::to_string(r) + ".state", s.states_});
            s.components_.push_back({"r" + std::to_string(r) + ".executing", op_radix});
            s.components_.push_back(
                {"r" + std::to_string(r) + (opts.model_aware ? ".expected_remaining" : ".rel_start"),
                 time_radix});
        }
        if (opts.perf_offset) s.components_.push_back({"perf.offset", time_radix});
        for (std::int32_t slot = 0; slot < task_slots; ++slot) {
            const std::string label =
                slot < static_cast<std::int32_t>(s.task_ids_.size())
                    ? "task" + std::to_string(s.task_ids_[static_cast<std::size_t>(slot)])
                    : "task_slot" + std::to_string(slot);
            if (opts.one_hot) {
                for (const char* phase : {".not_available", ".ready", ".processing", ".finished"})
                    s.components_.push_back({label + phase, 2});
            } else {
                s.components_.push_back({label + ".code", 4});
            }
        }
        s.components_.push_back({"action.op", op_radix});
        s.components_.push_back({"action.resource", static_cast<std::int64_t>(s.resources_) + 1});
        if (opts.model_aware) s.components_.push_back({"action.expected_finish", time_radix});

        s.radices_.reserve(s.components_.size());
        for (const Component& c : s.components_) s.radices_.push_back(c.radix);
        return s;
    }

    std::int32_t dimension() const { return static_cast<std::int32_t>(components_.size()); }
    const std::vector<Component>& components() const { return components_; }
    const std::vector<std::int64_t>& radices() const { return radices_; }
    std::int64_t horizon() const { return horizon_; }
    bool one_hot() const { return opts_.one_hot; }
    bool model_aware() const { return opts_.model_aware; }
    bool perf_offset() const { return opts_.perf_offset; }
    /// Digit index where the task-state block starts.
    std::int32_t task_block_offset() const {
        return resources_ * 3 + (opts_.perf_offset ? 1 : 0);
    }
    const std::vector<OperationId>& task_ids() const { return task_ids_; }
    std::int32_t state_component_count() const {
        return dimension() - (opts_.model_aware ? 3 : 2);
    }

    /// Normalization bounds: each digit spans [0, radix - 1].
    std::vector<std::pair<double, double>> bounds() const {
        std::vector<std::pair<double, double>> out;
        out.reserve(radices_.size());
        for (std::int64_t m : radices_) out.emplace_back(0.0, static_cast<double>(m - 1));
        return out;
    }

private:
    friend FeatureVector extract(const EnvState&, const ControlAction&, const Instance&,
                                 const FeatureSchema&);
    friend void extract_state_block(const EnvState&, const Instance&, const FeatureSchema&,
                                    FeatureVector&);
    friend void finish_with_action(const EnvState&, const ControlAction&, const Instance&,
                                   const FeatureSchema&, FeatureVector&);
    friend std::uint64_t masked_state_fingerprint(const EnvState&, const Instance&,
                                                  const FeatureSchema&, const std::vector<char>&);

    SchemaOptions opts_;
    std::int32_t resources_ = 0;
    std::int64_t states_ = 0;
    std::int32_t operations_ = 0;
    std::int32_t task_slots_ = 0;
    std::int64_t horizon_ = 0;
    std::vector<OperationId> task_ids_;
    std::vector<Component> components_;
    std::vector<std::int64_t> radices_;
};

namespace detail {

inline std::int32_t clamp_time(std::int64_t t, std::int64_t horizon) {
    return static_cast<std::int32_t>(std::clamp<std::int64_t>(t, 0, horizon));
}

inline std::int32_t task_code(const EnvState& s, const Instance& inst, OperationId t) {
    if (!s.task_unfinished(t)) return kTaskFinished;
    for (const auto& rs : s.resources)
        if (rs.executing == t) return kTaskProcessing;
    for (OperationId pred : inst.predecessors(t))
        if (s.task_unfinished(pred)) return kTaskNotAvailable;
    return kTaskReady;
}

inline std::int32_t expected_remaining(const Instance& inst, const ResourceStatus& rs,
                                       std::int64_t now, std::int64_t horizon) {
    if (rs.idle()) return 0;
    const DurationDist* d = inst.duration(rs.state, rs.executing);
    if (d == nullptr || d->support.empty()) return 0;
    const std::int64_t remain =
        static_cast<std::int64_t>(d->mean() + 0.5) - (now - rs.started_at);
    return clamp_time(remain, horizon);
}

}  // namespace detail

/// Writes the state-dependent digit prefix (everything except the action
/// components). Callers evaluating many actions in one state reuse the block.
inline void extract_state_block(const EnvState& s, const Instance& inst, const FeatureSchema& schema,
                                FeatureVector& out) {
    out.clear();
    out.reserve(static_cast<std::size_t>(schema.dimension()));
    for (std::int32_t r = 0; r < schema.resources_; ++r) {
        if (r < static_cast<std::int32_t>(s.resources.size())) {
            const ResourceStatus& rs = s.resources[static_cast<std::size_t>(r)];
            out.push_back(rs.state);
            out.push_back(rs.idle() ? 0 : rs.executing + 1);
            if (schema.model_aware())
                out.push_back(detail::expected_remaining(inst, rs, s.now, schema.horizon()));
            else
                out.push_back(rs.idle() ? 0
                                        : detail::clamp_time(s.now - rs.started_at, schema.horizon()));
        } else {
            out.push_back(0);
            out.push_back(0);
            out.push_back(0);
        }
    }
    if (schema.perf_offset()) {
        const std::int64_t perf = static_cast<std::int64_t>(std::llround(s.perf));
        out.push_back(detail::clamp_time(schema.opts_.perf_is_time ? s.now - perf : perf,
                                         schema.horizon()));
    }
    for (std::int32_t slot = 0; slot < schema.task_slots_; ++slot) {
        std::int32_t code = kTaskFinished;
        if (slot < static_cast<std::int32_t>(schema.task_ids_.size()))
            code = detail::task_code(s, inst, schema.task_ids_[static_cast<std::size_t>(slot)]);
        if (schema.one_hot()) {
            for (std::int32_t phase = 0; phase < 4; ++phase) out.push_back(phase == code ? 1 : 0);
        } else {
            out.push_back(code);
        }
    }
}

/// Appends the action components onto a state block produced by
/// extract_state_block.
inline void finish_with_action(const EnvState& s, const ControlAction& a, const Instance& inst,
                               const FeatureSchema& schema, FeatureVector& out) {
    std::int32_t op_digit = 0;
    std::int32_t res_digit = 0;
    OperationId acting_op = kNone;
    ResourceId acting_res = kNone;
    switch (a.kind) {
        case ControlAction::Kind::Wait: break;
        case ControlAction::Kind::Assign:
            acting_op = a.op;
            acting_res = a.resource;
            break;
        case ControlAction::Kind::SelectTask: acting_op = a.op; break;
        case ControlAction::Kind::SelectResource:
            acting_op = s.pending_task;
            acting_res = a.resource;
            break;
    }
    if (acting_op != kNone) op_digit = acting_op + 1;
    if (acting_res != kNone) res_digit = acting_res + 1;
    out.push_back(op_digit);
    out.push_back(res_digit);
    if (schema.model_aware()) {
        std::int32_t finish = 0;
        if (acting_op != kNone && acting_res != kNone) {
            const ResourceStatus& rs = s.resources[static_cast<std::size_t>(acting_res)];
            const DurationDist* d = inst.duration(rs.state, acting_op);
            if (d != nullptr && !d->support.empty())
                finish = detail::clamp_time(static_cast<std::int64_t>(d->mean() + 0.5),
                                            schema.horizon());
        }
        out.push_back(finish);
    }
}

/// Deterministic feature digits for a state-action pair.
inline FeatureVector extract(const EnvState& s, const ControlAction& a, const Instance& inst,
                             const FeatureSchema& schema) {
    FeatureVector out;
    extract_state_block(s, inst, schema, out);
    finish_with_action(s, a, inst, schema, out);
    return out;
}

/// Affine map of each component onto [0, 1], clamped outside the bounds;
/// components with degenerate bounds map to 0.
inline std::vector<double> normalize(const FeatureVector& v,
                                     const std::vector<std::pair<double, double>>& bounds) {
    if (v.size() != bounds.size())
        throw std::invalid_argument("normalize: vector/bounds dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto [lo, hi] = bounds[i];
        if (!(hi > lo)) {
            out[i] = 0.0;
            continue;
        }
        out[i] = std::clamp((static_cast<double>(v[i]) - lo) / (hi - lo), 0.0, 1.0);
    }
    return out;
}

inline std::vector<double> normalize(const std::vector<double>& v,
                                     const std::vector<std::pair<double, double>>& bounds) {
    if (v.size() != bounds.size())
        throw std::invalid_argument("normalize: vector/bounds dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto [lo, hi] = bounds[i];
        out[i] = !(hi > lo) ? 0.0 : std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
    }
    return out;
}

/// 64-bit FNV-1a over the digits; identity key for feature vectors whose
/// mixed-radix grid exceeds the 64-bit key space.
inline std::uint64_t fingerprint(const FeatureVector& v) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::int32_t d : v) {
        h ^= static_cast<std::uint32_t>(d);
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Fingerprint of the state-only digits with the tasks flagged in
/// `treat_finished` forced to the finished code. Frozen cluster policies key
/// their decisions on this reduced view so lookups stay valid when later
/// clusters become active.
inline std::uint64_t masked_state_fingerprint(const EnvState& s, const Instance& inst,
                                              const FeatureSchema& schema,
                                              const std::vector<char>& treat_finished) {
    FeatureVector digits;
    extract_state_block(s, inst, schema, digits);
    if (!treat_finished.empty()) {
        const std::size_t task_offset = static_cast<std::size_t>(schema.task_block_offset());
        const std::size_t per_task = schema.one_hot() ? 4 : 1;
        for (std::size_t slot = 0; slot < static_cast<std::size_t>(schema.task_slots_); ++slot) {
            if (slot >= schema.task_ids_.size()) continue;
            const OperationId t = schema.task_ids_[slot];
            if (!treat_finished[static_cast<std::size_t>(t)]) continue;
            const std::size_t base = task_offset + slot * per_task;
            if (schema.one_hot()) {
                digits[base + 0] = 0;
                digits[base + 1] = 0;
                digits[base + 2] = 0;
                digits[base + 3] = 1;
            } else {
                digits[base] = kTaskFinished;
            }
        }
    }
    return fingerprint(digits);
}

}  // namespace rap
