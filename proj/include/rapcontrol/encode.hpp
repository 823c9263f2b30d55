#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rapcontrol/instance.hpp"
#include "rapcontrol/measure.hpp"

namespace rap {

/**
 * A (flexible) job-shop problem: jobs are ordered lists of operations, each
 * operation has one or more (machine, duration) alternatives. A plain JSP is
 * the special case of exactly one alternative per operation.
 */
struct JobShopSpec {
    struct Op {
        std::vector<std::pair<std::int32_t, std::int64_t>> alternatives;  // (machine, duration)
    };
    struct Job {
        std::vector<Op> ops;
    };
    std::int32_t machine_count = 0;
    std::vector<Job> jobs;

    double average_flexibility() const {
        std::size_t ops = 0, alts = 0;
        for (const Job& j : jobs)
            for (const Op& o : j.ops) {
                ++ops;
                alts += o.alternatives.size();
            }
        return ops == 0 ? 0.0 : static_cast<double>(alts) / static_cast<double>(ops);
    }
};

struct JobShopEncoding {
    Instance instance;
    std::vector<ResourceId> machine_resource;        // machine -> resource id
    std::vector<StateId> machine_state;              // machine -> its singleton state
    std::vector<std::vector<OperationId>> job_tasks; // job -> ordered task ids
    std::vector<std::int32_t> job_of_task;           // task id -> job index
    double average_flexibility = 0.0;
};

/**
 * Encodes a (flexible) job-shop problem: machines become resources with a
 * singleton state space, job orders become precedence chains, processing
 * times become point-mass durations, and effects leave machine states
 * unchanged.
 */
inline JobShopEncoding encode_job_shop(const JobShopSpec& spec) {
    if (spec.jobs.empty()) throw std::invalid_argument("job shop encoding: empty job list");
    if (spec.machine_count <= 0) throw std::invalid_argument("job shop encoding: no machines");

    InstanceBuilder b;
    JobShopEncoding out;
    for (std::int32_t m = 0; m < spec.machine_count; ++m) {
        const ResourceId r = b.add_resource();
        const StateId s = b.add_state();
        b.set_initial(r, StateDist::point(s));
        out.machine_resource.push_back(r);
        out.machine_state.push_back(s);
    }

    for (std::size_t j = 0; j < spec.jobs.size(); ++j) {
        std::vector<OperationId> chain;
        for (const auto& op : spec.jobs[j].ops) {
            const OperationId task = b.add_operation(true);
            if (op.alternatives.empty())
                throw std::invalid_argument("job shop encoding: operation without capable machine");
            for (const auto& [machine, duration] : op.alternatives) {
                if (machine < 0 || machine >= spec.machine_count)
                    throw std::invalid_argument("job shop encoding: machine index out of range");
                const StateId s = out.machine_state[static_cast<std::size_t>(machine)];
                b.set_duration(s, task, DurationDist::point(duration));
                b.set_effect(s, task, StateDist::point(s));
            }
            if (!chain.empty()) b.add_precedence(chain.back(), task);
            chain.push_back(task);
            out.job_of_task.push_back(static_cast<std::int32_t>(j));
        }
        out.job_tasks.push_back(std::move(chain));
    }

    out.instance = b.build();
    out.average_flexibility = spec.average_flexibility();
    return out;
}

/// Connected, undirected, edge-weighted graph; vertices are 0-based and the
/// tour starts and ends at vertex 0.
struct TspGraph {
    struct Edge {
        std::int32_t u = 0;
        std::int32_t v = 0;
        std::int64_t weight = 0;
    };
    std::int32_t vertex_count = 0;
    std::vector<Edge> edges;
};

struct TspEncoding {
    Instance instance;
    ResourceId salesman = 0;
    std::vector<StateId> city_state;      // city -> state "salesman is in city"
    std::vector<OperationId> city_task;   // city -> task "travel to city"
    PerformanceMeasure measure;           // latest arrival time
};

/**
 * Encodes a TSP: one resource (the salesman), one state per city, one task
 * per city ("travel there"), edge weights as durations, effects moving the
 * salesman; precedence forces returning to the start city last. The measure
 * is the latest arrival time (max-composable).
 */
inline TspEncoding encode_tsp(const TspGraph& graph) {
    if (graph.vertex_count < 2) throw std::invalid_argument("tsp encoding: need at least 2 cities");

    InstanceBuilder b;
    TspEncoding out;
    out.salesman = b.add_resource();
    for (std::int32_t c = 0; c < graph.vertex_count; ++c) out.city_state.push_back(b.add_state());
    for (std::int32_t c = 0; c < graph.vertex_count; ++c) out.city_task.push_back(b.add_operation(true));

    b.set_initial(out.salesman, StateDist::point(out.city_state[0]));
    for (std::int32_t c = 1; c < graph.vertex_count; ++c)
        b.add_precedence(out.city_task[static_cast<std::size_t>(c)], out.city_task[0]);

    for (const auto& e : graph.edges) {
        if (e.u < 0 || e.v < 0 || e.u >= graph.vertex_count || e.v >= graph.vertex_count || e.u == e.v)
            throw std::invalid_argument("tsp encoding: bad edge");
        for (const auto& [from, to] : {std::pair{e.u, e.v}, std::pair{e.v, e.u}}) {
            const StateId s = out.city_state[static_cast<std::size_t>(from)];
            const OperationId t = out.city_task[static_cast<std::size_t>(to)];
            b.set_duration(s, t, DurationDist::point(e.weight));
            b.set_effect(s, t, StateDist::point(out.city_state[static_cast<std::size_t>(to)]));
        }
    }

    out.instance = b.build();
    out.measure = PerformanceMeasure::makespan();
    return out;
}

}  // namespace rap
