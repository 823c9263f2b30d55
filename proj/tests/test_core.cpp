#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "rapcontrol/encode.hpp"
#include "rapcontrol/instance.hpp"
#include "rapcontrol/measure.hpp"
#include "rapcontrol/schedule.hpp"

#include "support/toys.hpp"

using namespace rap;

namespace {

/// Brute-force optimal tour length: enumerate every permutation of the
/// cities after the start city and keep the cheapest closed tour.
std::int64_t brute_force_tsp(const TspGraph& g) {
    std::vector<std::vector<std::int64_t>> w(
        static_cast<std::size_t>(g.vertex_count),
        std::vector<std::int64_t>(static_cast<std::size_t>(g.vertex_count), -1));
    for (const auto& e : g.edges) {
        w[static_cast<std::size_t>(e.u)][static_cast<std::size_t>(e.v)] = e.weight;
        w[static_cast<std::size_t>(e.v)][static_cast<std::size_t>(e.u)] = e.weight;
    }
    std::vector<std::int32_t> order;
    for (std::int32_t c = 1; c < g.vertex_count; ++c) order.push_back(c);
    std::int64_t best = -1;
    do {
        std::int64_t total = 0;
        std::int32_t prev = 0;
        bool valid = true;
        for (std::int32_t c : order) {
            const std::int64_t edge = w[static_cast<std::size_t>(prev)][static_cast<std::size_t>(c)];
            if (edge < 0) {
                valid = false;
                break;
            }
            total += edge;
            prev = c;
        }
        if (valid) {
            const std::int64_t back = w[static_cast<std::size_t>(prev)][0];
            if (back < 0) valid = false;
            else total += back;
        }
        if (valid && (best < 0 || total < best)) best = total;
    } while (std::next_permutation(order.begin(), order.end()));
    return best;
}

}  // namespace

TEST_CASE("well-formed JSP encoding validates cleanly") {
    const auto enc = encode_job_shop(toys::two_machine_chain());
    const auto report = validate(enc.instance);
    for (const auto& v : report.violations) INFO(v.message);
    CHECK(report.ok());
    CHECK(enc.instance.resource_count() == 2);
    CHECK(enc.instance.task_count() == 4);
}

TEST_CASE("duration without effect is a domain mismatch") {
    InstanceBuilder b;
    const ResourceId r = b.add_resource();
    const StateId s = b.add_state();
    const OperationId t = b.add_operation(true);
    b.set_initial(r, StateDist::point(s));
    b.set_duration(s, t, DurationDist::point(3));
    // no effect set
    const auto report = validate(b.build(), b.effect_only_pairs());
    REQUIRE_FALSE(report.ok());
    CHECK(report.has(Violation::Code::DomainMismatch));
}

TEST_CASE("effect without duration is a domain mismatch") {
    InstanceBuilder b;
    const ResourceId r = b.add_resource();
    const StateId s = b.add_state();
    const OperationId t = b.add_operation(true);
    b.set_initial(r, StateDist::point(s));
    b.set_duration(s, t, DurationDist::point(3));
    b.set_effect(s, t, StateDist::point(s));
    const OperationId u = b.add_operation(true);
    b.set_duration(s, u, DurationDist::point(1));
    b.set_effect(s, u, StateDist::point(s));
    b.set_effect(1, u, StateDist::point(s));  // state 1 does not exist in dom(d)
    const auto report = validate(b.build(), b.effect_only_pairs());
    REQUIRE_FALSE(report.ok());
    CHECK(report.has(Violation::Code::DomainMismatch));
}

TEST_CASE("cyclic precedence is flagged") {
    InstanceBuilder b;
    const ResourceId r = b.add_resource();
    const StateId s = b.add_state();
    b.set_initial(r, StateDist::point(s));
    const OperationId u = b.add_operation(true);
    const OperationId v = b.add_operation(true);
    for (OperationId t : {u, v}) {
        b.set_duration(s, t, DurationDist::point(1));
        b.set_effect(s, t, StateDist::point(s));
    }
    b.add_precedence(u, v);
    b.add_precedence(v, u);
    const auto report = validate(b.build());
    REQUIRE_FALSE(report.ok());
    CHECK(report.has(Violation::Code::CyclicPrecedence));
}

TEST_CASE("zero and negative durations are rejected") {
    InstanceBuilder b;
    const ResourceId r = b.add_resource();
    const StateId s = b.add_state();
    const OperationId t = b.add_operation(true);
    b.set_initial(r, StateDist::point(s));
    b.set_duration(s, t, DurationDist::point(0));
    b.set_effect(s, t, StateDist::point(s));
    const auto report = validate(b.build());
    REQUIRE_FALSE(report.ok());
    CHECK(report.has(Violation::Code::BadDuration));
}

TEST_CASE("resource state recursion") {
    const auto enc = toys::tsp_triangle();
    const auto& inst = enc.instance;
    Schedule sched;
    // travel 0 -> 1 at t=0 (w=1), 1 -> 2 at t=1 (w=3), 2 -> 0 at t=4 (w=2)
    REQUIRE(sched.add(0, 0, enc.city_task[1]));
    REQUIRE(sched.add(0, 1, enc.city_task[2]));
    REQUIRE(sched.add(0, 4, enc.city_task[0]));

    SECTION("t=0 applies the first entry's effect") {
        CHECK(resource_state_at(inst, sched, 0, 0) == enc.city_state[1]);
    }
    SECTION("initial state before any entry") {
        Schedule empty;
        CHECK(resource_state_at(inst, empty, 0, 0) == enc.city_state[0]);
        CHECK(resource_state_at(inst, empty, 0, 7) == enc.city_state[0]);
    }
    SECTION("times without an entry keep the previous state") {
        CHECK(resource_state_at(inst, sched, 0, 2) == enc.city_state[2]);
        CHECK(resource_state_at(inst, sched, 0, 3) == enc.city_state[2]);
    }
    SECTION("executing t_j from s_i yields s_j") {
        CHECK(resource_state_at(inst, sched, 0, 1) == enc.city_state[2]);
        CHECK(resource_state_at(inst, sched, 0, 4) == enc.city_state[0]);
    }
}

TEST_CASE("feasibility verdicts carry property tags") {
    const auto enc = encode_job_shop(toys::two_machine_chain());
    const auto& inst = enc.instance;
    const OperationId a0 = enc.job_tasks[0][0], a1 = enc.job_tasks[0][1];
    const OperationId b0 = enc.job_tasks[1][0], b1 = enc.job_tasks[1][1];

    // job0: M0[0,3) M1[3,7); job1: M0[3,5) M1[7,12)
    auto good = [&] {
        Schedule s;
        s.add(0, 0, a0);
        s.add(1, 3, a1);
        s.add(0, 3, b0);
        s.add(1, 7, b1);
        return s;
    };
    CHECK(check_feasibility(inst, good()).feasible);

    SECTION("duplicated task -> property 1") {
        Schedule s = good();
        s.add(0, 20, a1);  // a1 has no successors; far after everything
        const auto verdict = check_feasibility(inst, s);
        CHECK_FALSE(verdict.feasible);
        CHECK(verdict.violates(1));
        CHECK_FALSE(verdict.violates(2));
    }
    SECTION("missing task -> property 1") {
        Schedule s;
        s.add(0, 0, a0);
        s.add(1, 3, a1);
        s.add(0, 3, b0);
        const auto verdict = check_feasibility(inst, s);
        CHECK_FALSE(verdict.feasible);
        CHECK(verdict.violates(1));
    }
    SECTION("overlapping windows on one resource -> property 2") {
        Schedule s;
        s.add(0, 0, a0);  // occupies [0, 3)
        s.add(1, 3, a1);
        s.add(0, 2, b0);  // starts inside a0's window
        s.add(1, 7, b1);
        const auto verdict = check_feasibility(inst, s);
        CHECK_FALSE(verdict.feasible);
        CHECK(verdict.violates(2));
        CHECK_FALSE(verdict.violates(3));
    }
    SECTION("successor starts before predecessor completes -> property 3") {
        Schedule s;
        s.add(0, 0, a0);
        s.add(1, 2, a1);  // a0 completes at 3
        s.add(0, 3, b0);
        s.add(1, 7, b1);
        const auto verdict = check_feasibility(inst, s);
        CHECK_FALSE(verdict.feasible);
        CHECK(verdict.violates(3));
    }
    SECTION("assignment outside dom(d) -> property 4") {
        Schedule s;
        s.add(1, 0, a0);  // machine 1 cannot process a0
        s.add(1, 3, a1);
        s.add(0, 3, b0);
        s.add(1, 7, b1);
        const auto verdict = check_feasibility(inst, s);
        CHECK_FALSE(verdict.feasible);
        CHECK(verdict.violates(4));
    }
}

TEST_CASE("makespan evaluation and max-composability") {
    const auto enc = encode_job_shop(toys::one_machine_two_ops());
    const auto& inst = enc.instance;
    const auto measure = PerformanceMeasure::makespan();

    Schedule sched;
    sched.add(0, 0, enc.job_tasks[0][0]);  // duration 3
    sched.add(0, 3, enc.job_tasks[0][1]);  // duration 4
    CHECK(evaluate_measure(measure, inst, sched) == 7.0);

    Schedule first, second;
    first.add(0, 0, enc.job_tasks[0][0]);
    second.add(0, 3, enc.job_tasks[0][1]);
    const double split = std::max(evaluate_measure(measure, inst, first),
                                  evaluate_measure(measure, inst, second));
    CHECK(split == 7.0);
}

TEST_CASE("makespan is regular: longer realized durations never decrease it") {
    const auto enc = encode_job_shop(toys::two_machine_chain());
    const auto& inst = enc.instance;
    const auto measure = PerformanceMeasure::makespan();
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Schedule base;
        base.add(0, 0, enc.job_tasks[0][0], 3);
        base.add(1, 3, enc.job_tasks[0][1], 4);
        base.add(0, 3, enc.job_tasks[1][0], 2);
        base.add(1, 7, enc.job_tasks[1][1], 5);
        const double before = evaluate_measure(measure, inst, base);
        Schedule longer;
        const std::size_t bump = static_cast<std::size_t>(rng() % base.entries().size());
        for (std::size_t i = 0; i < base.entries().size(); ++i) {
            auto e = base.entries()[i];
            if (i == bump) e.realized_duration += static_cast<std::int64_t>(rng() % 5);
            longer.add(e);
        }
        CHECK(evaluate_measure(measure, inst, longer) >= before);
    }
}

TEST_CASE("total lateness is sum-composable over entry partitions") {
    const auto enc = encode_job_shop(toys::two_machine_chain());
    const auto& inst = enc.instance;
    std::vector<std::int64_t> due(static_cast<std::size_t>(inst.operation_count()), -1);
    due[static_cast<std::size_t>(enc.job_tasks[0][1])] = 5;
    due[static_cast<std::size_t>(enc.job_tasks[1][1])] = 6;
    const auto measure = PerformanceMeasure::total_lateness(due);

    Schedule whole;
    whole.add(0, 0, enc.job_tasks[0][0]);
    whole.add(1, 3, enc.job_tasks[0][1]);
    whole.add(0, 3, enc.job_tasks[1][0]);
    whole.add(1, 7, enc.job_tasks[1][1]);
    const double total = evaluate_measure(measure, inst, whole);

    Schedule a, b;
    a.add(0, 0, enc.job_tasks[0][0]);
    a.add(1, 7, enc.job_tasks[1][1]);
    b.add(1, 3, enc.job_tasks[0][1]);
    b.add(0, 3, enc.job_tasks[1][0]);
    CHECK(total == evaluate_measure(measure, inst, a) + evaluate_measure(measure, inst, b));
}

TEST_CASE("encode_job_shop basics") {
    SECTION("serial chain has optimal makespan 7") {
        const auto enc = encode_job_shop(toys::two_machine_chain());
        Schedule sched;
        sched.add(0, 0, enc.job_tasks[0][0]);
        sched.add(1, 3, enc.job_tasks[0][1]);
        sched.add(0, 3, enc.job_tasks[1][0]);
        sched.add(1, 7, enc.job_tasks[1][1]);
        CHECK(check_feasibility(enc.instance, sched).feasible);
    }
    SECTION("single job on two machines") {
        JobShopSpec spec;
        spec.machine_count = 2;
        spec.jobs.push_back({{{{{0, 3}}}, {{{1, 4}}}}});
        const auto enc = encode_job_shop(spec);
        Schedule sched;
        sched.add(0, 0, enc.job_tasks[0][0]);
        sched.add(1, 3, enc.job_tasks[0][1]);
        REQUIRE(check_feasibility(enc.instance, sched).feasible);
        CHECK(evaluate_measure(PerformanceMeasure::makespan(), enc.instance, sched) == 7.0);
    }
    SECTION("empty job list is rejected") {
        JobShopSpec spec;
        spec.machine_count = 2;
        CHECK_THROWS_AS(encode_job_shop(spec), std::invalid_argument);
    }
    SECTION("per-machine singleton states, job-internal chains") {
        const auto enc = encode_job_shop(toys::two_machine_chain());
        CHECK(enc.instance.state_count() == enc.instance.resource_count());
        CHECK(enc.instance.precedence().size() == 2);
        for (const auto& d : enc.instance.capability_pairs()) {
            const auto* dist = enc.instance.duration(d.first, d.second);
            REQUIRE(dist != nullptr);
            CHECK(dist->is_point());
        }
    }
}

TEST_CASE("encode_tsp structure and optima") {
    SECTION("two cities: go and return") {
        TspGraph g;
        g.vertex_count = 2;
        g.edges.push_back({0, 1, 5});
        const auto enc = encode_tsp(g);
        REQUIRE(validate(enc.instance).ok());
        Schedule tour;
        tour.add(enc.salesman, 0, enc.city_task[1]);
        tour.add(enc.salesman, 5, enc.city_task[0]);
        REQUIRE(check_feasibility(enc.instance, tour).feasible);
        CHECK(evaluate_measure(enc.measure, enc.instance, tour) == 10.0);
        CHECK(brute_force_tsp(g) == 10);
    }
    SECTION("triangle: every tour costs 6") {
        CHECK(brute_force_tsp(toys::triangle_graph()) == 6);
    }
    SECTION("complete 4-city graph with unit weights: optimum 4") {
        TspGraph g;
        g.vertex_count = 4;
        for (std::int32_t u = 0; u < 4; ++u)
            for (std::int32_t v = u + 1; v < 4; ++v) g.edges.push_back({u, v, 1});
        CHECK(brute_force_tsp(g) == 4);
    }
    SECTION("precedence forces ending at the start city") {
        const auto enc = toys::tsp_triangle();
        for (std::size_t c = 1; c < enc.city_task.size(); ++c) {
            bool found = false;
            for (const auto& [u, v] : enc.instance.precedence())
                if (u == enc.city_task[c] && v == enc.city_task[0]) found = true;
            CHECK(found);
        }
    }
    SECTION("disconnected graph flagged by the reachability check") {
        TspGraph g;
        g.vertex_count = 4;
        g.edges.push_back({0, 1, 2});
        g.edges.push_back({2, 3, 2});  // component unreachable from city 0
        const auto enc = encode_tsp(g);
        const auto report = validate(enc.instance);
        REQUIRE_FALSE(report.ok());
        CHECK(report.has(Violation::Code::UnreachableTask));
    }
}

TEST_CASE("schedule rejects duplicate (resource, time) keys") {
    Schedule s;
    CHECK(s.add(0, 0, 1));
    CHECK_FALSE(s.add(0, 0, 2));
    CHECK(s.add(0, 1, 2));
}
