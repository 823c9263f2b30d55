#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <unordered_set>

#include "rapcontrol/encode.hpp"
#include "rapcontrol/env.hpp"

#include "support/toys.hpp"

using namespace rap;

namespace {

/// Independent completion-rate oracle: pmf and tail by direct summation
/// over the support list.
double oracle_rate(const DurationDist& d, std::int64_t elapsed) {
    double pmf = 0.0, tail = 0.0;
    for (const auto& a : d.support) {
        if (a.value == elapsed) pmf += a.prob;
        if (a.value >= elapsed) tail += a.prob;
    }
    return pmf / tail;
}

Schedule replay_episode(const Env& env, EnvState state, const std::vector<ControlAction>& actions,
                        Rng& rng) {
    Schedule sched;
    for (ResourceId r = 0; r < env.instance().resource_count(); ++r)
        sched.set_realized_initial(r, state.resources[static_cast<std::size_t>(r)].state);
    for (const auto& a : actions) {
        const auto out = env.step(state, a, rng);
        for (const auto& ev : out.finished)
            sched.add(ev.resource, ev.started_at, ev.op, ev.finished_at - ev.started_at,
                      ev.next_state);
        state = out.next;
    }
    return sched;
}

}  // namespace

TEST_CASE("initial_state basics") {
    Rng rng(42);

    SECTION("deterministic initials give a single state") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        const EnvState a = env.initial_state(rng);
        const EnvState b = env.initial_state(rng);
        CHECK(a == b);
        CHECK(a.now == 0);
        CHECK(a.perf == 0.0);
        CHECK(a.unfinished_count == 2);
        for (const auto& r : a.resources) CHECK(r.idle());
    }
    SECTION("uniform initial distribution: frequency within the 3-sigma binomial band") {
        const Instance inst = toys::stochastic_initial_toy();
        Env env(inst, PerformanceMeasure::makespan());
        int count_a = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i)
            if (env.initial_state(rng).resources[0].state == 0) ++count_a;
        const double freq = static_cast<double>(count_a) / n;
        CHECK(freq > 0.5 - 0.015);
        CHECK(freq < 0.5 + 0.015);
    }
}

TEST_CASE("available actions follow the availability rules") {
    Rng rng(1);
    const auto enc = encode_job_shop(toys::two_machine_chain());
    Env env(enc.instance, PerformanceMeasure::makespan());
    const EnvState x0 = env.initial_state(rng);

    SECTION("fresh state: no wait, only job-head assignments") {
        const auto actions = env.legal_actions(x0);
        REQUIRE(actions.size() == 2);
        for (const auto& a : actions) {
            CHECK(a.kind == ControlAction::Kind::Assign);
            CHECK((a.op == enc.job_tasks[0][0] || a.op == enc.job_tasks[1][0]));
            CHECK(a.resource == 0);  // both heads run on machine 0
        }
    }
    SECTION("busy resource offers no assignment") {
        const auto out = env.step(x0, ControlAction::assign(enc.job_tasks[0][0], 0), rng);
        for (const auto& a : env.legal_actions(out.next))
            if (a.kind == ControlAction::Kind::Assign) CHECK(a.resource != 0);
    }
    SECTION("wait appears once something is running") {
        const auto out = env.step(x0, ControlAction::assign(enc.job_tasks[0][0], 0), rng);
        const auto actions = env.legal_actions(out.next);
        REQUIRE_FALSE(actions.empty());
        CHECK(actions.front().kind == ControlAction::Kind::Wait);
    }
    SECTION("action count is bounded by |R||O| + 1") {
        Rng r2(7);
        for (int trial = 0; trial < 20; ++trial) {
            EnvState s = env.initial_state(r2);
            while (env.status(s) == TerminalStatus::Running) {
                const auto actions = env.legal_actions(s);
                CHECK(static_cast<std::int64_t>(actions.size()) <=
                      static_cast<std::int64_t>(enc.instance.resource_count()) *
                              enc.instance.operation_count() +
                          1);
                s = env.step(s, actions[r2() % actions.size()], r2).next;
            }
        }
    }
}

TEST_CASE("completion rates") {
    SECTION("point mass: 0 before, 1 at the duration") {
        const auto d = DurationDist::point(4);
        CHECK(completion_rate(d, 0, 1) == 0.0);
        CHECK(completion_rate(d, 0, 3) == 0.0);
        CHECK(completion_rate(d, 0, 4) == 1.0);
        CHECK_THROWS_AS(completion_rate(d, 0, 5), std::logic_error);
    }
    SECTION("uniform{1,2}: 0.5 then 1.0") {
        const auto d = DurationDist::uniform(1, 2);
        CHECK(completion_rate(d, 0, 1) == Catch::Approx(oracle_rate(d, 1)));
        CHECK(completion_rate(d, 0, 1) == Catch::Approx(0.5));
        CHECK(completion_rate(d, 0, 2) == Catch::Approx(1.0));
    }
    SECTION("truncated geometric: constant rate p below the cap") {
        const double p = 0.3;
        const auto d = DurationDist::truncated_geometric(p, 12);
        for (std::int64_t k = 1; k < 12; ++k) {
            CHECK(completion_rate(d, 0, k) == Catch::Approx(p));
            CHECK(completion_rate(d, 0, k) == Catch::Approx(oracle_rate(d, k)));
        }
        CHECK(completion_rate(d, 0, 12) == Catch::Approx(1.0));
    }
    SECTION("rate is 1 exactly at the maximum surviving support point") {
        const auto d = DurationDist({{2, 0.25}, {5, 0.75}});
        CHECK(completion_rate(d, 0, 1) == 0.0);
        CHECK(completion_rate(d, 0, 2) == Catch::Approx(0.25));
        CHECK(completion_rate(d, 0, 3) == 0.0);
        CHECK(completion_rate(d, 0, 5) == 1.0);
    }
}

TEST_CASE("step semantics") {
    Rng rng(5);

    SECTION("assign keeps time and perf, costs zero") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        const EnvState x0 = env.initial_state(rng);
        const auto out = env.step(x0, ControlAction::assign(enc.job_tasks[0][0], 0), rng);
        CHECK(out.cost == 0.0);
        CHECK(out.next.now == 0);
        CHECK(out.next.perf == 0.0);
        CHECK(out.next.resources[0].executing == enc.job_tasks[0][0]);
    }
    SECTION("deterministic chain telescopes to the final makespan") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        EnvState s = env.initial_state(rng);
        double total = 0.0;
        while (env.status(s) == TerminalStatus::Running) {
            const auto actions = env.legal_actions(s);
            const auto out = env.step(s, actions.front(), rng);
            total += out.cost;
            s = out.next;
        }
        CHECK(env.status(s) == TerminalStatus::Success);
        CHECK(total == 7.0);
        CHECK(s.perf == 7.0);
    }
    SECTION("uniform{1,2}: empirical completion-time pmf within TV 0.02") {
        InstanceBuilder b;
        const ResourceId r = b.add_resource();
        const StateId st = b.add_state();
        b.set_initial(r, StateDist::point(st));
        const OperationId t = b.add_operation(true);
        b.set_duration(st, t, DurationDist::uniform(1, 2));
        b.set_effect(st, t, StateDist::point(st));
        const Instance inst = b.build();
        Env env(inst, PerformanceMeasure::makespan());
        std::map<std::int64_t, int> histogram;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            EnvState s = env.initial_state(rng);
            s = env.step(s, ControlAction::assign(t, r), rng).next;
            const auto out = env.step(s, ControlAction::wait(), rng);
            REQUIRE(out.finished.size() == 1);
            ++histogram[out.finished.front().finished_at];
        }
        const double tv = 0.5 * (std::abs(histogram[1] / double(n) - 0.5) +
                                 std::abs(histogram[2] / double(n) - 0.5));
        CHECK(tv < 0.02);
    }
    SECTION("illegal action is a contract violation") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        const EnvState x0 = env.initial_state(rng);
        CHECK_THROWS_AS(env.step(x0, ControlAction::wait(), rng), std::logic_error);
        CHECK_THROWS_AS(env.step(x0, ControlAction::assign(enc.job_tasks[0][1], 0), rng),
                        std::logic_error);
    }
}

TEST_CASE("terminal detection") {
    Rng rng(3);

    SECTION("all tasks finished -> success") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        EnvState s = env.initial_state(rng);
        while (env.status(s) == TerminalStatus::Running)
            s = env.step(s, env.legal_actions(s).front(), rng).next;
        CHECK(env.status(s) == TerminalStatus::Success);
    }
    SECTION("task without capable resource, nothing running -> failure") {
        InstanceBuilder b;
        const ResourceId r = b.add_resource();
        const StateId s0 = b.add_state();
        const StateId orphan = b.add_state();
        b.set_initial(r, StateDist::point(s0));
        const OperationId t = b.add_operation(true);
        b.set_duration(orphan, t, DurationDist::point(1));
        b.set_effect(orphan, t, StateDist::point(orphan));
        const Instance inst = b.build();
        Env env(inst, PerformanceMeasure::makespan());
        const EnvState x0 = env.initial_state(rng);
        CHECK(env.legal_actions(x0).empty());
        CHECK(env.status(x0) == TerminalStatus::Failure);
    }
    SECTION("mid-episode state is running") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        EnvState s = env.initial_state(rng);
        s = env.step(s, ControlAction::assign(enc.job_tasks[0][0], 0), rng).next;
        CHECK(env.status(s) == TerminalStatus::Running);
    }
}

TEST_CASE("wait skipping") {
    Rng rng(9);

    SECTION("single call jumps to the deterministic completion") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        EnvState s = env.initial_state(rng);
        s = env.step(s, ControlAction::assign(enc.job_tasks[0][0], 0), rng).next;
        const auto out = env.wait_to_next_event(s, rng);
        CHECK(out.next.now == 3);
        REQUIRE(out.finished.size() == 1);
        CHECK(out.finished.front().finished_at == 3);
    }
    SECTION("composite cost equals the sum of elementary costs") {
        const auto enc = toys::serial_chain();
        Env env(enc.instance, PerformanceMeasure::makespan());
        EnvState s = env.initial_state(rng);
        s = env.step(s, ControlAction::assign(enc.job_tasks[0][0], 0), rng).next;
        Rng rng_a = rng, rng_b = rng;
        const auto composite = env.wait_to_next_event(s, rng_a);
        double elementary_total = 0.0;
        EnvState cur = s;
        while (true) {
            const auto out = env.elementary_wait(cur, rng_b);
            elementary_total += out.cost;
            cur = out.next;
            if (!out.finished.empty()) break;
        }
        CHECK(composite.cost == elementary_total);
        CHECK(composite.next == cur);
    }
    SECTION("skipping reduces the number of reachable decision states") {
        const auto enc = toys::serial_chain();
        Env skip(enc.instance, PerformanceMeasure::makespan(), {.wait_skip = true});
        Env tick(enc.instance, PerformanceMeasure::makespan(), {.wait_skip = false});
        auto count_states = [](const Env& env) {
            std::size_t states = 0;
            Rng local(11);
            EnvState s = env.initial_state(local);
            while (env.status(s) == TerminalStatus::Running) {
                ++states;
                s = env.step(s, env.legal_actions(s).front(), local).next;
            }
            return states;
        };
        CHECK(count_states(skip) < count_states(tick));
    }
}

TEST_CASE("decomposed action space") {
    Rng rng(13);
    const auto enc = encode_job_shop(toys::two_machine_chain());
    Env env(enc.instance, PerformanceMeasure::makespan(), {.decompose = true});
    const EnvState x0 = env.initial_state(rng);

    SECTION("phase 1 offers at most |T| + 1 actions") {
        const auto actions = env.legal_actions(x0);
        CHECK(static_cast<std::int64_t>(actions.size()) <= enc.instance.task_count() + 1);
        for (const auto& a : actions) CHECK(a.kind == ControlAction::Kind::SelectTask);
    }
    SECTION("select_task then select_resource equals assign") {
        Env flat(enc.instance, PerformanceMeasure::makespan());
        const OperationId head = enc.job_tasks[0][0];
        Rng r1(101), r2(101);
        const auto direct = flat.step(x0, ControlAction::assign(head, 0), r1);
        auto mid = env.step(x0, ControlAction::select_task(head), r2);
        CHECK(mid.cost == 0.0);
        CHECK(mid.next.pending_task == head);
        const auto via = env.step(mid.next, ControlAction::select_resource(0), r2);
        CHECK(via.next == direct.next);
        CHECK(via.cost == direct.cost);
    }
    SECTION("flat vs decomposed action counts on a 10-task / 4-resource instance") {
        InstanceBuilder b;
        std::vector<StateId> states;
        for (int i = 0; i < 4; ++i) {
            const ResourceId r = b.add_resource();
            states.push_back(b.add_state());
            b.set_initial(r, StateDist::point(states.back()));
        }
        for (int t = 0; t < 10; ++t) {
            const OperationId op = b.add_operation(true);
            for (StateId s : states) {
                b.set_duration(s, op, DurationDist::point(2));
                b.set_effect(s, op, StateDist::point(s));
            }
        }
        const Instance inst = b.build();
        REQUIRE(validate(inst).ok());
        Env flat(inst, PerformanceMeasure::makespan());
        Env deco(inst, PerformanceMeasure::makespan(), {.decompose = true});
        Rng r3(5);
        const EnvState s0 = flat.initial_state(r3);
        CHECK(flat.legal_actions(s0).size() == 40);  // |T| * |R|
        CHECK(deco.legal_actions(s0).size() == 10);  // |T|
        const auto mid = deco.step(s0, ControlAction::select_task(0), r3);
        CHECK(deco.legal_actions(mid.next).size() == 4);  // |R|
    }
}

TEST_CASE("acyclicity and replay invariants") {
    Rng rng(21);
    const auto enc = encode_job_shop(toys::two_machine_chain());
    Env env(enc.instance, PerformanceMeasure::makespan());

    for (int episode = 0; episode < 200; ++episode) {
        std::unordered_set<EnvState, EnvStateHash> seen;
        std::vector<ControlAction> actions_taken;
        Rng replay_rng = rng;
        EnvState s = env.initial_state(rng);
        std::int64_t monotone = s.now + s.started_operation_count();
        double total = 0.0;
        while (env.status(s) == TerminalStatus::Running) {
            REQUIRE(seen.insert(s).second);
            const auto actions = env.legal_actions(s);
            const auto& choice = actions[rng() % actions.size()];
            actions_taken.push_back(choice);
            const auto out = env.step(s, choice, rng);
            total += out.cost;
            s = out.next;
            const std::int64_t q = s.now + s.started_operation_count();
            CHECK(q >= monotone);  // τ + |started| never decreases
            monotone = q;
        }
        REQUIRE(env.status(s) == TerminalStatus::Success);
        CHECK(total == s.perf);

        EnvState fresh = env.initial_state(replay_rng);
        const Schedule sched = replay_episode(env, fresh, actions_taken, replay_rng);
        const auto verdict = check_feasibility(enc.instance, sched);
        for (const auto& v : verdict.violations) INFO(v.detail);
        CHECK(verdict.feasible);
        CHECK(evaluate_measure(PerformanceMeasure::makespan(), enc.instance, sched) == s.perf);
    }
}

TEST_CASE("non-task operation cap bounds repetitions") {
    // A self-looping non-task op can be restarted until the episode cap.
    InstanceBuilder builder;
    const ResourceId res = builder.add_resource();
    const StateId st = builder.add_state();
    builder.set_initial(res, StateDist::point(st));
    const OperationId task = builder.add_operation(true);
    const OperationId idle_run = builder.add_operation(false);
    builder.set_duration(st, task, DurationDist::point(2));
    builder.set_effect(st, task, StateDist::point(st));
    builder.set_duration(st, idle_run, DurationDist::point(1));
    builder.set_effect(st, idle_run, StateDist::point(st));
    builder.set_non_task_cap(3);
    const Instance inst = builder.build();
    Env env(inst, PerformanceMeasure::makespan());
    Rng rng(2);
    EnvState s = env.initial_state(rng);
    int warmups = 0;
    // Repeatedly re-run the setup op; past the cap it stops being offered.
    while (true) {
        const auto actions = env.legal_actions(s);
        ControlAction warmup{};
        bool found = false;
        for (const auto& a : actions)
            if (a.kind == ControlAction::Kind::Assign && !inst.is_task(a.op)) {
                warmup = a;
                found = true;
            }
        if (!found) break;
        s = env.step(s, warmup, rng).next;
        ++warmups;
        s = env.step(s, ControlAction::wait(), rng).next;
        REQUIRE(warmups <= inst.non_task_cap());
    }
    CHECK(warmups == inst.non_task_cap());
    CHECK(env.status(s) == TerminalStatus::Running);  // the task is still startable
}

TEST_CASE("failure penalty is charged on entering a failure state") {
    // The task needs the hot state, but warming up ruins the resource and
    // the non-task cap is 1: after one wasted warmup the episode is dead.
    InstanceBuilder b;
    const ResourceId r = b.add_resource();
    const StateId cold = b.add_state();
    const StateId hot = b.add_state();
    const StateId spent = b.add_state();
    b.set_initial(r, StateDist::point(cold));
    const OperationId t_hot = b.add_operation(true);
    const OperationId warmup = b.add_operation(false);
    b.set_duration(cold, warmup, DurationDist::point(1));
    b.set_effect(cold, warmup, StateDist::point(spent));
    b.set_duration(hot, t_hot, DurationDist::point(1));
    b.set_effect(hot, t_hot, StateDist::point(hot));
    b.set_non_task_cap(1);
    const Instance inst = b.build();
    Env env(inst, PerformanceMeasure::makespan());
    Rng rng(4);
    EnvState s = env.initial_state(rng);
    s = env.step(s, ControlAction::assign(warmup, r), rng).next;
    const auto out = env.step(s, ControlAction::wait(), rng);
    CHECK(env.status(out.next) == TerminalStatus::Failure);
    CHECK(out.cost >= env.failure_penalty());
}
