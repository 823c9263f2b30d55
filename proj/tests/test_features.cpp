#include <catch2/catch_amalgamated.hpp>

#include "rapcontrol/features.hpp"

#include "support/toys.hpp"

using namespace rap;

namespace {

/// |R| = 2, |T| = 3 instance for the component-count checks.
Instance two_by_three() {
    InstanceBuilder b;
    const ResourceId r0 = b.add_resource();
    const ResourceId r1 = b.add_resource();
    const StateId s0 = b.add_state();
    const StateId s1 = b.add_state();
    b.set_initial(r0, StateDist::point(s0));
    b.set_initial(r1, StateDist::point(s1));
    for (int i = 0; i < 3; ++i) {
        const OperationId t = b.add_operation(true);
        for (StateId s : {s0, s1}) {
            b.set_duration(s, t, DurationDist::point(2 + i));
            b.set_effect(s, t, StateDist::point(s));
        }
    }
    return b.build();
}

}  // namespace

TEST_CASE("packed model-free layout has 3|R| + |T| + 2 components") {
    const Instance inst = two_by_three();
    const auto schema = FeatureSchema::build(inst);
    CHECK(schema.dimension() == 3 * 2 + 3 + 2);
    const auto one_hot = FeatureSchema::build(inst, {.one_hot = true});
    CHECK(one_hot.dimension() == 3 * 2 + 4 * 3 + 2);
}

TEST_CASE("extraction conventions") {
    const Instance inst = two_by_three();
    const auto schema = FeatureSchema::build(inst);
    Env env(inst, PerformanceMeasure::makespan());
    Rng rng(3);
    const EnvState x0 = env.initial_state(rng);

    SECTION("idle resources use the idle token and zero relative time") {
        const auto v = extract(x0, ControlAction::assign(0, 0), inst, schema);
        CHECK(v[1] == 0);  // executing component, idle
        CHECK(v[2] == 0);  // relative start
        CHECK(v[4] == 0);
        CHECK(v[5] == 0);
    }
    SECTION("action components encode op and resource") {
        const auto v = extract(x0, ControlAction::assign(2, 1), inst, schema);
        CHECK(v[schema.dimension() - 2] == 2 + 1);
        CHECK(v[schema.dimension() - 1] == 1 + 1);
        const auto w = extract(x0, ControlAction::wait(), inst, schema);
        CHECK(w[schema.dimension() - 2] == 0);
        CHECK(w[schema.dimension() - 1] == 0);
    }
    SECTION("temporal components are relative: shifting absolute time changes nothing") {
        EnvState busy = x0;
        busy.now = 5;
        busy.resources[0] = {0, 1, 3};  // op 1 started at 3, elapsed 2
        const auto v = extract(busy, ControlAction::wait(), inst, schema);
        EnvState shifted = busy;
        shifted.now += 10;
        shifted.resources[0].started_at += 10;
        const auto w = extract(shifted, ControlAction::wait(), inst, schema);
        CHECK(v == w);
        CHECK(v[2] == 2);
    }
    SECTION("extraction is a pure function") {
        const auto a = extract(x0, ControlAction::assign(1, 0), inst, schema);
        const auto b = extract(x0, ControlAction::assign(1, 0), inst, schema);
        CHECK(a == b);
    }
    SECTION("task codes: ready / processing / finished / not-available") {
        InstanceBuilder b;
        const ResourceId r = b.add_resource();
        const StateId s = b.add_state();
        b.set_initial(r, StateDist::point(s));
        const OperationId u = b.add_operation(true);
        const OperationId v2 = b.add_operation(true);
        for (OperationId t : {u, v2}) {
            b.set_duration(s, t, DurationDist::point(2));
            b.set_effect(s, t, StateDist::point(s));
        }
        b.add_precedence(u, v2);
        const Instance chain = b.build();
        const auto sc = FeatureSchema::build(chain);
        Env cenv(chain, PerformanceMeasure::makespan());
        Rng r2(1);
        EnvState st = cenv.initial_state(r2);
        auto codes = [&](const EnvState& es) {
            const auto vec = extract(es, ControlAction::wait(), chain, sc);
            return std::pair<std::int32_t, std::int32_t>{vec[3], vec[4]};
        };
        CHECK(codes(st) == std::pair<std::int32_t, std::int32_t>{kTaskReady, kTaskNotAvailable});
        st = cenv.step(st, ControlAction::assign(u, r), r2).next;
        CHECK(codes(st) == std::pair<std::int32_t, std::int32_t>{kTaskProcessing, kTaskNotAvailable});
        st = cenv.step(st, ControlAction::wait(), r2).next;
        CHECK(codes(st) == std::pair<std::int32_t, std::int32_t>{kTaskFinished, kTaskReady});
    }
    SECTION("one-hot task block has exactly one 1 per task") {
        const auto schema1 = FeatureSchema::build(inst, {.one_hot = true});
        const auto v = extract(x0, ControlAction::assign(0, 0), inst, schema1);
        for (int task = 0; task < 3; ++task) {
            int ones = 0;
            for (int phase = 0; phase < 4; ++phase)
                ones += v[static_cast<std::size_t>(6 + task * 4 + phase)];
            CHECK(ones == 1);
        }
    }
    SECTION("distinct pairs yield distinct packed vectors") {
        std::vector<FeatureVector> vectors;
        for (const auto& a : env.legal_actions(x0)) vectors.push_back(extract(x0, a, inst, schema));
        for (std::size_t i = 0; i < vectors.size(); ++i)
            for (std::size_t j = i + 1; j < vectors.size(); ++j) CHECK(vectors[i] != vectors[j]);
    }
}

TEST_CASE("normalization") {
    const std::vector<std::pair<double, double>> bounds = {{0, 10}, {0, 10}, {5, 5}};

    SECTION("bounds map to the unit interval, degenerate components to 0") {
        const FeatureVector v = {0, 10, 5};
        const auto n = normalize(v, bounds);
        CHECK(n[0] == 0.0);
        CHECK(n[1] == 1.0);
        CHECK(n[2] == 0.0);
    }
    SECTION("values outside the bounds are clamped") {
        const FeatureVector v = {-3, 14, 5};
        const auto n = normalize(v, bounds);
        CHECK(n[0] == 0.0);
        CHECK(n[1] == 1.0);
    }
    SECTION("idempotent on already-normalized values with unit bounds") {
        const std::vector<double> v = {0.0, 0.25, 1.0};
        const std::vector<std::pair<double, double>> unit = {{0, 1}, {0, 1}, {0, 1}};
        const auto n = normalize(v, unit);
        CHECK(n == v);
    }
}

TEST_CASE("masked state fingerprints ignore masked tasks") {
    const Instance inst = toys::stochastic_toy();
    const auto schema = FeatureSchema::build(inst);
    Env env(inst, PerformanceMeasure::makespan());
    Rng rng(8);
    const EnvState x0 = env.initial_state(rng);

    EnvState without_task1 = x0;
    without_task1.clear_task(1);

    std::vector<char> mask(static_cast<std::size_t>(inst.operation_count()), 0);
    mask[1] = 1;
    CHECK(masked_state_fingerprint(x0, inst, schema, mask) ==
          masked_state_fingerprint(without_task1, inst, schema, mask));
    CHECK(masked_state_fingerprint(x0, inst, schema, {}) !=
          masked_state_fingerprint(without_task1, inst, schema, {}));
}

TEST_CASE("schema headroom keeps existing digit positions stable") {
    const Instance inst = two_by_three();
    const auto exact = FeatureSchema::build(inst);
    const auto padded = FeatureSchema::build(inst, {.max_resources = 3, .max_tasks = 5});
    CHECK(padded.dimension() == 3 * 3 + 5 + 2);
    Env env(inst, PerformanceMeasure::makespan());
    Rng rng(5);
    const EnvState x0 = env.initial_state(rng);
    const auto v = extract(x0, ControlAction::assign(0, 0), inst, padded);
    // Real resources occupy the leading blocks; the padding block is zeroed
    // and absent task slots read as finished.
    const auto w = extract(x0, ControlAction::assign(0, 0), inst, exact);
    CHECK(std::equal(w.begin(), w.begin() + 6, v.begin()));
    CHECK(v[6] == 0);
    CHECK(v[7] == 0);
    CHECK(v[8] == 0);
    CHECK(v[12] == kTaskFinished);
    CHECK(v[13] == kTaskFinished);
}
