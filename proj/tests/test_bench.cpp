#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "rapcontrol/disturbance.hpp"
#include "rapcontrol/experiment.hpp"
#include "rapcontrol/fjs.hpp"
#include "rapcontrol/generator.hpp"
#include "rapcontrol/serialize.hpp"

#include "support/mdp_oracle.hpp"
#include "support/toys.hpp"

using namespace rap;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const std::string kDataDir = RAP_TEST_DATA_DIR;

}  // namespace

TEST_CASE("fjs parsing") {
    SECTION("minimal documented example") {
        const auto file = parse_fjs("1 2\n2 1 1 3 1 2 5\n");
        CHECK(file.job_count == 1);
        CHECK(file.machine_count == 2);
        REQUIRE(file.spec.jobs.size() == 1);
        REQUIRE(file.spec.jobs[0].ops.size() == 2);
        CHECK(file.spec.jobs[0].ops[0].alternatives ==
              std::vector<std::pair<std::int32_t, std::int64_t>>{{0, 3}});
        CHECK(file.spec.jobs[0].ops[1].alternatives ==
              std::vector<std::pair<std::int32_t, std::int64_t>>{{1, 5}});
    }
    SECTION("bundled mt06: 6 jobs, 6 machines, 36 operations, flexibility 1") {
        const auto file = parse_fjs(read_file(kDataDir + "/mt06.fjs"));
        CHECK(file.job_count == 6);
        CHECK(file.machine_count == 6);
        CHECK(file.operation_count() == 36);
        CHECK(file.average_flexibility() == 1.0);
        const auto bundle = to_problem(file, "mt06");
        CHECK(bundle.instance.resource_count() == 6);
        CHECK(bundle.instance.task_count() == 36);
        CHECK(validate(bundle.instance).ok());
    }
    SECTION("empty input is a parse error") {
        CHECK_THROWS_AS(parse_fjs(""), ParseError);
        CHECK_THROWS_AS(parse_fjs("\n\n"), ParseError);
    }
    SECTION("malformed lines carry line numbers") {
        try {
            parse_fjs("2 3\n1 1 1 2\nbroken\n");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line_number >= 2);
        }
    }
    SECTION("out-of-range machine index") {
        CHECK_THROWS_AS(parse_fjs("1 2\n1 1 3 4\n"), ParseError);
    }
    SECTION("round trip through the canonical writer") {
        const std::string text = read_file(kDataDir + "/mt06.fjs");
        const auto file = parse_fjs(text);
        const auto again = parse_fjs(write_fjs(file));
        CHECK(again.job_count == file.job_count);
        CHECK(again.machine_count == file.machine_count);
        REQUIRE(again.spec.jobs.size() == file.spec.jobs.size());
        for (std::size_t j = 0; j < file.spec.jobs.size(); ++j) {
            REQUIRE(again.spec.jobs[j].ops.size() == file.spec.jobs[j].ops.size());
            for (std::size_t o = 0; o < file.spec.jobs[j].ops.size(); ++o)
                CHECK(again.spec.jobs[j].ops[o].alternatives ==
                      file.spec.jobs[j].ops[o].alternatives);
        }
        CHECK(write_fjs(again) == write_fjs(file));
    }
}

TEST_CASE("problem serialization round trip") {
    GeneratorSpec spec;
    spec.machines = 3;
    spec.jobs = 5;
    spec.setup_times = true;
    spec.product_types = 2;
    spec.cooling_tasks = true;
    spec.target_slack = 0.2;
    spec.seed = 11;
    const auto generated = generate_instance(spec);
    const std::string text = write_problem_string(generated.bundle);
    const auto loaded = read_problem_string(text);
    CHECK(write_problem_string(loaded) == text);  // canonical re-serialization equality
    CHECK(loaded.instance.resource_count() == generated.bundle.instance.resource_count());
    CHECK(loaded.instance.task_count() == generated.bundle.instance.task_count());
    CHECK(loaded.known_optimum == 0.0);
    CHECK(loaded.jobs.size() == generated.bundle.jobs.size());
    CHECK(validate(loaded.instance).ok());
}

TEST_CASE("slack ratio") {
    SECTION("single job") {
        std::vector<JobInfo> jobs(1);
        jobs[0].release = 0;
        jobs[0].due = 10;
        CHECK(slack_ratio({8}, jobs) == Catch::Approx(0.2));
    }
    SECTION("just-in-time jobs have zero slack") {
        std::vector<JobInfo> jobs(2);
        jobs[0] = {0, 10, {}};
        jobs[1] = {5, 20, {}};
        CHECK(slack_ratio({10, 20}, jobs) == Catch::Approx(0.0));
    }
    SECTION("mean of mixed ratios") {
        std::vector<JobInfo> jobs(2);
        jobs[0] = {0, 10, {}};   // finish 6 -> 0.4
        jobs[1] = {0, 10, {}};   // finish 12 -> -0.2
        CHECK(slack_ratio({6, 12}, jobs) == Catch::Approx(0.1));
    }
    SECTION("due equal to release is an error") {
        std::vector<JobInfo> jobs(1);
        jobs[0] = {5, 5, {}};
        CHECK_THROWS_AS(slack_ratio({5}, jobs), std::invalid_argument);
    }
}

TEST_CASE("error statistics") {
    SECTION("worked example") {
        const auto s = error_stats({10.0, 12.0}, 10.0);
        CHECK(s.mean_error == Catch::Approx(1.0));
        CHECK(s.std_dev == Catch::Approx(1.0));
        CHECK(s.relative_pct == Catch::Approx(10.0));
    }
    SECTION("all-optimal sample") {
        const auto s = error_stats({7.0, 7.0, 7.0}, 7.0);
        CHECK(s.mean_error == 0.0);
        CHECK(s.std_dev == 0.0);
    }
    SECTION("single run has zero population deviation") {
        const auto s = error_stats({9.0}, 5.0);
        CHECK(s.mean_error == 4.0);
        CHECK(s.std_dev == 0.0);
    }
    SECTION("zero optimum reports absolute error") {
        const auto s = error_stats({2.0, 4.0}, 0.0);
        CHECK(s.mean_error == 3.0);
        CHECK(std::isnan(s.relative_pct));
    }
}

TEST_CASE("industry-style generator") {
    SECTION("paper-scale configuration: 16 machines, 100 jobs, slack 10%") {
        GeneratorSpec spec;
        spec.machines = 16;
        spec.jobs = 100;
        spec.target_slack = 0.1;
        spec.seed = 5;
        const auto g = generate_instance(spec);
        CHECK(g.task_count > 200);
        CHECK(g.bundle.known_optimum == 0.0);
        CHECK(std::abs(g.achieved_slack - 0.1) <= 0.01);
        CHECK(check_feasibility(g.bundle.instance, g.reference).feasible);
        CHECK(validate(g.bundle.instance).ok());
        const auto finish = job_finish_times(g.bundle, g.reference);
        for (std::size_t j = 0; j < g.bundle.jobs.size(); ++j)
            CHECK(finish[j] <= g.bundle.jobs[j].due);  // zero late jobs
    }
    SECTION("deterministic for a fixed seed") {
        GeneratorSpec spec;
        spec.machines = 4;
        spec.jobs = 8;
        spec.seed = 42;
        const auto a = generate_instance(spec);
        const auto b = generate_instance(spec);
        CHECK(write_problem_string(a.bundle) == write_problem_string(b.bundle));
    }
    SECTION("setups, cooling and preemption splitting") {
        GeneratorSpec spec;
        spec.machines = 4;
        spec.jobs = 10;
        spec.min_duration = 9;
        spec.max_duration = 30;
        spec.setup_times = true;
        spec.product_types = 3;
        spec.cooling_tasks = true;
        spec.cooling_probability = 0.5;
        spec.preemption_period = 12;
        spec.target_slack = 0.2;
        spec.seed = 9;
        const auto g = generate_instance(spec);
        CHECK(g.setup_operation_count > 0);
        CHECK(g.cooling_task_count > 0);
        CHECK(g.preemption_splits > 0);
        CHECK(check_feasibility(g.bundle.instance, g.reference).feasible);
        CHECK(validate(g.bundle.instance).ok());
        CHECK(std::abs(g.achieved_slack - 0.2) <= 0.01);
        // cooling tasks have dedicated resources beyond the machines
        CHECK(g.bundle.instance.resource_count() == 4 + g.cooling_task_count);
    }
    SECTION("stochastic durations keep J* = 0 via worst-case dues") {
        GeneratorSpec spec;
        spec.machines = 3;
        spec.jobs = 6;
        spec.duration_spread = 0.3;
        spec.target_slack = 0.1;
        spec.seed = 3;
        const auto g = generate_instance(spec);
        CHECK_FALSE(g.bundle.instance.deterministic());
        CHECK(check_feasibility(g.bundle.instance, g.reference).feasible);
        const auto finish = job_finish_times(g.bundle, g.reference);
        for (std::size_t j = 0; j < g.bundle.jobs.size(); ++j)
            CHECK(finish[j] <= g.bundle.jobs[j].due);
    }
    SECTION("negative slack targets cannot promise zero late jobs") {
        GeneratorSpec spec;
        spec.target_slack = -0.2;
        CHECK_THROWS_AS(generate_instance(spec), GenerationError);
    }
}

TEST_CASE("benchmark generator with known optimum") {
    BenchmarkSpec spec;
    spec.machines = 5;
    spec.jobs = 5;
    spec.ops_per_job = 5;
    spec.extra_alternative_fraction = 0.15;
    spec.seed = 77;
    const auto g = generate_benchmark(spec);

    SECTION("critical machine load equals the optimum") {
        std::int64_t load = 0;
        for (const auto& job : g.spec.jobs)
            for (const auto& op : job.ops)
                if (op.alternatives.size() == 1 && op.alternatives[0].first == g.critical_machine)
                    load += op.alternatives[0].second;
        CHECK(load == g.optimum);
    }
    SECTION("flexibility lands near the requested fraction") {
        CHECK(g.flexibility >= 1.0);
        CHECK(g.flexibility <= 1.3);
    }
    SECTION("no alternatives on the critical machine's operations") {
        for (const auto& job : g.spec.jobs)
            for (const auto& op : job.ops)
                if (op.alternatives.front().first == g.critical_machine)
                    CHECK(op.alternatives.size() == 1);
    }
    SECTION("encodes and validates") {
        const auto enc = encode_job_shop(g.spec);
        CHECK(validate(enc.instance).ok());
    }
}

TEST_CASE("disturbances") {
    const auto enc = encode_job_shop(toys::two_machine_chain());
    ProblemBundle bundle;
    bundle.instance = enc.instance;
    bundle.measure = PerformanceMeasure::makespan();
    for (const auto& chain : enc.job_tasks) {
        JobInfo job;
        job.tasks = chain;
        bundle.jobs.push_back(job);
    }

    SECTION("breakdown removes all availability of the resource") {
        DisturbanceEvent event;
        event.kind = DisturbanceEvent::Kind::ResourceBreakdown;
        event.resource = 0;
        const auto disturbed = apply_disturbance(bundle, event);
        CHECK_FALSE(disturbed.warnings.empty());  // machine-0 tasks are now dead
        Rng rng(1);
        Env env(disturbed.bundle.instance, disturbed.bundle.measure);
        const EnvState x0 = env.initial_state(rng);
        for (const auto& a : env.legal_actions(x0)) CHECK(a.resource != 0);
        CHECK(env.status(x0) == TerminalStatus::Failure);
    }
    SECTION("new resource cannot worsen the optimum") {
        DisturbanceEvent event;
        event.kind = DisturbanceEvent::Kind::NewResource;
        event.resource = 0;  // clone machine 0
        const auto disturbed = apply_disturbance(bundle, event);
        CHECK(disturbed.bundle.instance.resource_count() == 3);
        Env before_env(bundle.instance, bundle.measure);
        Env after_env(disturbed.bundle.instance, disturbed.bundle.measure);
        mdp_oracle::ExactSolver before(bundle.instance, before_env.failure_penalty(), false);
        mdp_oracle::ExactSolver after(disturbed.bundle.instance, after_env.failure_penalty(), false);
        CHECK(after.optimal_value() <= before.optimal_value());
    }
    SECTION("cancellation removes the job's unfinished tasks") {
        DisturbanceEvent event;
        event.kind = DisturbanceEvent::Kind::JobCancellation;
        event.job = 0;
        const auto disturbed = apply_disturbance(bundle, event);
        CHECK(disturbed.bundle.instance.task_count() == 2);
        Rng rng(2);
        Env env(disturbed.bundle.instance, disturbed.bundle.measure);
        EnvState s = env.initial_state(rng);
        CHECK(s.unfinished_count == 2);
        for (const auto& a : env.legal_actions(s))
            if (a.kind == ControlAction::Kind::Assign)
                CHECK(a.op == enc.job_tasks[1][0]);
    }
    SECTION("cancelling a nonexistent job is a warned no-op") {
        DisturbanceEvent event;
        event.kind = DisturbanceEvent::Kind::JobCancellation;
        event.job = 99;
        const auto disturbed = apply_disturbance(bundle, event);
        CHECK_FALSE(disturbed.warnings.empty());
        CHECK(disturbed.bundle.instance.task_count() == bundle.instance.task_count());
    }
    SECTION("new job appends tasks and precedence") {
        DisturbanceEvent event;
        event.kind = DisturbanceEvent::Kind::NewJob;
        event.new_job.ops = {{{0, 3}}, {{1, 2}}};
        event.new_job.due = 50;
        bundle.measure = PerformanceMeasure::late_job_count(
            std::vector<std::int32_t>(static_cast<std::size_t>(bundle.instance.operation_count()),
                                      -1),
            {}, {});
        const auto disturbed = apply_disturbance(bundle, event);
        CHECK(disturbed.bundle.instance.task_count() == 6);
        CHECK(disturbed.bundle.jobs.size() == 3);
        CHECK(validate(disturbed.bundle.instance).ok());
    }
}

TEST_CASE("config parsing") {
    const auto cfg = KvConfig::parse("protocol = benchmark\nseeds=3\n# comment\nslack = 0.25\n");
    CHECK(cfg.get("protocol") == "benchmark");
    CHECK(cfg.get_int("seeds", 0) == 3);
    CHECK(cfg.get_double("slack", 0) == Catch::Approx(0.25));
    CHECK(cfg.get("missing", "x") == "x");
    CHECK_THROWS_AS(KvConfig::parse("novalue\n"), ParseError);
    CHECK_THROWS_AS(KvConfig::parse("a=b\n").get_int("a", 0), ConfigError);
}

TEST_CASE("experiment orchestration smoke") {
    const std::string out_dir = "/tmp/rap_bench_test";
    std::filesystem::remove_all(out_dir);

    SECTION("benchmark protocol emits per-seed and checkpoint CSVs") {
        KvConfig cfg;
        cfg.values["protocol"] = "benchmark";
        cfg.values["data"] = kDataDir + "/mt06.fjs";
        cfg.values["name"] = "sdata_mt06";
        cfg.values["seeds"] = "2";
        cfg.values["episodes"] = "60";
        cfg.values["rollout_warmup"] = "5";
        cfg.values["checkpoints"] = "30,60";
        const auto result = run_experiment(cfg, out_dir);
        CHECK(result.metrics.count("median_final_error_pct") == 1);
        std::ifstream seeds_csv(out_dir + "/benchmark_seeds.csv");
        REQUIRE(seeds_csv);
        std::string line;
        int rows = 0;
        while (std::getline(seeds_csv, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 3);  // header + one row per seed
        CHECK(std::filesystem::exists(out_dir + "/benchmark_checkpoints.csv"));
        CHECK(std::filesystem::exists(out_dir + "/run-metadata.json"));
    }
    SECTION("unknown protocol and missing dataset are config errors") {
        KvConfig cfg;
        cfg.values["protocol"] = "nonsense";
        CHECK_THROWS_AS(run_experiment(cfg, out_dir), ConfigError);
        KvConfig cfg2;
        cfg2.values["protocol"] = "benchmark";
        cfg2.values["data"] = "/nonexistent/path.fjs";
        CHECK_THROWS_AS(run_experiment(cfg2, out_dir), ConfigError);
    }
    SECTION("disturbance protocol runs paired arms") {
        KvConfig cfg;
        cfg.values["protocol"] = "disturbance";
        cfg.values["trials"] = "2";
        cfg.values["trigger"] = "10";
        cfg.values["post_episodes"] = "10";
        cfg.values["machines"] = "3";
        cfg.values["jobs"] = "3";
        cfg.values["ops_per_job"] = "3";
        cfg.values["rollout_warmup"] = "2";
        const auto result = run_experiment(cfg, out_dir);
        CHECK(result.metrics.count("continue_win_fraction") == 1);
        CHECK(std::filesystem::exists(out_dir + "/disturbance.csv"));
    }
}
