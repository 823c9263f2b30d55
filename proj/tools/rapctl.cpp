// Command-line front end: benchmark runs, instance generation, clustering
// and speedup sweeps, disturbance experiments, and instance validation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rapcontrol/rap.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

struct GlobalFlags {
    std::string config_file;
    std::string out_dir = "out";
    std::int64_t seed = -1;
    std::int64_t episodes = -1;
    std::string store;
    bool decompose = false;
    bool no_decompose = false;
    std::int64_t rollout_warmup = -1;
    std::int64_t workers = -1;
    std::string mode;
};

rap::KvConfig merge_config(const GlobalFlags& flags, rap::KvConfig cfg) {
    if (!flags.config_file.empty()) {
        auto file_cfg = rap::KvConfig::parse_file(flags.config_file);
        for (auto& [k, v] : cfg.values) file_cfg.values[k] = v;  // CLI overrides the file
        cfg = std::move(file_cfg);
    }
    if (flags.seed >= 0) cfg.values["seed"] = std::to_string(flags.seed);
    if (flags.episodes >= 0) cfg.values["episodes"] = std::to_string(flags.episodes);
    if (!flags.store.empty()) cfg.values["store"] = flags.store;
    if (flags.decompose) cfg.values["decompose"] = "1";
    if (flags.no_decompose) cfg.values["decompose"] = "0";
    if (flags.rollout_warmup >= 0) cfg.values["rollout_warmup"] = std::to_string(flags.rollout_warmup);
    if (flags.workers >= 0) cfg.values["workers"] = std::to_string(flags.workers);
    if (!flags.mode.empty()) cfg.values["mode"] = flags.mode;
    return cfg;
}

int run_protocol(const GlobalFlags& flags, rap::KvConfig cfg) {
    cfg = merge_config(flags, std::move(cfg));
    const auto result = rap::run_experiment(cfg, flags.out_dir);
    std::cout << result.summary;
    for (const auto& file : result.files) std::cout << "wrote " << file << '\n';
    return kExitOk;
}

int validate_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "cannot open " << path << '\n';
        return kExitConfig;
    }
    std::ostringstream os;
    os << in.rdbuf();
    const std::string text = os.str();

    rap::ValidationReport report;
    if (path.size() > 4 && path.substr(path.size() - 4) == ".fjs") {
        const auto file = rap::parse_fjs(text);
        const auto bundle = rap::to_problem(file);
        report = rap::validate(bundle.instance);
        std::cout << path << ": " << file.job_count << " jobs, " << file.machine_count
                  << " machines, " << file.operation_count() << " operations, flexibility "
                  << file.average_flexibility() << '\n';
    } else {
        const auto bundle = rap::read_problem_string(text);
        report = rap::validate(bundle.instance);
        std::cout << path << ": " << bundle.instance.resource_count() << " resources, "
                  << bundle.instance.state_count() << " states, "
                  << bundle.instance.operation_count() << " operations ("
                  << bundle.instance.task_count() << " tasks)\n";
    }
    if (report.ok()) {
        std::cout << "instance is valid\n";
        return kExitOk;
    }
    for (const auto& v : report.violations) std::cout << "violation: " << v.message << '\n';
    return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic resource allocation control: learning and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags flags;
    app.add_option("--config", flags.config_file, "key=value experiment config file");
    app.add_option("--out", flags.out_dir, "output directory for CSV files");
    app.add_option("--seed", flags.seed, "base random seed");
    app.add_option("--episodes", flags.episodes, "episode budget");
    app.add_option("--store", flags.store, "value store backend: hash | svr");
    app.add_flag("--decompose", flags.decompose, "enable action-space decomposition");
    app.add_flag("--no-decompose", flags.no_decompose, "disable action-space decomposition");
    app.add_option("--rollout-warmup", flags.rollout_warmup, "rollout-driven warm-start episodes");
    app.add_option("--workers", flags.workers, "worker count for parallel sampling");
    app.add_option("--mode", flags.mode, "parallel mode: shared | distributed");

    auto* bench = app.add_subcommand("bench", "train on a benchmark .fjs instance across seeds");
    std::string bench_data, bench_optima, bench_name;
    std::int64_t bench_seeds = 20;
    double bench_jstar = std::numeric_limits<double>::quiet_NaN();
    bench->add_option("--data", bench_data, "path to the .fjs instance")->required();
    bench->add_option("--seeds", bench_seeds, "number of seeded runs");
    bench->add_option("--optima", bench_optima, "optima table file (name lower upper)");
    bench->add_option("--name", bench_name, "instance name for the optima lookup");
    bench->add_option("--jstar", bench_jstar, "known optimum override");

    auto* generate = app.add_subcommand("generate", "emit generator instances with known optimum");
    std::int64_t gen_machines = 16, gen_jobs = 100, gen_count = 1;
    double gen_slack = 0.1;
    bool gen_setups = false, gen_cooling = false;
    std::int64_t gen_preemption = 0;
    generate->add_option("--machines", gen_machines, "machine count");
    generate->add_option("--jobs", gen_jobs, "job count");
    generate->add_option("--slack", gen_slack, "target optimal slack ratio");
    generate->add_option("--count", gen_count, "instances to generate");
    generate->add_flag("--setups", gen_setups, "product-type setup times");
    generate->add_flag("--cooling", gen_cooling, "no-resource cooling tasks");
    generate->add_option("--preemption-period", gen_preemption, "task split period (0 = off)");

    auto* cluster = app.add_subcommand("cluster-sweep", "sweep cluster counts on a generated instance");
    std::string cluster_counts = "1,5,10,20,30,40,50";
    std::int64_t cluster_jobs = 80, cluster_machines = 12;
    cluster->add_option("--clusters", cluster_counts, "comma-separated cluster counts");
    cluster->add_option("--jobs", cluster_jobs, "job count of the generated instance");
    cluster->add_option("--machines", cluster_machines, "machine count");

    auto* speedup = app.add_subcommand("speedup", "shared/distributed sampling speedup");
    std::string speedup_data, speedup_workers = "1,4";
    double speedup_threshold = 0.05, speedup_jstar = std::numeric_limits<double>::quiet_NaN();
    speedup->add_option("--data", speedup_data, "path to the .fjs instance")->required();
    speedup->add_option("--worker-counts", speedup_workers, "comma-separated worker counts");
    speedup->add_option("--threshold", speedup_threshold, "relative error stop threshold");
    speedup->add_option("--jstar", speedup_jstar, "known optimum override");

    auto* disturb = app.add_subcommand("disturb", "paired continue/restart disturbance runs");
    std::string disturb_kind = "breakdown";
    std::int64_t disturb_trials = 20, disturb_trigger = 100, disturb_post = 200;
    disturb->add_option("--kind", disturb_kind, "breakdown | new-resource | cancel");
    disturb->add_option("--trials", disturb_trials, "paired trials");
    disturb->add_option("--trigger", disturb_trigger, "trigger episode");
    disturb->add_option("--post-episodes", disturb_post, "episodes after the event");

    auto* validate_cmd = app.add_subcommand("validate", "validate an instance file (.fjs or .rap)");
    std::string validate_path;
    validate_cmd->add_option("file", validate_path, "instance file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) {
            rap::KvConfig cfg;
            cfg.values["protocol"] = "benchmark";
            cfg.values["data"] = bench_data;
            cfg.values["seeds"] = std::to_string(bench_seeds);
            if (!bench_optima.empty()) cfg.values["optima"] = bench_optima;
            if (!bench_name.empty()) cfg.values["name"] = bench_name;
            if (!std::isnan(bench_jstar)) cfg.values["jstar"] = std::to_string(bench_jstar);
            return run_protocol(flags, std::move(cfg));
        }
        if (generate->parsed()) {
            rap::KvConfig cfg;
            cfg.values["protocol"] = "generator";
            cfg.values["machines"] = std::to_string(gen_machines);
            cfg.values["jobs"] = std::to_string(gen_jobs);
            cfg.values["slack"] = std::to_string(gen_slack);
            cfg.values["count"] = std::to_string(gen_count);
            cfg.values["setups"] = gen_setups ? "1" : "0";
            cfg.values["cooling"] = gen_cooling ? "1" : "0";
            cfg.values["preemption_period"] = std::to_string(gen_preemption);
            return run_protocol(flags, std::move(cfg));
        }
        if (cluster->parsed()) {
            rap::KvConfig cfg;
            cfg.values["protocol"] = "clustering";
            if (cluster->count("--clusters")) cfg.values["clusters"] = cluster_counts;
            if (cluster->count("--jobs")) cfg.values["jobs"] = std::to_string(cluster_jobs);
            if (cluster->count("--machines")) cfg.values["machines"] = std::to_string(cluster_machines);
            if (!cfg.values.count("clusters") && flags.config_file.empty())
                cfg.values["clusters"] = cluster_counts;
            return run_protocol(flags, std::move(cfg));
        }
        if (speedup->parsed()) {
            rap::KvConfig cfg;
            cfg.values["protocol"] = "speedup";
            cfg.values["data"] = speedup_data;
            cfg.values["workers"] = speedup_workers;
            cfg.values["threshold"] = std::to_string(speedup_threshold);
            if (!std::isnan(speedup_jstar)) cfg.values["jstar"] = std::to_string(speedup_jstar);
            return run_protocol(flags, std::move(cfg));
        }
        if (disturb->parsed()) {
            rap::KvConfig cfg;
            cfg.values["protocol"] = "disturbance";
            cfg.values["kind"] = disturb_kind;
            cfg.values["trials"] = std::to_string(disturb_trials);
            cfg.values["trigger"] = std::to_string(disturb_trigger);
            cfg.values["post_episodes"] = std::to_string(disturb_post);
            return run_protocol(flags, std::move(cfg));
        }
        if (validate_cmd->parsed()) return validate_file(validate_path);
    } catch (const rap::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitParse;
    } catch (const rap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
