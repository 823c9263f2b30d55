#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rapcontrol/clustering.hpp"
#include "rapcontrol/disturbance.hpp"
#include "rapcontrol/fjs.hpp"
#include "rapcontrol/generator.hpp"
#include "rapcontrol/learner.hpp"
#include "rapcontrol/parallel.hpp"
#include "rapcontrol/serialize.hpp"
#include "rapcontrol/svr.hpp"

namespace rap {

struct ErrorStats {
    double mean_error = 0.0;
    double std_dev = 0.0;
    /// Mean error as a percentage of the optimum; NaN when the optimum is 0
    /// (the absolute mean_error is the reported quantity then).
    double relative_pct = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and population standard deviation of G − J* over a sample of
/// episode costs.
inline ErrorStats error_stats(const std::vector<double>& costs, double j_star) {
    if (costs.empty()) throw std::invalid_argument("error_stats: empty sample");
    if (!std::isfinite(j_star)) throw std::invalid_argument("error_stats: J* must be finite");
    ErrorStats out;
    for (double g : costs) out.mean_error += g - j_star;
    out.mean_error /= static_cast<double>(costs.size());
    for (double g : costs) {
        const double d = g - j_star - out.mean_error;
        out.std_dev += d * d;
    }
    out.std_dev = std::sqrt(out.std_dev / static_cast<double>(costs.size()));
    if (j_star > 0.0) out.relative_pct = 100.0 * out.mean_error / j_star;
    return out;
}

/// Comma-separated output with a header row, '.' decimals, UTF-8.
class Csv {
public:
    Csv(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path);
        out_.imbue(std::locale::classic());
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    static std::string num(double v) {
        std::ostringstream os;
        os.imbue(std::locale::classic());
        os << std::setprecision(10) << v;
        return os.str();
    }
    static std::string num(std::int64_t v) { return std::to_string(v); }

private:
    std::ofstream out_;
};

/// Experiment configuration: flat key=value text ('#' comments), merged
/// with command-line overrides by the CLI.
struct KvConfig {
    std::map<std::string, std::string> values;

    static KvConfig parse(const std::string& text) {
        KvConfig cfg;
        std::istringstream is(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(line_no, "expected key=value");
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ParseError(line_no, "empty key");
            cfg.values[key] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        std::ostringstream os;
        os << in.rdbuf();
        return parse(os.str());
    }

    bool has(const std::string& key) const { return values.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            return std::stoll(it->second);
        } catch (...) {
            throw ConfigError("key '" + key + "' is not an integer: " + it->second);
        }
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigError("key '" + key + "' is not a number: " + it->second);
        }
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
        if (it->second == "0" || it->second == "false" || it->second == "no") return false;
        throw ConfigError("key '" + key + "' is not a boolean: " + it->second);
    }
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           std::vector<std::int64_t> fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::vector<std::int64_t> out;
        std::istringstream is(it->second);
        std::string token;
        while (std::getline(is, token, ','))
            if (!token.empty()) out.push_back(std::stoll(token));
        if (out.empty()) throw ConfigError("key '" + key + "' lists no values");
        return out;
    }
};

struct ProtocolResult {
    std::string summary;
    std::map<std::string, double> metrics;
    std::vector<std::string> files;
};

namespace detail_exp {


inline FeatureSchema build_schema(const Instance& inst, const PerformanceMeasure& measure,
                                  SchemaOptions opts = {}) {
    opts.perf_offset = true;
    opts.perf_is_time = measure.composition == PerformanceMeasure::Composition::Max;
    return FeatureSchema::build(inst, opts);
}

/// Discount heuristic: 0.95 for middle-sized problems, 0.99 past 500 tasks.
inline double default_discount(const Instance& inst) {
    return inst.task_count() <= 500 ? 0.95 : 0.99;
}

inline std::unique_ptr<QValueStore> make_store(const std::string& kind, const FeatureSchema& schema,
                                               std::int64_t hash_budget, const KvConfig& cfg) {
    if (kind == "hash") {
        return std::make_unique<HashQTable>(HashQTable::capacity_for_budget(
                                                static_cast<std::uint64_t>(hash_budget)),
                                            schema.radices(), cfg.get_double("q0", 0.0));
    }
    if (kind == "svr") {
        SvrStore::Options opts;
        opts.train.C = cfg.get_double("svr_c", 100.0);
        opts.train.nu = cfg.get_double("svr_nu", 0.5);
        opts.train.shrinking = cfg.get_bool("svr_shrinking", false);
        opts.refit_every = cfg.get_int("svr_refit_every", 25);
        opts.window = cfg.get_int("svr_window", 50000);
        const double sigma = cfg.get_double("svr_sigma", 0.0);
        if (sigma > 0.0) {
            opts.sigma_auto = false;
            opts.train.kernel.sigma = sigma;
        }
        return std::make_unique<SvrStore>(schema.bounds(), opts);
    }
    throw ConfigError("unknown store '" + kind + "' (expected hash or svr)");
}

inline LearnerConfig learner_config(const KvConfig& cfg, const Instance& inst, double j_star) {
    LearnerConfig lc;
    lc.discount = cfg.get_double("discount", default_discount(inst));
    lc.episodes = cfg.get_int("episodes", 5000);
    lc.warmup_episodes = cfg.get_int("rollout_warmup", 50);
    lc.rollout_samples = static_cast<int>(cfg.get_int("rollout_samples", 5));
    lc.temperature.initial = cfg.get_double("tau0", 1.0);
    lc.temperature.decay = cfg.get_double("tau_decay", 0.997);
    lc.temperature.floor = cfg.get_double("tau_floor", 0.035);
    lc.temperature.logarithmic = cfg.get_bool("tau_logarithmic", false);
    lc.learning_rate0 = cfg.get_double("lr0", 1.0);
    lc.learning_rate_exponent = cfg.get_double("lr_exponent", 0.85);
    lc.exploration_margin = cfg.get_double("exploration_margin", 0.1);
    lc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
    lc.known_optimum = j_star;
    const std::string rule = cfg.get("update_rule", "auto");
    if (rule == "auto") lc.update_rule = UpdateRule::Auto;
    else if (rule == "stochastic") lc.update_rule = UpdateRule::Stochastic;
    else if (rule == "min") lc.update_rule = UpdateRule::DeterministicMin;
    else throw ConfigError("unknown update_rule '" + rule + "'");
    return lc;
}

inline void write_metadata(const std::string& out_dir, const KvConfig& cfg,
                           const FeatureSchema& schema, const nlohmann::json& extra) {
    nlohmann::json j;
    j["config"] = nlohmann::json::object();
    for (const auto& [k, v] : cfg.values) j["config"][k] = v;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : schema.components()) comps.push_back({{"name", c.name}, {"radix", c.radix}});
    j["schema"] = {{"dimension", schema.dimension()},
                   {"horizon", schema.horizon()},
                   {"one_hot", schema.one_hot()},
                   {"components", comps}};
    j["extra"] = extra;
    std::ofstream out(out_dir + "/run-metadata.json");
    out << j.dump(2) << '\n';
}

inline ProblemBundle load_fjs_problem(const KvConfig& cfg) {
    const std::string path = cfg.get("data");
    if (path.empty()) throw ConfigError("missing 'data' (path to an .fjs instance)");
    std::ifstream in(path);
    if (!in) throw ConfigError("missing dataset: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    const auto file = parse_fjs(os.str());
    std::string name = cfg.get("name");
    if (name.empty()) {
        name = std::filesystem::path(path).stem().string();
    }
    double j_star = cfg.get_double("jstar", std::numeric_limits<double>::quiet_NaN());
    if (std::isnan(j_star)) {
        OptimaTable table;
        const std::string optima_path = cfg.get("optima");
        if (!optima_path.empty()) {
            std::ifstream opt(optima_path);
            if (!opt) throw ConfigError("cannot open optima table " + optima_path);
            table.load(opt);
        }
        if (const auto bounds = table.find(name)) j_star = bounds->reference();
    }
    return to_problem(file, name, j_star);
}

}  // namespace detail_exp

/**
 * Benchmark protocol: repeated training runs on one instance across seeds,
 * with the paper-style error bookkeeping — per-episode training costs, the
 * final greedy policy's cost, and checkpoint statistics over the seeds.
 */
inline ProtocolResult run_benchmark_protocol(const KvConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const ProblemBundle bundle = detail_exp::load_fjs_problem(cfg);
    const double j_star = bundle.known_optimum;
    if (std::isnan(j_star))
        throw ConfigError("no optimum known for '" + bundle.name + "'; pass jstar= or optima=");

    const std::int32_t seeds = static_cast<std::int32_t>(cfg.get_int("seeds", 20));
    const bool decompose = cfg.get_bool("decompose", true);
    const std::string store_kind = cfg.get("store", "hash");
    const std::int64_t hash_budget = cfg.get_int("hash_budget", 10000019);
    auto checkpoints = cfg.get_int_list("checkpoints", {1000, 5000, 10000});

    const auto schema = detail_exp::build_schema(bundle.instance, bundle.measure);
    Env::Options env_opts;
    env_opts.decompose = decompose;
    Env env(bundle.instance, bundle.measure, env_opts);

    struct SeedRun {
        TrainResult result;
        double wall_s = 0.0;
        HashQTable::Stats stats;
        bool has_stats = false;
    };
    std::vector<SeedRun> runs(static_cast<std::size_t>(seeds));

    const std::uint64_t base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
    std::atomic<std::int32_t> next{0};
    auto work = [&] {
        while (true) {
            const std::int32_t i = next.fetch_add(1);
            if (i >= seeds) break;
            const auto t0 = std::chrono::steady_clock::now();
            auto store = detail_exp::make_store(store_kind, schema, hash_budget, cfg);
            LearnerConfig lc = detail_exp::learner_config(cfg, bundle.instance, j_star);
            lc.seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
            Learner learner(env, schema, *store, lc);
            runs[static_cast<std::size_t>(i)].result = learner.train();
            runs[static_cast<std::size_t>(i)].wall_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (auto* hash = dynamic_cast<HashQTable*>(store.get())) {
                runs[static_cast<std::size_t>(i)].stats = hash->stats();
                runs[static_cast<std::size_t>(i)].has_stats = true;
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<unsigned>(hw, static_cast<unsigned>(seeds)); ++t)
        pool.emplace_back(work);
    for (auto& t : pool) t.join();

    ProtocolResult result;
    const std::string seeds_path = out_dir + "/benchmark_seeds.csv";
    {
        Csv csv(seeds_path, {"seed", "final_greedy_cost", "final_error_pct", "episodes", "wall_s",
                             "load_factor", "collisions", "evictions"});
        for (std::int32_t i = 0; i < seeds; ++i) {
            const auto& run = runs[static_cast<std::size_t>(i)];
            const double err =
                j_star > 0 ? 100.0 * (run.result.final_greedy_cost - j_star) / j_star
                           : run.result.final_greedy_cost - j_star;
            csv.row({Csv::num(static_cast<std::int64_t>(i)), Csv::num(run.result.final_greedy_cost),
                     Csv::num(err), Csv::num(run.result.episodes_run), Csv::num(run.wall_s),
                     Csv::num(run.has_stats ? run.stats.load_factor : 0.0),
                     Csv::num(static_cast<std::int64_t>(run.has_stats ? run.stats.collisions : 0)),
                     Csv::num(static_cast<std::int64_t>(run.has_stats ? run.stats.evictions : 0))});
        }
    }
    const std::string curve_path = out_dir + "/benchmark_curve.csv";
    {
        Csv csv(curve_path, {"seed", "episode", "cost", "error_pct", "tau", "wall_us"});
        for (std::int32_t i = 0; i < seeds; ++i)
            for (const auto& p : runs[static_cast<std::size_t>(i)].result.curve)
                csv.row({Csv::num(static_cast<std::int64_t>(i)), Csv::num(p.episode),
                         Csv::num(p.total_cost),
                         Csv::num(j_star > 0 ? 100.0 * p.error : p.error), Csv::num(p.tau),
                         Csv::num(p.wall_us)});
    }
    const std::string checkpoint_path = out_dir + "/benchmark_checkpoints.csv";
    std::ostringstream summary;
    summary << "benchmark " << bundle.name << "  J*=" << j_star << "  seeds=" << seeds << '\n';
    {
        Csv csv(checkpoint_path, {"episode", "mean_error", "std_dev", "mean_error_pct", "n"});
        for (std::int64_t cp : checkpoints) {
            std::vector<double> costs;
            for (const auto& run : runs)
                for (const auto& p : run.result.curve)
                    if (p.episode == cp) costs.push_back(p.total_cost);
            if (costs.empty()) continue;
            const auto stats = error_stats(costs, j_star);
            csv.row({Csv::num(cp), Csv::num(stats.mean_error), Csv::num(stats.std_dev),
                     Csv::num(stats.relative_pct), Csv::num(static_cast<std::int64_t>(costs.size()))});
            summary << "  " << cp << " iters: avg err "
                    << (j_star > 0 ? stats.relative_pct : stats.mean_error)
                    << (j_star > 0 ? " %" : " (absolute)") << "  (std " << stats.std_dev << ")\n";
            result.metrics["checkpoint_" + std::to_string(cp)] =
                j_star > 0 ? stats.relative_pct : stats.mean_error;
        }
    }

    std::vector<double> final_errors;
    for (const auto& run : runs)
        final_errors.push_back(j_star > 0
                                   ? 100.0 * (run.result.final_greedy_cost - j_star) / j_star
                                   : run.result.final_greedy_cost - j_star);
    std::vector<double> sorted = final_errors;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double mean =
        std::accumulate(final_errors.begin(), final_errors.end(), 0.0) / final_errors.size();
    summary << "  final greedy error: median " << median << " %, mean " << mean << " %\n";
    result.metrics["median_final_error_pct"] = median;
    result.metrics["mean_final_error_pct"] = mean;
    result.summary = summary.str();
    result.files = {seeds_path, curve_path, checkpoint_path};
    detail_exp::write_metadata(out_dir, cfg, schema,
                               {{"jstar", j_star}, {"median_final_error_pct", median}});
    return result;
}

/// Generator protocol: emit instances with a constructively known optimum
/// and the reference schedule they were built around.
inline ProtocolResult run_generator_protocol(const KvConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    GeneratorSpec spec;
    spec.machines = static_cast<std::int32_t>(cfg.get_int("machines", 16));
    spec.jobs = static_cast<std::int32_t>(cfg.get_int("jobs", 100));
    spec.min_tasks_per_job = static_cast<std::int32_t>(cfg.get_int("min_tasks", 2));
    spec.max_tasks_per_job = static_cast<std::int32_t>(cfg.get_int("max_tasks", 3));
    spec.min_duration = cfg.get_int("min_duration", 5);
    spec.max_duration = cfg.get_int("max_duration", 25);
    spec.duration_spread = cfg.get_double("spread", 0.0);
    spec.target_slack = cfg.get_double("slack", 0.1);
    spec.setup_times = cfg.get_bool("setups", false);
    spec.product_types = static_cast<std::int32_t>(cfg.get_int("product_types", 3));
    spec.cooling_tasks = cfg.get_bool("cooling", false);
    spec.preemption_period = cfg.get_int("preemption_period", 0);
    const std::int64_t count = cfg.get_int("count", 1);
    const std::uint64_t base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));

    ProtocolResult result;
    std::ostringstream summary;
    double slack_sum = 0.0;
    for (std::int64_t i = 0; i < count; ++i) {
        spec.seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
        auto generated = generate_instance(spec);
        generated.bundle.name = "generated_" + std::to_string(i);
        const std::string rap_path = out_dir + "/instance_" + std::to_string(i) + ".rap";
        {
            std::ofstream out(rap_path);
            write_problem(out, generated.bundle);
        }
        const std::string ref_path = out_dir + "/reference_" + std::to_string(i) + ".csv";
        {
            Csv csv(ref_path, {"resource", "start", "operation", "duration"});
            for (const auto& e : generated.reference.entries())
                csv.row({Csv::num(static_cast<std::int64_t>(e.resource)), Csv::num(e.start),
                         Csv::num(static_cast<std::int64_t>(e.op)), Csv::num(e.realized_duration)});
        }
        result.files.push_back(rap_path);
        result.files.push_back(ref_path);
        slack_sum += generated.achieved_slack;
        summary << "instance " << i << ": tasks=" << generated.task_count
                << " setups=" << generated.setup_operation_count
                << " cooling=" << generated.cooling_task_count
                << " splits=" << generated.preemption_splits << " slack="
                << generated.achieved_slack << " J*=0\n";
    }
    result.metrics["mean_achieved_slack"] = slack_sum / static_cast<double>(count);
    result.summary = summary.str();
    return result;
}

/// Clustering protocol: sweep cluster counts on one generated instance at an
/// equal per-cluster episode budget and report wall clock and final error.
inline ProtocolResult run_clustering_protocol(const KvConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    GeneratorSpec spec;
    spec.machines = static_cast<std::int32_t>(cfg.get_int("machines", 12));
    spec.jobs = static_cast<std::int32_t>(cfg.get_int("jobs", 80));
    spec.min_tasks_per_job = static_cast<std::int32_t>(cfg.get_int("min_tasks", 2));
    spec.max_tasks_per_job = static_cast<std::int32_t>(cfg.get_int("max_tasks", 3));
    spec.target_slack = cfg.get_double("slack", 0.2);
    spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
    auto generated = generate_instance(spec);
    const ProblemBundle& bundle = generated.bundle;
    const std::int32_t tasks = bundle.instance.task_count();

    const auto cluster_counts = cfg.get_int_list("clusters", {1, 5, 10, 20, 30, 40, 50});
    const std::int64_t episodes = cfg.get_int("episodes", 2000);
    const int eval_rollouts = static_cast<int>(cfg.get_int("eval_rollouts", 20));

    const auto schema = detail_exp::build_schema(bundle.instance, bundle.measure);
    const auto slacks = default_slacks(bundle.instance, bundle.measure);

    ProtocolResult result;
    const std::string path = out_dir + "/clustering.csv";
    Csv csv(path, {"clusters", "cluster_size", "wall_s", "speedup", "late_jobs", "error_pct",
                   "fallbacks"});
    double baseline_seconds = -1.0;
    std::ostringstream summary;
    summary << "clustering sweep on " << tasks << " tasks, " << bundle.jobs.size() << " jobs\n";
    for (std::int64_t k : cluster_counts) {
        if (k < 1 || k > tasks) continue;
        const std::int32_t size =
            static_cast<std::int32_t>((tasks + k - 1) / k);
        const auto plan = build_clusters(bundle.instance, slacks, size);

        auto store = detail_exp::make_store(cfg.get("store", "hash"), schema,
                                            cfg.get_int("hash_budget", 4000037), cfg);
        SequentialOptions opts;
        opts.learner = detail_exp::learner_config(cfg, bundle.instance, 0.0);
        opts.learner.episodes = episodes;
        opts.learner.warmup_episodes = cfg.get_int("rollout_warmup", 10);
        opts.env.decompose = cfg.get_bool("decompose", true);
        // Tie-break equal late-job schedules toward early completion so
        // frozen clusters leave room for the ones trained after them.
        opts.env.earliness_shaping =
            cfg.get_double("earliness_shaping", 0.4 / std::max(1, tasks));
        opts.freeze_episodes = cfg.get_int("freeze_episodes", 12);
        CompositePolicy policy(bundle.instance, schema);
        const auto seq = sequential_train(bundle.instance, bundle.measure, plan, *store, schema,
                                          opts, policy);

        // Evaluate the composite policy by fresh rollouts.
        Env env(bundle.instance, bundle.measure,
                Env::Options{.decompose = false, .wait_skip = true});
        Rng eval_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(k)));
        double late_sum = 0.0;
        for (int i = 0; i < eval_rollouts; ++i) {
            EnvState s = env.initial_state(eval_rng);
            double total = 0.0;
            while (env.status(s) == TerminalStatus::Running) {
                const auto out = env.step(s, policy.act(env, s), eval_rng);
                total += out.cost;
                s = out.next;
            }
            late_sum += total;
        }
        const double late_mean = late_sum / eval_rollouts;
        const double error_pct = 100.0 * late_mean / static_cast<double>(bundle.jobs.size());
        if (baseline_seconds < 0.0) baseline_seconds = seq.total_seconds;
        const double speedup = baseline_seconds / seq.total_seconds;
        csv.row({Csv::num(k), Csv::num(static_cast<std::int64_t>(size)), Csv::num(seq.total_seconds),
                 Csv::num(speedup), Csv::num(late_mean), Csv::num(error_pct),
                 Csv::num(seq.fallback_count)});
        summary << "  " << k << " clusters (" << size << " tasks): " << seq.total_seconds
                << " s, speedup " << speedup << " x, late " << late_mean << " (" << error_pct
                << " %)\n";
        result.metrics["wall_s_" + std::to_string(k)] = seq.total_seconds;
        result.metrics["error_pct_" + std::to_string(k)] = error_pct;
    }
    result.summary = summary.str();
    result.files = {path};
    detail_exp::write_metadata(out_dir, cfg, schema, {{"tasks", tasks}});
    return result;
}

/// Speedup protocol: shared-store sampling with several worker counts racing
/// to an error threshold, plus a distributed-mode reproducibility check.
inline ProtocolResult run_speedup_protocol(const KvConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const ProblemBundle bundle = detail_exp::load_fjs_problem(cfg);
    if (std::isnan(bundle.known_optimum))
        throw ConfigError("speedup protocol needs a known optimum (jstar= or optima=)");

    const auto worker_counts = cfg.get_int_list("workers", {1, 4});
    const double threshold = cfg.get_double("threshold", 0.05);
    const std::int64_t budget = cfg.get_int("episodes", 20000);

    const auto schema = detail_exp::build_schema(bundle.instance, bundle.measure);
    Env::Options env_opts;
    env_opts.decompose = cfg.get_bool("decompose", true);
    Env env(bundle.instance, bundle.measure, env_opts);

    LearnerConfig lc = detail_exp::learner_config(cfg, bundle.instance, bundle.known_optimum);
    lc.warmup_episodes = cfg.get_int("rollout_warmup", 0);
    lc.eval_every = cfg.get_int("eval_every", 25);
    lc.stop_error_threshold = threshold;

    ProtocolResult result;
    const std::string path = out_dir + "/speedup.csv";
    Csv csv(path, {"workers", "mode", "wall_ms_to_threshold", "episodes", "final_error_pct"});
    std::ostringstream summary;
    summary << "speedup on " << bundle.name << " to " << 100 * threshold << " % error\n";
    for (std::int64_t k : worker_counts) {
        HashQTable store(HashQTable::capacity_for_budget(
                             static_cast<std::uint64_t>(cfg.get_int("hash_budget", 10000019))),
                         schema.radices(), 0.0);
        ParallelConfig par;
        par.workers = static_cast<std::int32_t>(k);
        par.episode_budget = budget;
        const auto run = run_shared(env, schema, store, lc, par);
        const double wall_ms = (run.threshold_wall_us >= 0 ? run.threshold_wall_us : run.wall_us) /
                               1000.0;
        const double err = std::isnan(run.final_greedy_cost)
                               ? std::numeric_limits<double>::quiet_NaN()
                               : 100.0 * (run.final_greedy_cost - bundle.known_optimum) /
                                     bundle.known_optimum;
        csv.row({Csv::num(k), "shared", Csv::num(wall_ms), Csv::num(run.episodes), Csv::num(err)});
        summary << "  k=" << k << ": " << wall_ms << " ms, " << run.episodes << " episodes"
                << (run.threshold_wall_us < 0 ? " (threshold not reached)" : "") << '\n';
        result.metrics["wall_ms_" + std::to_string(k)] = wall_ms;
        result.metrics["reached_" + std::to_string(k)] = run.threshold_wall_us >= 0 ? 1.0 : 0.0;
    }

    // Distributed reproducibility: identical seeds must select identically.
    {
        ParallelConfig par;
        par.workers = static_cast<std::int32_t>(worker_counts.back());
        par.episode_budget = cfg.get_int("distributed_episodes", 2000);
        for (std::int32_t w = 0; w < par.workers; ++w)
            par.seeds.push_back(derive_seed(lc.seed, static_cast<std::uint64_t>(w)));
        auto factory = [&]() -> std::unique_ptr<QValueStore> {
            return detail_exp::make_store("hash", schema, cfg.get_int("hash_budget", 10000019), cfg);
        };
        LearnerConfig dlc = lc;
        dlc.eval_every = 0;
        dlc.stop_error_threshold = -1.0;
        const auto a = run_distributed(env, schema, dlc, par, factory);
        const auto b = run_distributed(env, schema, dlc, par, factory);
        const bool reproducible =
            a.selected_worker == b.selected_worker && a.selected_cost == b.selected_cost;
        csv.row({Csv::num(static_cast<std::int64_t>(par.workers)), "distributed",
                 Csv::num(a.wall_us / 1000.0), Csv::num(par.episode_budget * par.workers),
                 Csv::num(100.0 * (a.selected_cost - bundle.known_optimum) /
                          bundle.known_optimum)});
        summary << "  distributed k=" << par.workers << ": selected worker " << a.selected_worker
                << ", cost " << a.selected_cost << (reproducible ? " (reproducible)" : " (MISMATCH)")
                << '\n';
        result.metrics["distributed_reproducible"] = reproducible ? 1.0 : 0.0;
        result.metrics["distributed_selected_cost"] = a.selected_cost;
    }
    result.summary = summary.str();
    result.files = {path};
    detail_exp::write_metadata(out_dir, cfg, schema, {{"threshold", threshold}});
    return result;
}

struct DisturbanceArmResult {
    std::vector<double> pre_costs;
    std::vector<double> continue_costs;
    std::vector<double> restart_costs;
};

/// Paired continue/restart disturbance trial on one instance and seed.
inline DisturbanceArmResult disturbance_trial(const ProblemBundle& bundle,
                                              const DisturbanceEvent& event,
                                              const FeatureSchema& schema, const KvConfig& cfg,
                                              std::uint64_t seed, std::int64_t post_episodes) {
    DisturbanceArmResult out;
    Env::Options env_opts;
    env_opts.decompose = cfg.get_bool("decompose", true);
    Env pre_env(bundle.instance, bundle.measure, env_opts);

    LearnerConfig lc = detail_exp::learner_config(cfg, bundle.instance, bundle.known_optimum);
    lc.seed = seed;
    lc.warmup_episodes = cfg.get_int("rollout_warmup", 10);
    auto store = detail_exp::make_store(cfg.get("store", "hash"), schema,
                                        cfg.get_int("hash_budget", 10000019), cfg);
    Learner pre_learner(pre_env, schema, *store, lc);
    for (std::int64_t e = 1; e <= event.trigger_episode; ++e)
        out.pre_costs.push_back(pre_learner.training_episode(e));

    const auto disturbed = apply_disturbance(bundle, event);
    Env post_env(disturbed.bundle.instance, disturbed.bundle.measure, env_opts);

    // Continue: keep the (obsolete) value function and the annealed
    // temperature; the episode index keeps counting.
    {
        auto kept = store->clone();
        LearnerConfig cc = lc;
        cc.seed = derive_seed(seed, 101);
        Learner learner(post_env, schema, *kept, cc);
        for (std::int64_t e = event.trigger_episode + 1;
             e <= event.trigger_episode + post_episodes; ++e)
            out.continue_costs.push_back(learner.training_episode(e));
    }
    // Restart: fresh store, schedules reset, warm-start runs again.
    {
        auto fresh = detail_exp::make_store(cfg.get("store", "hash"), schema,
                                            cfg.get_int("hash_budget", 10000019), cfg);
        LearnerConfig rc = lc;
        rc.seed = derive_seed(seed, 102);
        Learner learner(post_env, schema, *fresh, rc);
        for (std::int64_t e = 1; e <= post_episodes; ++e)
            out.restart_costs.push_back(learner.training_episode(e));
    }
    return out;
}

/// Disturbance protocol: paired continue/restart arms with shared seeds and
/// a breakdown (or other event) at the trigger episode.
inline ProtocolResult run_disturbance_protocol(const KvConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::int32_t trials = static_cast<std::int32_t>(cfg.get_int("trials", 20));
    const std::int64_t trigger = cfg.get_int("trigger", 100);
    const std::int64_t post_episodes = cfg.get_int("post_episodes", 200);
    const std::uint64_t base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));

    BenchmarkSpec bench;
    bench.machines = static_cast<std::int32_t>(cfg.get_int("machines", 5));
    bench.jobs = static_cast<std::int32_t>(cfg.get_int("jobs", 7));
    bench.ops_per_job = static_cast<std::int32_t>(cfg.get_int("ops_per_job", 4));
    bench.extra_alternative_fraction = cfg.get_double("flexibility", 1.0);

    ProtocolResult result;
    const std::string path = out_dir + "/disturbance.csv";
    Csv csv(path, {"trial", "auc_continue", "auc_restart", "continue_wins"});
    std::int32_t wins = 0;
    std::ostringstream summary;
    const std::string kind = cfg.get("kind", "breakdown");
    for (std::int32_t trial = 0; trial < trials; ++trial) {
        bench.seed = derive_seed(base_seed, static_cast<std::uint64_t>(trial));
        const auto generated = generate_benchmark(bench);
        FjsInstanceFile file;
        file.job_count = static_cast<std::int32_t>(generated.spec.jobs.size());
        file.machine_count = generated.spec.machine_count;
        file.spec = generated.spec;
        ProblemBundle bundle = to_problem(file, "disturb_" + std::to_string(trial),
                                          static_cast<double>(generated.optimum));

        DisturbanceEvent event;
        event.trigger_episode = trigger;
        if (kind == "breakdown") {
            event.kind = DisturbanceEvent::Kind::ResourceBreakdown;
            event.resource = (generated.critical_machine + 1) % bench.machines;
        } else if (kind == "new-resource") {
            event.kind = DisturbanceEvent::Kind::NewResource;
            event.resource = generated.critical_machine;
        } else if (kind == "cancel") {
            event.kind = DisturbanceEvent::Kind::JobCancellation;
            event.job = 0;
        } else {
            throw ConfigError("unknown disturbance kind '" + kind + "'");
        }

        SchemaOptions so;
        so.max_states = bundle.instance.state_count() + 1;   // breakdown dead state
        so.max_resources = bundle.instance.resource_count() + 1;
        const auto schema = detail_exp::build_schema(bundle.instance, bundle.measure, so);
        const auto arm = disturbance_trial(bundle, event, schema, cfg,
                                           derive_seed(base_seed, 1000 + trial), post_episodes);
        double auc_continue = 0.0, auc_restart = 0.0;
        for (double g : arm.continue_costs) auc_continue += g;
        for (double g : arm.restart_costs) auc_restart += g;
        const bool win = auc_continue < auc_restart;
        wins += win ? 1 : 0;
        csv.row({Csv::num(static_cast<std::int64_t>(trial)), Csv::num(auc_continue),
                 Csv::num(auc_restart), Csv::num(static_cast<std::int64_t>(win))});
    }
    const double win_fraction = static_cast<double>(wins) / trials;
    summary << "disturbance (" << kind << "): continue wins " << wins << "/" << trials << " pairs\n";
    result.metrics["continue_win_fraction"] = win_fraction;
    result.summary = summary.str();
    result.files = {path};
    return result;
}

/// Dispatches to the configured protocol.
inline ProtocolResult run_experiment(const KvConfig& cfg, const std::string& out_dir) {
    const std::string protocol = cfg.get("protocol");
    if (protocol == "benchmark") return run_benchmark_protocol(cfg, out_dir);
    if (protocol == "generator") return run_generator_protocol(cfg, out_dir);
    if (protocol == "clustering") return run_clustering_protocol(cfg, out_dir);
    if (protocol == "speedup") return run_speedup_protocol(cfg, out_dir);
    if (protocol == "disturbance") return run_disturbance_protocol(cfg, out_dir);
    throw ConfigError(protocol.empty() ? "missing 'protocol'"
                                       : "unknown protocol '" + protocol + "'");
}

}  // namespace rap
