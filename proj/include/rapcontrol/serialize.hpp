#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rapcontrol/instance.hpp"
#include "rapcontrol/measure.hpp"

namespace rap {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct JobInfo {
    std::int64_t release = 0;
    std::int64_t due = -1;
    std::vector<OperationId> tasks;
};

/// An instance together with its performance measure, job metadata and — if
/// known by construction — the optimal cost.
struct ProblemBundle {
    Instance instance;
    PerformanceMeasure measure;
    std::vector<JobInfo> jobs;
    double known_optimum = std::numeric_limits<double>::quiet_NaN();
    std::string name;
};

namespace detail_io {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail_io

/**
 * Line-oriented text form of a problem. Deterministic field order and
 * 17-significant-digit probabilities make re-serialization canonical: a
 * parse/write round trip reproduces the text exactly.
 */
inline void write_problem(std::ostream& os, const ProblemBundle& bundle) {
    const Instance& inst = bundle.instance;
    os << "rap 1\n";
    if (!bundle.name.empty()) os << "name " << bundle.name << '\n';
    os << "resources " << inst.resource_count() << '\n';
    os << "states " << inst.state_count() << '\n';
    os << "operations " << inst.operation_count() << '\n';
    os << "tasks";
    for (OperationId t : inst.tasks()) os << ' ' << t;
    os << '\n';
    os << "nontaskcap " << inst.non_task_cap() << '\n';
    auto precedence = inst.precedence();
    std::sort(precedence.begin(), precedence.end());
    for (const auto& [u, v] : precedence) os << "prec " << u << ' ' << v << '\n';
    for (const auto& [s, op] : inst.capability_pairs()) {
        const DurationDist* d = inst.duration(s, op);
        os << "dur " << s << ' ' << op << ' ' << d->support.size();
        for (const auto& atom : d->support)
            os << ' ' << atom.value << ' ' << detail_io::format_double(atom.prob);
        os << '\n';
        const StateDist* e = inst.effect(s, op);
        os << "eff " << s << ' ' << op << ' ' << (e ? e->support.size() : 0);
        if (e)
            for (const auto& atom : e->support)
                os << ' ' << atom.state << ' ' << detail_io::format_double(atom.prob);
        os << '\n';
    }
    for (ResourceId r = 0; r < inst.resource_count(); ++r) {
        const StateDist& init = inst.initial(r);
        os << "init " << r << ' ' << init.support.size();
        for (const auto& atom : init.support)
            os << ' ' << atom.state << ' ' << detail_io::format_double(atom.prob);
        os << '\n';
    }
    switch (bundle.measure.kind) {
        case PerformanceMeasure::Kind::Makespan: os << "measure makespan\n"; break;
        case PerformanceMeasure::Kind::TotalLateness: os << "measure total_lateness\n"; break;
        case PerformanceMeasure::Kind::LateJobCount: os << "measure late_jobs\n"; break;
        case PerformanceMeasure::Kind::Custom: os << "measure makespan\n"; break;
    }
    for (std::size_t t = 0; t < bundle.measure.task_due.size(); ++t)
        if (bundle.measure.task_due[t] >= 0)
            os << "due " << t << ' ' << bundle.measure.task_due[t] << '\n';
    for (std::size_t j = 0; j < bundle.jobs.size(); ++j) {
        const JobInfo& job = bundle.jobs[j];
        os << "job " << j << ' ' << job.release << ' ' << job.due;
        for (OperationId t : job.tasks) os << ' ' << t;
        os << '\n';
    }
    if (!std::isnan(bundle.known_optimum))
        os << "optimum " << detail_io::format_double(bundle.known_optimum) << '\n';
    os << "end\n";
}

inline std::string write_problem_string(const ProblemBundle& bundle) {
    std::ostringstream os;
    write_problem(os, bundle);
    return os.str();
}

inline ProblemBundle read_problem(std::istream& is) {
    InstanceBuilder builder;
    std::vector<OperationId> tasks;
    std::int32_t operations = 0;
    std::vector<std::int64_t> task_due;
    std::vector<JobInfo> jobs;
    std::string measure_kind = "makespan";
    double optimum = std::numeric_limits<double>::quiet_NaN();
    std::string name;
    std::int32_t non_task_cap = 0;

    std::string line;
    std::size_t line_no = 0;
    bool saw_magic = false, saw_end = false;
    while (std::getline(is, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key.empty() || key[0] == '#') continue;
        auto need_int = [&](const char* what) {
            std::int64_t v;
            if (!(ls >> v)) throw ParseError(line_no, std::string("expected ") + what);
            return v;
        };
        auto need_double = [&] {
            std::string token;
            if (!(ls >> token)) throw ParseError(line_no, "expected a number");
            return std::strtod(token.c_str(), nullptr);
        };
        if (key == "rap") {
            if (need_int("version") != 1) throw ParseError(line_no, "unsupported version");
            saw_magic = true;
        } else if (key == "name") {
            ls >> name;
        } else if (key == "resources") {
            builder.add_resources(static_cast<std::int32_t>(need_int("resource count")));
        } else if (key == "states") {
            builder.add_states(static_cast<std::int32_t>(need_int("state count")));
        } else if (key == "operations") {
            operations = static_cast<std::int32_t>(need_int("operation count"));
        } else if (key == "tasks") {
            std::int64_t t;
            while (ls >> t) tasks.push_back(static_cast<OperationId>(t));
        } else if (key == "nontaskcap") {
            non_task_cap = static_cast<std::int32_t>(need_int("cap"));
        } else if (key == "prec") {
            const auto u = need_int("task id");
            const auto v = need_int("task id");
            builder.add_precedence(static_cast<OperationId>(u), static_cast<OperationId>(v));
        } else if (key == "dur") {
            const auto s = static_cast<StateId>(need_int("state id"));
            const auto op = static_cast<OperationId>(need_int("operation id"));
            const auto n = need_int("support size");
            std::vector<DurationDist::Atom> atoms;
            for (std::int64_t i = 0; i < n; ++i) {
                const auto v = need_int("duration");
                atoms.push_back({v, need_double()});
            }
            builder.set_duration(s, op, DurationDist(std::move(atoms)));
        } else if (key == "eff") {
            const auto s = static_cast<StateId>(need_int("state id"));
            const auto op = static_cast<OperationId>(need_int("operation id"));
            const auto n = need_int("support size");
            std::vector<StateDist::Atom> atoms;
            for (std::int64_t i = 0; i < n; ++i) {
                const auto v = static_cast<StateId>(need_int("state id"));
                atoms.push_back({v, need_double()});
            }
            if (n > 0) builder.set_effect(s, op, StateDist(std::move(atoms)));
        } else if (key == "init") {
            const auto r = static_cast<ResourceId>(need_int("resource id"));
            const auto n = need_int("support size");
            std::vector<StateDist::Atom> atoms;
            for (std::int64_t i = 0; i < n; ++i) {
                const auto v = static_cast<StateId>(need_int("state id"));
                atoms.push_back({v, need_double()});
            }
            builder.set_initial(r, StateDist(std::move(atoms)));
        } else if (key == "measure") {
            ls >> measure_kind;
        } else if (key == "due") {
            const auto t = need_int("task id");
            const auto due = need_int("due date");
            if (static_cast<std::size_t>(t) >= task_due.size())
                task_due.resize(static_cast<std::size_t>(t) + 1, -1);
            task_due[static_cast<std::size_t>(t)] = due;
        } else if (key == "job") {
            const auto idx = need_int("job index");
            JobInfo job;
            job.release = need_int("release");
            job.due = need_int("due");
            std::int64_t t;
            while (ls >> t) job.tasks.push_back(static_cast<OperationId>(t));
            if (static_cast<std::size_t>(idx) >= jobs.size())
                jobs.resize(static_cast<std::size_t>(idx) + 1);
            jobs[static_cast<std::size_t>(idx)] = std::move(job);
        } else if (key == "optimum") {
            optimum = need_double();
        } else if (key == "end") {
            saw_end = true;
            break;
        } else {
            throw ParseError(line_no, "unrecognized directive '" + key + "'");
        }
    }
    if (!saw_magic) throw ParseError(1, "missing 'rap' header");
    if (!saw_end) throw ParseError(line_no, "missing 'end'");

    std::vector<char> is_task(static_cast<std::size_t>(operations), 0);
    for (OperationId t : tasks) {
        if (t < 0 || t >= operations) throw ParseError(0, "task id out of range");
        is_task[static_cast<std::size_t>(t)] = 1;
    }
    for (std::int32_t op = 0; op < operations; ++op)
        builder.add_operation(is_task[static_cast<std::size_t>(op)] != 0);
    if (non_task_cap > 0) builder.set_non_task_cap(non_task_cap);

    ProblemBundle bundle;
    bundle.instance = builder.build();
    bundle.jobs = jobs;
    bundle.known_optimum = optimum;
    bundle.name = name;

    if (measure_kind == "makespan") {
        bundle.measure = PerformanceMeasure::makespan();
    } else if (measure_kind == "total_lateness") {
        task_due.resize(static_cast<std::size_t>(operations), -1);
        bundle.measure = PerformanceMeasure::total_lateness(task_due);
    } else if (measure_kind == "late_jobs") {
        std::vector<std::int32_t> job_by_task(static_cast<std::size_t>(operations), -1);
        std::vector<std::int64_t> due_by_job, release_by_job;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            due_by_job.push_back(jobs[j].due);
            release_by_job.push_back(jobs[j].release);
            for (OperationId t : jobs[j].tasks)
                job_by_task[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(j);
        }
        bundle.measure =
            PerformanceMeasure::late_job_count(job_by_task, due_by_job, release_by_job);
    } else {
        throw ParseError(0, "unknown measure '" + measure_kind + "'");
    }
    return bundle;
}

inline ProblemBundle read_problem_string(const std::string& text) {
    std::istringstream is(text);
    return read_problem(is);
}

}  // namespace rap
