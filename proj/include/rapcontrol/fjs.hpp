#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rapcontrol/encode.hpp"
#include "rapcontrol/serialize.hpp"

namespace rap {

/**
 * Flexible job-shop instance in the de-facto .fjs exchange format:
 *   line 1:  <jobs> <machines> [avg-flexibility]
 *   per job: <#ops> then per op <#alternatives> followed by
 *            <machine (1-based)> <duration> pairs
 * Blank lines are ignored. Parsing reports the offending line number.
 */
struct FjsInstanceFile {
    std::int32_t job_count = 0;
    std::int32_t machine_count = 0;
    double stated_flexibility = 0.0;  // 0 when the header omits it
    JobShopSpec spec;

    double average_flexibility() const { return spec.average_flexibility(); }
    std::int32_t operation_count() const {
        std::int32_t n = 0;
        for (const auto& job : spec.jobs) n += static_cast<std::int32_t>(job.ops.size());
        return n;
    }
};

inline FjsInstanceFile parse_fjs(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    FjsInstanceFile out;
    bool header_done = false;
    while (std::getline(is, line)) {
        ++line_no;
        std::istringstream ls(line);
        if (!header_done) {
            if (!(ls >> out.job_count >> out.machine_count))
                continue;  // blank or whitespace-only line before the header
            if (out.job_count <= 0 || out.machine_count <= 0)
                throw ParseError(line_no, "job and machine counts must be positive");
            double flex;
            if (ls >> flex) out.stated_flexibility = flex;
            out.spec.machine_count = out.machine_count;
            header_done = true;
            continue;
        }
        std::int32_t op_count;
        if (!(ls >> op_count)) continue;  // blank line
        if (op_count <= 0) throw ParseError(line_no, "job must have at least one operation");
        JobShopSpec::Job job;
        for (std::int32_t o = 0; o < op_count; ++o) {
            std::int32_t alternatives;
            if (!(ls >> alternatives) || alternatives <= 0)
                throw ParseError(line_no, "operation must list at least one alternative");
            JobShopSpec::Op op;
            for (std::int32_t a = 0; a < alternatives; ++a) {
                std::int32_t machine;
                std::int64_t duration;
                if (!(ls >> machine >> duration))
                    throw ParseError(line_no, "expected a (machine, duration) pair");
                if (machine < 1 || machine > out.machine_count)
                    throw ParseError(line_no, "machine index " + std::to_string(machine) +
                                                  " out of range 1.." +
                                                  std::to_string(out.machine_count));
                if (duration < 1) throw ParseError(line_no, "durations must be positive");
                op.alternatives.emplace_back(machine - 1, duration);
            }
            job.ops.push_back(std::move(op));
        }
        std::int64_t trailing;
        if (ls >> trailing) throw ParseError(line_no, "trailing tokens after the last operation");
        out.spec.jobs.push_back(std::move(job));
    }
    if (!header_done) throw ParseError(line_no == 0 ? 1 : line_no, "empty input");
    if (static_cast<std::int32_t>(out.spec.jobs.size()) != out.job_count)
        throw ParseError(line_no, "expected " + std::to_string(out.job_count) + " job lines, found " +
                                      std::to_string(out.spec.jobs.size()));
    return out;
}

/// Canonical re-serialization: header with the computed average flexibility,
/// one line per job.
inline std::string write_fjs(const FjsInstanceFile& file) {
    std::ostringstream os;
    os << file.job_count << ' ' << file.machine_count;
    const double flex = file.stated_flexibility > 0.0 ? file.stated_flexibility
                                                      : file.average_flexibility();
    os << ' ' << flex << '\n';
    for (const auto& job : file.spec.jobs) {
        os << job.ops.size();
        for (const auto& op : job.ops) {
            os << ' ' << op.alternatives.size();
            for (const auto& [machine, duration] : op.alternatives)
                os << ' ' << (machine + 1) << ' ' << duration;
        }
        os << '\n';
    }
    return os.str();
}

/// Bundles the encoded instance with the makespan measure and job metadata.
inline ProblemBundle to_problem(const FjsInstanceFile& file, const std::string& name = "",
                                double known_optimum = std::numeric_limits<double>::quiet_NaN()) {
    ProblemBundle bundle;
    const auto enc = encode_job_shop(file.spec);
    bundle.instance = enc.instance;
    bundle.measure = PerformanceMeasure::makespan();
    for (const auto& chain : enc.job_tasks) {
        JobInfo job;
        job.tasks = chain;
        bundle.jobs.push_back(std::move(job));
    }
    bundle.known_optimum = known_optimum;
    bundle.name = name;
    return bundle;
}

struct OptimumBounds {
    double lower = 0.0;
    double upper = 0.0;
    /// With distinct bounds the midpoint stands in for the unknown optimum.
    double reference() const { return (lower + upper) / 2.0; }
};

/**
 * Reference optima for the bundled benchmark instances, extendable from a
 * text table of "<name> <lower> <upper>" lines (e.g., for a locally fetched
 * benchmark set).
 */
class OptimaTable {
public:
    OptimaTable() {
        // Bundled instances only; fetch scripts bring the rest.
        table_["sdata_mt06"] = {55.0, 55.0};
    }

    void load(std::istream& is) {
        std::string name;
        double lo, hi;
        while (is >> name >> lo >> hi) table_[name] = {lo, hi};
    }

    std::optional<OptimumBounds> find(const std::string& name) const {
        auto it = table_.find(name);
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::map<std::string, OptimumBounds> table_;
};

}  // namespace rap
