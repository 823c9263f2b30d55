#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rap {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of the generator,
/// so sampling is reproducible independently of the standard library's
/// distribution implementations.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline constexpr double kProbabilityTolerance = 1e-12;

/// Finite-support distribution over positive integer durations.
struct DurationDist {
    struct Atom {
        std::int64_t value = 0;
        double prob = 0.0;
    };
    std::vector<Atom> support;

    DurationDist() = default;
    explicit DurationDist(std::vector<Atom> atoms) : support(std::move(atoms)) {
        std::sort(support.begin(), support.end(),
                  [](const Atom& a, const Atom& b) { return a.value < b.value; });
    }

    static DurationDist point(std::int64_t value) { return DurationDist({{value, 1.0}}); }

    static DurationDist uniform(std::int64_t lo, std::int64_t hi) {
        std::vector<Atom> atoms;
        const double p = 1.0 / static_cast<double>(hi - lo + 1);
        for (std::int64_t v = lo; v <= hi; ++v) atoms.push_back({v, p});
        return DurationDist(std::move(atoms));
    }

    /// Geometric(p) on {1, 2, ...} truncated at max_value; the leftover tail
    /// mass is lumped onto max_value so the support stays finite.
    static DurationDist truncated_geometric(double p, std::int64_t max_value) {
        std::vector<Atom> atoms;
        double tail = 1.0;
        for (std::int64_t k = 1; k < max_value; ++k) {
            atoms.push_back({k, tail * p});
            tail *= (1.0 - p);
        }
        atoms.push_back({max_value, tail});
        return DurationDist(std::move(atoms));
    }

    bool is_point() const { return support.size() == 1; }

    std::int64_t min_value() const { return support.front().value; }
    std::int64_t max_value() const { return support.back().value; }

    double mean() const {
        double m = 0.0;
        for (const Atom& a : support) m += static_cast<double>(a.value) * a.prob;
        return m;
    }

    /// P(D = v)
    double pmf(std::int64_t v) const {
        for (const Atom& a : support)
            if (a.value == v) return a.prob;
        return 0.0;
    }

    /// P(D >= v)
    double tail(std::int64_t v) const {
        double t = 0.0;
        for (const Atom& a : support)
            if (a.value >= v) t += a.prob;
        return t;
    }

    std::int64_t sample(Rng& rng) const {
        double u = uniform01(rng);
        for (const Atom& a : support) {
            if (u < a.prob) return a.value;
            u -= a.prob;
        }
        return support.back().value;
    }

    /// Structural problems, empty when the distribution is usable.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (support.empty()) {
            out.push_back("empty support");
            return out;
        }
        double sum = 0.0;
        for (const Atom& a : support) {
            if (a.value < 1) out.push_back("duration " + std::to_string(a.value) + " is not positive");
            if (a.prob <= 0.0) out.push_back("non-positive probability on duration " + std::to_string(a.value));
            sum += a.prob;
        }
        for (std::size_t i = 1; i < support.size(); ++i)
            if (support[i].value == support[i - 1].value)
                out.push_back("duplicate duration " + std::to_string(support[i].value));
        if (std::abs(sum - 1.0) > kProbabilityTolerance)
            out.push_back("probabilities sum to " + std::to_string(sum));
        return out;
    }
};

/// Finite-support distribution over resource-state ids; used for both
/// operation effects and initial resource states.
struct StateDist {
    struct Atom {
        std::int32_t state = 0;
        double prob = 0.0;
    };
    std::vector<Atom> support;

    StateDist() = default;
    explicit StateDist(std::vector<Atom> atoms) : support(std::move(atoms)) {
        std::sort(support.begin(), support.end(),
                  [](const Atom& a, const Atom& b) { return a.state < b.state; });
    }

    static StateDist point(std::int32_t state) { return StateDist({{state, 1.0}}); }

    bool is_point() const { return support.size() == 1; }

    std::int32_t sample(Rng& rng) const {
        double u = uniform01(rng);
        for (const Atom& a : support) {
            if (u < a.prob) return a.state;
            u -= a.prob;
        }
        return support.back().state;
    }

    std::vector<std::string> problems(std::int32_t state_count) const {
        std::vector<std::string> out;
        if (support.empty()) {
            out.push_back("empty support");
            return out;
        }
        double sum = 0.0;
        for (const Atom& a : support) {
            if (a.state < 0 || a.state >= state_count)
                out.push_back("state " + std::to_string(a.state) + " out of range");
            if (a.prob <= 0.0) out.push_back("non-positive probability on state " + std::to_string(a.state));
            sum += a.prob;
        }
        if (std::abs(sum - 1.0) > kProbabilityTolerance)
            out.push_back("probabilities sum to " + std::to_string(sum));
        return out;
    }
};

}  // namespace rap
