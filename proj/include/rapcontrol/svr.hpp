#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rapcontrol/value_store.hpp"

namespace rap {

struct KernelSpec {
    double sigma = 1.0;  // RBF width, K(x,y) = exp(-||x-y||^2 / (2 sigma^2))
};

/// Gaussian kernel value; inputs must have equal dimension.
inline double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y,
                         const KernelSpec& spec) {
    if (x.size() != y.size()) throw std::invalid_argument("rbf_kernel: dimension mismatch");
    if (!(spec.sigma > 0.0)) throw std::invalid_argument("rbf_kernel: sigma must be positive");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
}

struct TrainingSample {
    std::vector<double> input;  // normalized to [0, 1] per component
    double target = 0.0;
};

struct SvrTrainOptions {
    double C = 100.0;
    double nu = 0.5;
    KernelSpec kernel{1.0};
    double tolerance = 1e-3;
    std::int64_t max_iterations = 0;  // 0: 1e5 * l
    bool shrinking = false;
};

class SvrConvergenceError;

/**
 * ν-SVR model: f(x) = Σ β_i K(x_i, x) + b with β_i = α*_i − α_i. Only
 * samples with nonzero coefficients are kept as support vectors. The tube
 * width ε is recovered from the KKT boundary conditions rather than fixed
 * up front; ν lower-bounds the support-vector fraction and upper-bounds the
 * fraction of tube violations.
 */
struct SvrModel {
    std::vector<std::vector<double>> support_inputs;
    std::vector<double> coefficients;  // β per support vector
    double bias = 0.0;
    double epsilon = 0.0;
    double C = 0.0;
    double nu = 0.0;
    KernelSpec kernel{1.0};
    std::int64_t sample_count = 0;

    // Solver diagnostics.
    double kkt_residual = 0.0;
    std::int64_t iterations = 0;

    double predict(const std::vector<double>& x) const {
        double out = bias;
        for (std::size_t i = 0; i < support_inputs.size(); ++i)
            out += coefficients[i] * rbf_kernel(support_inputs[i], x, kernel);
        return out;
    }

    std::size_t support_vector_count() const { return support_inputs.size(); }

    /// Plain-text dump; doubles are written in hex float so the round trip
    /// is bit exact.
    void dump(std::ostream& os) const {
        os << "svr 1\n";
        os << support_inputs.size() << ' ' << (support_inputs.empty() ? 0 : support_inputs[0].size())
           << ' ' << sample_count << '\n';
        os << std::hexfloat;
        os << C << ' ' << nu << ' ' << kernel.sigma << ' ' << bias << ' ' << epsilon << '\n';
        for (std::size_t i = 0; i < support_inputs.size(); ++i) {
            os << coefficients[i];
            for (double v : support_inputs[i]) os << ' ' << v;
            os << '\n';
        }
        os << std::defaultfloat;
    }

    static SvrModel load(std::istream& is) {
        SvrModel m;
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "svr" || version != 1)
            throw std::runtime_error("SvrModel::load: unrecognized header");
        std::size_t sv = 0, dim = 0;
        is >> sv >> dim >> m.sample_count;
        // Hex floats go through strtod; istream extraction cannot parse them.
        auto next_double = [&is] {
            std::string token;
            if (!(is >> token)) throw std::runtime_error("SvrModel::load: truncated input");
            return std::strtod(token.c_str(), nullptr);
        };
        m.C = next_double();
        m.nu = next_double();
        m.kernel.sigma = next_double();
        m.bias = next_double();
        m.epsilon = next_double();
        m.support_inputs.assign(sv, std::vector<double>(dim));
        m.coefficients.assign(sv, 0.0);
        for (std::size_t i = 0; i < sv; ++i) {
            m.coefficients[i] = next_double();
            for (std::size_t j = 0; j < dim; ++j) m.support_inputs[i][j] = next_double();
        }
        return m;
    }

    std::string dump_string() const {
        std::ostringstream os;
        dump(os);
        return os.str();
    }
    static SvrModel load_string(const std::string& text) {
        std::istringstream is(text);
        return load(is);
    }
};

class SvrConvergenceError : public std::runtime_error {
public:
    SvrConvergenceError(SvrModel best, double residual)
        : std::runtime_error("nu-SVR did not reach the KKT tolerance (residual " +
                             std::to_string(residual) + ")"),
          best_model(std::move(best)),
          residual(residual) {}
    SvrModel best_model;
    double residual;
};

namespace detail_svr {

/// Dual state of the two-variable ascent. Works on the ν-SVR dual
///   min ½ β'Kβ − β'y,  β = α* − α,
///   s.t. Σα* = Σα, Σ(α* + α) = Cν, 0 ≤ α*, α ≤ C/l,
/// taking working pairs inside one multiplier group so both sum constraints
/// stay invariant.
class NuSolver {
public:
    NuSolver(const std::vector<TrainingSample>& samples, const SvrTrainOptions& opt)
        : samples_(samples), opt_(opt), l_(samples.size()) {
        const double box = opt.C / static_cast<double>(l_);
        astar_.assign(l_, 0.0);
        a_.assign(l_, 0.0);
        double remaining = opt.C * opt.nu / 2.0;
        for (std::size_t i = 0; i < l_ && remaining > 0.0; ++i) {
            const double take = std::min(box, remaining);
            astar_[i] = take;
            a_[i] = take;
            remaining -= take;
        }
        cache_full_ = l_ <= 2048;
        if (cache_full_) {
            K_.assign(l_ * l_, 0.0);
            for (std::size_t i = 0; i < l_; ++i)
                for (std::size_t j = i; j < l_; ++j) {
                    const double k = rbf_kernel(samples[i].input, samples[j].input, opt.kernel);
                    K_[i * l_ + j] = k;
                    K_[j * l_ + i] = k;
                }
        }
        u_.assign(l_, 0.0);
        for (std::size_t i = 0; i < l_; ++i) {
            const double beta = astar_[i] - a_[i];
            if (beta != 0.0) add_column(i, beta);
        }
        active_.resize(l_);
        for (std::size_t i = 0; i < l_; ++i) active_[i] = i;
    }

    /// Runs the ascent; returns the final KKT violation.
    double solve(std::int64_t max_iterations) {
        const std::int64_t shrink_period = 1000;
        for (iterations_ = 0; iterations_ < max_iterations; ++iterations_) {
            if (opt_.shrinking && iterations_ > 0 && iterations_ % shrink_period == 0) shrink();
            if (!take_step()) {
                if (opt_.shrinking && active_.size() < l_) {
                    unshrink();
                    if (take_step()) continue;
                }
                break;
            }
        }
        return violation();
    }

    std::int64_t iterations() const { return iterations_; }

    double violation() const {
        double v = 0.0;
        const double star = group_violation(true, nullptr, nullptr);
        const double plain = group_violation(false, nullptr, nullptr);
        v = std::max(star, plain);
        return v;
    }

    SvrModel extract_model() const {
        SvrModel m;
        m.C = opt_.C;
        m.nu = opt_.nu;
        m.kernel = opt_.kernel;
        m.sample_count = static_cast<std::int64_t>(l_);
        for (std::size_t i = 0; i < l_; ++i) {
            const double beta = astar_[i] - a_[i];
            if (std::abs(beta) > 1e-12) {
                m.support_inputs.push_back(samples_[i].input);
                m.coefficients.push_back(beta);
            }
        }
        recover_bias(m);
        m.kkt_residual = violation();
        m.iterations = iterations_;
        return m;
    }

    double alpha_star(std::size_t i) const { return astar_[i]; }
    double alpha(std::size_t i) const { return a_[i]; }

private:
    double box() const { return opt_.C / static_cast<double>(l_); }

    double kernel_at(std::size_t i, std::size_t j) const {
        if (cache_full_) return K_[i * l_ + j];
        return rbf_kernel(samples_[i].input, samples_[j].input, opt_.kernel);
    }

    void add_column(std::size_t i, double delta_beta) {
        if (cache_full_) {
            const double* col = &K_[i * l_];
            for (std::size_t j = 0; j < l_; ++j) u_[j] += delta_beta * col[j];
        } else {
            for (std::size_t j = 0; j < l_; ++j)
                u_[j] += delta_beta * rbf_kernel(samples_[i].input, samples_[j].input, opt_.kernel);
        }
    }

    /// Gradient of the dual objective wrt α*_i is u_i − y_i; wrt α_i it is
    /// y_i − u_i.
    double grad(bool star, std::size_t i) const {
        const double g = u_[i] - samples_[i].target;
        return star ? g : -g;
    }

    /// Maximal violating pair in one group: i from the up set (below box),
    /// j from the low set (above zero). Returns the violation.
    double group_violation(bool star, std::size_t* out_i, std::size_t* out_j) const {
        const std::vector<double>& v = star ? astar_ : a_;
        double min_up = std::numeric_limits<double>::infinity();
        double max_low = -std::numeric_limits<double>::infinity();
        std::size_t arg_up = l_, arg_low = l_;
        const double b = box();
        for (std::size_t idx : active_) {
            const double g = grad(star, idx);
            if (v[idx] < b - 1e-15 && g < min_up) {
                min_up = g;
                arg_up = idx;
            }
            if (v[idx] > 1e-15 && g > max_low) {
                max_low = g;
                arg_low = idx;
            }
        }
        if (arg_up == l_ || arg_low == l_) return 0.0;
        if (out_i) *out_i = arg_up;
        if (out_j) *out_j = arg_low;
        return max_low - min_up;
    }

    bool take_step() {
        std::size_t i_star = 0, j_star = 0, i_plain = 0, j_plain = 0;
        const double v_star = group_violation(true, &i_star, &j_star);
        const double v_plain = group_violation(false, &i_plain, &j_plain);
        if (std::max(v_star, v_plain) <= opt_.tolerance) return false;
        if (v_star >= v_plain)
            two_variable_step(true, i_star, j_star);
        else
            two_variable_step(false, i_plain, j_plain);
        return true;
    }

    /// Moves δ from variable j to variable i inside one group; α_i + α_j is
    /// invariant, so both equality constraints are preserved.
    void two_variable_step(bool star, std::size_t i, std::size_t j) {
        std::vector<double>& v = star ? astar_ : a_;
        const double gi = grad(star, i);
        const double gj = grad(star, j);
        double curv = kernel_at(i, i) + kernel_at(j, j) - 2.0 * kernel_at(i, j);
        if (curv <= 1e-12) curv = 1e-12;
        double delta = (gj - gi) / curv;
        delta = std::min(delta, box() - v[i]);
        delta = std::min(delta, v[j]);
        if (delta <= 0.0) return;
        v[i] += delta;
        v[j] -= delta;
        const double sign = star ? 1.0 : -1.0;
        add_column(i, sign * delta);
        add_column(j, -sign * delta);
    }

    void shrink() {
        const double v = violation();
        if (v <= opt_.tolerance * 10.0) return;  // close to done, keep everything
        std::vector<std::size_t> keep;
        const double b = box();
        for (std::size_t idx : active_) {
            const bool star_pinned = (astar_[idx] <= 1e-15 && grad(true, idx) > v) ||
                                     (astar_[idx] >= b - 1e-15 && grad(true, idx) < -v);
            const bool plain_pinned = (a_[idx] <= 1e-15 && grad(false, idx) > v) ||
                                      (a_[idx] >= b - 1e-15 && grad(false, idx) < -v);
            if (!(star_pinned && plain_pinned)) keep.push_back(idx);
        }
        if (keep.size() >= 2) active_ = std::move(keep);
    }

    void unshrink() {
        active_.resize(l_);
        for (std::size_t i = 0; i < l_; ++i) active_[i] = i;
    }

    /// b and ε from the KKT boundary conditions: free α*_i pin b + ε to
    /// y_i − u_i, free α_i pin b − ε; without free points the bound
    /// inequalities bracket them and the midpoint is used.
    void recover_bias(SvrModel& m) const {
        const double b = box();
        auto bracket = [&](bool star) {
            double free_sum = 0.0;
            int free_count = 0;
            double lower = -std::numeric_limits<double>::infinity();
            double upper = std::numeric_limits<double>::infinity();
            const std::vector<double>& v = star ? astar_ : a_;
            for (std::size_t i = 0; i < l_; ++i) {
                const double residual = samples_[i].target - u_[i];  // y_i - u_i
                if (v[i] > 1e-12 && v[i] < b - 1e-12) {
                    free_sum += residual;
                    ++free_count;
                } else if (star) {
                    if (v[i] <= 1e-12) lower = std::max(lower, residual);
                    else upper = std::min(upper, residual);
                } else {
                    if (v[i] <= 1e-12) upper = std::min(upper, residual);
                    else lower = std::max(lower, residual);
                }
            }
            if (free_count > 0) return free_sum / free_count;
            if (std::isinf(lower) && std::isinf(upper)) return 0.0;
            if (std::isinf(lower)) return upper;
            if (std::isinf(upper)) return lower;
            return (lower + upper) / 2.0;
        };
        const double b_plus_eps = bracket(true);
        const double b_minus_eps = bracket(false);
        m.bias = (b_plus_eps + b_minus_eps) / 2.0;
        m.epsilon = std::max(0.0, (b_plus_eps - b_minus_eps) / 2.0);
    }

    const std::vector<TrainingSample>& samples_;
    SvrTrainOptions opt_;
    std::size_t l_;
    std::vector<double> astar_, a_;
    std::vector<double> u_;  // (Kβ)_i
    std::vector<double> K_;
    bool cache_full_ = false;
    std::vector<std::size_t> active_;
    std::int64_t iterations_ = 0;
};

}  // namespace detail_svr

/**
 * Trains a ν-SVR by pairwise working-set dual ascent. Throws
 * SvrConvergenceError (carrying the best-so-far model and its residual) if
 * the KKT tolerance is not reached within the iteration cap.
 */
inline SvrModel train_svr(const std::vector<TrainingSample>& samples, const SvrTrainOptions& opt) {
    if (samples.empty()) throw std::invalid_argument("train_svr: no samples");
    if (!(opt.nu > 0.0 && opt.nu <= 1.0)) throw std::invalid_argument("train_svr: nu must be in (0, 1]");
    if (!(opt.C > 0.0)) throw std::invalid_argument("train_svr: C must be positive");
    for (const auto& s : samples)
        if (s.input.size() != samples.front().input.size())
            throw std::invalid_argument("train_svr: inconsistent input dimensions");

    detail_svr::NuSolver solver(samples, opt);
    const std::int64_t cap = opt.max_iterations > 0
                                 ? opt.max_iterations
                                 : 100000 * static_cast<std::int64_t>(samples.size());
    const double residual = solver.solve(cap);
    SvrModel model = solver.extract_model();
    if (residual > opt.tolerance) throw SvrConvergenceError(std::move(model), residual);
    return model;
}

/**
 * Fitted-Q regression store: accumulates (feature, target) samples in a
 * sliding window (duplicate inputs replaced by the newest target) and refits
 * the ν-SVR every `refit_every` episodes. Reads predict with the last fitted
 * model; before the first fit every pair is unseen.
 */
class SvrStore final : public QValueStore {
public:
    struct Options {
        SvrTrainOptions train;
        std::int64_t window = 50000;
        std::int64_t refit_every = 25;
        std::size_t min_samples = 8;
        double q0 = 0.0;
        bool sigma_auto = true;  // sigma = sqrt(dimension) / 2
    };

    SvrStore(std::vector<std::pair<double, double>> bounds, Options opts)
        : bounds_(std::move(bounds)), opts_(opts) {
        if (opts_.sigma_auto)
            opts_.train.kernel.sigma = std::sqrt(static_cast<double>(bounds_.size())) / 2.0;
    }

    std::optional<double> find(const FeatureVector& v) const override {
        if (!model_) return std::nullopt;
        return model_->predict(normalize(v, bounds_));
    }

    void write(const FeatureVector& v, double value, std::int64_t) override {
        const std::uint64_t fp = fingerprint(v);
        auto it = index_.find(fp);
        if (it != index_.end() && it->second >= window_offset_) {
            window_[static_cast<std::size_t>(it->second - window_offset_)].target = value;
            return;
        }
        window_.push_back({normalize(v, bounds_), value});
        index_[fp] = window_offset_ + static_cast<std::int64_t>(window_.size()) - 1;
        while (static_cast<std::int64_t>(window_.size()) > opts_.window) {
            window_.pop_front();
            ++window_offset_;
        }
    }

    void end_episode(std::int64_t episode) override {
        if (opts_.refit_every <= 0 || episode % opts_.refit_every != 0) return;
        refit();
    }

    void refit() {
        if (window_.size() < opts_.min_samples) return;
        std::vector<TrainingSample> samples(window_.begin(), window_.end());
        try {
            model_ = train_svr(samples, opts_.train);
        } catch (const SvrConvergenceError& e) {
            model_ = e.best_model;  // best effort; residual recorded in the model
        }
        ++refit_count_;
    }

    double default_value() const override { return opts_.q0; }

    std::unique_ptr<QValueStore> clone() const override {
        auto copy = std::make_unique<SvrStore>(bounds_, opts_);
        copy->window_ = window_;
        copy->index_ = index_;
        copy->window_offset_ = window_offset_;
        copy->model_ = model_;
        copy->refit_count_ = refit_count_;
        return copy;
    }

    const std::optional<SvrModel>& model() const { return model_; }
    std::int64_t refit_count() const { return refit_count_; }
    std::size_t window_size() const { return window_.size(); }

private:
    std::vector<std::pair<double, double>> bounds_;
    Options opts_;
    std::deque<TrainingSample> window_;
    std::unordered_map<std::uint64_t, std::int64_t> index_;
    std::int64_t window_offset_ = 0;
    std::optional<SvrModel> model_;
    std::int64_t refit_count_ = 0;
};

}  // namespace rap
