#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "rapcontrol/env.hpp"
#include "rapcontrol/features.hpp"
#include "rapcontrol/value_store.hpp"

namespace rap {

/// Boltzmann temperature annealing: geometric decay with a positive floor by
/// default, a logarithmic schedule behind a flag.
struct TemperatureSchedule {
    double initial = 1.0;
    double decay = 0.997;
    double floor = 0.035;
    bool logarithmic = false;

    double at(std::int64_t episode) const {
        const double tau = logarithmic
                               ? initial * std::log(2.0) / std::log(1.0 + static_cast<double>(episode))
                               : initial * std::pow(decay, static_cast<double>(episode));
        return std::max(floor, tau);
    }
};

enum class UpdateRule {
    Auto,           // deterministic instances use the min rule
    Stochastic,     // (1 - γ) old + γ target
    DeterministicMin,
};

struct LearnerConfig {
    double discount = 0.95;
    TemperatureSchedule temperature;
    /// Per-pair learning rate γ0 / (1 + visits)^ω; ω in (0.5, 1] keeps
    /// Σγ = ∞ and Σγ² < ∞.
    double learning_rate0 = 1.0;
    double learning_rate_exponent = 0.85;
    std::int64_t episodes = 5000;
    /// Rollout-driven warm-start episodes; their traces still feed the
    /// updates (Q-learning is off-policy).
    std::int64_t warmup_episodes = 50;
    int rollout_samples = 5;  // Monte Carlo trajectories per action; 1 if deterministic
    UpdateRule update_rule = UpdateRule::Auto;
    /// Stop early when the best greedy cost has not improved for this many
    /// evaluations (0 = run the full budget).
    std::int64_t stagnation_window = 0;
    /// Evaluate the greedy policy every N episodes (0 = never).
    std::int64_t eval_every = 0;
    int eval_rollouts = 0;  // 0: 1 for deterministic instances, 30 otherwise
    /// Stop once the greedy policy's relative error reaches this fraction
    /// (needs known_optimum; < 0 disables).
    double stop_error_threshold = -1.0;
    double known_optimum = std::numeric_limits<double>::quiet_NaN();
    /// Softmin offset (in normalized cost units) placed on unseen actions
    /// above the worst seen estimate of the state.
    double exploration_margin = 0.1;
    std::uint64_t seed = 1;
};

/// Softmin selection probabilities: p_i ∝ exp(−q_i / τ), stabilized by
/// shifting with the minimum so extreme magnitudes cannot overflow.
inline std::vector<double> softmin_probabilities(const std::vector<double>& q, double tau) {
    if (q.empty()) throw std::invalid_argument("softmin_probabilities: no actions");
    if (!(tau > 0.0)) throw std::invalid_argument("softmin_probabilities: tau must be positive");
    const double q_min = *std::min_element(q.begin(), q.end());
    std::vector<double> p(q.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        p[i] = std::exp(-(q[i] - q_min) / tau);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
    double u = uniform01(rng);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (u < probs[i]) return i;
        u -= probs[i];
    }
    return probs.size() - 1;
}

/// One-step value update: convex combination in stochastic mode; in
/// deterministic mode the minimum of the stored estimate and the new target
/// (the first write stores the target unchanged).
inline double q_update(std::optional<double> old_value, double target, double gamma,
                       bool deterministic) {
    if (deterministic) return old_value ? std::min(*old_value, target) : target;
    const double old_v = old_value.value_or(0.0);
    return (1.0 - gamma) * old_v + gamma * target;
}

/// Bootstrapped target: g for terminal successors, g + α · min_next otherwise.
inline double q_target(double cost, double discount, bool next_terminal, double min_next_q) {
    return next_terminal ? cost : cost + discount * min_next_q;
}

/// External control hooks used by task clustering: a controller that handles
/// some decisions outside the learner (frozen cluster policies) and a filter
/// restricting the actions the learner itself considers.
struct EpisodeHooks {
    std::function<std::optional<ControlAction>(const EnvState&)> external_controller;
    std::function<void(const EnvState&, std::vector<ControlAction>&)> action_filter;
};

struct DecisionRecord {
    EnvState state;
    ControlAction action;
    FeatureVector features;
    /// Step cost plus every externally-controlled follow-up cost until the
    /// next recorded decision (semi-Markov fold).
    double cost = 0.0;
};

struct EpisodeTrace {
    std::vector<DecisionRecord> records;
    EnvState final_state;
    TerminalStatus terminal = TerminalStatus::Running;
    double total_cost = 0.0;
};

/// Greedy-by-immediate-cost base policy: assigns and selections incur no
/// completion cost and rank before wait; zero-cost ties break by the
/// expected completion contribution (nearest neighbor on TSP encodings,
/// shortest expected processing on job shops), then by canonical order.
inline ControlAction base_policy_action(const Env& env, const EnvState& s,
                                        const std::vector<ControlAction>& actions) {
    if (actions.empty()) throw std::logic_error("base_policy_action: no available actions");
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    double best_eager = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const auto& a = actions[i];
        const double cost = env.expected_immediate_cost(s, a);
        double eager = 0.0;
        if (a.kind == ControlAction::Kind::Assign)
            eager = env.expected_completion_contribution(s, a.op, a.resource);
        else if (a.kind == ControlAction::Kind::SelectResource)
            eager = env.expected_completion_contribution(s, s.pending_task, a.resource);
        else if (a.kind == ControlAction::Kind::SelectTask) {
            eager = std::numeric_limits<double>::infinity();
            for (StateId cap : env.instance().capable_states(a.op))
                for (ResourceId r = 0; r < env.instance().resource_count(); ++r) {
                    const auto& rs = s.resources[static_cast<std::size_t>(r)];
                    if (rs.idle() && rs.state == cap)
                        eager = std::min(eager, env.expected_completion_contribution(s, a.op, r));
                }
        }
        if (cost < best_cost - 1e-12 ||
            (std::abs(cost - best_cost) <= 1e-12 && eager < best_eager - 1e-12)) {
            best = i;
            best_cost = cost;
            best_eager = eager;
        }
    }
    return actions[best];
}

namespace detail_learner {

inline void hooked_actions(const Env& env, const EnvState& s, const EpisodeHooks* hooks,
                           std::vector<ControlAction>& out) {
    env.legal_actions(s, out);
    if (hooks && hooks->action_filter) hooks->action_filter(s, out);
}

/// Completes an episode from `state` under the base policy (respecting the
/// hooks) and returns the accumulated cost.
inline double base_completion_cost(const Env& env, EnvState state, Rng& rng,
                                   const EpisodeHooks* hooks) {
    double total = 0.0;
    std::vector<ControlAction> actions;
    const std::int64_t cap = 10 * (env.instance().duration_bound() +
                                   2 * env.instance().operation_count() + 10);
    std::int64_t steps = 0;
    while (env.status(state) == TerminalStatus::Running) {
        if (++steps > cap) throw std::logic_error("base policy rollout exceeded the step cap");
        std::optional<ControlAction> external;
        if (hooks && hooks->external_controller) external = hooks->external_controller(state);
        ControlAction choice;
        if (external) {
            choice = *external;
        } else {
            hooked_actions(env, state, hooks, actions);
            if (actions.empty())
                throw std::logic_error("base rollout: no actions after filtering");
            choice = base_policy_action(env, state, actions);
        }
        auto out = env.step(state, choice, rng);
        total += out.cost;
        state = std::move(out.next);
    }
    return total;
}

}  // namespace detail_learner

/**
 * One-step-lookahead rollout: every available action is scored by the step
 * cost plus the base policy's completion cost, averaged over `samples`
 * Monte Carlo trajectories (a single trajectory on deterministic instances),
 * and the minimizer is returned.
 */
inline ControlAction rollout_action(const Env& env, const EnvState& s, int samples, Rng& rng,
                                    const EpisodeHooks* hooks = nullptr) {
    std::vector<ControlAction> actions;
    detail_learner::hooked_actions(env, s, hooks, actions);
    if (actions.empty()) throw std::logic_error("rollout_action: no available actions");
    if (actions.size() == 1) return actions.front();
    const int m = env.deterministic() ? 1 : std::max(1, samples);
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        double score = 0.0;
        for (int k = 0; k < m; ++k) {
            auto out = env.step(s, actions[i], rng);
            score += out.cost + detail_learner::base_completion_cost(env, std::move(out.next), rng, hooks);
        }
        score /= m;
        if (score < best_score) {
            best_score = score;
            best = i;
        }
    }
    return actions[best];
}

struct EpisodePoint {
    std::int64_t episode = 0;
    double total_cost = 0.0;
    double tau = 0.0;
    double error = std::numeric_limits<double>::quiet_NaN();  // vs known optimum
    std::int64_t wall_us = 0;                                  // cumulative
};

struct TrainResult {
    std::vector<EpisodePoint> curve;
    std::int64_t episodes_run = 0;
    std::int64_t updates = 0;
    double best_greedy_cost = std::numeric_limits<double>::infinity();
    double final_greedy_cost = std::numeric_limits<double>::quiet_NaN();
    std::int64_t threshold_episode = -1;  // first greedy eval at/below the stop threshold
    std::int64_t threshold_wall_us = -1;
};

/**
 * Fitted Q-learning over an SSP environment: simulate an episode with the
 * behaviour policy (rollout during warm-start, annealed softmin afterwards),
 * then apply the value updates in reverse trajectory order so terminal
 * information propagates through the acyclic process in one sweep, and let
 * the store project (the regression store refits on its episode hook).
 */
class Learner {
public:
    Learner(const Env& env, const FeatureSchema& schema, QValueStore& store, LearnerConfig config)
        : env_(&env), schema_(&schema), store_(&store), cfg_(config), rng_(config.seed) {
        deterministic_updates_ = cfg_.update_rule == UpdateRule::DeterministicMin ||
                                 (cfg_.update_rule == UpdateRule::Auto && env.deterministic());
        // The deterministic variant keeps the minimum of realized outcomes;
        // discounting those would reward pushing completions later, which
        // inverts the ranking of cost-type measures.
        if (deterministic_updates_) cfg_.discount = 1.0;
        step_cap_ = 10 * (env.instance().duration_bound() +
                          2 * env.instance().operation_count() + 10);
    }

    void set_hooks(EpisodeHooks hooks) { hooks_ = std::move(hooks); }
    const EpisodeHooks* hooks() const { return &hooks_; }
    bool deterministic_updates() const { return deterministic_updates_; }
    Rng& rng() { return rng_; }
    const LearnerConfig& config() const { return cfg_; }

    using ActionSelector =
        std::function<ControlAction(const EnvState&, const std::vector<ControlAction>&, Rng&)>;

    /// Softmin over the stored estimates, normalized by the running cost
    /// scale. Unseen pairs enter above the worst seen estimate of the state,
    /// ordered by the immediate-cost base policy: the behaviour then replays
    /// the best known decisions with occasional dispatch-guided deviations,
    /// and acts as an annealed dispatching rule in states never seen before.
    /// (Scoring unseen pairs with the bare optimistic default instead would
    /// make every unvisited action dominate, and on instances whose state
    /// space cannot be exhausted the search never stops being a random walk.)
    ControlAction softmin_action(const EnvState& s, const std::vector<ControlAction>& actions,
                                 double tau, Rng& rng) {
        std::vector<double> q(actions.size());
        FeatureVector block;
        extract_state_block(s, env_->instance(), *schema_, block);
        const double scale = std::max(1e-9, cost_scale_);
        double worst_seen = -std::numeric_limits<double>::infinity();
        bool any_seen = false;
        std::vector<std::size_t> unseen;
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const auto v = find_q(block, s, actions[i]);
            if (v) {
                q[i] = *v / scale;
                worst_seen = std::max(worst_seen, q[i]);
                any_seen = true;
            } else {
                unseen.push_back(i);
            }
        }
        if (!unseen.empty()) {
            std::vector<std::pair<double, double>> rank_key(actions.size());
            for (std::size_t i : unseen)
                rank_key[i] = {env_->expected_immediate_cost(s, actions[i]),
                               eager_contribution(s, actions[i])};
            std::sort(unseen.begin(), unseen.end(), [&](std::size_t a, std::size_t b) {
                return rank_key[a] < rank_key[b];
            });
            const double base = any_seen ? worst_seen : 0.0;
            for (std::size_t r = 0; r < unseen.size(); ++r)
                q[unseen[r]] = base + cfg_.exploration_margin * static_cast<double>(r + 1);
        }
        const auto probs = softmin_probabilities(q, tau);
        return actions[sample_index(probs, rng)];
    }

    /// Exploiting policy: the smallest stored estimate among seen pairs,
    /// falling back to the immediate-cost base policy in states without any
    /// stored estimate.
    ControlAction greedy_action(const EnvState& s, const std::vector<ControlAction>& actions) {
        FeatureVector block;
        extract_state_block(s, env_->instance(), *schema_, block);
        std::size_t best = 0;
        double best_q = std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const auto v = find_q(block, s, actions[i]);
            if (!v) continue;
            if (*v < best_q) {
                best_q = *v;
                best = i;
                any = true;
            }
        }
        if (!any) return base_policy_action(*env_, s, actions);
        return actions[best];
    }

    /// Simulates one episode to a terminal state. Externally controlled
    /// steps are applied silently: their costs fold into the preceding
    /// recorded decision, matching the semi-Markov view the learner sees.
    EpisodeTrace run_episode(const ActionSelector& select, Rng& rng) {
        EpisodeTrace trace;
        EnvState state = env_->initial_state(rng);
        std::vector<ControlAction> actions;
        std::int64_t steps = 0;
        while (env_->status(state) == TerminalStatus::Running) {
            if (++steps > step_cap_)
                throw std::logic_error("run_episode exceeded the step cap; episode did not terminate");
            std::optional<ControlAction> external;
            if (hooks_.external_controller) external = hooks_.external_controller(state);
            if (external) {
                auto out = env_->step(state, *external, rng);
                trace.total_cost += out.cost;
                if (!trace.records.empty()) trace.records.back().cost += out.cost;
                state = std::move(out.next);
                continue;
            }
            detail_learner::hooked_actions(*env_, state, &hooks_, actions);
            if (actions.empty())
                throw std::logic_error("run_episode: no actions left after filtering");
            const ControlAction choice = select(state, actions, rng);
            DecisionRecord rec;
            rec.state = state;
            rec.action = choice;
            rec.features = extract(state, choice, env_->instance(), *schema_);
            auto out = env_->step(state, choice, rng);
            rec.cost = out.cost;
            trace.total_cost += out.cost;
            trace.records.push_back(std::move(rec));
            state = std::move(out.next);
        }
        trace.final_state = std::move(state);
        trace.terminal = env_->status(trace.final_state);
        return trace;
    }

    /// Reverse-order value sweep over a finished episode. The successor's
    /// freshly updated value is carried along the sweep, so the bootstrap
    /// never degrades to the optimistic default even if a slot collision
    /// evicts the entry between the two updates. Returns the number of
    /// updates applied (one per recorded decision).
    std::int64_t backward_update(const EpisodeTrace& trace, std::int64_t /*episode*/) {
        std::vector<ControlAction> actions;
        double carried = 0.0;  // updated value of the following record's pair
        for (std::size_t idx = trace.records.size(); idx-- > 0;) {
            const DecisionRecord& rec = trace.records[idx];
            const bool last = idx + 1 == trace.records.size();
            double min_next = 0.0;
            if (!last) {
                const EnvState& next = trace.records[idx + 1].state;
                detail_learner::hooked_actions(*env_, next, &hooks_, actions);
                min_next = std::min(carried, min_q(next, actions));
            }
            const double target = q_target(rec.cost, cfg_.discount, last, min_next);
            const std::uint64_t fp = fingerprint(rec.features);
            const std::int32_t visits = ++visit_counts_[fp];
            const double gamma =
                cfg_.learning_rate0 / std::pow(1.0 + visits, cfg_.learning_rate_exponent);
            const double updated =
                q_update(store_->find(rec.features), target, gamma, deterministic_updates_);
            store_->write(rec.features, updated, rec.state.now);
            carried = updated;
            ++update_count_;
        }
        return static_cast<std::int64_t>(trace.records.size());
    }

    /// Mean greedy-policy cost over `rollouts` fresh episodes.
    double evaluate_greedy(int rollouts, Rng& rng) {
        double total = 0.0;
        for (int i = 0; i < rollouts; ++i) {
            const auto trace = run_episode(
                [this](const EnvState& s, const std::vector<ControlAction>& actions, Rng&) {
                    return greedy_action(s, actions);
                },
                rng);
            total += trace.total_cost;
        }
        return total / rollouts;
    }

    /// One behaviour-policy training episode for the (1-based) episode
    /// index: rollout-driven during warm-up, annealed softmin afterwards,
    /// followed by the reverse value sweep and the store's episode hook.
    double training_episode(std::int64_t episode) {
        const double tau = cfg_.temperature.at(episode);
        EpisodeTrace trace;
        if (episode <= cfg_.warmup_episodes) {
            trace = run_episode(
                [this](const EnvState& s, const std::vector<ControlAction>& actions, Rng& r) {
                    (void)actions;
                    return rollout_action(*env_, s, cfg_.rollout_samples, r, &hooks_);
                },
                rng_);
        } else {
            trace = run_episode(
                [this, tau](const EnvState& s, const std::vector<ControlAction>& actions, Rng& r) {
                    return softmin_action(s, actions, tau, r);
                },
                rng_);
        }
        backward_update(trace, episode);
        store_->end_episode(episode);
        note_cost(trace.total_cost);
        return trace.total_cost;
    }

    /// The full training loop: warm-start episodes driven by the rollout
    /// policy, then softmin exploration with the annealed temperature.
    TrainResult train() {
        TrainResult result;
        const auto t0 = std::chrono::steady_clock::now();
        Rng eval_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);
        const int eval_rollouts =
            cfg_.eval_rollouts > 0 ? cfg_.eval_rollouts : (env_->deterministic() ? 1 : 30);
        std::int64_t stagnant = 0;

        for (std::int64_t episode = 1; episode <= cfg_.episodes; ++episode) {
            const double total_cost = training_episode(episode);

            EpisodePoint point;
            point.episode = episode;
            point.total_cost = total_cost;
            point.tau = cfg_.temperature.at(episode);
            point.wall_us = std::chrono::duration_cast<std::chrono::microseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
            if (!std::isnan(cfg_.known_optimum)) point.error = error_of(total_cost);
            result.curve.push_back(point);
            result.episodes_run = episode;

            if (cfg_.eval_every > 0 && episode % cfg_.eval_every == 0) {
                const double greedy_cost = evaluate_greedy(eval_rollouts, eval_rng);
                result.final_greedy_cost = greedy_cost;
                if (greedy_cost < result.best_greedy_cost - 1e-12) {
                    result.best_greedy_cost = greedy_cost;
                    stagnant = 0;
                } else {
                    ++stagnant;
                }
                const bool threshold_hit =
                    cfg_.stop_error_threshold >= 0.0 && !std::isnan(cfg_.known_optimum) &&
                    error_of(greedy_cost) <= cfg_.stop_error_threshold;
                if (threshold_hit && result.threshold_episode < 0) {
                    result.threshold_episode = episode;
                    result.threshold_wall_us = point.wall_us;
                }
                if (threshold_hit) break;
                if (cfg_.stagnation_window > 0 && stagnant >= cfg_.stagnation_window) break;
            }
        }
        result.updates = update_count_;
        if (std::isnan(result.final_greedy_cost)) {
            const int rollouts =
                cfg_.eval_rollouts > 0 ? cfg_.eval_rollouts : (env_->deterministic() ? 1 : 30);
            result.final_greedy_cost = evaluate_greedy(rollouts, eval_rng);
            result.best_greedy_cost = std::min(result.best_greedy_cost, result.final_greedy_cost);
        }
        return result;
    }

    std::int64_t update_count() const { return update_count_; }

    /// Relative error versus the known optimum (absolute when it is 0).
    double error_of(double cost) const {
        const double j = cfg_.known_optimum;
        return j > 0.0 ? (cost - j) / j : cost - j;
    }

private:
    /// Expected completion contribution of the action, for ranking unseen
    /// actions the way the base policy would.
    double eager_contribution(const EnvState& s, const ControlAction& a) const {
        switch (a.kind) {
            case ControlAction::Kind::Assign:
                return env_->expected_completion_contribution(s, a.op, a.resource);
            case ControlAction::Kind::SelectResource:
                return env_->expected_completion_contribution(s, s.pending_task, a.resource);
            case ControlAction::Kind::SelectTask: {
                double best = std::numeric_limits<double>::infinity();
                for (StateId cap : env_->instance().capable_states(a.op))
                    for (ResourceId r = 0; r < env_->instance().resource_count(); ++r) {
                        const auto& rs = s.resources[static_cast<std::size_t>(r)];
                        if (rs.idle() && rs.state == cap)
                            best = std::min(best,
                                            env_->expected_completion_contribution(s, a.op, r));
                    }
                return std::isinf(best) ? 0.0 : best;
            }
            case ControlAction::Kind::Wait: return 0.0;
        }
        return 0.0;
    }

    std::optional<double> find_q(const FeatureVector& state_block, const EnvState& s,
                                 const ControlAction& a) {
        if (scratch_.size() >= state_block.size() &&
            std::equal(state_block.begin(), state_block.end(), scratch_.begin()))
            scratch_.resize(state_block.size());
        else
            scratch_.assign(state_block.begin(), state_block.end());
        finish_with_action(s, a, env_->instance(), *schema_, scratch_);
        return store_->find(scratch_);
    }

    /// Minimum stored Q over the successor's actions, skipping unseen pairs;
    /// the optimistic default would otherwise leak into the targets (fatal
    /// for the locked-in minima of deterministic mode, biasing elsewhere).
    /// Infinity when nothing is seen; the backward sweep combines this with
    /// the carried value of the successor's own pair.
    double min_q(const EnvState& s, const std::vector<ControlAction>& actions) {
        FeatureVector block;
        extract_state_block(s, env_->instance(), *schema_, block);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : actions) {
            const auto v = find_q(block, s, a);
            if (v) best = std::min(best, *v);
        }
        return best;
    }

    void note_cost(double total) {
        recent_costs_.push_back(std::abs(total));
        if (recent_costs_.size() > 100) recent_costs_.pop_front();
        std::vector<double> sorted(recent_costs_.begin(), recent_costs_.end());
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double median = sorted[sorted.size() / 2];
        if (median > 1e-9) cost_scale_ = median;
    }

    const Env* env_;
    const FeatureSchema* schema_;
    QValueStore* store_;
    LearnerConfig cfg_;
    Rng rng_;
    EpisodeHooks hooks_;
    bool deterministic_updates_ = false;
    std::int64_t step_cap_ = 0;
    std::int64_t update_count_ = 0;
    std::unordered_map<std::uint64_t, std::int32_t> visit_counts_;
    std::deque<double> recent_costs_;
    double cost_scale_ = 1.0;
    FeatureVector scratch_;
};

}  // namespace rap
