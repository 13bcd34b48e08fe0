#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"

namespace pipetune {

// Linear chain of n modules, two actions each (0 cheap / 1 expensive).
// Inputs are uniform bit strings; bit i names the cheapest accurate action
// for module i. Picking cheap on a 1-bit poisons the final prediction.
struct SyntheticConfig {
    int n = 4;
    double noise_half_width = 0.3;
};

struct SyntheticEpisodeState {
    std::vector<std::uint8_t> true_bits;
    std::vector<double> noisy_context;
    int accumulated_latency = 0;
    bool error_flag = false;
    std::vector<std::uint8_t> actions_so_far;
};

inline SyntheticEpisodeState sample_input(const SyntheticConfig& cfg, Rng& rng) {
    if (cfg.n < 1) throw std::invalid_argument("SyntheticConfig: n must be >= 1");
    SyntheticEpisodeState state;
    state.true_bits.resize(static_cast<std::size_t>(cfg.n));
    state.noisy_context.resize(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        state.true_bits[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
        state.noisy_context[static_cast<std::size_t>(i)] =
            static_cast<double>(state.true_bits[static_cast<std::size_t>(i)]) +
            rng.uniform(-cfg.noise_half_width, cfg.noise_half_width);
    }
    return state;
}

// Advances module i (1-based). Modules must be stepped in order. The error
// flag is sticky: a cheap action on a set bit ruins every later prediction.
inline void step_module(SyntheticEpisodeState& state, int module_index, int action) {
    const int expected = static_cast<int>(state.actions_so_far.size()) + 1;
    if (module_index != expected)
        throw std::logic_error("step_module: module " + std::to_string(module_index) +
                               " stepped out of order (expected " + std::to_string(expected) +
                               ")");
    if (action != 0 && action != 1)
        throw std::invalid_argument("step_module: action must be 0 or 1");
    state.accumulated_latency += action;
    if (state.true_bits.at(static_cast<std::size_t>(module_index - 1)) == 1 && action == 0)
        state.error_flag = true;
    state.actions_so_far.push_back(static_cast<std::uint8_t>(action));
}

// (4/n^2) (latency - n/2)^2 + error. The latency term is centered at n/2,
// the latency of perfect routing, and normalized into [0,1].
inline double synthetic_loss(int latency, bool error_flag, int n) {
    const double half = static_cast<double>(n) / 2.0;
    const double dev = static_cast<double>(latency) - half;
    return 4.0 / (static_cast<double>(n) * static_cast<double>(n)) * dev * dev +
           (error_flag ? 1.0 : 0.0);
}

// Module j's policy context: noisy input bits, upstream action indicators
// zero-padded to length n, and the current latency. Fixed width 2n+1 so a
// fixed-shape network serves every module of the chain.
inline std::vector<double> module_context(const SyntheticEpisodeState& state, int module_index) {
    const int n = static_cast<int>(state.true_bits.size());
    if (static_cast<int>(state.actions_so_far.size()) < module_index - 1)
        throw std::logic_error("module_context: modules 1.." +
                               std::to_string(module_index - 1) + " not stepped yet");
    std::vector<double> ctx;
    ctx.reserve(static_cast<std::size_t>(2 * n + 1));
    ctx.insert(ctx.end(), state.noisy_context.begin(), state.noisy_context.end());
    for (int i = 0; i < n; ++i)
        ctx.push_back(i < module_index - 1
                          ? static_cast<double>(state.actions_so_far[static_cast<std::size_t>(i)])
                          : 0.0);
    ctx.push_back(static_cast<double>(state.accumulated_latency));
    return ctx;
}

// Exact expected loss of a constant assignment under uniform bits. With k
// cheap modules the latency is n-k deterministically and each cheap module
// errs independently with probability 1/2, so P(error) = 1 - 2^{-k}.
inline double exact_expected_loss(const std::vector<int>& assignment, int n) {
    if (static_cast<int>(assignment.size()) != n)
        throw std::invalid_argument("exact_expected_loss: assignment length != n");
    int cheap = 0;
    for (int a : assignment) {
        if (a != 0 && a != 1)
            throw std::invalid_argument("exact_expected_loss: actions must be 0 or 1");
        if (a == 0) ++cheap;
    }
    const double half = static_cast<double>(n) / 2.0;
    const double dev = static_cast<double>(n - cheap) - half;
    const double latency_term =
        4.0 / (static_cast<double>(n) * static_cast<double>(n)) * dev * dev;
    return latency_term + (1.0 - std::pow(2.0, -static_cast<double>(cheap)));
}

// Enumerates all 2^n constant assignments. Ties break toward fewer cheap
// actions, then lexicographically smallest assignment.
inline std::pair<std::vector<int>, double> brute_force_best_constant(int n) {
    if (n < 1 || n > 20)
        throw std::invalid_argument("brute_force_best_constant: n must be in 1..20");
    std::vector<int> best;
    double best_loss = 0.0;
    int best_cheap = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        std::vector<int> assignment(static_cast<std::size_t>(n));
        int cheap = 0;
        for (int i = 0; i < n; ++i) {
            assignment[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
            if (assignment[static_cast<std::size_t>(i)] == 0) ++cheap;
        }
        const double loss = exact_expected_loss(assignment, n);
        bool better = best.empty() || loss < best_loss;
        if (!better && loss == best_loss) {
            if (cheap < best_cheap)
                better = true;
            else if (cheap == best_cheap && assignment < best)
                better = true;
        }
        if (better) {
            best = assignment;
            best_loss = loss;
            best_cheap = cheap;
        }
    }
    return {best, best_loss};
}

// Oracle table dump: one row per assignment.
inline void write_oracle_table_csv(int n, std::ostream& os) {
    os << "assignment_mask,num_cheap,expected_loss\n";
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        std::vector<int> assignment(static_cast<std::size_t>(n));
        int cheap = 0;
        for (int i = 0; i < n; ++i) {
            assignment[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
            if (assignment[static_cast<std::size_t>(i)] == 0) ++cheap;
        }
        os << mask << ',' << cheap << ',' << exact_expected_loss(assignment, n) << '\n';
    }
}

class SyntheticEnv : public Environment {
public:
    explicit SyntheticEnv(SyntheticConfig cfg)
        : cfg_(cfg), spec_(make_chain_spec(std::vector<int>(static_cast<std::size_t>(cfg.n), 2),
                                           "synthetic")) {
        for (ModuleSpec& m : spec_.modules) m.actions = ActionSet({"cheap", "expensive"});
    }

    const PipelineSpec& spec() const override { return spec_; }

    // The pipeline-level input is the noisy bit string alone.
    std::vector<double> initial_context() const override { return state_.noisy_context; }
    int initial_context_dim() const override { return cfg_.n; }
    int context_dim(int) const override { return 2 * cfg_.n + 1; }

    void begin_episode(Rng& rng) override { state_ = sample_input(cfg_, rng); }

    // Replays a fixed input; used by tests and oracle policies.
    void begin_episode_with_bits(const std::vector<std::uint8_t>& bits, Rng& rng) {
        if (static_cast<int>(bits.size()) != cfg_.n)
            throw std::invalid_argument("begin_episode_with_bits: wrong length");
        state_ = SyntheticEpisodeState{};
        state_.true_bits = bits;
        state_.noisy_context.resize(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            state_.noisy_context[i] = static_cast<double>(bits[i]) +
                                      rng.uniform(-cfg_.noise_half_width, cfg_.noise_half_width);
    }

    std::vector<double> context(int module_id) const override {
        return module_context(state_, module_id);
    }

    StepOutcome step(int module_id, int action_index, Rng&) override {
        step_module(state_, module_id, action_index);
        StepOutcome out;
        out.latency_contrib = static_cast<double>(action_index);
        out.output = {state_.error_flag ? 1.0 : 0.0};
        return out;
    }

    double final_loss() const override {
        return synthetic_loss(state_.accumulated_latency, state_.error_flag, cfg_.n);
    }

    const SyntheticEpisodeState& state() const { return state_; }
    const SyntheticConfig& config() const { return cfg_; }

private:
    SyntheticConfig cfg_;
    PipelineSpec spec_;
    SyntheticEpisodeState state_;
};

}  // namespace pipetune
