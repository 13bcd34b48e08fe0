#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pipetune/learner.hpp"
#include "pipetune/nn.hpp"
#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"

namespace pipetune {

// Mixed-radix bijection between per-module action tuples and a flat joint
// index, module-1-major: (a1, a2) -> a1 |A_2| + a2 for a two-module chain.
class JointActionCodec {
public:
    JointActionCodec() = default;
    explicit JointActionCodec(const PipelineSpec& spec) {
        std::int64_t total = 1;
        for (const ModuleSpec& m : spec.modules) {
            radices_.push_back(m.actions.size());
            total *= m.actions.size();
            if (total > (1 << 20))
                throw std::invalid_argument("joint action space too large to enumerate");
        }
        size_ = static_cast<int>(total);
    }

    int size() const { return size_; }

    int encode(const std::vector<int>& actions) const {
        if (actions.size() != radices_.size())
            throw std::invalid_argument("encode: wrong number of actions");
        int joint = 0;
        for (std::size_t j = 0; j < radices_.size(); ++j) {
            if (actions[j] < 0 || actions[j] >= radices_[j])
                throw std::out_of_range("encode: action index out of range");
            joint = joint * radices_[j] + actions[j];
        }
        return joint;
    }

    std::vector<int> decode(int joint) const {
        if (joint < 0 || joint >= size_) throw std::out_of_range("decode: joint index out of range");
        std::vector<int> actions(radices_.size());
        for (std::size_t j = radices_.size(); j-- > 0;) {
            actions[j] = joint % radices_[j];
            joint /= radices_[j];
        }
        return actions;
    }

private:
    std::vector<int> radices_;
    int size_ = 0;
};

// Per-example importance-weighted regression loss (1/pi) (r - s)^2.
inline double iwr_example_loss(double prob, double reward, double score) {
    const double residual = reward - score;
    return residual * residual / prob;
}

struct GlobalCBConfig {
    double lambda = 1.0;  // Boltzmann inverse temperature
    double learning_rate = 0.001;
    int minibatch = 10;
    double l2_weight_decay = 0.01;
    int hidden = 0;  // 0: (input_dim + joint_actions) / 2
};

// One contextual bandit over the cartesian product of all module action
// sets, conditioned on the pipeline's initial input only. Scores are
// regressed on reward (negative loss) with importance-weighted regression;
// exploration is Boltzmann over lambda-scaled scores.
class GlobalCBLearner : public Learner {
public:
    GlobalCBLearner(const PipelineSpec& spec, int input_dim, const GlobalCBConfig& cfg, Rng& init_rng)
        : cfg_(cfg), codec_(spec) {
        if (cfg.lambda <= 0.0) throw std::invalid_argument("global_cb: lambda must be positive");
        if (cfg.minibatch < 1) throw std::invalid_argument("global_cb: minibatch must be >= 1");
        const int hidden = cfg.hidden > 0 ? cfg.hidden : std::max(1, (input_dim + codec_.size()) / 2);
        policy_ = MLPParams(input_dim, hidden, codec_.size());
        init_params(policy_, init_rng);
        opt_ = RMSPropState(policy_, cfg.learning_rate, cfg.l2_weight_decay);
    }

    std::string kind() const override { return "global_cb"; }

    const JointActionCodec& codec() const { return codec_; }
    const MLPParams& params() const { return policy_; }

    MLPParams& mutable_params() { return policy_; }

    struct Example {
        std::vector<double> context;
        int joint = 0;
        double prob = 0.0;
        double reward = 0.0;
    };

    void begin_episode(const std::vector<double>& initial_context) override {
        pending_.context = initial_context;
        pending_.drawn = false;
        greedy_cached_ = false;
    }

    // The joint configuration is drawn once, at the first module; later
    // modules replay their slice of it with probability 1 (the draw already
    // determined them).
    std::pair<int, double> act(int module_id, const std::vector<double>&, Rng& rng) override {
        if (module_id == 1) {
            ForwardCache cache;
            const std::vector<double> scores = forward(policy_, pending_.context, cache);
            const std::vector<double> probs = softmax_policy(scores, cfg_.lambda);
            pending_.joint = sample_categorical(probs, rng);
            pending_.prob = probs[static_cast<std::size_t>(pending_.joint)];
            pending_.actions = codec_.decode(pending_.joint);
            pending_.drawn = true;
            return {pending_.actions[0], pending_.prob};
        }
        if (!pending_.drawn) throw std::logic_error("global_cb: act called before module 1");
        return {pending_.actions[static_cast<std::size_t>(module_id - 1)], 1.0};
    }

    int greedy_action(int module_id, const std::vector<double>&) override {
        if (module_id == 1) {
            ForwardCache cache;
            const std::vector<double> scores = forward(policy_, pending_.context, cache);
            const auto it = std::max_element(scores.begin(), scores.end());
            greedy_actions_ = codec_.decode(static_cast<int>(it - scores.begin()));
            greedy_cached_ = true;
        }
        if (!greedy_cached_) throw std::logic_error("global_cb: greedy_action before module 1");
        return greedy_actions_[static_cast<std::size_t>(module_id - 1)];
    }

    void observe(const Trajectory& trajectory) override {
        if (!pending_.drawn) throw std::logic_error("global_cb: observe without a drawn action");
        Example ex;
        ex.context = pending_.context;
        ex.joint = pending_.joint;
        ex.prob = pending_.prob;
        ex.reward = -trajectory.final_loss;  // reward is the negated pipeline loss
        batch_.push_back(std::move(ex));
        pending_.drawn = false;
        if (static_cast<int>(batch_.size()) >= cfg_.minibatch) {
            update(batch_);
            batch_.clear();
        }
    }

    // One RMSProp step on the minibatch-mean IWR loss
    //   (1/pi(a|x)) (r - s(x,a))^2,
    // gradient flowing only to the chosen action's score per example.
    void update(const std::vector<Example>& batch);

    void save(std::ostream& os) const override {
        os << std::setprecision(17) << "global_cb lambda " << cfg_.lambda << " lr "
           << cfg_.learning_rate << " l2 " << cfg_.l2_weight_decay << " minibatch "
           << cfg_.minibatch << '\n';
        save_params(os, "policy", policy_);
        save_params(os, "opt.v", opt_.v);
    }

    void load(std::istream& is) override {
        std::string tag, f1, f2, f3, f4;
        int minibatch = 0;
        double lambda = 0.0, lr = 0.0, l2 = 0.0;
        if (!(is >> tag >> f1 >> lambda >> f2 >> lr >> f3 >> l2 >> f4 >> minibatch) ||
            tag != "global_cb")
            throw std::runtime_error("global_cb: corrupted snapshot header");
        cfg_.lambda = lambda;
        cfg_.learning_rate = lr;
        cfg_.l2_weight_decay = l2;
        cfg_.minibatch = minibatch;
        MLPParams p = load_params(is, "policy");
        if (p.output_dim != codec_.size())
            throw std::runtime_error("global_cb: snapshot output dim mismatch");
        policy_ = std::move(p);
        opt_ = RMSPropState(policy_, lr, l2);
        opt_.v = load_params(is, "opt.v");
        batch_.clear();
        pending_.drawn = false;
    }

private:
    struct Pending {
        std::vector<double> context;
        std::vector<int> actions;
        int joint = 0;
        double prob = 0.0;
        bool drawn = false;
    };

    GlobalCBConfig cfg_;
    JointActionCodec codec_;
    MLPParams policy_;
    RMSPropState opt_;
    Pending pending_;
    std::vector<int> greedy_actions_;
    bool greedy_cached_ = false;
    std::vector<Example> batch_;
};

inline void GlobalCBLearner::update(const std::vector<Example>& batch) {
    MLPGrads grads = zeros_like(policy_);
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    ForwardCache cache;
    for (const Example& ex : batch) {
        if (ex.prob <= 0.0) throw std::runtime_error("global_cb: non-positive action probability");
        forward_hidden(policy_, ex.context, cache);
        const double score = score_for(policy_, cache, ex.joint);
        const double g = -2.0 * (ex.reward - score) / ex.prob * inv_m;
        backward_one_hot(policy_, cache, ex.joint, g, grads);
    }
    rmsprop_step(policy_, grads, opt_);
}

}  // namespace pipetune
