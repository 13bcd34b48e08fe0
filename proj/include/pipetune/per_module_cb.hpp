#pragma once

#include <algorithm>
#include <cmath>
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

struct PerModuleCBConfig {
    double learning_rate = 0.001;  // shared by policy and critic
    int minibatch = 10;
    double l2_weight_decay = 0.01;
    double ent_wt = 0.01;
    int hidden = 0;        // 0: (input_dim + output_dim) / 2 per network
    bool concurrent = true;  // false: round-robin coordinate updates
};

struct PerModuleActResult {
    int action = 0;
    double prob = 0.0;
    double log_prob = 0.0;
    double entropy = 0.0;
};

// One softmax policy per module over that module's own action set, plus a
// critic per module predicting the final pipeline loss from the module's
// context. Policies descend the policy-gradient estimate
//   (L - C_j(x_j)) d log pi_j(a_j | x_j)  -  ent_wt dH(pi_j(x_j)),
// critics descend the squared prediction error; both share one RMSProp
// learning rate.
class PerModuleCBLearner : public Learner {
public:
    PerModuleCBLearner(const PipelineSpec& spec, const std::vector<int>& context_dims,
                       const PerModuleCBConfig& cfg, Rng& init_rng)
        : cfg_(cfg) {
        if (cfg.minibatch < 1) throw std::invalid_argument("per_module_cb: minibatch must be >= 1");
        if (static_cast<int>(context_dims.size()) != spec.module_count())
            throw std::invalid_argument("per_module_cb: one context dim per module required");
        for (int j = 1; j <= spec.module_count(); ++j) {
            const int d_in = context_dims[static_cast<std::size_t>(j - 1)];
            const int num_actions = spec.num_actions(j);
            ModuleNets nets;
            nets.policy = MLPParams(d_in, auto_hidden(d_in, num_actions), num_actions);
            nets.critic = MLPParams(d_in, auto_hidden(d_in, 1), 1);
            init_params(nets.policy, init_rng);
            init_params(nets.critic, init_rng);
            nets.policy_opt = RMSPropState(nets.policy, cfg.learning_rate, cfg.l2_weight_decay);
            nets.critic_opt = RMSPropState(nets.critic, cfg.learning_rate, cfg.l2_weight_decay);
            modules_.push_back(std::move(nets));
        }
    }

    std::string kind() const override { return "per_module_cb"; }

    void begin_episode(const std::vector<double>&) override {}

    PerModuleActResult act_full(int module_id, const std::vector<double>& context, Rng& rng) {
        ModuleNets& nets = module(module_id);
        ForwardCache cache;
        const std::vector<double> scores = forward(nets.policy, context, cache);
        const std::vector<double> probs = softmax_policy(scores, 1.0);
        PerModuleActResult result;
        result.action = sample_categorical(probs, rng);
        result.prob = probs[static_cast<std::size_t>(result.action)];
        result.log_prob = std::log(result.prob);
        result.entropy = entropy_and_grad(probs).first;
        return result;
    }

    std::pair<int, double> act(int module_id, const std::vector<double>& context,
                               Rng& rng) override {
        const PerModuleActResult r = act_full(module_id, context, rng);
        return {r.action, r.prob};
    }

    int greedy_action(int module_id, const std::vector<double>& context) override {
        ModuleNets& nets = module(module_id);
        ForwardCache cache;
        const std::vector<double> scores = forward(nets.policy, context, cache);
        return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    }

    double critic_value(int module_id, const std::vector<double>& context) {
        ForwardCache cache;
        return forward(module(module_id).critic, context, cache)[0];
    }

    MLPParams& policy_params(int module_id) { return module(module_id).policy; }
    MLPParams& critic_params(int module_id) { return module(module_id).critic; }

    void observe(const Trajectory& trajectory) override {
        batch_.push_back(trajectory);
        if (static_cast<int>(batch_.size()) >= cfg_.minibatch) {
            update(batch_);
            batch_.clear();
        }
    }

    // Updates every module on the minibatch (or a single module per call in
    // round-robin mode). Advantages use the critic as it stood before this
    // update; policy and critic then step together.
    void update(const std::vector<Trajectory>& batch) {
        const int m = static_cast<int>(modules_.size());
        if (cfg_.concurrent) {
            for (int j = 1; j <= m; ++j) update_module(j, batch);
        } else {
            update_module(round_robin_ + 1, batch);
            round_robin_ = (round_robin_ + 1) % m;
        }
    }

    void save(std::ostream& os) const override {
        os << std::setprecision(17) << "per_module_cb lr " << cfg_.learning_rate << " l2 "
           << cfg_.l2_weight_decay << " ent_wt " << cfg_.ent_wt << " minibatch " << cfg_.minibatch
           << " concurrent " << (cfg_.concurrent ? 1 : 0) << " round_robin " << round_robin_
           << " modules " << modules_.size() << '\n';
        for (std::size_t j = 0; j < modules_.size(); ++j) {
            const std::string p = "m" + std::to_string(j + 1);
            save_params(os, p + ".policy", modules_[j].policy);
            save_params(os, p + ".policy_opt.v", modules_[j].policy_opt.v);
            save_params(os, p + ".critic", modules_[j].critic);
            save_params(os, p + ".critic_opt.v", modules_[j].critic_opt.v);
        }
    }

    void load(std::istream& is) override {
        std::string tag, f1, f2, f3, f4, f5, f6, f7;
        double lr = 0.0, l2 = 0.0, ent = 0.0;
        int minibatch = 0, concurrent = 0, rr = 0;
        std::size_t count = 0;
        if (!(is >> tag >> f1 >> lr >> f2 >> l2 >> f3 >> ent >> f4 >> minibatch >> f5 >>
              concurrent >> f6 >> rr >> f7 >> count) ||
            tag != "per_module_cb" || count != modules_.size())
            throw std::runtime_error("per_module_cb: corrupted snapshot header");
        cfg_.learning_rate = lr;
        cfg_.l2_weight_decay = l2;
        cfg_.ent_wt = ent;
        cfg_.minibatch = minibatch;
        cfg_.concurrent = concurrent != 0;
        round_robin_ = rr;
        for (std::size_t j = 0; j < modules_.size(); ++j) {
            const std::string p = "m" + std::to_string(j + 1);
            modules_[j].policy = load_params(is, p + ".policy");
            modules_[j].policy_opt = RMSPropState(modules_[j].policy, lr, l2);
            modules_[j].policy_opt.v = load_params(is, p + ".policy_opt.v");
            modules_[j].critic = load_params(is, p + ".critic");
            modules_[j].critic_opt = RMSPropState(modules_[j].critic, lr, l2);
            modules_[j].critic_opt.v = load_params(is, p + ".critic_opt.v");
        }
        batch_.clear();
    }

    static int auto_hidden(int d_in, int d_out) { return std::max(1, (d_in + d_out) / 2); }

private:
    struct ModuleNets {
        MLPParams policy;
        MLPParams critic;
        RMSPropState policy_opt;
        RMSPropState critic_opt;
    };

    ModuleNets& module(int module_id) {
        if (module_id < 1 || module_id > static_cast<int>(modules_.size()))
            throw std::out_of_range("per_module_cb: bad module id");
        return modules_[static_cast<std::size_t>(module_id - 1)];
    }

    void update_module(int module_id, const std::vector<Trajectory>& batch) {
        ModuleNets& nets = module(module_id);
        MLPGrads policy_grads = zeros_like(nets.policy);
        MLPGrads critic_grads = zeros_like(nets.critic);
        const double inv_m = 1.0 / static_cast<double>(batch.size());
        ForwardCache cache;
        for (const Trajectory& traj : batch) {
            const StepRecord& step = traj.steps.at(static_cast<std::size_t>(module_id - 1));
            const double loss = traj.final_loss;

            const double value = forward(nets.critic, step.context, cache)[0];
            const double advantage = loss - value;
            backward_one_hot(nets.critic, cache, 0, 2.0 * (value - loss) * inv_m, critic_grads);

            const std::vector<double> scores = forward(nets.policy, step.context, cache);
            const std::vector<double> probs = softmax_policy(scores, 1.0);
            const std::vector<double> lp_grad =
                log_prob_grad_scores(probs, step.action_index, 1.0);
            const std::vector<double> ent_grad = entropy_and_grad(probs).second;
            std::vector<double> d_scores(probs.size());
            for (std::size_t i = 0; i < probs.size(); ++i)
                d_scores[i] = (advantage * lp_grad[i] - cfg_.ent_wt * ent_grad[i]) * inv_m;
            backward(nets.policy, cache, d_scores, policy_grads);
        }
        rmsprop_step(nets.policy, policy_grads, nets.policy_opt);
        rmsprop_step(nets.critic, critic_grads, nets.critic_opt);
    }

    PerModuleCBConfig cfg_;
    std::vector<ModuleNets> modules_;
    std::vector<Trajectory> batch_;
    int round_robin_ = 0;
};

}  // namespace pipetune
