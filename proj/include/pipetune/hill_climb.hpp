#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"

namespace pipetune {

// One epoch of the random coordinate descent: the chosen module, the mean
// loss observed for each of its actions, and the decision taken.
struct HillClimbEpoch {
    int epoch = 0;
    int module_id = 0;
    int incumbent_action = 0;
    std::vector<double> action_means;
    int chosen_action = 0;
    bool changed = false;
};

struct HillClimbResult {
    std::vector<int> assignment;
    std::vector<HillClimbEpoch> trace;
    bool converged = false;
    std::int64_t episodes_used = 0;
};

// Greedy hill climbing over constant assignments. Starts from a random
// assignment; each epoch re-optimizes one uniformly chosen module by trying
// every action with samples_per_action fresh episodes, holding the rest
// fixed. Stops once every module has been revisited without a change (local
// optimum) or the epoch budget runs out. Exact empirical ties keep the
// incumbent so the confirming pass terminates.
inline HillClimbResult hill_climb(Environment& env, int samples_per_action, int max_epochs,
                                  Rng& rng) {
    const PipelineSpec& spec = env.spec();
    const int m = spec.module_count();

    HillClimbResult result;
    result.assignment.resize(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j)
        result.assignment[static_cast<std::size_t>(j - 1)] = rng.uniform_int(spec.num_actions(j));

    std::set<int> unchanged_since_change;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        const int j = rng.uniform_int(m) + 1;
        const int num_actions = spec.num_actions(j);
        const int incumbent = result.assignment[static_cast<std::size_t>(j - 1)];

        HillClimbEpoch record;
        record.epoch = epoch;
        record.module_id = j;
        record.incumbent_action = incumbent;

        std::vector<int> candidate = result.assignment;
        for (int a = 0; a < num_actions; ++a) {
            candidate[static_cast<std::size_t>(j - 1)] = a;
            ConstantPolicy policy(candidate);
            double sum = 0.0;
            for (int t = 0; t < samples_per_action; ++t) {
                sum += run_episode(env, policy, result.episodes_used, rng).final_loss;
                ++result.episodes_used;
            }
            record.action_means.push_back(sum / samples_per_action);
        }

        int best = incumbent;
        for (int a = 0; a < num_actions; ++a)
            if (record.action_means[static_cast<std::size_t>(a)] <
                record.action_means[static_cast<std::size_t>(best)])
                best = a;
        record.chosen_action = best;
        record.changed = best != incumbent;
        result.assignment[static_cast<std::size_t>(j - 1)] = best;
        result.trace.push_back(record);

        if (record.changed) {
            unchanged_since_change.clear();
        } else {
            unchanged_since_change.insert(j);
            if (static_cast<int>(unchanged_since_change.size()) == m) {
                result.converged = true;
                break;
            }
        }
    }
    return result;
}

}  // namespace pipetune
