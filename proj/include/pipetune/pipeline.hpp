#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipetune/rng.hpp"

namespace pipetune {

// A module's finite set of configurations. Actions are addressed by dense
// integer index; the optional names are labels for reports only.
struct ActionSet {
    std::vector<std::string> names;

    ActionSet() = default;
    explicit ActionSet(int count) {
        for (int i = 0; i < count; ++i) names.push_back("a" + std::to_string(i));
    }
    explicit ActionSet(std::vector<std::string> labels) : names(std::move(labels)) {}

    int size() const { return static_cast<int>(names.size()); }
};

// One node of the pipeline DAG. Modules are numbered 1..M in topological
// order, so every parent index is strictly smaller than the module's own.
struct ModuleSpec {
    int id = 0;
    ActionSet actions;
    std::vector<int> parents;
};

struct PipelineSpec {
    std::vector<ModuleSpec> modules;
    std::string loss_name;

    int module_count() const { return static_cast<int>(modules.size()); }
    int num_actions(int module_id) const { return modules.at(module_id - 1).actions.size(); }
};

// Builds the linear-chain spec used by both bundled environments.
inline PipelineSpec make_chain_spec(const std::vector<int>& action_counts,
                                    const std::string& loss_name) {
    PipelineSpec spec;
    spec.loss_name = loss_name;
    for (int j = 1; j <= static_cast<int>(action_counts.size()); ++j) {
        ModuleSpec m;
        m.id = j;
        m.actions = ActionSet(action_counts[static_cast<std::size_t>(j - 1)]);
        if (j > 1) m.parents.push_back(j - 1);
        spec.modules.push_back(std::move(m));
    }
    return spec;
}

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_spec(const PipelineSpec& spec) {
    ValidationReport report;
    const int m = spec.module_count();
    if (m == 0) report.violations.push_back("pipeline has no modules");
    for (int j = 1; j <= m; ++j) {
        const ModuleSpec& mod = spec.modules[static_cast<std::size_t>(j - 1)];
        const std::string tag = "module " + std::to_string(j) + ": ";
        if (mod.id != j)
            report.violations.push_back(tag + "id " + std::to_string(mod.id) +
                                        " breaks dense 1..M ordering");
        if (mod.actions.size() < 1) report.violations.push_back(tag + "empty action set");
        for (int p : mod.parents) {
            if (p < 1)
                report.violations.push_back(tag + "parent index " + std::to_string(p) +
                                            " out of range");
            else if (p >= j)
                report.violations.push_back(tag + "parent index not less than own (" +
                                            std::to_string(p) + ")");
        }
        if (j == 1 && !mod.parents.empty())
            report.violations.push_back(tag + "first module must have no parents");
    }
    return report;
}

// One module visit within an episode.
struct StepRecord {
    int module_id = 0;
    std::vector<double> context;  // x_t^j as seen by the policy
    int action_index = 0;
    double action_prob = 1.0;  // probability the policy assigned to the action
    double latency_contrib = 0.0;
    std::vector<double> output;  // environment-opaque z_t^j payload
};

struct Trajectory {
    std::int64_t episode_index = 0;
    std::vector<StepRecord> steps;
    double total_latency = 0.0;
    double final_loss = 0.0;
};

// Context-dependent action chooser for one or more modules. act() returns
// the sampled action index and the probability the policy assigned to it
// (1.0 for deterministic policies).
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::pair<int, double> act(int module_id, const std::vector<double>& context,
                                       Rng& rng) = 0;
};

// Plays one fixed action per module.
class ConstantPolicy : public Policy {
public:
    explicit ConstantPolicy(std::vector<int> assignment) : assignment_(std::move(assignment)) {}

    std::pair<int, double> act(int module_id, const std::vector<double>&, Rng&) override {
        return {assignment_.at(static_cast<std::size_t>(module_id - 1)), 1.0};
    }

private:
    std::vector<int> assignment_;
};

struct StepOutcome {
    double latency_contrib = 0.0;
    std::vector<double> output;
};

class EpisodeError : public std::runtime_error {
public:
    explicit EpisodeError(const std::string& what) : std::runtime_error(what) {}
};

// Episodic simulation surface. One episode at a time: begin_episode draws a
// fresh input, then context/step are called module by module in id order,
// then final_loss reads the terminal loss.
//
// Environments hold no cross-episode learner state, so independent runs can
// execute in parallel as long as each owns its environment and Rng.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const PipelineSpec& spec() const = 0;

    // Featurization of the raw pipeline input x_t^1 (what a pipeline-level
    // policy conditions on). May be lower-dimensional than context(1).
    virtual std::vector<double> initial_context() const = 0;
    virtual int initial_context_dim() const = 0;
    virtual int context_dim(int module_id) const = 0;

    virtual void begin_episode(Rng& rng) = 0;
    virtual std::vector<double> context(int module_id) const = 0;
    virtual StepOutcome step(int module_id, int action_index, Rng& rng) = 0;
    virtual double final_loss() const = 0;

    // Fixed evaluation pool, when the environment has one (0 otherwise).
    virtual std::size_t heldout_size() const { return 0; }
    virtual void begin_heldout_episode(std::size_t) {
        throw std::logic_error("environment has no held-out pool");
    }
    // Scalar descriptor of the current episode's input used for
    // subpopulation breakdowns in reports (e.g. face count); 0 by default.
    virtual double episode_tag() const { return 0.0; }
};

class NonFiniteLossError : public std::runtime_error {
public:
    explicit NonFiniteLossError(const std::string& what) : std::runtime_error(what) {}
};

// Steps the episode the environment is already positioned on (begin_episode
// or begin_heldout_episode has run): modules in increasing id order, each
// module's context computed before its action is drawn. Throws EpisodeError
// if the environment fails mid-episode; no partial trajectory escapes.
inline Trajectory run_positioned_episode(Environment& env, Policy& policy,
                                         std::int64_t episode_index, Rng& rng) {
    Trajectory traj;
    traj.episode_index = episode_index;
    const int m = env.spec().module_count();
    for (int j = 1; j <= m; ++j) {
        StepRecord rec;
        rec.module_id = j;
        rec.context = env.context(j);
        auto [action, prob] = policy.act(j, rec.context, rng);
        if (action < 0 || action >= env.spec().num_actions(j))
            throw EpisodeError("policy returned out-of-range action for module " +
                               std::to_string(j));
        rec.action_index = action;
        rec.action_prob = prob;
        StepOutcome out = env.step(j, action, rng);
        rec.latency_contrib = out.latency_contrib;
        rec.output = std::move(out.output);
        traj.total_latency += rec.latency_contrib;
        traj.steps.push_back(std::move(rec));
    }
    traj.final_loss = env.final_loss();
    if (!std::isfinite(traj.final_loss))
        throw NonFiniteLossError("environment reported non-finite loss");
    return traj;
}

// Draws a fresh input and runs it through the pipeline.
inline Trajectory run_episode(Environment& env, Policy& policy, std::int64_t episode_index,
                              Rng& rng) {
    env.begin_episode(rng);
    return run_positioned_episode(env, policy, episode_index, rng);
}

inline double average_loss(const std::vector<Trajectory>& trajectories) {
    if (trajectories.empty())
        throw std::invalid_argument("average_loss: empty trajectory list");
    double sum = 0.0;
    for (const Trajectory& t : trajectories) sum += t.final_loss;
    return sum / static_cast<double>(trajectories.size());
}

// Flat per-step record dump for debugging.
inline void write_trajectories_csv(const std::vector<Trajectory>& trajectories,
                                   std::ostream& os) {
    os << "episode,module,action,prob,latency,loss\n";
    for (const Trajectory& t : trajectories)
        for (const StepRecord& s : t.steps)
            os << t.episode_index << ',' << s.module_id << ',' << s.action_index << ','
               << s.action_prob << ',' << s.latency_contrib << ',' << t.final_loss << '\n';
}

inline nlohmann::json pipeline_spec_to_json(const PipelineSpec& spec) {
    nlohmann::json j;
    j["loss_name"] = spec.loss_name;
    j["modules"] = nlohmann::json::array();
    for (const ModuleSpec& m : spec.modules) {
        nlohmann::json jm;
        jm["id"] = m.id;
        jm["num_actions"] = m.actions.size();
        jm["parents"] = m.parents;
        j["modules"].push_back(std::move(jm));
    }
    return j;
}

inline PipelineSpec pipeline_spec_from_json(const nlohmann::json& j) {
    PipelineSpec spec;
    spec.loss_name = j.value("loss_name", std::string{});
    for (const nlohmann::json& jm : j.at("modules")) {
        ModuleSpec m;
        m.id = jm.at("id").get<int>();
        m.actions = ActionSet(jm.at("num_actions").get<int>());
        if (jm.contains("parents")) m.parents = jm.at("parents").get<std::vector<int>>();
        spec.modules.push_back(std::move(m));
    }
    return spec;
}

}  // namespace pipetune
