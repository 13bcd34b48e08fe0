#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"

namespace pipetune {

// Online metareasoning learner. The driving loop per episode is:
//   begin_episode(x1); act(1, ctx1) .. act(M, ctxM); observe(trajectory)
// observe() buffers trajectories and applies one optimizer update whenever a
// full minibatch has accumulated. greedy_action() is the exploitation-only
// read used for held-out evaluation and action-count reports; it must not
// disturb learning state.
class Learner {
public:
    virtual ~Learner() = default;

    virtual std::string kind() const = 0;
    virtual void begin_episode(const std::vector<double>& initial_context) = 0;
    virtual std::pair<int, double> act(int module_id, const std::vector<double>& context,
                                       Rng& rng) = 0;
    virtual int greedy_action(int module_id, const std::vector<double>& context) = 0;
    virtual void observe(const Trajectory& trajectory) = 0;

    virtual void save(std::ostream& os) const = 0;
    virtual void load(std::istream& is) = 0;
};

// Adapts a Learner to the core Policy interface so run_episode can drive it.
// Module 1's visit opens the learner's episode with the environment's
// initial input.
class LearnerPolicy : public Policy {
public:
    LearnerPolicy(Learner& learner, Environment& env, bool greedy = false)
        : learner_(learner), env_(env), greedy_(greedy) {}

    std::pair<int, double> act(int module_id, const std::vector<double>& context,
                               Rng& rng) override {
        if (module_id == 1) learner_.begin_episode(env_.initial_context());
        if (greedy_) return {learner_.greedy_action(module_id, context), 1.0};
        return learner_.act(module_id, context, rng);
    }

private:
    Learner& learner_;
    Environment& env_;
    bool greedy_;
};

// FNV-1a over the serialized pipeline spec; snapshots refuse to restore
// against a different pipeline.
inline std::uint64_t spec_hash(const PipelineSpec& spec) {
    const std::string text = pipeline_spec_to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline void save_learner_snapshot(std::ostream& os, const Learner& learner,
                                  const PipelineSpec& spec, const Rng& rng) {
    os << "pipetune-snapshot v1\n";
    os << "kind " << learner.kind() << '\n';
    os << "spec_hash " << spec_hash(spec) << '\n';
    os << "rng " << rng.serialize() << '\n';
    learner.save(os);
}

// Restores into an already-constructed learner of the right kind. Throws on
// version/kind/spec mismatch or a corrupted payload.
inline void load_learner_snapshot(std::istream& is, Learner& learner, const PipelineSpec& spec,
                                  Rng& rng) {
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "pipetune-snapshot" || version != "v1")
        throw std::runtime_error("snapshot: bad magic or unsupported version");
    std::string tag, kind;
    if (!(is >> tag >> kind) || tag != "kind")
        throw std::runtime_error("snapshot: missing learner kind");
    if (kind != learner.kind())
        throw std::runtime_error("snapshot: learner kind mismatch (" + kind + " vs " +
                                 learner.kind() + ")");
    std::uint64_t hash = 0;
    if (!(is >> tag >> hash) || tag != "spec_hash")
        throw std::runtime_error("snapshot: missing spec hash");
    if (hash != spec_hash(spec))
        throw std::runtime_error("snapshot: pipeline spec hash mismatch");
    std::string rng_line;
    if (!(is >> tag) || tag != "rng" || !std::getline(is, rng_line))
        throw std::runtime_error("snapshot: missing rng state");
    rng.deserialize(rng_line);
    learner.load(is);
}

}  // namespace pipetune
