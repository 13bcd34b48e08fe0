#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"

namespace pipetune {

// Two-module face/landmark detection stand-in. The real detectors are
// proprietary black boxes; this surrogate is calibrated to their published
// latency anchors (fastest detector ~0.2 s, slowest ~2.5 s, latency growing
// with the number of faces) and exposes the same three loss variants. Only
// those anchors and orderings are meaningful; the remaining parameters are
// surrogate fiction and are all overridable in the config.

enum class PerceptionLossVariant { pure_latency, latency_fnr, latency_fnr_fdr };

inline PerceptionLossVariant perception_loss_variant_from_string(const std::string& name) {
    if (name == "pure_latency") return PerceptionLossVariant::pure_latency;
    if (name == "latency_fnr") return PerceptionLossVariant::latency_fnr;
    if (name == "latency_fnr_fdr") return PerceptionLossVariant::latency_fnr_fdr;
    throw std::invalid_argument("unknown perception loss variant: " + name);
}

inline std::string to_string(PerceptionLossVariant v) {
    switch (v) {
        case PerceptionLossVariant::pure_latency: return "pure_latency";
        case PerceptionLossVariant::latency_fnr: return "latency_fnr";
        case PerceptionLossVariant::latency_fnr_fdr: return "latency_fnr_fdr";
    }
    return "?";
}

struct PerceptionLossConfig {
    PerceptionLossVariant variant = PerceptionLossVariant::latency_fnr;
    double t0 = 1.3;  // target latency in seconds
};

struct DetectorModel {
    std::vector<double> base_latency = {0.2, 1.0, 0.5, 2.5};   // seconds
    std::vector<double> latency_slope = {0.05, 0.2, 0.1, 0.4};  // seconds per face
    double jitter_sigma = 0.1;                                  // lognormal sigma
    std::vector<double> recall = {0.80, 0.90, 0.85, 0.97};
    std::vector<double> fp_rate = {0.3, 0.15, 0.2, 0.05};  // spurious boxes per image

    int num_actions() const { return static_cast<int>(base_latency.size()); }
};

// Ground truth carries 5 landmarks per face; the 5/27/87-point detectors
// differ in per-face latency and recall against those 5.
struct LandmarkModel {
    std::vector<double> per_face_latency = {0.016, 0.034, 0.05};  // seconds per detected face
    std::vector<double> recall = {0.70, 0.88, 0.97};

    int num_actions() const { return static_cast<int>(per_face_latency.size()); }
};

struct FaceCountDistribution {
    double p_zero = 0.1;
    double geometric_p = 0.45;  // for counts >= 1; mass past the cap lands on the cap
    int cap = 10;
};

struct PerceptionConfig {
    FaceCountDistribution face_count;
    int embedding_dim = 64;
    double embedding_noise = 0.1;
    std::uint64_t projection_seed = 9001;
    std::uint64_t dataset_seed = 7;
    int train_size = 2139;
    int test_size = 550;
    DetectorModel detector;
    LandmarkModel landmark;
    PerceptionLossConfig loss;
};

struct SceneSample {
    int true_face_count = 0;
    double difficulty = 0.0;
    std::vector<double> context_embedding;
};

struct Counts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct DetectionResult {
    Counts counts;
    double latency = 0.0;
};

// FNR = FN/(FN+TP), FDR = FP/(FP+TP); empty denominators count as 0.
inline std::pair<double, double> fnr_fdr(const Counts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw std::invalid_argument("fnr_fdr: negative counts");
    const double fnr = (c.fn + c.tp) == 0 ? 0.0
                                          : static_cast<double>(c.fn) /
                                                static_cast<double>(c.fn + c.tp);
    const double fdr = (c.fp + c.tp) == 0 ? 0.0
                                          : static_cast<double>(c.fp) /
                                                static_cast<double>(c.fp + c.tp);
    return {fnr, fdr};
}

inline double perception_loss(double total_latency, double landmark_fnr, double face_fdr,
                              const PerceptionLossConfig& cfg) {
    const double dev = total_latency - cfg.t0;
    double loss = dev * dev;
    if (cfg.variant == PerceptionLossVariant::latency_fnr ||
        cfg.variant == PerceptionLossVariant::latency_fnr_fdr)
        loss += landmark_fnr;
    if (cfg.variant == PerceptionLossVariant::latency_fnr_fdr) loss += face_fdr;
    return loss;
}

// Fixed random projection used to embed (face-count one-hot, difficulty)
// into the context space; the same seed gives every learner the identical
// context distribution.
class SceneEmbedder {
public:
    SceneEmbedder(int embedding_dim, int cap, std::uint64_t projection_seed) {
        feature_dim_ = cap + 2;
        Rng rng(projection_seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
        projection_.resize(static_cast<std::size_t>(embedding_dim) *
                           static_cast<std::size_t>(feature_dim_));
        for (double& w : projection_) w = scale * rng.normal();
        embedding_dim_ = embedding_dim;
        cap_ = cap;
    }

    std::vector<double> embed(int face_count, double difficulty, double noise_sigma,
                              Rng& rng) const {
        std::vector<double> features(static_cast<std::size_t>(feature_dim_), 0.0);
        features[static_cast<std::size_t>(std::min(face_count, cap_))] = 1.0;
        features.back() = difficulty;
        std::vector<double> out(static_cast<std::size_t>(embedding_dim_), 0.0);
        for (int i = 0; i < embedding_dim_; ++i) {
            const double* row =
                &projection_[static_cast<std::size_t>(i) * static_cast<std::size_t>(feature_dim_)];
            double acc = 0.0;
            for (int k = 0; k < feature_dim_; ++k) acc += row[k] * features[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(i)] = acc + noise_sigma * rng.normal();
        }
        return out;
    }

private:
    std::vector<double> projection_;
    int feature_dim_ = 0;
    int embedding_dim_ = 0;
    int cap_ = 0;
};

inline int sample_face_count(const FaceCountDistribution& d, Rng& rng) {
    if (rng.bernoulli(d.p_zero)) return 0;
    int count = 1;
    while (count < d.cap && !rng.bernoulli(d.geometric_p)) ++count;
    return count;
}

inline SceneSample sample_scene(const PerceptionConfig& cfg, const SceneEmbedder& embedder,
                                Rng& rng) {
    SceneSample scene;
    scene.true_face_count = sample_face_count(cfg.face_count, rng);
    scene.difficulty = rng.uniform();
    scene.context_embedding =
        embedder.embed(scene.true_face_count, scene.difficulty, cfg.embedding_noise, rng);
    return scene;
}

// Latency grows affinely with the true face count, times lognormal jitter;
// recall and false positives are per-action Binomial/Poisson draws.
inline DetectionResult detect_faces(const SceneSample& scene, int action,
                                    const DetectorModel& model, Rng& rng) {
    if (action < 0 || action >= model.num_actions())
        throw std::out_of_range("detect_faces: bad action");
    DetectionResult r;
    const double mean_latency =
        model.base_latency[static_cast<std::size_t>(action)] +
        model.latency_slope[static_cast<std::size_t>(action)] * scene.true_face_count;
    r.latency = mean_latency * rng.lognormal(0.0, model.jitter_sigma);
    r.counts.tp = rng.binomial(scene.true_face_count, model.recall[static_cast<std::size_t>(action)]);
    r.counts.fn = scene.true_face_count - r.counts.tp;
    r.counts.fp = rng.poisson(model.fp_rate[static_cast<std::size_t>(action)]);
    return r;
}

// Landmarks are evaluated against 5 ground-truth points per true face.
// Detected faces (true or spurious) each cost per-face latency; landmarks on
// spurious faces count as false positives, landmarks of missed faces as
// false negatives.
inline DetectionResult detect_landmarks(const SceneSample& scene, const DetectionResult& faces,
                                        int action, const LandmarkModel& model, Rng& rng) {
    if (action < 0 || action >= model.num_actions())
        throw std::out_of_range("detect_landmarks: bad action");
    constexpr int kLandmarksPerFace = 5;
    DetectionResult r;
    const long detected = faces.counts.tp + faces.counts.fp;
    r.latency = model.per_face_latency[static_cast<std::size_t>(action)] * static_cast<double>(detected);
    r.counts.tp = rng.binomial(static_cast<int>(kLandmarksPerFace * faces.counts.tp),
                               model.recall[static_cast<std::size_t>(action)]);
    r.counts.fp = kLandmarksPerFace * faces.counts.fp;
    r.counts.fn = kLandmarksPerFace * scene.true_face_count - r.counts.tp;
    return r;
}

// The episodic environment: module 1 picks the face-detection algorithm,
// module 2 the landmark detector. Training episodes draw scenes from a fixed
// train pool; the test pool backs held-out evaluation.
class PerceptionEnv : public Environment {
public:
    explicit PerceptionEnv(PerceptionConfig cfg)
        : cfg_(std::move(cfg)),
          embedder_(cfg_.embedding_dim, cfg_.face_count.cap, cfg_.projection_seed),
          spec_(make_chain_spec({cfg_.detector.num_actions(), cfg_.landmark.num_actions()},
                                to_string(cfg_.loss.variant))) {
        if (cfg_.detector.num_actions() == 4)
            spec_.modules[0].actions = ActionSet({"algo0", "algo1", "algo2", "algo3"});
        if (cfg_.landmark.num_actions() == 3)
            spec_.modules[1].actions = ActionSet({"5pt", "27pt", "87pt"});
        Rng pool_rng(cfg_.dataset_seed);
        train_pool_.reserve(static_cast<std::size_t>(cfg_.train_size));
        for (int i = 0; i < cfg_.train_size; ++i)
            train_pool_.push_back(sample_scene(cfg_, embedder_, pool_rng));
        test_pool_.reserve(static_cast<std::size_t>(cfg_.test_size));
        for (int i = 0; i < cfg_.test_size; ++i)
            test_pool_.push_back(sample_scene(cfg_, embedder_, pool_rng));
    }

    const PipelineSpec& spec() const override { return spec_; }
    const PerceptionConfig& config() const { return cfg_; }

    std::vector<double> initial_context() const override { return scene_.context_embedding; }
    int initial_context_dim() const override { return cfg_.embedding_dim; }
    // module 2 additionally sees the detected-face count and module 1's latency
    int context_dim(int module_id) const override {
        return module_id == 1 ? cfg_.embedding_dim : cfg_.embedding_dim + 2;
    }

    void begin_episode(Rng& rng) override {
        begin_with_scene(train_pool_.at(static_cast<std::size_t>(rng.uniform_int(cfg_.train_size))));
    }

    std::size_t heldout_size() const override { return test_pool_.size(); }
    void begin_heldout_episode(std::size_t index) override {
        begin_with_scene(test_pool_.at(index));
    }

    void begin_with_scene(const SceneSample& scene) {
        scene_ = scene;
        faces_ = DetectionResult{};
        landmarks_ = DetectionResult{};
        stage_ = 0;
    }

    std::vector<double> context(int module_id) const override {
        if (module_id == 1) return scene_.context_embedding;
        if (module_id == 2) {
            if (stage_ < 1) throw std::logic_error("perception: module 2 context before module 1");
            std::vector<double> ctx = scene_.context_embedding;
            ctx.push_back(static_cast<double>(faces_.counts.tp + faces_.counts.fp));
            ctx.push_back(faces_.latency);
            return ctx;
        }
        throw std::out_of_range("perception: bad module id");
    }

    StepOutcome step(int module_id, int action, Rng& rng) override {
        StepOutcome out;
        if (module_id == 1) {
            if (stage_ != 0) throw std::logic_error("perception: module 1 stepped twice");
            faces_ = detect_faces(scene_, action, cfg_.detector, rng);
            stage_ = 1;
            out.latency_contrib = faces_.latency;
            out.output = {static_cast<double>(faces_.counts.tp),
                          static_cast<double>(faces_.counts.fp),
                          static_cast<double>(faces_.counts.fn)};
            return out;
        }
        if (module_id == 2) {
            if (stage_ != 1) throw std::logic_error("perception: module 2 stepped out of order");
            landmarks_ = detect_landmarks(scene_, faces_, action, cfg_.landmark, rng);
            stage_ = 2;
            out.latency_contrib = landmarks_.latency;
            out.output = {static_cast<double>(landmarks_.counts.tp),
                          static_cast<double>(landmarks_.counts.fp),
                          static_cast<double>(landmarks_.counts.fn)};
            return out;
        }
        throw std::out_of_range("perception: bad module id");
    }

    double final_loss() const override {
        if (stage_ != 2) throw std::logic_error("perception: loss before both modules ran");
        const double landmark_fnr = fnr_fdr(landmarks_.counts).first;
        const double face_fdr = fnr_fdr(faces_.counts).second;
        return perception_loss(faces_.latency + landmarks_.latency, landmark_fnr, face_fdr,
                               cfg_.loss);
    }

    double episode_tag() const override { return static_cast<double>(scene_.true_face_count); }

    const SceneSample& scene() const { return scene_; }
    const std::vector<SceneSample>& test_pool() const { return test_pool_; }

private:
    PerceptionConfig cfg_;
    SceneEmbedder embedder_;
    PipelineSpec spec_;
    std::vector<SceneSample> train_pool_;
    std::vector<SceneSample> test_pool_;
    SceneSample scene_;
    DetectionResult faces_;
    DetectionResult landmarks_;
    int stage_ = 0;
};

// ── Config I/O ──

inline void from_json_into(const nlohmann::json& j, DetectorModel& m) {
    if (j.contains("base_latency")) m.base_latency = j.at("base_latency").get<std::vector<double>>();
    if (j.contains("latency_slope")) m.latency_slope = j.at("latency_slope").get<std::vector<double>>();
    if (j.contains("jitter_sigma")) m.jitter_sigma = j.at("jitter_sigma").get<double>();
    if (j.contains("recall")) m.recall = j.at("recall").get<std::vector<double>>();
    if (j.contains("fp_rate")) m.fp_rate = j.at("fp_rate").get<std::vector<double>>();
    const std::size_t n = m.base_latency.size();
    if (m.latency_slope.size() != n || m.recall.size() != n || m.fp_rate.size() != n)
        throw std::invalid_argument("detector: per-action tables must have equal length");
    for (double r : m.recall)
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("detector: recall outside [0,1]");
    for (double b : m.base_latency)
        if (b <= 0.0) throw std::invalid_argument("detector: base latency must be positive");
}

inline void from_json_into(const nlohmann::json& j, LandmarkModel& m) {
    if (j.contains("per_face_latency"))
        m.per_face_latency = j.at("per_face_latency").get<std::vector<double>>();
    if (j.contains("recall")) m.recall = j.at("recall").get<std::vector<double>>();
    if (m.per_face_latency.size() != m.recall.size())
        throw std::invalid_argument("landmark: per-action tables must have equal length");
    for (std::size_t i = 1; i < m.per_face_latency.size(); ++i)
        if (m.per_face_latency[i] < m.per_face_latency[i - 1])
            throw std::invalid_argument("landmark: per-face latencies must be non-decreasing");
}

inline PerceptionConfig perception_config_from_json(const nlohmann::json& j) {
    PerceptionConfig cfg;
    if (j.contains("loss")) {
        cfg.loss.variant = perception_loss_variant_from_string(
            j.at("loss").value("variant", std::string("latency_fnr")));
        cfg.loss.t0 = j.at("loss").value("t0", 1.3);
        if (cfg.loss.t0 <= 0.0) throw std::invalid_argument("perception: t0 must be positive");
    }
    if (j.contains("face_count")) {
        const auto& f = j.at("face_count");
        cfg.face_count.p_zero = f.value("p_zero", cfg.face_count.p_zero);
        cfg.face_count.geometric_p = f.value("geometric_p", cfg.face_count.geometric_p);
        cfg.face_count.cap = f.value("cap", cfg.face_count.cap);
    }
    cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
    cfg.embedding_noise = j.value("embedding_noise", cfg.embedding_noise);
    cfg.projection_seed = j.value("projection_seed", cfg.projection_seed);
    cfg.dataset_seed = j.value("dataset_seed", cfg.dataset_seed);
    cfg.train_size = j.value("train_size", cfg.train_size);
    cfg.test_size = j.value("test_size", cfg.test_size);
    if (j.contains("detector")) from_json_into(j.at("detector"), cfg.detector);
    if (j.contains("landmark")) from_json_into(j.at("landmark"), cfg.landmark);
    return cfg;
}

}  // namespace pipetune
