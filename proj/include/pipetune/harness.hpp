#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipetune/global_cb.hpp"
#include "pipetune/hill_climb.hpp"
#include "pipetune/learner.hpp"
#include "pipetune/per_module_cb.hpp"
#include "pipetune/perception.hpp"
#include "pipetune/pipeline.hpp"
#include "pipetune/rng.hpp"
#include "pipetune/synthetic.hpp"

namespace pipetune {

// ── Configuration ──

enum class EvalProtocol { running_average, heldout };

struct LearnerSettings {
    std::string kind = "per_module_cb";  // or "global_cb"
    double learning_rate = 0.001;
    int minibatch = 10;
    double l2_weight_decay = 0.01;
    double lambda = 1.0;    // global CB only
    double ent_wt = 0.01;   // per-module CB only
    int hidden = 0;         // 0 = width rule (input+output)/2
    bool concurrent = true;  // per-module CB update mode
};

struct BaselineSettings {
    std::string mode = "hill_climb";  // or "fixed"
    double fixed_loss = 0.0;
    int samples_per_action = 1000;
    int max_epochs = 200;
    long eval_episodes = 100000;  // Monte-Carlo evaluation budget (synthetic)
};

struct ExperimentConfig {
    nlohmann::json environment;  // {"type": "synthetic"|"perception", ...}
    LearnerSettings learner;
    long episodes = 10000;
    EvalProtocol protocol = EvalProtocol::running_average;
    long eval_interval = 1000;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    BaselineSettings baseline;
    bool allow_out_of_grid = false;
    nlohmann::json grid;  // optional per-hyperparameter value lists
};

// Hyperparameter grids searched in the experiments; configs must stay on
// them unless allow_out_of_grid is set.
inline const std::vector<double>& grid_learning_rates() {
    static const std::vector<double> v{0.0001, 0.0004, 0.001, 0.005};
    return v;
}
inline const std::vector<double>& grid_minibatches() {
    static const std::vector<double> v{5, 10, 20, 50, 100};
    return v;
}
inline const std::vector<double>& grid_l2() {
    static const std::vector<double> v{0.01, 0.05, 0.1, 1};
    return v;
}
inline const std::vector<double>& grid_lambda() {
    static const std::vector<double> v{0.1, 0.3, 1, 5, 10};
    return v;
}
inline const std::vector<double>& grid_ent_wt() {
    static const std::vector<double> v{0.01, 0.03, 0.1, 0.3, 1};
    return v;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.environment = j.at("environment");
    if (!cfg.environment.contains("type"))
        throw std::invalid_argument("config: environment.type missing");
    if (j.contains("learner")) {
        const auto& l = j.at("learner");
        cfg.learner.kind = l.value("kind", cfg.learner.kind);
        cfg.learner.learning_rate = l.value("learning_rate", cfg.learner.learning_rate);
        cfg.learner.minibatch = l.value("minibatch", cfg.learner.minibatch);
        cfg.learner.l2_weight_decay = l.value("l2", cfg.learner.l2_weight_decay);
        cfg.learner.lambda = l.value("lambda", cfg.learner.lambda);
        cfg.learner.ent_wt = l.value("ent_wt", cfg.learner.ent_wt);
        cfg.learner.hidden = l.value("hidden", cfg.learner.hidden);
        cfg.learner.concurrent = l.value("concurrent", cfg.learner.concurrent);
    }
    cfg.episodes = j.value("episodes", cfg.episodes);
    if (j.contains("eval")) {
        const std::string protocol = j.at("eval").value("protocol", std::string("running_average"));
        if (protocol == "running_average")
            cfg.protocol = EvalProtocol::running_average;
        else if (protocol == "heldout")
            cfg.protocol = EvalProtocol::heldout;
        else
            throw std::invalid_argument("config: unknown eval protocol " + protocol);
        cfg.eval_interval = j.at("eval").value("interval", cfg.eval_interval);
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        cfg.baseline.mode = b.value("mode", cfg.baseline.mode);
        cfg.baseline.fixed_loss = b.value("loss", cfg.baseline.fixed_loss);
        cfg.baseline.samples_per_action = b.value("samples_per_action", cfg.baseline.samples_per_action);
        cfg.baseline.max_epochs = b.value("max_epochs", cfg.baseline.max_epochs);
        cfg.baseline.eval_episodes = b.value("eval_episodes", cfg.baseline.eval_episodes);
    }
    cfg.allow_out_of_grid = j.value("allow_out_of_grid", false);
    if (j.contains("grid")) cfg.grid = j.at("grid");
    return cfg;
}

namespace detail {
inline bool on_grid(double value, const std::vector<double>& grid) {
    for (double g : grid)
        if (value == g) return true;
    return false;
}
}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.episodes <= 0) throw std::invalid_argument("config: episodes must be positive");
    if (cfg.eval_interval <= 0) throw std::invalid_argument("config: eval interval must be positive");
    if (cfg.seeds.empty()) throw std::invalid_argument("config: at least one seed required");
    if (cfg.learner.kind != "global_cb" && cfg.learner.kind != "per_module_cb")
        throw std::invalid_argument("config: unknown learner kind " + cfg.learner.kind);
    if (cfg.baseline.mode != "hill_climb" && cfg.baseline.mode != "fixed")
        throw std::invalid_argument("config: unknown baseline mode " + cfg.baseline.mode);
    if (cfg.allow_out_of_grid) return;
    if (!detail::on_grid(cfg.learner.learning_rate, grid_learning_rates()))
        throw std::invalid_argument("config: learning_rate off the declared grid");
    if (!detail::on_grid(cfg.learner.minibatch, grid_minibatches()))
        throw std::invalid_argument("config: minibatch off the declared grid");
    if (!detail::on_grid(cfg.learner.l2_weight_decay, grid_l2()))
        throw std::invalid_argument("config: l2 off the declared grid");
    if (cfg.learner.kind == "global_cb" && !detail::on_grid(cfg.learner.lambda, grid_lambda()))
        throw std::invalid_argument("config: lambda off the declared grid");
    if (cfg.learner.kind == "per_module_cb" && !detail::on_grid(cfg.learner.ent_wt, grid_ent_wt()))
        throw std::invalid_argument("config: ent_wt off the declared grid");
}

// ── Factories ──

inline std::unique_ptr<Environment> make_environment(const nlohmann::json& env_json) {
    const std::string type = env_json.at("type").get<std::string>();
    if (type == "synthetic") {
        SyntheticConfig cfg;
        cfg.n = env_json.value("n", 4);
        cfg.noise_half_width = env_json.value("noise_half_width", 0.3);
        if (cfg.n < 1) throw std::invalid_argument("synthetic: n must be >= 1");
        if (cfg.noise_half_width < 0) throw std::invalid_argument("synthetic: negative noise width");
        return std::make_unique<SyntheticEnv>(cfg);
    }
    if (type == "perception")
        return std::make_unique<PerceptionEnv>(perception_config_from_json(env_json));
    throw std::invalid_argument("unknown environment type: " + type);
}

inline std::unique_ptr<Learner> make_learner(const LearnerSettings& settings, Environment& env,
                                             Rng& init_rng) {
    if (settings.kind == "global_cb") {
        GlobalCBConfig cfg;
        cfg.lambda = settings.lambda;
        cfg.learning_rate = settings.learning_rate;
        cfg.minibatch = settings.minibatch;
        cfg.l2_weight_decay = settings.l2_weight_decay;
        cfg.hidden = settings.hidden;
        return std::make_unique<GlobalCBLearner>(env.spec(), env.initial_context_dim(), cfg,
                                                 init_rng);
    }
    if (settings.kind == "per_module_cb") {
        PerModuleCBConfig cfg;
        cfg.learning_rate = settings.learning_rate;
        cfg.minibatch = settings.minibatch;
        cfg.l2_weight_decay = settings.l2_weight_decay;
        cfg.ent_wt = settings.ent_wt;
        cfg.hidden = settings.hidden;
        cfg.concurrent = settings.concurrent;
        std::vector<int> dims;
        for (int j = 1; j <= env.spec().module_count(); ++j) dims.push_back(env.context_dim(j));
        return std::make_unique<PerModuleCBLearner>(env.spec(), dims, cfg, init_rng);
    }
    throw std::invalid_argument("unknown learner kind: " + settings.kind);
}

// ── Evaluation helpers ──

struct HeldoutResult {
    double mean_loss = 0.0;
    std::vector<double> losses;  // per held-out input, in pool order
    std::vector<double> tags;    // episode_tag per input (e.g. face count)
};

// Greedy (exploitation-only) pass over the environment's held-out pool.
inline HeldoutResult evaluate_heldout(Environment& env, Learner& learner, Rng& rng) {
    HeldoutResult result;
    const std::size_t n = env.heldout_size();
    if (n == 0) throw std::logic_error("evaluate_heldout: environment has no held-out pool");
    LearnerPolicy policy(learner, env, /*greedy=*/true);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        env.begin_heldout_episode(i);
        const Trajectory traj = run_positioned_episode(env, policy, static_cast<std::int64_t>(i), rng);
        result.losses.push_back(traj.final_loss);
        result.tags.push_back(env.episode_tag());
        sum += traj.final_loss;
    }
    result.mean_loss = sum / static_cast<double>(n);
    return result;
}

inline HeldoutResult evaluate_heldout_constant(Environment& env, const std::vector<int>& assignment,
                                               Rng& rng) {
    HeldoutResult result;
    const std::size_t n = env.heldout_size();
    if (n == 0) throw std::logic_error("evaluate_heldout_constant: no held-out pool");
    ConstantPolicy policy(assignment);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        env.begin_heldout_episode(i);
        const Trajectory traj = run_positioned_episode(env, policy, static_cast<std::int64_t>(i), rng);
        result.losses.push_back(traj.final_loss);
        result.tags.push_back(env.episode_tag());
        sum += traj.final_loss;
    }
    result.mean_loss = sum / static_cast<double>(n);
    return result;
}

// ── Baseline (hill-climbed constant assignment) ──

struct BaselineReport {
    std::vector<int> assignment;
    bool converged = false;
    std::int64_t episodes_used = 0;
    double loss = 0.0;  // headline value: exact oracle (synthetic) or held-out mean (perception)
    double oracle_loss = 0.0;  // synthetic only
    bool has_oracle = false;
    double mc_mean = 0.0;
    double mc_stderr = 0.0;
};

// Runs hill climbing and estimates the resulting constant assignment's
// expected loss: Monte-Carlo plus the exact oracle on the synthetic chain,
// held-out average on environments with a test pool.
inline BaselineReport evaluate_baseline(const nlohmann::json& env_json,
                                        const BaselineSettings& settings, std::uint64_t seed) {
    const std::unique_ptr<Environment> env = make_environment(env_json);
    BaselineReport report;
    if (settings.mode == "fixed") {
        report.loss = settings.fixed_loss;
        return report;
    }
    Rng rng(mix_seed(seed, 0xBA5Eu));
    const HillClimbResult hc =
        hill_climb(*env, settings.samples_per_action, settings.max_epochs, rng);
    report.assignment = hc.assignment;
    report.converged = hc.converged;
    report.episodes_used = hc.episodes_used;

    if (env->heldout_size() > 0) {
        Rng eval_rng(mix_seed(seed, 0xBEEFu));
        const HeldoutResult heldout = evaluate_heldout_constant(*env, hc.assignment, eval_rng);
        report.loss = heldout.mean_loss;
        report.mc_mean = heldout.mean_loss;
        double var = 0.0;
        for (double l : heldout.losses) var += (l - heldout.mean_loss) * (l - heldout.mean_loss);
        const std::size_t n = heldout.losses.size();
        if (n > 1) report.mc_stderr = std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n));
        return report;
    }

    // Monte-Carlo over fresh episodes
    Rng eval_rng(mix_seed(seed, 0xBEEFu));
    ConstantPolicy policy(hc.assignment);
    double sum = 0.0, sumsq = 0.0;
    for (long t = 0; t < settings.eval_episodes; ++t) {
        const double loss = run_episode(*env, policy, t, eval_rng).final_loss;
        sum += loss;
        sumsq += loss * loss;
    }
    const double mean = sum / static_cast<double>(settings.eval_episodes);
    report.mc_mean = mean;
    report.mc_stderr = std::sqrt(
        std::max(0.0, sumsq / settings.eval_episodes - mean * mean) /
        static_cast<double>(settings.eval_episodes));
    report.loss = mean;
    if (const auto* synthetic = dynamic_cast<const SyntheticEnv*>(env.get())) {
        report.oracle_loss = exact_expected_loss(hc.assignment, synthetic->config().n);
        report.has_oracle = true;
        report.loss = report.oracle_loss;
    }
    return report;
}

// ── Seeded runs ──

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::vector<long> eval_episodes;
    std::vector<double> eval_losses;
    double cumulative_loss = 0.0;
    long episodes_completed = 0;
    long episodes_failed = 0;
    bool aborted = false;
    std::string abort_reason;
    std::vector<double> episode_losses;  // populated only when requested
    std::string snapshot;                // populated only when requested
};

struct RunMetrics {
    std::vector<long> eval_episodes;
    std::vector<double> mean_loss;
    std::vector<double> stderr_loss;
    double baseline_loss = 0.0;
    BaselineReport baseline;
    std::vector<SeedRunResult> per_seed;
};

struct RunOptions {
    int threads = 1;
    bool keep_episode_losses = false;
    bool keep_snapshots = false;
};

namespace detail {

inline SeedRunResult run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const RunOptions& options) {
    SeedRunResult result;
    result.seed = seed;
    const std::unique_ptr<Environment> env = make_environment(cfg.environment);
    Rng init_rng(mix_seed(seed, 0x1217u));
    const std::unique_ptr<Learner> learner = make_learner(cfg.learner, *env, init_rng);
    Rng rng(mix_seed(seed, 0x5EEDu));
    LearnerPolicy policy(*learner, *env);

    double running_sum = 0.0;
    long eval_counter = 0;
    auto eval_point = [&](long episode) {
        double value = 0.0;
        if (cfg.protocol == EvalProtocol::running_average) {
            value = result.episodes_completed > 0
                        ? running_sum / static_cast<double>(result.episodes_completed)
                        : 0.0;
        } else {
            Rng eval_rng(mix_seed(seed, 0xE7A1u + static_cast<std::uint64_t>(eval_counter)));
            value = evaluate_heldout(*env, *learner, eval_rng).mean_loss;
        }
        ++eval_counter;
        result.eval_episodes.push_back(episode);
        result.eval_losses.push_back(value);
    };

    for (long t = 0; t < cfg.episodes; ++t) {
        try {
            const Trajectory traj = run_episode(*env, policy, t, rng);
            learner->observe(traj);
            running_sum += traj.final_loss;
            result.cumulative_loss += traj.final_loss;
            ++result.episodes_completed;
            if (options.keep_episode_losses) result.episode_losses.push_back(traj.final_loss);
        } catch (const NonFiniteLossError& e) {
            result.aborted = true;
            result.abort_reason = e.what();
            break;
        } catch (const EpisodeError& e) {
            ++result.episodes_failed;  // episode skipped, run continues
            (void)e;
        }
        if ((t + 1) % cfg.eval_interval == 0) eval_point(t + 1);
    }
    if (result.eval_episodes.empty() ||
        (!result.aborted && result.eval_episodes.back() != cfg.episodes))
        eval_point(result.aborted ? result.episodes_completed : cfg.episodes);

    if (options.keep_snapshots) {
        std::ostringstream snap;
        save_learner_snapshot(snap, *learner, env->spec(), rng);
        result.snapshot = snap.str();
    }
    return result;
}

// Seeds share nothing (own environment, learner, rng streams), so thread
// scheduling cannot change any result; outputs land by seed index.
inline std::vector<SeedRunResult> run_seeds(const ExperimentConfig& cfg,
                                            const RunOptions& options) {
    std::vector<SeedRunResult> results(cfg.seeds.size());
    const int threads =
        std::max(1, std::min<int>(options.threads, static_cast<int>(cfg.seeds.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            results[i] = detail::run_one_seed(cfg, cfg.seeds[i], options);
        return results;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) return;
            results[i] = detail::run_one_seed(cfg, cfg.seeds[i], options);
        }
    };
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    return results;
}

}  // namespace detail

// Runs every seed and aggregates eval points across seeds.
inline RunMetrics run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {}) {
    validate_experiment_config(cfg);
    if (cfg.protocol == EvalProtocol::heldout &&
        make_environment(cfg.environment)->heldout_size() == 0)
        throw std::invalid_argument("config: heldout protocol needs an environment test pool");

    RunMetrics metrics;
    metrics.baseline = evaluate_baseline(cfg.environment, cfg.baseline, cfg.seeds.front());
    metrics.baseline_loss = metrics.baseline.loss;
    metrics.per_seed = detail::run_seeds(cfg, options);

    // aggregate over seeds that produced each eval point
    std::size_t points = 0;
    for (const SeedRunResult& r : metrics.per_seed) points = std::max(points, r.eval_episodes.size());
    for (std::size_t k = 0; k < points; ++k) {
        std::vector<double> values;
        long episode = 0;
        for (const SeedRunResult& r : metrics.per_seed)
            if (k < r.eval_losses.size()) {
                values.push_back(r.eval_losses[k]);
                episode = r.eval_episodes[k];
            }
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double se = 0.0;
        if (values.size() > 1) {
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size() - 1);
            se = std::sqrt(var / static_cast<double>(values.size()));
        }
        metrics.eval_episodes.push_back(episode);
        metrics.mean_loss.push_back(mean);
        metrics.stderr_loss.push_back(se);
    }
    return metrics;
}

// ── CSV / report emission ──

// Learning-curve CSV: one row per eval point. percent_improvement is
// recomputable from the same row's columns.
inline void emit_curves(const RunMetrics& metrics, std::ostream& os) {
    if (metrics.eval_episodes.empty()) throw std::invalid_argument("emit_curves: empty metrics");
    os << std::setprecision(17);
    os << "episodes,mean_loss,stderr,baseline_loss,percent_improvement\n";
    for (std::size_t k = 0; k < metrics.eval_episodes.size(); ++k) {
        const double baseline = metrics.baseline_loss;
        const double improvement =
            baseline != 0.0 ? 100.0 * (baseline - metrics.mean_loss[k]) / baseline : 0.0;
        os << metrics.eval_episodes[k] << ',' << metrics.mean_loss[k] << ','
           << metrics.stderr_loss[k] << ',' << baseline << ',' << improvement << '\n';
    }
}

inline void emit_curves_file(const RunMetrics& metrics, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("emit_curves: cannot write " + path);
    emit_curves(metrics, os);
}

inline nlohmann::json run_report_json(const ExperimentConfig& cfg, const RunMetrics& metrics) {
    nlohmann::json j;
    j["episodes"] = cfg.episodes;
    j["learner"] = cfg.learner.kind;
    j["baseline"] = {{"loss", metrics.baseline_loss},
                     {"assignment", metrics.baseline.assignment},
                     {"converged", metrics.baseline.converged},
                     {"mc_mean", metrics.baseline.mc_mean},
                     {"mc_stderr", metrics.baseline.mc_stderr}};
    if (metrics.baseline.has_oracle) j["baseline"]["oracle_loss"] = metrics.baseline.oracle_loss;
    j["seeds"] = nlohmann::json::array();
    for (const SeedRunResult& r : metrics.per_seed) {
        nlohmann::json s;
        s["seed"] = r.seed;
        s["episodes_completed"] = r.episodes_completed;
        s["episodes_failed"] = r.episodes_failed;
        s["cumulative_loss"] = r.cumulative_loss;
        s["final_eval_loss"] = r.eval_losses.empty() ? 0.0 : r.eval_losses.back();
        s["aborted"] = r.aborted;
        if (r.aborted) s["abort_reason"] = r.abort_reason;
        j["seeds"].push_back(std::move(s));
    }
    return j;
}

// ── Grid search ──

struct GridPoint {
    LearnerSettings settings;
    double mean_cumulative_loss = 0.0;
    std::vector<double> per_seed_cumulative;
};

struct GridSearchResult {
    std::vector<GridPoint> points;
    std::size_t best_index = 0;
};

// The paper's default search grid for a learner kind.
inline nlohmann::json paper_default_grid(const std::string& kind) {
    nlohmann::json grid;
    grid["learning_rate"] = grid_learning_rates();
    grid["minibatch"] = grid_minibatches();
    grid["l2"] = grid_l2();
    if (kind == "global_cb") grid["lambda"] = grid_lambda();
    if (kind == "per_module_cb") grid["ent_wt"] = grid_ent_wt();
    return grid;
}

// Expands the grid section into concrete learner settings, one per point.
// Hyperparameters without a list keep the configured scalar.
inline std::vector<LearnerSettings> enumerate_grid(const ExperimentConfig& cfg) {
    auto values = [&](const char* key, double fallback) {
        if (cfg.grid.contains(key)) return cfg.grid.at(key).get<std::vector<double>>();
        return std::vector<double>{fallback};
    };
    const std::vector<double> lrs = values("learning_rate", cfg.learner.learning_rate);
    const std::vector<double> minibatches = values("minibatch", cfg.learner.minibatch);
    const std::vector<double> l2s = values("l2", cfg.learner.l2_weight_decay);
    const bool is_global = cfg.learner.kind == "global_cb";
    const std::vector<double> algo =
        is_global ? values("lambda", cfg.learner.lambda) : values("ent_wt", cfg.learner.ent_wt);

    std::vector<LearnerSettings> points;
    for (double lr : lrs)
        for (double mb : minibatches)
            for (double l2 : l2s)
                for (double a : algo) {
                    LearnerSettings s = cfg.learner;
                    s.learning_rate = lr;
                    s.minibatch = static_cast<int>(mb);
                    s.l2_weight_decay = l2;
                    (is_global ? s.lambda : s.ent_wt) = a;
                    points.push_back(s);
                }
    return points;
}

// Runs every grid point with every seed and ranks by the mean per-seed
// cumulative loss over the episode stream (lower is better; ties keep the
// earlier point).
inline GridSearchResult grid_search(const ExperimentConfig& cfg, const RunOptions& options = {}) {
    GridSearchResult result;
    const std::vector<LearnerSettings> points = enumerate_grid(cfg);
    if (points.empty()) throw std::invalid_argument("grid_search: empty grid");
    for (const LearnerSettings& settings : points) {
        ExperimentConfig point_cfg = cfg;
        point_cfg.learner = settings;
        validate_experiment_config(point_cfg);  // baseline not needed for ranking
        GridPoint point;
        point.settings = settings;
        const std::vector<SeedRunResult> runs = detail::run_seeds(point_cfg, options);
        double sum = 0.0;
        for (const SeedRunResult& r : runs) {
            point.per_seed_cumulative.push_back(r.cumulative_loss);
            sum += r.cumulative_loss;
        }
        point.mean_cumulative_loss = sum / static_cast<double>(runs.size());
        result.points.push_back(std::move(point));
    }
    for (std::size_t i = 1; i < result.points.size(); ++i)
        if (result.points[i].mean_cumulative_loss <
            result.points[result.best_index].mean_cumulative_loss)
            result.best_index = i;
    return result;
}

inline void emit_grid_table(const GridSearchResult& result, const std::string& kind,
                            std::ostream& os) {
    os << std::setprecision(17);
    os << "learning_rate,minibatch,l2," << (kind == "global_cb" ? "lambda" : "ent_wt")
       << ",mean_cumulative_loss,best\n";
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        const GridPoint& p = result.points[i];
        os << p.settings.learning_rate << ',' << p.settings.minibatch << ','
           << p.settings.l2_weight_decay << ','
           << (kind == "global_cb" ? p.settings.lambda : p.settings.ent_wt) << ','
           << p.mean_cumulative_loss << ',' << (i == result.best_index ? 1 : 0) << '\n';
    }
}

// ── Action-count report ──

struct ActionCountReport {
    std::vector<std::vector<long>> counts;  // [module][action]
};

// Greedy-action histogram per module over a held-out stream: the
// environment's test pool when it has one, freshly sampled episodes
// otherwise. sample_actions switches to drawing from the stochastic policy
// instead of taking its argmax.
inline ActionCountReport action_count_report(Learner& learner, Environment& env, long episodes,
                                             Rng& rng, bool sample_actions = false) {
    ActionCountReport report;
    const int m = env.spec().module_count();
    report.counts.resize(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j)
        report.counts[static_cast<std::size_t>(j - 1)].assign(
            static_cast<std::size_t>(env.spec().num_actions(j)), 0);

    LearnerPolicy policy(learner, env, /*greedy=*/!sample_actions);
    const std::size_t heldout = env.heldout_size();
    const long total = heldout > 0 ? static_cast<long>(heldout) : episodes;
    for (long t = 0; t < total; ++t) {
        Trajectory traj;
        if (heldout > 0) {
            env.begin_heldout_episode(static_cast<std::size_t>(t));
            traj = run_positioned_episode(env, policy, t, rng);
        } else {
            traj = run_episode(env, policy, t, rng);
        }
        for (const StepRecord& s : traj.steps)
            report.counts[static_cast<std::size_t>(s.module_id - 1)]
                         [static_cast<std::size_t>(s.action_index)]++;
    }
    return report;
}

inline void emit_action_counts(const ActionCountReport& report, const PipelineSpec& spec,
                               std::ostream& os) {
    os << "module,action,action_name,count\n";
    for (std::size_t j = 0; j < report.counts.size(); ++j)
        for (std::size_t a = 0; a < report.counts[j].size(); ++a)
            os << (j + 1) << ',' << a << ','
               << spec.modules[j].actions.names[a] << ',' << report.counts[j][a] << '\n';
}

}  // namespace pipetune
