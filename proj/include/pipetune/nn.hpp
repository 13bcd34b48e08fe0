#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pipetune/rng.hpp"

namespace pipetune {

// Single-hidden-layer network: scores = W2 relu(W1 x + b1) + b2.
// Weights are row-major flat arrays. The same struct doubles as a gradient
// accumulator since shapes match.
struct MLPParams {
    int input_dim = 0;
    int hidden_dim = 0;
    int output_dim = 0;
    std::vector<double> w1;  // hidden x input
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // output x hidden
    std::vector<double> b2;  // output

    MLPParams() = default;
    MLPParams(int in, int hidden, int out)
        : input_dim(in),
          hidden_dim(hidden),
          output_dim(out),
          w1(static_cast<std::size_t>(hidden) * static_cast<std::size_t>(in), 0.0),
          b1(static_cast<std::size_t>(hidden), 0.0),
          w2(static_cast<std::size_t>(out) * static_cast<std::size_t>(hidden), 0.0),
          b2(static_cast<std::size_t>(out), 0.0) {
        if (in < 1 || hidden < 1 || out < 1)
            throw std::invalid_argument("MLPParams: dimensions must be positive");
    }

    void fill(double value) {
        std::fill(w1.begin(), w1.end(), value);
        std::fill(b1.begin(), b1.end(), value);
        std::fill(w2.begin(), w2.end(), value);
        std::fill(b2.begin(), b2.end(), value);
    }
};

using MLPGrads = MLPParams;

inline MLPParams zeros_like(const MLPParams& p) {
    return MLPParams(p.input_dim, p.hidden_dim, p.output_dim);
}

// Glorot-uniform weights, zero biases.
inline void init_params(MLPParams& p, Rng& rng) {
    const double lim1 = std::sqrt(6.0 / static_cast<double>(p.input_dim + p.hidden_dim));
    for (double& w : p.w1) w = rng.uniform(-lim1, lim1);
    std::fill(p.b1.begin(), p.b1.end(), 0.0);
    const double lim2 = std::sqrt(6.0 / static_cast<double>(p.hidden_dim + p.output_dim));
    for (double& w : p.w2) w = rng.uniform(-lim2, lim2);
    std::fill(p.b2.begin(), p.b2.end(), 0.0);
}

// Pre-activations retained for the backward pass.
struct ForwardCache {
    std::vector<double> input;
    std::vector<double> pre_hidden;
    std::vector<double> hidden;
};

// Computes the hidden layer only; score_for / output_scores finish the pass.
inline void forward_hidden(const MLPParams& p, const std::vector<double>& x,
                           ForwardCache& cache) {
    if (static_cast<int>(x.size()) != p.input_dim)
        throw std::invalid_argument("forward: input dim " + std::to_string(x.size()) +
                                    " != " + std::to_string(p.input_dim));
    cache.input = x;
    cache.pre_hidden.assign(static_cast<std::size_t>(p.hidden_dim), 0.0);
    cache.hidden.assign(static_cast<std::size_t>(p.hidden_dim), 0.0);
    for (int h = 0; h < p.hidden_dim; ++h) {
        const double* row = &p.w1[static_cast<std::size_t>(h) * static_cast<std::size_t>(p.input_dim)];
        double acc = p.b1[static_cast<std::size_t>(h)];
        for (int i = 0; i < p.input_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        cache.pre_hidden[static_cast<std::size_t>(h)] = acc;
        cache.hidden[static_cast<std::size_t>(h)] = acc > 0.0 ? acc : 0.0;
    }
}

inline std::vector<double> output_scores(const MLPParams& p, const ForwardCache& cache) {
    std::vector<double> scores(static_cast<std::size_t>(p.output_dim), 0.0);
    for (int o = 0; o < p.output_dim; ++o) {
        const double* row = &p.w2[static_cast<std::size_t>(o) * static_cast<std::size_t>(p.hidden_dim)];
        double acc = p.b2[static_cast<std::size_t>(o)];
        for (int h = 0; h < p.hidden_dim; ++h) acc += row[h] * cache.hidden[static_cast<std::size_t>(h)];
        scores[static_cast<std::size_t>(o)] = acc;
    }
    return scores;
}

// Single output score; avoids the full output matvec when only the chosen
// action's score is needed (IWR regression over large joint action spaces).
inline double score_for(const MLPParams& p, const ForwardCache& cache, int output_index) {
    const double* row =
        &p.w2[static_cast<std::size_t>(output_index) * static_cast<std::size_t>(p.hidden_dim)];
    double acc = p.b2[static_cast<std::size_t>(output_index)];
    for (int h = 0; h < p.hidden_dim; ++h) acc += row[h] * cache.hidden[static_cast<std::size_t>(h)];
    return acc;
}

inline std::vector<double> forward(const MLPParams& p, const std::vector<double>& x,
                                   ForwardCache& cache) {
    forward_hidden(p, x, cache);
    return output_scores(p, cache);
}

namespace detail {
// Common tail of the backward pass: from d(pre_hidden) down to W1/b1.
inline void backprop_hidden(const MLPParams& p, const ForwardCache& cache,
                            const std::vector<double>& d_hidden, MLPGrads& grads) {
    for (int h = 0; h < p.hidden_dim; ++h) {
        if (cache.pre_hidden[static_cast<std::size_t>(h)] <= 0.0) continue;  // ReLU gate (0 at 0)
        const double d = d_hidden[static_cast<std::size_t>(h)];
        if (d == 0.0) continue;
        grads.b1[static_cast<std::size_t>(h)] += d;
        double* grow = &grads.w1[static_cast<std::size_t>(h) * static_cast<std::size_t>(p.input_dim)];
        for (int i = 0; i < p.input_dim; ++i)
            grow[i] += d * cache.input[static_cast<std::size_t>(i)];
    }
}
}  // namespace detail

// Accumulates exact gradients of scores . d_scores into grads.
inline void backward(const MLPParams& p, const ForwardCache& cache,
                     const std::vector<double>& d_scores, MLPGrads& grads) {
    if (static_cast<int>(d_scores.size()) != p.output_dim)
        throw std::invalid_argument("backward: gradient dim mismatch");
    std::vector<double> d_hidden(static_cast<std::size_t>(p.hidden_dim), 0.0);
    for (int o = 0; o < p.output_dim; ++o) {
        const double g = d_scores[static_cast<std::size_t>(o)];
        if (g == 0.0) continue;
        grads.b2[static_cast<std::size_t>(o)] += g;
        const double* row = &p.w2[static_cast<std::size_t>(o) * static_cast<std::size_t>(p.hidden_dim)];
        double* grow = &grads.w2[static_cast<std::size_t>(o) * static_cast<std::size_t>(p.hidden_dim)];
        for (int h = 0; h < p.hidden_dim; ++h) {
            grow[h] += g * cache.hidden[static_cast<std::size_t>(h)];
            d_hidden[static_cast<std::size_t>(h)] += g * row[h];
        }
    }
    detail::backprop_hidden(p, cache, d_hidden, grads);
}

// backward() for an upstream gradient that is nonzero at one output only.
inline void backward_one_hot(const MLPParams& p, const ForwardCache& cache, int output_index,
                             double g, MLPGrads& grads) {
    if (g == 0.0) return;
    grads.b2[static_cast<std::size_t>(output_index)] += g;
    const double* row =
        &p.w2[static_cast<std::size_t>(output_index) * static_cast<std::size_t>(p.hidden_dim)];
    double* grow =
        &grads.w2[static_cast<std::size_t>(output_index) * static_cast<std::size_t>(p.hidden_dim)];
    std::vector<double> d_hidden(static_cast<std::size_t>(p.hidden_dim));
    for (int h = 0; h < p.hidden_dim; ++h) {
        grow[h] += g * cache.hidden[static_cast<std::size_t>(h)];
        d_hidden[static_cast<std::size_t>(h)] = g * row[h];
    }
    detail::backprop_hidden(p, cache, d_hidden, grads);
}

// Boltzmann distribution over scores with inverse temperature lambda,
// computed with max subtraction so scores up to ~1e4 stay finite.
inline std::vector<double> softmax_policy(const std::vector<double>& scores, double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("softmax_policy: lambda must be positive");
    if (scores.empty()) throw std::invalid_argument("softmax_policy: empty scores");
    double hi = scores[0];
    for (double s : scores) hi = std::max(hi, s);
    std::vector<double> probs(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        probs[i] = std::exp(lambda * (scores[i] - hi));
        z += probs[i];
    }
    for (double& v : probs) v /= z;
    return probs;
}

inline int sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

// Natural-log entropy of a distribution and its gradient w.r.t. the scores
// that produced it through softmax_policy (lambda folded in by the caller;
// the returned gradient is for lambda = 1).
inline std::pair<double, std::vector<double>> entropy_and_grad(const std::vector<double>& probs) {
    double entropy = 0.0;
    for (double pv : probs)
        if (pv > 0.0) entropy -= pv * std::log(pv);
    std::vector<double> grad(probs.size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        grad[i] = -probs[i] * (std::log(probs[i]) + entropy);
    }
    return {entropy, grad};
}

// d log pi(a|x) / d scores for a softmax policy: lambda (one_hot(a) - probs).
inline std::vector<double> log_prob_grad_scores(const std::vector<double>& probs, int action,
                                                double lambda) {
    std::vector<double> grad(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = -lambda * probs[i];
    grad[static_cast<std::size_t>(action)] += lambda;
    return grad;
}

// RMSProp with L2 weight decay folded into the gradient:
//   g' = g + l2 p;  v <- rho v + (1-rho) g'^2;  p <- p - lr g' / (sqrt(v)+eps)
struct RMSPropState {
    double learning_rate = 0.001;
    double rho = 0.99;
    double epsilon = 1e-8;
    double l2_weight_decay = 0.0;
    MLPParams v;  // running mean of squared gradients

    RMSPropState() = default;
    RMSPropState(const MLPParams& shape, double lr, double l2)
        : learning_rate(lr), l2_weight_decay(l2), v(zeros_like(shape)) {}
};

namespace detail {
inline void rmsprop_tensor(std::vector<double>& param, const std::vector<double>& grad,
                           std::vector<double>& v, const RMSPropState& s) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i] + s.l2_weight_decay * param[i];
        if (!std::isfinite(g)) throw std::runtime_error("rmsprop_step: non-finite gradient");
        v[i] = s.rho * v[i] + (1.0 - s.rho) * g * g;
        param[i] -= s.learning_rate * g / (std::sqrt(v[i]) + s.epsilon);
    }
}
}  // namespace detail

inline void rmsprop_step(MLPParams& params, const MLPGrads& grads, RMSPropState& state) {
    if (grads.input_dim != params.input_dim || grads.hidden_dim != params.hidden_dim ||
        grads.output_dim != params.output_dim)
        throw std::invalid_argument("rmsprop_step: shape mismatch");
    detail::rmsprop_tensor(params.w1, grads.w1, state.v.w1, state);
    detail::rmsprop_tensor(params.b1, grads.b1, state.v.b1, state);
    detail::rmsprop_tensor(params.w2, grads.w2, state.v.w2, state);
    detail::rmsprop_tensor(params.b2, grads.b2, state.v.b2, state);
}

// ── Checkpoints ──
// Text tensor list. Values are hexfloats, so round trips are bit exact.

namespace detail {
inline void write_tensor(std::ostream& os, const std::string& name,
                         const std::vector<double>& values) {
    os << "tensor " << name << ' ' << values.size() << '\n' << std::hexfloat;
    for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << values[i];
    os << std::defaultfloat << '\n';
}

inline std::vector<double> read_tensor(std::istream& is, const std::string& expected_name) {
    std::string tag, name;
    std::size_t count = 0;
    if (!(is >> tag >> name >> count) || tag != "tensor" || name != expected_name)
        throw std::runtime_error("checkpoint: expected tensor " + expected_name);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string tok;
        if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated tensor " + expected_name);
        char* end = nullptr;
        values[i] = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw std::runtime_error("checkpoint: bad value in tensor " + expected_name);
    }
    return values;
}
}  // namespace detail

inline void save_params(std::ostream& os, const std::string& prefix, const MLPParams& p) {
    os << "mlp " << prefix << ' ' << p.input_dim << ' ' << p.hidden_dim << ' ' << p.output_dim
       << '\n';
    detail::write_tensor(os, prefix + ".w1", p.w1);
    detail::write_tensor(os, prefix + ".b1", p.b1);
    detail::write_tensor(os, prefix + ".w2", p.w2);
    detail::write_tensor(os, prefix + ".b2", p.b2);
}

inline MLPParams load_params(std::istream& is, const std::string& prefix) {
    std::string tag, name;
    int in = 0, hidden = 0, out = 0;
    if (!(is >> tag >> name >> in >> hidden >> out) || tag != "mlp" || name != prefix)
        throw std::runtime_error("checkpoint: expected mlp " + prefix);
    MLPParams p(in, hidden, out);
    p.w1 = detail::read_tensor(is, prefix + ".w1");
    p.b1 = detail::read_tensor(is, prefix + ".b1");
    p.w2 = detail::read_tensor(is, prefix + ".w2");
    p.b2 = detail::read_tensor(is, prefix + ".b2");
    if (p.w1.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(hidden) ||
        p.b1.size() != static_cast<std::size_t>(hidden) ||
        p.w2.size() != static_cast<std::size_t>(hidden) * static_cast<std::size_t>(out) ||
        p.b2.size() != static_cast<std::size_t>(out))
        throw std::runtime_error("checkpoint: tensor size mismatch for " + prefix);
    return p;
}

}  // namespace pipetune
