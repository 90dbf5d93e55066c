#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "deferlab/data.hpp"
#include "deferlab/rng.hpp"

namespace deferlab {

/// Fully connected network: ReLU between layers, linear output.
/// Parameters live in one flat buffer, layer by layer, weights (row-major,
/// out x in) followed by biases.
class Network {
public:
    Network() = default;

    explicit Network(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
        if (dims_.size() < 2) throw std::invalid_argument("network needs at least input and output dims");
        for (int d : dims_)
            if (d < 1) throw std::invalid_argument("layer dims must be positive");
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_.push_back(off);
            off += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
        }
        params_.assign(off, 0.0);
    }

    /// Glorot-uniform weights, zero biases.
    static Network glorot(std::vector<int> layer_dims, std::uint64_t seed) {
        Network net(std::move(layer_dims));
        Rng rng = make_rng(seed, {stream::init});
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            const double s = std::sqrt(6.0 / (net.dims_[l] + net.dims_[l + 1]));
            std::uniform_real_distribution<double> u(-s, s);
            for (double& w : net.weights(l)) w = u(rng);
        }
        return net;
    }

    const std::vector<int>& layer_dims() const noexcept { return dims_; }
    std::size_t num_layers() const noexcept { return offsets_.size(); }
    int input_dim() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
    int output_dim() const noexcept { return dims_.empty() ? 0 : dims_.back(); }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    std::span<double> weights(std::size_t l) noexcept { return {params_.data() + offsets_[l], weight_count(l)}; }
    std::span<const double> weights(std::size_t l) const noexcept {
        return {params_.data() + offsets_[l], weight_count(l)};
    }
    std::span<double> biases(std::size_t l) noexcept {
        return {params_.data() + offsets_[l] + weight_count(l), static_cast<std::size_t>(dims_[l + 1])};
    }
    std::span<const double> biases(std::size_t l) const noexcept {
        return {params_.data() + offsets_[l] + weight_count(l), static_cast<std::size_t>(dims_[l + 1])};
    }
    std::size_t offset(std::size_t l) const noexcept { return offsets_[l]; }

    std::vector<double> forward(std::span<const double> x) const {
        std::vector<std::vector<double>> acts;
        forward_into(x, acts);
        return std::move(acts.back());
    }

    /// Fills acts[0] = x, acts[l+1] = output of layer l (post-ReLU for hidden).
    void forward_into(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
        if (static_cast<int>(x.size()) != input_dim())
            throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                        ", network expects " + std::to_string(input_dim()));
        acts.resize(dims_.size());
        acts[0].assign(x.begin(), x.end());
        const std::size_t L = num_layers();
        for (std::size_t l = 0; l < L; ++l) {
            const int in = dims_[l], out = dims_[l + 1];
            const double* w = params_.data() + offsets_[l];
            const double* b = w + weight_count(l);
            const double* a = acts[l].data();
            auto& z = acts[l + 1];
            z.resize(out);
            for (int o = 0; o < out; ++o) {
                double s = b[o];
                const double* row = w + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) s += row[i] * a[i];
                z[o] = (l + 1 < L && s < 0.0) ? 0.0 : s;
            }
        }
    }

    friend bool operator==(const Network&, const Network&) = default;

private:
    std::size_t weight_count(std::size_t l) const noexcept {
        return static_cast<std::size_t>(dims_[l]) * dims_[l + 1];
    }

    std::vector<int> dims_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Heads and losses

inline double log_sum_exp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) return {};
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= s;
    return p;
}

/// First index of the maximum.
inline int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double weighted_cross_entropy(std::span<const double> probs, int target, double weight) {
    if (target < 0 || static_cast<std::size_t>(target) >= probs.size())
        throw std::invalid_argument("weighted_cross_entropy: target out of range");
    return -weight * std::log(probs[target]);
}

/// K+1 deferral surrogate: -ln p_y - alpha*[human correct]*ln p_K, where the
/// last logit is the defer output.
inline double defer_loss(std::span<const double> logits, int y, bool human_correct, double alpha) {
    if (logits.size() < 2 || y < 0 || static_cast<std::size_t>(y) + 1 >= logits.size())
        throw std::invalid_argument("defer_loss: label out of range");
    const auto p = softmax(logits);
    double loss = weighted_cross_entropy(p, y, 1.0);
    if (human_correct && alpha != 0.0) loss -= alpha * std::log(p.back());
    return loss;
}

constexpr double squared_error(double prediction, double target) noexcept {
    return (prediction - target) * (prediction - target);
}

// ---------------------------------------------------------------------------
// Training examples

struct ClassTarget {
    int label = 0;
};
struct DeferTarget {
    int label = 0;
    bool human_correct = false;
    double alpha = 1.0;
};
struct RegressionTarget {
    double value = 0.0;
};

using Target = std::variant<ClassTarget, DeferTarget, RegressionTarget>;

/// `weight` scales the whole per-example loss.
struct Example {
    FeatureVector x;
    Target target;
    double weight = 1.0;
};

/// Loss of one example from the raw network output; writes dLoss/dlogits
/// into `grad` when non-null.
inline double example_loss(std::span<const double> out, const Example& ex, std::vector<double>* grad = nullptr) {
    const double w = ex.weight;
    return std::visit(
        [&](const auto& t) -> double {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, RegressionTarget>) {
                if (out.size() != 1) throw std::invalid_argument("regression target needs a single output");
                if (grad) grad->assign(1, 2.0 * w * (out[0] - t.value));
                return w * squared_error(out[0], t.value);
            } else {
                if (t.label < 0 || static_cast<std::size_t>(t.label) >= out.size())
                    throw std::invalid_argument("class target out of range");
                const double lse = log_sum_exp(out);
                double loss = lse - out[t.label];
                double defer_scale = 0.0;
                if constexpr (std::is_same_v<T, DeferTarget>) {
                    if (static_cast<std::size_t>(t.label) + 1 >= out.size())
                        throw std::invalid_argument("defer target label collides with defer output");
                    if (t.human_correct) defer_scale = t.alpha;
                    loss += defer_scale * (lse - out.back());
                }
                if (grad) {
                    grad->resize(out.size());
                    const double pscale = 1.0 + defer_scale;
                    for (std::size_t i = 0; i < out.size(); ++i) (*grad)[i] = w * pscale * std::exp(out[i] - lse);
                    (*grad)[t.label] -= w;
                    if (defer_scale != 0.0) grad->back() -= w * defer_scale;
                }
                return w * loss;
            }
        },
        ex.target);
}

inline double example_loss(const Network& net, const Example& ex) {
    return example_loss(net.forward(ex.x), ex);
}

/// Reusable buffers for one forward/backward pass.
struct Workspace {
    std::vector<std::vector<double>> acts;
    std::vector<double> delta, prev_delta, dlogits;
};

/// Accumulates dLoss/dparams into `grad` (same layout as net.parameters()).
inline double accumulate_gradient(const Network& net, const Example& ex, std::span<double> grad, Workspace& ws) {
    net.forward_into(ex.x, ws.acts);
    const double loss = example_loss(ws.acts.back(), ex, &ws.dlogits);
    const auto& dims = net.layer_dims();
    const std::size_t L = net.num_layers();
    ws.delta = ws.dlogits;
    for (std::size_t l = L; l-- > 0;) {
        const int in = dims[l], out = dims[l + 1];
        const auto& a = ws.acts[l];
        double* gw = grad.data() + net.offset(l);
        double* gb = gw + static_cast<std::size_t>(in) * out;
        for (int o = 0; o < out; ++o) {
            const double d = ws.delta[o];
            if (d == 0.0) continue;
            gb[o] += d;
            double* row = gw + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) row[i] += d * a[i];
        }
        if (l == 0) break;
        const double* w = net.weights(l).data();
        ws.prev_delta.assign(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double d = ws.delta[o];
            if (d == 0.0) continue;
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) ws.prev_delta[i] += row[i] * d;
        }
        for (int i = 0; i < in; ++i)
            if (a[i] <= 0.0) ws.prev_delta[i] = 0.0;
        std::swap(ws.delta, ws.prev_delta);
    }
    return loss;
}

inline std::vector<double> gradient(const Network& net, const Example& ex) {
    std::vector<double> g(net.parameter_count(), 0.0);
    Workspace ws;
    accumulate_gradient(net, ex, g, ws);
    return g;
}

struct SgdOptions {
    int epochs = 10;
    double learning_rate = 0.05;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Network net;
    std::vector<double> loss_trace;  // mean example loss per epoch
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shuffled mini-batch SGD. The update averages gradients over the batch.
inline TrainResult train(Network net, std::span<const Example> examples, const SgdOptions& opt) {
    if (examples.empty()) throw std::invalid_argument("train: no examples");
    if (opt.epochs < 0) throw std::invalid_argument("train: negative epoch count");
    if (opt.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(opt.learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be >= 0");

    TrainResult result;
    Rng rng = make_rng(opt.seed, {stream::shuffle});
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(net.parameter_count());
    Workspace ws;
    auto params = net.parameters();

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < stop; ++i) {
                const double loss = accumulate_gradient(net, examples[order[i]], grad, ws);
                if (!std::isfinite(loss)) {
                    std::ostringstream msg;
                    msg << "non-finite loss at epoch " << epoch << ", example " << order[i];
                    throw TrainingError(msg.str());
                }
                total += loss;
            }
            if (opt.learning_rate == 0.0) continue;
            const double step = opt.learning_rate / static_cast<double>(stop - start);
            for (std::size_t p = 0; p < params.size(); ++p) params[p] -= step * grad[p];
        }
        result.loss_trace.push_back(total / static_cast<double>(examples.size()));
    }
    result.net = std::move(net);
    return result;
}

/// Hyperparameters shared by every training regime.
struct TrainConfig {
    int epochs = 10;                    // n
    double finetune_multiplier = 2.0;   // lambda
    double learning_rate = 0.05;
    int batch_size = 32;
    double deferral_cost = 1.0;         // alpha
    double confidence_threshold = 0.9;  // tau
    std::uint64_t seed = 0;
    std::vector<int> hidden{64, 64};

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (!(finetune_multiplier >= 0.0)) throw std::invalid_argument("finetune_multiplier must be >= 0");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (!(deferral_cost >= 0.0)) throw std::invalid_argument("deferral_cost must be >= 0");
        if (!(confidence_threshold > 0.5 && confidence_threshold <= 1.0))
            throw std::invalid_argument("confidence_threshold must lie in (0.5, 1]");
        for (int h : hidden)
            if (h < 1) throw std::invalid_argument("hidden layer sizes must be positive");
    }

    int finetune_epochs() const { return static_cast<int>(std::lround(epochs * finetune_multiplier)); }

    SgdOptions sgd(int n_epochs, std::uint64_t phase = 0) const {
        return {n_epochs, learning_rate, batch_size, phase == 0 ? seed : derive_seed(seed, {phase})};
    }

    std::vector<int> layer_dims(int input, int output) const {
        std::vector<int> dims{input};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(output);
        return dims;
    }
};

/// Max over parameters of |g_a - g_fd| / max(1, |g_a| + |g_fd|), with
/// central differences of step `eps`.
inline double grad_check(const Network& net, const Example& ex, double eps = 1e-5) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
    const auto analytic = gradient(net, ex);
    Network probe = net;
    auto params = probe.parameters();
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        params[p] = saved + eps;
        const double up = example_loss(probe, ex);
        params[p] = saved - eps;
        const double down = example_loss(probe, ex);
        params[p] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic[p] - fd) / std::max(1.0, std::abs(analytic[p]) + std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace deferlab
