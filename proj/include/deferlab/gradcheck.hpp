#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>

#include "deferlab/nn.hpp"
#include "deferlab/rng.hpp"

namespace deferlab {

enum class LossKind { WeightedCrossEntropy, Defer, SquaredError };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::WeightedCrossEntropy: return "weighted_cross_entropy";
        case LossKind::Defer: return "defer_loss";
        case LossKind::SquaredError: return "squared_error";
    }
    return "?";
}

struct RandomCase {
    Network net;
    Example example;
};

/// A random small network (1-2 hidden layers, non-zero biases) and a random
/// example for `kind`.
inline RandomCase random_case(LossKind kind, Rng& rng) {
    std::uniform_int_distribution<int> width(2, 7), depth(1, 2), classes(2, 5);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> weight(0.5, 2.0), alpha(0.0, 2.0);

    const int in = width(rng);
    std::vector<int> dims{in};
    for (int l = depth(rng); l > 0; --l) dims.push_back(width(rng));
    int k = classes(rng);
    const int out = kind == LossKind::SquaredError ? 1 : kind == LossKind::Defer ? k + 1 : k;
    dims.push_back(out);

    Network net = Network::glorot(dims, rng());
    for (std::size_t l = 0; l < net.num_layers(); ++l)
        for (double& b : net.biases(l)) b = 0.3 * n01(rng);

    Example ex;
    ex.x.resize(in);
    for (double& v : ex.x) v = n01(rng);
    ex.weight = weight(rng);
    std::uniform_int_distribution<int> label(0, k - 1);
    switch (kind) {
        case LossKind::WeightedCrossEntropy: ex.target = ClassTarget{label(rng)}; break;
        case LossKind::Defer: {
            const int y = label(rng);
            const bool hc = rng() & 1u;
            ex.target = DeferTarget{y, hc, alpha(rng)};
            break;
        }
        case LossKind::SquaredError: ex.target = RegressionTarget{2.0 * n01(rng)}; break;
    }
    return {std::move(net), std::move(ex)};
}

/// Worst grad_check error over `cases` random (network, example) pairs.
inline double random_grad_check(LossKind kind, int cases, std::uint64_t seed, double eps = 1e-5) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(kind) + 1000});
    double worst = 0.0;
    for (int i = 0; i < cases; ++i) {
        const auto c = random_case(kind, rng);
        worst = std::max(worst, grad_check(c.net, c.example, eps));
    }
    return worst;
}

}  // namespace deferlab
