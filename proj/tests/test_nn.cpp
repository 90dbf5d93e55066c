#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "deferlab/data.hpp"
#include "deferlab/gradcheck.hpp"
#include "deferlab/model_io.hpp"
#include "deferlab/nn.hpp"

using namespace deferlab;

namespace {

std::vector<double> random_vector(Rng& rng, int n, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("deferlab_" + name)).string();
}

}  // namespace

TEST(Forward, ZeroNetworkGivesZeroLogits) {
    Network net({3, 5, 4});
    const auto out = net.forward(std::vector<double>{1.0, -2.0, 3.0});
    for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLayer) {
    Network net({3, 3});
    auto w = net.weights(0);
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
    const std::vector<double> x{-1.5, 0.0, 2.25};
    EXPECT_EQ(net.forward(x), x);  // no activation on the output layer
}

TEST(Forward, Deterministic) {
    const auto net = Network::glorot({4, 8, 3}, 5);
    const std::vector<double> x{0.1, -0.2, 0.3, 0.4};
    EXPECT_TRUE(bit_equal(net.forward(x), net.forward(x)));
    EXPECT_EQ(Network::glorot({4, 8, 3}, 5), net);
}

TEST(Forward, ReluOnHiddenOnly) {
    Network net({1, 1, 1});
    net.weights(0)[0] = -1.0;
    net.weights(1)[0] = 1.0;
    net.biases(1)[0] = -3.0;
    EXPECT_EQ(net.forward(std::vector<double>{2.0})[0], -3.0);  // hidden clipped to 0, output stays negative
    EXPECT_EQ(net.forward(std::vector<double>{-2.0})[0], -1.0);
}

TEST(Forward, DimensionMismatchThrows) {
    Network net({2, 1});
    EXPECT_THROW(net.forward(std::vector<double>{1.0}), std::invalid_argument);
    EXPECT_THROW(Network({3}), std::invalid_argument);
    EXPECT_THROW(Network({3, 0}), std::invalid_argument);
}

TEST(Glorot, RangeAndZeroBias) {
    const auto net = Network::glorot({10, 20, 5}, 1);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double s = std::sqrt(6.0 / (net.layer_dims()[l] + net.layer_dims()[l + 1]));
        for (double w : net.weights(l)) EXPECT_LE(std::abs(w), s);
        for (double b : net.biases(l)) EXPECT_EQ(b, 0.0);
    }
    EXPECT_EQ(net.parameter_count(), 10u * 20 + 20 + 20 * 5 + 5);
}

TEST(Softmax, Examples) {
    for (double p : softmax(std::vector<double>(11, 0.7))) EXPECT_NEAR(p, 1.0 / 11, 1e-15);
    const auto q = softmax(std::vector<double>{0.0, std::log(3.0)});
    EXPECT_NEAR(q[0], 0.25, 1e-15);
    EXPECT_NEAR(q[1], 0.75, 1e-15);
    const auto big = softmax(std::vector<double>{1000.0, 1000.0});
    EXPECT_EQ(big[0], 0.5);
    EXPECT_EQ(big[1], 0.5);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
    Rng rng(3);
    std::uniform_int_distribution<int> len(1, 20);
    std::uniform_real_distribution<double> shift(-500.0, 500.0);
    for (int t = 0; t < 1000; ++t) {
        const auto z = random_vector(rng, len(rng), 10.0);
        const auto p = softmax(z);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
        auto zs = z;
        const double c = shift(rng);
        for (double& v : zs) v += c;
        const auto ps = softmax(zs);
        for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], ps[i], 1e-12);
    }
}

TEST(Argmax, LowestIndexWinsTies) {
    EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1);
    EXPECT_EQ(argmax(std::vector<double>{2.0, 2.0}), 0);
}

TEST(CrossEntropy, Examples) {
    EXPECT_EQ(weighted_cross_entropy(std::vector<double>{0.0, 1.0}, 1, 3.0), 0.0);
    EXPECT_NEAR(weighted_cross_entropy(std::vector<double>{0.5, 0.5}, 0, 1.0), 0.6931, 1e-4);
    EXPECT_NEAR(weighted_cross_entropy(std::vector<double>(10, 0.1), 4, 2.0), 4.6052, 1e-4);
    EXPECT_THROW(weighted_cross_entropy(std::vector<double>{1.0}, 1, 1.0), std::invalid_argument);
}

TEST(DeferLoss, UniformLogits) {
    const std::vector<double> z(11, 0.0);
    EXPECT_NEAR(defer_loss(z, 3, false, 1.0), std::log(11.0), 1e-12);
    EXPECT_NEAR(defer_loss(z, 3, true, 1.0), 2.0 * std::log(11.0), 1e-12);
    EXPECT_NEAR(defer_loss(z, 3, true, 0.0), std::log(11.0), 1e-12);
    EXPECT_NEAR(std::log(11.0), 2.3979, 1e-4);
    EXPECT_NEAR(2.0 * std::log(11.0), 4.7958, 1e-4);
}

TEST(DeferLoss, EqualsCrossEntropyWhenInactive) {
    Rng rng(8);
    std::uniform_real_distribution<double> alpha(0.0, 5.0);
    for (int t = 0; t < 1000; ++t) {
        const int K = 2 + t % 9;
        const auto z = random_vector(rng, K + 1, 4.0);
        const int y = t % K;
        const double ce = weighted_cross_entropy(softmax(z), y, 1.0);
        EXPECT_EQ(defer_loss(z, y, false, alpha(rng)), ce);
        EXPECT_EQ(defer_loss(z, y, true, 0.0), ce);
    }
}

TEST(DeferLoss, MatchesTrainingLoss) {
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const auto z = random_vector(rng, 6, 3.0);
        const bool hc = t % 2;
        Example ex{{}, DeferTarget{t % 5, hc, 0.7}, 1.0};
        EXPECT_NEAR(example_loss(z, ex), defer_loss(z, t % 5, hc, 0.7), 1e-12);
    }
}

TEST(DeferLoss, RejectsLabelOnDeferIndex) {
    EXPECT_THROW(defer_loss(std::vector<double>(4, 0.0), 3, true, 1.0), std::invalid_argument);
}

TEST(SquaredError, Examples) {
    EXPECT_EQ(squared_error(3, 3), 0.0);
    EXPECT_EQ(squared_error(0, 2), 4.0);
    EXPECT_EQ(squared_error(-1, 1), 4.0);
}

TEST(GradCheck, AllLossesRandomized) {
    for (auto kind : {LossKind::WeightedCrossEntropy, LossKind::Defer, LossKind::SquaredError})
        EXPECT_LT(random_grad_check(kind, 100, 21), 1e-4) << to_string(kind);
}

TEST(GradCheck, ZeroNetworkSquaredErrorHasZeroGradient) {
    Network net({3, 4, 1});
    const Example ex{{0.0, 0.0, 0.0}, RegressionTarget{0.0}, 1.0};
    for (double g : gradient(net, ex)) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(grad_check(net, ex), 0.0);
}

TEST(GradCheck, EpsilonRange) {
    Network net({1, 1});
    const Example ex{{1.0}, RegressionTarget{0.0}, 1.0};
    EXPECT_THROW(grad_check(net, ex, 1e-8), std::invalid_argument);
    EXPECT_THROW(grad_check(net, ex, 1e-2), std::invalid_argument);
}

TEST(GradCheck, IndependentFiniteDifference) {
    Rng rng(4);
    auto c = random_case(LossKind::Defer, rng);
    auto g = gradient(c.net, c.example);
    Network probe = c.net;
    const double eps = 1e-6;
    probe.parameters()[0] += eps;
    const double up = example_loss(probe, c.example);
    probe.parameters()[0] -= 2 * eps;
    const double down = example_loss(probe, c.example);
    EXPECT_NEAR(g[0], (up - down) / (2 * eps), 1e-6);
}

TEST(Train, ZeroLearningRateIsIdentity) {
    const auto net = Network::glorot({2, 4, 2}, 3);
    std::vector<Example> ex{{{1.0, 2.0}, ClassTarget{1}, 1.0}, {{-1.0, 0.5}, ClassTarget{0}, 1.0}};
    const auto r = train(net, ex, {5, 0.0, 1, 7});
    EXPECT_TRUE(bit_equal(r.net.parameters(), net.parameters()));
    EXPECT_EQ(r.loss_trace.size(), 5u);
}

TEST(Train, RejectsBadOptions) {
    const auto net = Network::glorot({1, 2}, 3);
    std::vector<Example> ex{{{1.0}, ClassTarget{1}, 1.0}};
    EXPECT_THROW(train(net, {}, {}), std::invalid_argument);
    EXPECT_THROW(train(net, ex, {1, 0.1, 0, 0}), std::invalid_argument);
    EXPECT_THROW(train(net, ex, {1, -0.1, 1, 0}), std::invalid_argument);
}

TEST(Train, NonFiniteLossThrows) {
    const auto net = Network::glorot({1, 1}, 3);
    std::vector<Example> ex{{{1.0}, RegressionTarget{INFINITY}, 1.0}};
    EXPECT_THROW(train(net, ex, {1, 0.1, 1, 0}), TrainingError);
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
    const auto pts = generate_blob_dataset({2, 2, 200, 0.6, 4.0, 5});

    // Oracle: a perceptron reaches zero training errors only if the data are
    // linearly separable.
    std::array<double, 3> w{0, 0, 0};
    int errors = 1;
    for (int epoch = 0; epoch < 1000 && errors > 0; ++epoch) {
        errors = 0;
        for (const auto& p : pts) {
            const double t = p.y == 1 ? 1.0 : -1.0;
            if (t * (w[0] * p.x[0] + w[1] * p.x[1] + w[2]) <= 0) {
                ++errors;
                w[0] += t * p.x[0];
                w[1] += t * p.x[1];
                w[2] += t;
            }
        }
    }
    ASSERT_EQ(errors, 0) << "blobs are not linearly separable";

    std::vector<Example> ex;
    for (const auto& p : pts) ex.push_back({p.x, ClassTarget{p.y}, 1.0});
    const auto r = train(Network::glorot({2, 16, 2}, 1), ex, {50, 0.05, 32, 2});
    int hits = 0;
    for (const auto& p : pts) hits += argmax(r.net.forward(p.x)) == p.y;
    EXPECT_GE(hits / static_cast<double>(pts.size()), 0.98);
    EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(Train, DeterministicParameters) {
    const auto pts = generate_blob_dataset({3, 4, 50, 1.0, 4.0, 6});
    std::vector<Example> ex;
    for (const auto& p : pts) ex.push_back({p.x, ClassTarget{p.y}, 1.0 + p.y});
    const auto a = train(Network::glorot({4, 8, 3}, 1), ex, {5, 0.05, 16, 9});
    const auto b = train(Network::glorot({4, 8, 3}, 1), ex, {5, 0.05, 16, 9});
    EXPECT_TRUE(bit_equal(a.net.parameters(), b.net.parameters()));
    const auto c = train(Network::glorot({4, 8, 3}, 1), ex, {5, 0.05, 16, 10});
    EXPECT_FALSE(bit_equal(a.net.parameters(), c.net.parameters()));
}

TEST(Train, ExampleWeightScalesGradient) {
    const auto net = Network::glorot({2, 3, 2}, 1);
    Example a{{0.3, -0.7}, ClassTarget{1}, 1.0};
    Example b = a;
    b.weight = 2.5;
    const auto ga = gradient(net, a);
    const auto gb = gradient(net, b);
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(gb[i], 2.5 * ga[i], 1e-14);
}

TEST(TrainConfigTest, FinetuneEpochsAndValidation) {
    TrainConfig c;
    c.epochs = 10;
    c.finetune_multiplier = 2.0;
    EXPECT_EQ(c.finetune_epochs(), 20);
    c.finetune_multiplier = 0.25;
    EXPECT_EQ(c.finetune_epochs(), 3);  // round(2.5) away from zero
    c.confidence_threshold = 0.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.confidence_threshold = 1.0;
    EXPECT_NO_THROW(c.validate());
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ModelIo, RoundTripIsBitIdentical) {
    const auto pts = generate_blob_dataset({3, 5, 40, 1.0, 4.0, 2});
    std::vector<Example> ex;
    for (const auto& p : pts) ex.push_back({p.x, ClassTarget{p.y}, 1.0});
    const auto net = train(Network::glorot({5, 7, 6, 3}, 4), ex, {3, 0.05, 8, 1}).net;
    const auto path = temp_path("model_rt.json");
    save_model(path, net);
    const auto back = load_model(path);
    EXPECT_EQ(back, net);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto x = random_vector(rng, 5, 3.0);
        EXPECT_TRUE(bit_equal(net.forward(x), back.forward(x)));
    }
}

TEST(ModelIo, TruncatedFileIsParseError) {
    const auto path = temp_path("model_trunc.json");
    save_model(path, Network::glorot({3, 4, 2}, 1));
    std::string text;
    {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    {
        std::ofstream out(path, std::ios::trunc);
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_THROW(load_model(path), ModelFormatError);
}

TEST(ModelIo, SchemaVersionBumpIsRejected) {
    auto j = network_to_json(Network::glorot({2, 2}, 1));
    j["schema_version"] = kModelSchemaVersion + 1;
    try {
        network_from_json(j);
        FAIL();
    } catch (const ModelFormatError& e) {
        EXPECT_NE(std::string(e.what()).find("incompatible"), std::string::npos);
    }
}

TEST(ModelIo, ShapeMismatchAndMissingFile) {
    auto j = network_to_json(Network::glorot({2, 3}, 1));
    j["weights"][0].erase(0);
    EXPECT_THROW(network_from_json(j), ModelFormatError);
    j = network_to_json(Network::glorot({2, 3}, 1));
    j.erase("biases");
    EXPECT_THROW(network_from_json(j), ModelFormatError);
    EXPECT_THROW(load_model("/nonexistent/model.json"), ModelFormatError);
}

TEST(ModelIo, HumanModelRoundTrip) {
    HumanModel m{Network::glorot({2, 3, 1}, 2), HumanModelKind::TimeRegressor, 41.5, 3.25};
    const auto back = human_model_from_json(human_model_to_json(m));
    EXPECT_EQ(back.net, m.net);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.target_mean, 41.5);
    EXPECT_EQ(back.target_scale, 3.25);
    auto j = human_model_to_json(m);
    j["kind"] = "oracle";
    EXPECT_THROW(human_model_from_json(j), ModelFormatError);
}
