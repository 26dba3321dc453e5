#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "spikesign/training.hpp"

using namespace spikesign;

namespace {

/// Logits over 24 classes where the label has probability p.
std::vector<double> logits_with_p(int label, double p)
{
    std::vector<double> z(24, 0.0);
    z[static_cast<std::size_t>(label)] = std::log(23.0 * p / (1.0 - p));
    return z;
}

std::vector<Sample> toy_dataset(std::mt19937_64& rng, int n, int classes)
{
    std::vector<Sample> data;
    for (int i = 0; i < n; ++i) {
        const int label = i % classes;
        SpikeRaster r(12, 48);
        // Class-specific stripe plus noise.
        for (int t = 0; t < 12; ++t)
            for (int y = 0; y < 48; ++y) {
                for (int x = label * 12; x < label * 12 + 8; ++x)
                    if (rng() % 3 == 0) r.set(t, y, x);
                if (rng() % 10 == 0) r.set(t, y, static_cast<int>(rng() % 48));
            }
        data.push_back({r, label});
    }
    return data;
}

} // namespace

TEST(Init, KaimingAndXavierStatistics)
{
    std::vector<double> conv;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto net = init_weights(seed);
        conv.insert(conv.end(), net.layers[0].weights.begin(), net.layers[0].weights.end());
    }
    ASSERT_EQ(conv.size(), 10000u);
    double mean = 0, var = 0;
    for (double w : conv) mean += w;
    mean /= conv.size();
    for (double w : conv) var += (w - mean) * (w - mean);
    const double sd = std::sqrt(var / (conv.size() - 1));
    EXPECT_NEAR(sd, std::sqrt(2.0 / 25.0), 0.05 * std::sqrt(2.0 / 25.0));
    EXPECT_NEAR(std::sqrt(2.0 / 25.0), 0.2828, 1e-4);

    const auto net = init_weights(1);
    const double b1 = std::sqrt(6.0 / (256 + 512)), b2 = std::sqrt(6.0 / (512 + 24));
    EXPECT_NEAR(b1, 0.08839, 1e-5);
    double max1 = 0, max2 = 0;
    for (double w : net.layers[1].weights) max1 = std::max(max1, std::abs(w));
    for (double w : net.layers[2].weights) max2 = std::max(max2, std::abs(w));
    EXPECT_LE(max1, b1);
    EXPECT_GT(max1, 0.99 * b1);
    EXPECT_LE(max2, b2);
}

TEST(Init, Deterministic)
{
    EXPECT_EQ(init_weights(3).layers, init_weights(3).layers);
    EXPECT_NE(init_weights(3).layers, init_weights(4).layers);
}

TEST(FocalLoss, Examples)
{
    std::vector<double> perfect(24, -60.0);
    perfect[5] = 60.0;
    EXPECT_LT(focal_loss(perfect, 5, 1.0, 2.0, 0.0), 1e-30);
    const std::vector<double> uniform(24, 0.0);
    EXPECT_NEAR(focal_loss(uniform, 0, 1.0, 0.0, 0.0), std::log(24.0), 1e-12);
    EXPECT_NEAR(std::log(24.0), 3.178, 1e-3);
    // Smoothing with gamma 0 is plain cross-entropy against q.
    const auto z = logits_with_p(2, 0.4);
    const auto p = softmax(z);
    double ce = 0;
    for (int c = 0; c < 24; ++c) ce -= ((c == 2 ? 0.9 : 0.0) + 0.1 / 24) * std::log(p[c]);
    EXPECT_NEAR(focal_loss(z, 2, 1.0, 0.0, 0.1), ce, 1e-12);
    EXPECT_NEAR(focal_loss(z, 2, 2.5, 0.0, 0.1), 2.5 * ce, 1e-12);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(24);
        for (double& v : z) v = nd(rng);
        const int label = static_cast<int>(rng() % 24);
        const double gamma = trial % 3 == 0 ? 0.0 : 2.0, eps = trial % 2 ? 0.1 : 0.0, alpha = 0.7;
        std::vector<double> g;
        focal_loss(z, label, alpha, gamma, eps, &g);
        for (int c = 0; c < 24; ++c) {
            const double h = 1e-6, z0 = z[c];
            z[c] = z0 + h;
            const double lp = focal_loss(z, label, alpha, gamma, eps);
            z[c] = z0 - h;
            const double lm = focal_loss(z, label, alpha, gamma, eps);
            z[c] = z0;
            EXPECT_NEAR(g[c], (lp - lm) / (2 * h), 1e-7);
        }
    }
}

TEST(Mining, SelectsHardSamples)
{
    TrainConfig cfg;
    const auto w = ClassWeights::uniform(24);
    const std::vector<std::vector<double>> batch{logits_with_p(0, 0.9), logits_with_p(1, 0.5), logits_with_p(2, 0.7)};
    const auto r = loss_and_select(batch, {0, 1, 2}, cfg, w);
    EXPECT_EQ(r.selected, (std::vector<bool>{false, true, false}));
    EXPECT_NEAR(r.p_label[1], 0.5, 1e-12);
    EXPECT_NEAR(r.loss, focal_loss(batch[1], 1, 1.0, 2.0, 0.1), 1e-12);
    for (double g : r.grad[0]) EXPECT_EQ(g, 0.0);
}

TEST(Mining, FallsBackToWholeBatch)
{
    TrainConfig cfg;
    const auto w = ClassWeights::uniform(24);
    std::vector<std::vector<double>> batch;
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) {
        batch.push_back(logits_with_p(i, i == 0 ? 0.3 : 0.95));
        labels.push_back(i);
    }
    const auto r = loss_and_select(batch, labels, cfg, w);
    for (bool s : r.selected) EXPECT_TRUE(s);
    double mean = 0;
    for (int i = 0; i < 8; ++i) mean += focal_loss(batch[i], i, 1.0, 2.0, 0.1) / 8;
    EXPECT_NEAR(r.loss, mean, 1e-12);
    // Two of eight hard samples reach the 25% floor.
    batch[1] = logits_with_p(1, 0.2);
    const auto r2 = loss_and_select(batch, labels, cfg, w);
    EXPECT_EQ(std::count(r2.selected.begin(), r2.selected.end(), true), 2);
    EXPECT_THROW(loss_and_select({}, {}, cfg, w), ContractError);
}

TEST(ClassWeights, InverseFrequencyMeanOne)
{
    const auto cw = ClassWeights::balanced({0, 0, 0, 1}, 24);
    EXPECT_NEAR(cw.alpha[0], 0.5, 1e-12);
    EXPECT_NEAR(cw.alpha[1], 1.5, 1e-12);
    EXPECT_EQ(cw.alpha[2], 0.0);
    std::mt19937_64 rng(3);
    std::vector<int> labels;
    for (int i = 0; i < 500; ++i) labels.push_back(static_cast<int>(rng() % 24));
    const auto b = ClassWeights::balanced(labels, 24);
    double sum = 0;
    int present = 0;
    for (double a : b.alpha) {
        sum += a;
        present += a > 0;
    }
    EXPECT_NEAR(sum / present, 1.0, 1e-12);
}

TEST(Schedule, WarmRestarts)
{
    const TrainConfig cfg;
    EXPECT_DOUBLE_EQ(lr_schedule(0, cfg), 3e-3);
    EXPECT_NEAR(lr_schedule(25 - 1e-9, cfg), 2e-7, 1e-12);
    EXPECT_DOUBLE_EQ(lr_schedule(25, cfg), 3e-3);
    EXPECT_DOUBLE_EQ(lr_schedule(75, cfg), 3e-3); // second cycle is 50 epochs
    EXPECT_NEAR(lr_schedule(12.5, cfg), (3e-3 + 2e-7) / 2, 1e-15);
    EXPECT_NEAR(lr_schedule(50, cfg), (3e-3 + 2e-7) / 2, 1e-15);
    double prev = lr_schedule(0, cfg);
    for (int step = 1; step < 30000; ++step) {
        const double e = step * 0.01;
        const double lr = lr_schedule(e, cfg);
        EXPECT_GE(lr, cfg.eta_min);
        EXPECT_LE(lr, cfg.lr_max);
        const bool restart = step == 2500 || step == 7500 || step == 17500;
        if (!restart) {
            EXPECT_LT(std::abs(lr - prev), 1e-5) << e;
        }
        prev = lr;
    }
    EXPECT_THROW(lr_schedule(-1, cfg), ParameterError);
}

TEST(AdamW, DecoupledDecayWithZeroGradient)
{
    auto net = NetworkWeights::dense_stack({3, 2});
    net.layers[0].weights = {1, -2, 0.5, 3, -0.25, 4};
    const auto before = net.layers[0].weights;
    TrainConfig cfg;
    AdamW opt(net);
    const std::vector<std::vector<double>> zero{std::vector<double>(6, 0.0)};
    for (int step = 0; step < 3; ++step) opt.step(net, zero, 0.01, cfg);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(net.layers[0].weights[i], before[i] * std::pow(1 - 0.01 * 1e-4, 3));
}

TEST(AdamW, FirstStepByHand)
{
    auto net = NetworkWeights::dense_stack({1, 2});
    net.layers[0].weights = {0.5, -0.5};
    TrainConfig cfg;
    AdamW opt(net);
    opt.step(net, {{0.2, -3.0}}, 1e-2, cfg);
    // First step: mhat = g, vhat = g^2.
    EXPECT_NEAR(net.layers[0].weights[0], 0.5 * (1 - 1e-6) - 1e-2 * 0.2 / (0.2 + 1e-8), 1e-15);
    EXPECT_NEAR(net.layers[0].weights[1], -0.5 * (1 - 1e-6) + 1e-2 * 3.0 / (3.0 + 1e-8), 1e-15);
}

TEST(TrainConfig, Validation)
{
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.epsilon = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.mining_threshold = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.eta_min = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.gamma = -1;
    EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUnchanged)
{
    std::mt19937_64 rng(4);
    const auto data = toy_dataset(rng, 8, 4);
    const auto init = init_weights(2);
    Trainer tr(init, TrainConfig{}, ClassWeights::uniform(24));
    tr.train_epoch(data, 0, 0.0);
    EXPECT_EQ(tr.weights().layers, init.layers);
}

TEST(Trainer, ReproducibleAndIndependentOfJobs)
{
    std::mt19937_64 rng(5);
    const auto data = toy_dataset(rng, 24, 4);
    TrainConfig cfg;
    cfg.batch_size = 8;
    Trainer a(init_weights(7), cfg, ClassWeights::uniform(24));
    Trainer b(init_weights(7), cfg, ClassWeights::uniform(24));
    cfg.jobs = 4;
    Trainer c(init_weights(7), cfg, ClassWeights::uniform(24));
    for (int e = 0; e < 2; ++e) {
        const auto ma = a.train_epoch(data, e), mb = b.train_epoch(data, e), mc = c.train_epoch(data, e);
        EXPECT_EQ(ma.loss, mb.loss);
        EXPECT_EQ(ma.loss, mc.loss);
    }
    EXPECT_EQ(a.weights().layers, b.weights().layers);
    EXPECT_EQ(a.weights().layers, c.weights().layers);
}

TEST(Trainer, LearnsToyTask)
{
    std::mt19937_64 rng(6);
    const auto data = toy_dataset(rng, 48, 4);
    TrainConfig cfg;
    Trainer tr(init_weights(11), cfg, ClassWeights::uniform(24));
    for (int e = 0; e < 6; ++e) tr.train_epoch(data, e);
    EXPECT_GE(accuracy(tr.weights(), data), 0.9);
}

TEST(Trainer, SingleSampleOverfit)
{
    std::mt19937_64 rng(7);
    SpikeRaster r(35, 48);
    for (int t = 0; t < 35; ++t)
        for (int k = 0; k < 150; ++k) r.set(t, static_cast<int>(rng() % 48), static_cast<int>(rng() % 48));
    const std::vector<Sample> one{{r, 17}};
    TrainConfig cfg;
    cfg.batch_size = 1;
    Trainer tr(init_weights(3), cfg, ClassWeights::uniform(24));
    for (int step = 0; step < 200; ++step) tr.train_epoch(one, step);
    EXPECT_EQ(accuracy(tr.weights(), one), 1.0);
}

TEST(Trainer, NonFiniteLossAborts)
{
    std::mt19937_64 rng(8);
    const auto data = toy_dataset(rng, 4, 2);
    auto net = init_weights(1);
    for (double& w : net.layers[2].weights) w = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.readout = Readout::membrane;
    Trainer tr(net, cfg, ClassWeights::uniform(24));
    try {
        tr.train_epoch(data, 3);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
    }
}
