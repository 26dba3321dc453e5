#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "spikesign/deploy.hpp"
#include "spikesign/training.hpp"

using namespace spikesign;

TEST(TauM, FromBeta)
{
    EXPECT_NEAR(tau_m_from_beta(std::exp(-1.0)), 1.0, 1e-12);
    EXPECT_NEAR(tau_m_from_beta(0.92), 11.9930, 1e-4);
    EXPECT_NEAR(tau_m_from_beta(0.5), 1.4427, 1e-4);
    EXPECT_DOUBLE_EQ(tau_m_from_beta(0.92, 2.0), 2 * tau_m_from_beta(0.92));
    EXPECT_THROW(tau_m_from_beta(1.0), DomainError);
    EXPECT_THROW(tau_m_from_beta(0.0), DomainError);
    EXPECT_THROW(tau_m_from_beta(-0.3), DomainError);
    // Round trip: the deployed per-step decay equals beta.
    for (double b = 0.05; b < 1.0; b += 0.05) EXPECT_NEAR(std::exp(-1.0 / tau_m_from_beta(b)), b, 1e-12);
}

TEST(Quantize, Examples)
{
    EXPECT_EQ(quantize_value(0.3, 8), 77);
    EXPECT_DOUBLE_EQ(77 / 256.0, 0.30078125);
    bool sat = false;
    EXPECT_EQ(quantize_value(200.0, 8, &sat), 32767);
    EXPECT_TRUE(sat);
    EXPECT_EQ(quantize_value(-200.0, 8, &sat), -32767);
    EXPECT_TRUE(sat);
    // Ties round away from zero.
    EXPECT_EQ(quantize_value(0.5 / 256, 8), 1);
    EXPECT_EQ(quantize_value(-0.5 / 256, 8), -1);
    EXPECT_EQ(quantize_value(0.0, 12, &sat), 0);
    EXPECT_FALSE(sat);
}

TEST(Quantize, ErrorBoundAndReport)
{
    std::mt19937_64 rng(1);
    auto net = init_weights(5);
    net.layers[2].weights[0] = 100.0; // saturates at f = 12
    for (int f : {4, 8, 12, 15}) {
        std::vector<QuantLayerReport> rep;
        const auto q = quantize(net, f, &rep);
        ASSERT_EQ(rep.size(), 3u);
        for (std::size_t l = 0; l < 3; ++l) {
            EXPECT_LE(rep[l].max_abs_error, std::ldexp(1.0, -(f + 1)) + 1e-15);
            for (std::size_t i = 0; i < net.layers[l].weights.size(); ++i) {
                const double w = net.layers[l].weights[i];
                const double dq = q.shape.layers[l].weights[i];
                EXPECT_EQ(dq, q.layers[l].dequantized(i));
                if (std::abs(w) * std::ldexp(1.0, f) < 32767) {
                    EXPECT_LE(std::abs(dq - w), std::ldexp(1.0, -(f + 1)) + 1e-15);
                }
                if (w != 0) {
                    EXPECT_TRUE(dq == 0 || std::signbit(dq) == std::signbit(w));
                }
            }
        }
        EXPECT_EQ(rep[0].saturated, 0u);
        EXPECT_EQ(rep[2].saturated, f >= 9 ? 1u : 0u);
    }
    EXPECT_THROW(quantize(net, 16), ParameterError);
    EXPECT_THROW(quantize(net, std::vector<int>{8, 8}), ParameterError);
}

TEST(MapProjections, ScalesAndSigns)
{
    auto net = NetworkWeights::dense_stack({2, 2, 2, 2});
    for (auto& l : net.layers) l.weights = {0.1, -0.1, 0.0, 0.5};
    LifParamsDeploy p;
    p.w_inh = 1.5;
    const auto img = map_projections(net, p);
    ASSERT_EQ(img.projections.size(), 3u);
    EXPECT_DOUBLE_EQ(img.projections[0].scale, 2.0);
    EXPECT_DOUBLE_EQ(img.projections[1].scale, 0.3);
    EXPECT_DOUBLE_EQ(img.projections[2].scale, 2.0);
    EXPECT_NEAR(img.projections[1].excitatory[0], 0.03, 1e-15);
    EXPECT_NEAR(img.projections[1].inhibitory[1], 0.03 * 1.5, 1e-15);
    EXPECT_NEAR(img.projections[2].excitatory[3], 1.0, 1e-15);
    for (const auto& pr : img.projections) {
        EXPECT_EQ(pr.connection_count(), 3u); // zero weight carries nothing
        EXPECT_EQ(pr.delay_steps, 1);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(pr.excitatory[i] == 0.0 || pr.inhibitory[i] == 0.0);
        EXPECT_EQ(pr.excitatory[1], 0.0);
        EXPECT_EQ(pr.inhibitory[0], 0.0);
    }
}

TEST(MapProjections, QuantizedPathUsesDequantizedValues)
{
    const auto net = init_weights(2);
    const auto q = quantize(net, 8);
    const auto a = map_projections(q, {});
    const auto b = map_projections(q.shape, {});
    for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(a.projections[l].excitatory, b.projections[l].excitatory);
}

TEST(DeployForward, ZeroRasterStaysAtRest)
{
    const auto img = map_projections(init_weights(1), {});
    LifParamsDeploy p;
    DeployTraceHook hook;
    bool all_rest = true;
    hook.on_step = [&](int, std::size_t, const DeployPopulation& pop, std::span<const std::uint8_t> s) {
        for (double v : pop.v) all_rest &= v == p.v_rest;
        for (auto b : s) all_rest &= b == 0;
    };
    const auto r = deploy_forward(SpikeRaster(20, 48), img, p, &hook);
    EXPECT_TRUE(all_rest);
    EXPECT_EQ(r.spikes.counts, (std::array<std::uint64_t, 3>{0, 0, 0}));
    for (auto c : r.class_counts) EXPECT_EQ(c, 0u);
    EXPECT_THROW(deploy_forward(SpikeRaster(5, 32), img, p), ContractError);
}

namespace {

/// One input pixel feeding one neuron with weight w.
struct Single {
    NetworkWeights net = NetworkWeights::dense_stack({1, 1});
    explicit Single(double w) { net.layers[0].weights = {w}; }
};

std::vector<double> trace_v(const SpikeRaster& r, const DeployImage& img, const LifParamsDeploy& p,
                            std::vector<int>* spikes = nullptr)
{
    std::vector<double> v;
    DeployTraceHook hook;
    hook.on_step = [&](int, std::size_t, const DeployPopulation& pop, std::span<const std::uint8_t> s) {
        v.push_back(pop.v[0]);
        if (spikes) spikes->push_back(s[0]);
    };
    deploy_forward(r, img, p, &hook);
    return v;
}

} // namespace

TEST(DeployForward, SynapticDecayFactor)
{
    EXPECT_NEAR(std::exp(-1.0 / 5.0), 0.81873, 1e-5);
    // Single input spike at t=0, tiny weight: no spike, v follows the
    // exc. current kernel (1, e^-1/5, ...) filtered by the membrane.
    Single s(0.01);
    LifParamsDeploy p;
    p.input_gain = 1.0;
    SpikeRaster r(6, 1);
    r.set(0, 0, 0);
    const auto v = trace_v(r, map_projections(s.net, p), p);
    const double de = std::exp(-1.0 / 5.0), dm = std::exp(-1.0 / p.tau_m);
    EXPECT_DOUBLE_EQ(v[0], -65.0);                           // delay: nothing at t=0
    EXPECT_NEAR(v[1] + 65.0, 0.01, 1e-12);                  // arrives at t=1
    EXPECT_NEAR(v[2] + 65.0, 0.01 * dm + 0.01 * de, 1e-12);
}

TEST(DeployForward, DelayShiftsResponse)
{
    Single s(5.0);
    for (double d : {0.0, 1.0, 3.0}) {
        LifParamsDeploy p;
        p.delay = d;
        SpikeRaster r(8, 1);
        r.set(2, 0, 0);
        std::vector<int> spikes;
        trace_v(r, map_projections(s.net, p), p, &spikes);
        const auto first = std::find(spikes.begin(), spikes.end(), 1) - spikes.begin();
        EXPECT_EQ(first, 2 + static_cast<long>(d));
    }
}

TEST(DeployForward, RefractoryHoldsReset)
{
    Single s(20.0);
    LifParamsDeploy p;
    p.tau_refrac = 2.0;
    SpikeRaster r(12, 1);
    for (int t = 0; t < 12; ++t) r.set(t, 0, 0);
    std::vector<int> spikes;
    const auto v = trace_v(r, map_projections(s.net, p), p, &spikes);
    // Strong drive: spike at 1, two refractory steps, spike at 4, ...
    EXPECT_EQ(spikes, (std::vector<int>{0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0}));
    EXPECT_DOUBLE_EQ(v[2], p.v_reset);
    EXPECT_DOUBLE_EQ(v[3], p.v_reset);
}

TEST(DeployForward, DecaysMonotonicallyToRest)
{
    Single s(-0.5);
    LifParamsDeploy p;
    SpikeRaster r(100, 1);
    r.set(0, 0, 0);
    const auto v = trace_v(r, map_projections(s.net, p), p);
    // Hyperpolarised, then relaxes back without overshoot.
    const auto lowest = std::min_element(v.begin(), v.end()) - v.begin();
    EXPECT_LT(v[static_cast<std::size_t>(lowest)], p.v_rest);
    for (std::size_t t = static_cast<std::size_t>(lowest) + 1; t < v.size(); ++t) {
        EXPECT_GE(v[t], v[t - 1]);
        EXPECT_LE(v[t], p.v_rest);
    }
    EXPECT_NEAR(v.back(), p.v_rest, 1e-2);
}

TEST(DeployForward, MatchesScalarOracle)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> wd(-3.0, 6.0);
    for (int trial = 0; trial < 100; ++trial) {
        Single s(wd(rng));
        LifParamsDeploy p;
        p.tau_refrac = static_cast<double>(rng() % 3);
        p.delay = static_cast<double>(rng() % 3);
        p.w_inh = 0.5 + (rng() % 3) * 0.5;
        SpikeRaster r(80, 1);
        std::vector<int> in(80);
        for (int t = 0; t < 80; ++t)
            if ((in[t] = rng() % 3 == 0)) r.set(t, 0, 0);
        std::vector<int> spikes;
        const auto v = trace_v(r, map_projections(s.net, p), p, &spikes);

        const double w = s.net.layers[0].weights[0] * p.input_gain;
        const double de = std::exp(-1.0 / p.tau_syn_e), di = std::exp(-1.0 / p.tau_syn_i), dm = std::exp(-1.0 / p.tau_m);
        const int d = static_cast<int>(p.delay), R = static_cast<int>(p.tau_refrac);
        double ve = p.v_rest, ie = 0, ii = 0;
        int refr = 0;
        for (int t = 0; t < 80; ++t) {
            ie *= de;
            ii *= di;
            if (t - d >= 0 && in[t - d]) (w > 0 ? ie : ii) += w > 0 ? w : -w * p.w_inh;
            int spk = 0;
            if (refr > 0) {
                --refr;
                ve = p.v_reset;
            } else {
                ve = p.v_rest + (ve - p.v_rest) * dm + ie - ii;
                if (ve >= p.v_thresh) {
                    spk = 1;
                    ve = p.v_reset;
                    refr = R;
                }
            }
            ASSERT_NEAR(v[t], ve, 1e-9) << "trial " << trial << " t " << t;
            ASSERT_EQ(spikes[t], spk);
        }
    }
}

TEST(DeployForward, ConvDeliveryMatchesDense)
{
    // A conv layer and its dense unrolling produce the same deployed activity.
    std::mt19937_64 rng(10);
    Layer conv = Layer::make_conv({12, 2, 3, 3});
    for (double& w : conv.weights) w = std::normal_distribution<double>(0.5, 1.0)(rng);
    const int os = conv.conv.out_side();
    Layer dense = Layer::make_dense(144, 2 * os * os);
    for (int ch = 0; ch < 2; ++ch)
        for (int oy = 0; oy < os; ++oy)
            for (int ox = 0; ox < os; ++ox)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int pix = (oy * 3 + ky) * 12 + ox * 3 + kx;
                        const int j = (ch * os + oy) * os + ox;
                        dense.weights[static_cast<std::size_t>(pix) * dense.outputs + j] = conv.weights[ch * 9 + ky * 3 + kx];
                    }
    NetworkWeights a, b;
    a.layers = {conv, Layer::make_dense(conv.outputs, 3)};
    b.layers = {dense, Layer::make_dense(conv.outputs, 3)};
    for (double& w : a.layers[1].weights) w = std::normal_distribution<double>(0.3, 1.0)(rng);
    b.layers[1].weights = a.layers[1].weights;
    SpikeRaster r(20, 12);
    for (int t = 0; t < 20; ++t)
        for (int k = 0; k < 30; ++k) r.set(t, static_cast<int>(rng() % 12), static_cast<int>(rng() % 12));
    LifParamsDeploy p;
    const auto ra = deploy_forward(r, map_projections(a, p), p);
    const auto rb = deploy_forward(r, map_projections(b, p), p);
    EXPECT_EQ(ra.class_counts, rb.class_counts);
    EXPECT_EQ(ra.spikes.counts, rb.spikes.counts);
    EXPECT_GT(ra.spikes.counts[0], 0u);
}

TEST(DeployForward, Deterministic)
{
    std::mt19937_64 rng(11);
    SpikeRaster r(35, 48);
    for (int t = 0; t < 35; ++t)
        for (int k = 0; k < 200; ++k) r.set(t, static_cast<int>(rng() % 48), static_cast<int>(rng() % 48));
    const auto img = map_projections(quantize(init_weights(3), 12), {});
    const auto a = deploy_forward(r, img, {}), b = deploy_forward(r, img, {});
    EXPECT_EQ(a.class_counts, b.class_counts);
    EXPECT_EQ(a.spikes.counts, b.spikes.counts);
    EXPECT_EQ(a.first_spike_step, b.first_spike_step);
}

TEST(LifParamsDeploy, Validation)
{
    LifParamsDeploy p;
    EXPECT_NO_THROW(p.validate());
    p.v_thresh = -70;
    EXPECT_THROW(p.validate(), ParameterError);
    p = {};
    p.tau_syn_e = 0;
    EXPECT_THROW(p.validate(), ParameterError);
}
