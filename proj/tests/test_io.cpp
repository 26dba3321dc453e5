#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "spikesign/config.hpp"
#include "spikesign/training.hpp"
#include "spikesign/weights_io.hpp"
#include "test_util.hpp"

using namespace spikesign;
using test_util::TempDir;

namespace {

NetworkWeights small_net()
{
    NetworkWeights net;
    net.layers = {Layer::make_conv({12, 2, 3, 3}), Layer::make_dense(32, 5, false), Layer::make_dense(5, 3)};
    std::mt19937_64 rng(1);
    for (auto& l : net.layers)
        for (double& w : l.weights) w = std::normal_distribution<double>(0, 1)(rng);
    return net;
}

} // namespace

TEST(WeightsIo, RoundTripIsFloat32Exact)
{
    for (const auto& net : {small_net(), init_weights(4), init_weights(5, false)}) {
        const auto back = decode_weights(encode_weights(net));
        ASSERT_EQ(back.layers.size(), net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            EXPECT_EQ(back.layers[l].kind, net.layers[l].kind);
            EXPECT_EQ(back.layers[l].spiking, net.layers[l].spiking);
            EXPECT_EQ(back.layers[l].conv, net.layers[l].conv);
            for (std::size_t i = 0; i < net.layers[l].weights.size(); ++i)
                EXPECT_EQ(back.layers[l].weights[i], static_cast<double>(static_cast<float>(net.layers[l].weights[i])));
        }
        // Second trip is bit-identical.
        EXPECT_EQ(encode_weights(back), encode_weights(net));
    }
}

TEST(WeightsIo, LayoutHeader)
{
    const auto bytes = encode_weights(small_net());
    EXPECT_EQ(bytes.substr(0, 4), "SRW1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 0u); // conv kind
    const std::size_t expected = 12 + 3 * 30 + 4 * (18 + 160 + 15);
    EXPECT_EQ(bytes.size(), expected);
}

TEST(WeightsIo, CorruptionRaisesFormatError)
{
    const auto bytes = encode_weights(small_net());
    for (std::size_t n = 0; n < bytes.size(); n += 7) EXPECT_THROW(decode_weights(bytes.substr(0, n)), FormatError) << n;
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_weights(bad), FormatError);
    bad = bytes;
    bad[4] = 2;
    EXPECT_THROW(decode_weights(bad), FormatError);
    bad = bytes;
    bad[12] = 9; // unknown layer kind
    EXPECT_THROW(decode_weights(bad), FormatError);
    bad = bytes;
    bad[8] = 0;
    EXPECT_THROW(decode_weights(bad), FormatError);
    EXPECT_THROW(decode_weights(bytes + "x"), FormatError);
    try {
        decode_weights(bytes + "x");
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), bytes.size());
    }
}

TEST(WeightsIo, CheckpointAndSidecar)
{
    TempDir dir;
    CheckpointMeta meta;
    meta.beta = 0.9;
    meta.timesteps = 20;
    meta.seed = 77;
    meta.provenance = {{"epochs", 3}};
    const auto net = small_net();
    save_checkpoint(dir / "w.srw", net, meta);
    EXPECT_TRUE(std::filesystem::exists(dir / "w.srw.json"));
    EXPECT_EQ(encode_weights(load_weights(dir / "w.srw")), encode_weights(net));
    const auto m = load_checkpoint_meta(dir / "w.srw");
    EXPECT_EQ(m.beta, 0.9);
    EXPECT_EQ(m.timesteps, 20);
    EXPECT_EQ(m.seed, 77u);
    EXPECT_EQ(m.provenance["epochs"], 3);
    std::filesystem::remove(dir / "w.srw.json");
    EXPECT_EQ(load_checkpoint_meta(dir / "w.srw").beta, 0.92);
}

TEST(QuantIo, RoundTrip)
{
    const auto q = quantize(small_net(), std::vector<int>{12, 8, 15});
    const auto back = decode_quantized(encode_quantized(q));
    ASSERT_EQ(back.layers.size(), 3u);
    for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_EQ(back.layers[l].frac_bits, q.layers[l].frac_bits);
        EXPECT_EQ(back.layers[l].values, q.layers[l].values);
        EXPECT_EQ(back.shape.layers[l].weights, q.shape.layers[l].weights);
    }
    EXPECT_EQ(encode_quantized(back), encode_quantized(q));
}

TEST(QuantIo, CorruptionRaisesFormatError)
{
    const auto bytes = encode_quantized(quantize(small_net(), 12));
    for (std::size_t n = 0; n < bytes.size(); n += 5) EXPECT_THROW(decode_quantized(bytes.substr(0, n)), FormatError);
    auto bad = bytes;
    bad[12 + 30] = 16; // first layer's fractional bits
    EXPECT_THROW(decode_quantized(bad), FormatError);
    EXPECT_THROW(decode_quantized(encode_weights(small_net())), FormatError);
}

TEST(Config, DefaultsValidate)
{
    EXPECT_NO_THROW(PipelineConfig{}.validate());
    const auto names = config_key_names();
    EXPECT_GE(names.size(), 60u);
    for (const char* k : {"dvs.contrast_pos", "saliency.r0", "roi.mode", "snn.beta", "train.gamma", "deploy.tau_m",
                          "deploy.frac_bits", "energy.p_s_nj"})
        EXPECT_NE(std::find(names.begin(), names.end(), k), names.end()) << k;
}

TEST(Config, ParseCommentsAndValues)
{
    std::istringstream in("# header\n\n"
                          "snn.beta = 0.9   # trailing\n"
                          "  train.lr=0.01\n"
                          "saliency.r0 = 5, 10,20\n"
                          "roi.mode = center_crop\n"
                          "snn.l1_spiking = false\n"
                          "snn.readout = membrane\n"
                          "dvs.seed = 12345678901\n");
    const auto c = parse_config(in);
    EXPECT_EQ(c.lif.beta, 0.9);
    EXPECT_EQ(c.train.lr_max, 0.01);
    EXPECT_EQ(c.preprocess.bank.radii, (std::vector<double>{5, 10, 20}));
    EXPECT_EQ(c.preprocess.roi_mode, RoiMode::center_crop);
    EXPECT_FALSE(c.l1_spiking);
    EXPECT_EQ(c.train.readout, Readout::membrane);
    EXPECT_EQ(c.dvs.seed, 12345678901u);
    EXPECT_EQ(c.train.gamma, 2.0); // untouched
}

TEST(Config, Errors)
{
    std::istringstream unknown("snn.beta = 0.9\nsnn.bogus = 1\n");
    try {
        parse_config(unknown);
        FAIL();
    } catch (const ParameterError& e) {
        EXPECT_NE(std::string(e.what()).find("config line 2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("snn.bogus"), std::string::npos);
    }
    std::istringstream no_eq("snn.beta 0.9\n");
    EXPECT_THROW(parse_config(no_eq), ParameterError);
    PipelineConfig c;
    EXPECT_THROW(set_config_value(c, "snn.beta", "abc"), ParameterError);
    EXPECT_THROW(set_config_value(c, "train.epochs", "2.5"), ParameterError);
    EXPECT_THROW(set_config_value(c, "roi.mode", "left"), ParameterError);
    EXPECT_THROW(set_config_value(c, "saliency.r0", "5,-1"), ParameterError);
    EXPECT_THROW(apply_override(c, "snn.beta"), ParameterError);
    apply_override(c, " deploy.frac_bits = 12 ");
    EXPECT_EQ(c.frac_bits, 12);
    EXPECT_THROW(load_config("/nonexistent/cfg.txt"), std::runtime_error);
}

TEST(Config, DumpParseRoundTrip)
{
    PipelineConfig c;
    apply_override(c, "snn.beta=0.875");
    apply_override(c, "saliency.r0=7.5,15");
    apply_override(c, "train.eta_min=3.3e-9");
    apply_override(c, "roi.mode=center_crop");
    const auto dumped = dump_config(c);
    std::istringstream in(dumped);
    const auto back = parse_config(in);
    EXPECT_EQ(dump_config(back), dumped);
    EXPECT_EQ(back.lif.beta, 0.875);
    EXPECT_EQ(back.train.eta_min, 3.3e-9);
    EXPECT_EQ(back.deploy.tau_m, c.deploy.tau_m);
}

TEST(Config, ValidationCatchesInconsistency)
{
    PipelineConfig c;
    c.preprocess.bank.orientations = 7;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.val_fraction = 1.0;
    EXPECT_THROW(c.validate(), ParameterError);
    c = {};
    c.deploy.v_thresh = -70;
    EXPECT_THROW(c.validate(), ParameterError);
}
