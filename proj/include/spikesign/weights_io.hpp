#pragma once

// Checkpoint formats.
//
// Float weights ("SRW1"), little-endian:
//   magic "SRW1", u32 version (1), u32 layer count, then per layer:
//   u8 kind (0 conv, 1 dense), u8 spiking, u32 inputs, u32 outputs,
//   u32 conv in_side, u32 channels, u32 kernel, u32 stride (zero for dense),
//   u32 value count, value count x f32 row-major.
// A JSON sidecar `<path>.json` records neuron parameters and provenance.
//
// Quantised image ("SRQ1"): same layer headers, then per layer u8 fractional
// bits and value count x i16.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spikesign/deploy.hpp"
#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/network.hpp"

namespace spikesign {

inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    template <typename UInt>
    UInt get()
    {
        need(sizeof(UInt));
        const auto v = get_le<UInt>(bytes_, pos_);
        pos_ += sizeof(UInt);
        return v;
    }

    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

    void expect_magic(std::string_view magic)
    {
        need(magic.size());
        if (bytes_.substr(pos_, magic.size()) != magic)
            throw FormatError("bad magic (expected " + std::string(magic) + ")", pos_);
        pos_ += magic.size();
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > bytes_.size()) throw FormatError("truncated file", pos_);
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

inline void put_layer_header(std::string& out, const Layer& l)
{
    out.push_back(static_cast<char>(l.kind));
    out.push_back(static_cast<char>(l.spiking ? 1 : 0));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.inputs));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.outputs));
    const bool conv = l.kind == LayerKind::conv;
    put_le<std::uint32_t>(out, conv ? static_cast<std::uint32_t>(l.conv.in_side) : 0U);
    put_le<std::uint32_t>(out, conv ? static_cast<std::uint32_t>(l.conv.channels) : 0U);
    put_le<std::uint32_t>(out, conv ? static_cast<std::uint32_t>(l.conv.kernel) : 0U);
    put_le<std::uint32_t>(out, conv ? static_cast<std::uint32_t>(l.conv.stride) : 0U);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.weight_count()));
}

inline Layer get_layer_header(ByteReader& in)
{
    const std::size_t at = in.pos();
    const auto kind = in.get<std::uint8_t>();
    const auto spiking = in.get<std::uint8_t>();
    const auto inputs = static_cast<int>(in.get<std::uint32_t>());
    const auto outputs = static_cast<int>(in.get<std::uint32_t>());
    ConvGeometry g;
    g.in_side = static_cast<int>(in.get<std::uint32_t>());
    g.channels = static_cast<int>(in.get<std::uint32_t>());
    g.kernel = static_cast<int>(in.get<std::uint32_t>());
    g.stride = static_cast<int>(in.get<std::uint32_t>());
    const auto count = in.get<std::uint32_t>();
    Layer l;
    if (kind == static_cast<std::uint8_t>(LayerKind::conv)) {
        if (g.kernel <= 0 || g.stride <= 0 || g.channels <= 0 || g.in_side < g.kernel)
            throw FormatError("invalid conv geometry", at);
        l = Layer::make_conv(g, spiking != 0);
    } else if (kind == static_cast<std::uint8_t>(LayerKind::dense)) {
        if (inputs <= 0 || outputs <= 0) throw FormatError("invalid dense layer size", at);
        l = Layer::make_dense(inputs, outputs, spiking != 0);
    } else {
        throw FormatError("unknown layer kind", at);
    }
    if (l.inputs != inputs || l.outputs != outputs || l.weight_count() != count)
        throw FormatError("layer dimensions inconsistent", at);
    return l;
}

} // namespace detail

inline std::string encode_weights(const NetworkWeights& net)
{
    net.check_consistent();
    std::string out = "SRW1";
    detail::put_le<std::uint32_t>(out, kWeightsVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        detail::put_layer_header(out, l);
        for (double w : l.weights) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
    }
    return out;
}

inline NetworkWeights decode_weights(std::string_view bytes)
{
    detail::ByteReader in(bytes);
    in.expect_magic("SRW1");
    const auto version = in.get<std::uint32_t>();
    if (version != kWeightsVersion) throw FormatError("unsupported weights version " + std::to_string(version), 4);
    const auto n = in.get<std::uint32_t>();
    if (n == 0 || n > 64) throw FormatError("implausible layer count", 8);
    NetworkWeights net;
    for (std::uint32_t i = 0; i < n; ++i) {
        Layer l = detail::get_layer_header(in);
        for (double& w : l.weights) w = in.get_f32();
        net.layers.push_back(std::move(l));
    }
    if (!in.done()) throw FormatError("trailing bytes", in.pos());
    try {
        net.check_consistent();
    } catch (const ContractError& e) {
        throw FormatError(e.what(), 0);
    }
    return net;
}

struct CheckpointMeta {
    double beta = 0.92;
    double threshold = 1.0;
    int timesteps = 35;
    std::uint64_t seed = 0;
    nlohmann::json provenance = nlohmann::json::object();
};

inline void save_checkpoint(const std::filesystem::path& path, const NetworkWeights& net, const CheckpointMeta& meta)
{
    detail::write_file_atomic(path, encode_weights(net));
    nlohmann::json j{{"format", "SRW1"},
                     {"beta", meta.beta},
                     {"threshold", meta.threshold},
                     {"timesteps", meta.timesteps},
                     {"seed", meta.seed},
                     {"provenance", meta.provenance}};
    auto side = path;
    side += ".json";
    detail::write_file_atomic(side, j.dump(2) + "\n");
}

inline NetworkWeights load_weights(const std::filesystem::path& path)
{
    return decode_weights(detail::read_file(path));
}

/// Reads the sidecar if present; defaults otherwise.
inline CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path)
{
    CheckpointMeta meta;
    auto side = path;
    side += ".json";
    if (!std::filesystem::exists(side)) return meta;
    const auto j = nlohmann::json::parse(detail::read_file(side));
    meta.beta = j.value("beta", meta.beta);
    meta.threshold = j.value("threshold", meta.threshold);
    meta.timesteps = j.value("timesteps", meta.timesteps);
    meta.seed = j.value("seed", meta.seed);
    if (j.contains("provenance")) meta.provenance = j["provenance"];
    return meta;
}

// ---------------------------------------------------------------------------

inline std::string encode_quantized(const QuantWeights& q)
{
    std::string out = "SRQ1";
    detail::put_le<std::uint32_t>(out, kWeightsVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(q.layers.size()));
    for (std::size_t l = 0; l < q.layers.size(); ++l) {
        detail::put_layer_header(out, q.shape.layers[l]);
        out.push_back(static_cast<char>(q.layers[l].frac_bits));
        for (auto v : q.layers[l].values) detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

inline QuantWeights decode_quantized(std::string_view bytes)
{
    detail::ByteReader in(bytes);
    in.expect_magic("SRQ1");
    const auto version = in.get<std::uint32_t>();
    if (version != kWeightsVersion) throw FormatError("unsupported quantized version " + std::to_string(version), 4);
    const auto n = in.get<std::uint32_t>();
    if (n == 0 || n > 64) throw FormatError("implausible layer count", 8);
    QuantWeights q;
    for (std::uint32_t i = 0; i < n; ++i) {
        Layer l = detail::get_layer_header(in);
        QuantLayer ql;
        ql.frac_bits = in.get<std::uint8_t>();
        if (ql.frac_bits > 15) throw FormatError("fractional bits out of range", in.pos() - 1);
        ql.values.resize(l.weights.size());
        for (std::size_t k = 0; k < ql.values.size(); ++k) {
            ql.values[k] = static_cast<std::int16_t>(in.get<std::uint16_t>());
            l.weights[k] = ql.dequantized(k);
        }
        q.shape.layers.push_back(std::move(l));
        q.layers.push_back(std::move(ql));
    }
    if (!in.done()) throw FormatError("trailing bytes", in.pos());
    return q;
}

} // namespace spikesign
