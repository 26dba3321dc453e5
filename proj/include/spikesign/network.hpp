#pragma once

// Float-precision spiking recognition network: a strided convolution into
// LIF neurons, a dense hidden LIF layer and a dense LIF readout. The layer
// list is generic so that small networks share the same simulation and
// gradient code.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/lif.hpp"

namespace spikesign {

inline constexpr int kInputSide = 48;
inline constexpr int kConvChannels = 4;
inline constexpr int kConvKernel = 5;
inline constexpr int kConvStride = 6;
inline constexpr int kHiddenNeurons = 512;
inline constexpr int kNumClasses = 24;

enum class LayerKind : std::uint8_t { conv = 0, dense = 1 };

/// Valid (unpadded) strided convolution from a square single-channel input.
struct ConvGeometry {
    int in_side = kInputSide;
    int channels = kConvChannels;
    int kernel = kConvKernel;
    int stride = kConvStride;

    int out_side() const { return (in_side - kernel) / stride + 1; }
    int neurons() const { return channels * out_side() * out_side(); }
    int taps() const { return kernel * kernel; }

    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// One projection followed by a neuron population. Dense weights are stored
/// row-major as [input][output]; conv weights as [channel][ky][kx] and shared
/// across positions. Output neuron order for conv is [channel][oy][ox].
struct Layer {
    LayerKind kind = LayerKind::dense;
    int inputs = 0;
    int outputs = 0;
    ConvGeometry conv{};
    bool spiking = true; // false: the layer forwards its input current unchanged
    std::vector<double> weights;

    std::size_t weight_count() const
    {
        return kind == LayerKind::conv ? static_cast<std::size_t>(conv.channels) * conv.taps()
                                       : static_cast<std::size_t>(inputs) * outputs;
    }

    /// Number of (pre, post) synapses, counting every conv position separately.
    std::size_t synapse_count() const
    {
        return kind == LayerKind::conv ? static_cast<std::size_t>(outputs) * conv.taps()
                                       : static_cast<std::size_t>(inputs) * outputs;
    }

    static Layer make_conv(ConvGeometry g, bool spiking = true)
    {
        Layer l;
        l.kind = LayerKind::conv;
        l.conv = g;
        l.inputs = g.in_side * g.in_side;
        l.outputs = g.neurons();
        l.spiking = spiking;
        l.weights.assign(l.weight_count(), 0.0);
        return l;
    }

    static Layer make_dense(int inputs, int outputs, bool spiking = true)
    {
        Layer l;
        l.kind = LayerKind::dense;
        l.inputs = inputs;
        l.outputs = outputs;
        l.spiking = spiking;
        l.weights.assign(l.weight_count(), 0.0);
        return l;
    }

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Bias-free feed-forward weights. The recognition network is conv(4x5x5,
/// stride 6) -> dense 256x512 -> dense 512x24.
struct NetworkWeights {
    std::vector<Layer> layers;

    static NetworkWeights recognition(bool l1_spiking = true)
    {
        NetworkWeights w;
        w.layers.push_back(Layer::make_conv(ConvGeometry{}, l1_spiking));
        const int l1 = w.layers.back().outputs;
        w.layers.push_back(Layer::make_dense(l1, kHiddenNeurons));
        w.layers.push_back(Layer::make_dense(kHiddenNeurons, kNumClasses));
        return w;
    }

    /// Fully connected stack, e.g. {4, 4, 2}.
    static NetworkWeights dense_stack(const std::vector<int>& sizes)
    {
        if (sizes.size() < 2) throw ParameterError("dense stack needs at least two sizes");
        NetworkWeights w;
        for (std::size_t i = 1; i < sizes.size(); ++i) w.layers.push_back(Layer::make_dense(sizes[i - 1], sizes[i]));
        return w;
    }

    int input_size() const { return layers.empty() ? 0 : layers.front().inputs; }
    int output_size() const { return layers.empty() ? 0 : layers.back().outputs; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size();
        return n;
    }

    bool all_finite() const
    {
        for (const auto& l : layers)
            for (double v : l.weights)
                if (!std::isfinite(v)) return false;
        return true;
    }

    void check_consistent() const
    {
        if (layers.empty()) throw ContractError("network has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.weights.size() != l.weight_count())
                throw ContractError("layer " + std::to_string(i) + " weight count mismatch");
            if (i > 0 && layers[i - 1].outputs != l.inputs)
                throw ContractError("layer " + std::to_string(i) + " input size does not match previous layer");
            if (l.kind == LayerKind::conv && (l.inputs != l.conv.in_side * l.conv.in_side || l.outputs != l.conv.neurons()))
                throw ContractError("layer " + std::to_string(i) + " conv geometry mismatch");
        }
    }

    friend bool operator==(const NetworkWeights&, const NetworkWeights&) = default;
};

// ---------------------------------------------------------------------------
// Linear projections. Inputs are dense vectors; zero entries are skipped so
// binary spike inputs cost proportional to the number of spikes.

inline void project_forward(const Layer& layer, std::span<const double> in, std::span<double> out)
{
    std::fill(out.begin(), out.end(), 0.0);
    if (layer.kind == LayerKind::dense) {
        for (int i = 0; i < layer.inputs; ++i) {
            const double x = in[static_cast<std::size_t>(i)];
            if (x == 0.0) continue;
            const double* row = layer.weights.data() + static_cast<std::size_t>(i) * layer.outputs;
            for (int j = 0; j < layer.outputs; ++j) out[static_cast<std::size_t>(j)] += x * row[j];
        }
        return;
    }
    const ConvGeometry& g = layer.conv;
    const int os = g.out_side();
    for (int c = 0; c < g.channels; ++c) {
        const double* k = layer.weights.data() + static_cast<std::size_t>(c) * g.taps();
        for (int oy = 0; oy < os; ++oy)
            for (int ox = 0; ox < os; ++ox) {
                double acc = 0.0;
                for (int ky = 0; ky < g.kernel; ++ky) {
                    const double* row = in.data() + static_cast<std::size_t>(oy * g.stride + ky) * g.in_side + ox * g.stride;
                    for (int kx = 0; kx < g.kernel; ++kx) acc += row[kx] * k[ky * g.kernel + kx];
                }
                out[static_cast<std::size_t>((c * os + oy) * os + ox)] = acc;
            }
    }
}

/// Accumulates dL/dW into `grad_w` and, when `grad_in` is non-empty, writes dL/d(input).
inline void project_backward(const Layer& layer, std::span<const double> in, std::span<const double> grad_out,
                             std::span<double> grad_w, std::span<double> grad_in)
{
    if (layer.kind == LayerKind::dense) {
        for (int i = 0; i < layer.inputs; ++i) {
            const double x = in[static_cast<std::size_t>(i)];
            if (x == 0.0) continue;
            double* row = grad_w.data() + static_cast<std::size_t>(i) * layer.outputs;
            for (int j = 0; j < layer.outputs; ++j) row[j] += x * grad_out[static_cast<std::size_t>(j)];
        }
        if (!grad_in.empty()) {
            for (int i = 0; i < layer.inputs; ++i) {
                const double* row = layer.weights.data() + static_cast<std::size_t>(i) * layer.outputs;
                double acc = 0.0;
                for (int j = 0; j < layer.outputs; ++j) acc += row[j] * grad_out[static_cast<std::size_t>(j)];
                grad_in[static_cast<std::size_t>(i)] = acc;
            }
        }
        return;
    }
    const ConvGeometry& g = layer.conv;
    const int os = g.out_side();
    if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
    for (int c = 0; c < g.channels; ++c) {
        const std::size_t kbase = static_cast<std::size_t>(c) * g.taps();
        for (int oy = 0; oy < os; ++oy)
            for (int ox = 0; ox < os; ++ox) {
                const double go = grad_out[static_cast<std::size_t>((c * os + oy) * os + ox)];
                if (go == 0.0) continue;
                for (int ky = 0; ky < g.kernel; ++ky)
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        const std::size_t pix = static_cast<std::size_t>(oy * g.stride + ky) * g.in_side + ox * g.stride + kx;
                        grad_w[kbase + static_cast<std::size_t>(ky * g.kernel + kx)] += in[pix] * go;
                        if (!grad_in.empty()) grad_in[pix] += layer.weights[kbase + static_cast<std::size_t>(ky * g.kernel + kx)] * go;
                    }
            }
    }
}

// ---------------------------------------------------------------------------
// Spike functions. `value` is the forward nonlinearity applied to u - threshold,
// `derivative` the gradient used in the backward pass.

/// Heaviside forward, fast-sigmoid surrogate 1 / (1 + k|x|)^2 backward.
struct FastSigmoidSurrogate {
    double slope = 25.0;
    double value(double x) const { return x >= 0.0 ? 1.0 : 0.0; }
    double derivative(double x) const
    {
        const double d = 1.0 + slope * std::abs(x);
        return 1.0 / (d * d);
    }
};

/// Smooth relaxation whose exact derivative equals the fast-sigmoid
/// surrogate: value(x) = 1/2 + x / (1 + k|x|). Used for gradient checks.
struct RelaxedFastSigmoid {
    double slope = 25.0;
    double value(double x) const { return 0.5 + x / (1.0 + slope * std::abs(x)); }
    double derivative(double x) const
    {
        const double d = 1.0 + slope * std::abs(x);
        return 1.0 / (d * d);
    }
};

enum class Readout { spike_count, membrane };

/// Recorded forward pass: pre-reset membrane and emitted output per layer and
/// timestep, plus the network input.
struct ForwardTrace {
    int timesteps = 0;
    std::vector<double> input;                 // T x input_size
    std::vector<std::vector<double>> membrane; // per layer, T x n (pre-reset)
    std::vector<std::vector<double>> output;   // per layer, T x n
    std::vector<double> logits;                // accumulated over time
    std::array<std::uint64_t, 3> layer_spikes{}; // first three layers, Heaviside counts

    std::span<const double> output_at(std::size_t layer, int t, int n) const
    {
        return {output[layer].data() + static_cast<std::size_t>(t) * n, static_cast<std::size_t>(n)};
    }
};

template <typename SpikeFn>
ForwardTrace forward_trace(const NetworkWeights& net, std::span<const double> input, int timesteps,
                           const LifParamsTrain& lif, const SpikeFn& spike_fn, Readout readout = Readout::spike_count)
{
    net.check_consistent();
    const int in_size = net.input_size();
    if (timesteps <= 0 || input.size() != static_cast<std::size_t>(timesteps) * in_size)
        throw ContractError("input does not match (timesteps x " + std::to_string(in_size) + ")");

    ForwardTrace tr;
    tr.timesteps = timesteps;
    tr.input.assign(input.begin(), input.end());
    const std::size_t n_layers = net.layers.size();
    tr.membrane.resize(n_layers);
    tr.output.resize(n_layers);
    std::vector<std::vector<double>> v(n_layers);
    std::vector<double> current;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto n = static_cast<std::size_t>(net.layers[l].outputs);
        tr.membrane[l].assign(n * timesteps, 0.0);
        tr.output[l].assign(n * timesteps, 0.0);
        v[l].assign(n, 0.0);
    }
    const double beta = lif.beta;
    const double theta = lif.threshold;
    for (int t = 0; t < timesteps; ++t) {
        std::span<const double> x(tr.input.data() + static_cast<std::size_t>(t) * in_size, static_cast<std::size_t>(in_size));
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Layer& layer = net.layers[l];
            const auto n = static_cast<std::size_t>(layer.outputs);
            current.assign(n, 0.0);
            project_forward(layer, x, current);
            double* u_t = tr.membrane[l].data() + static_cast<std::size_t>(t) * n;
            double* s_t = tr.output[l].data() + static_cast<std::size_t>(t) * n;
            for (std::size_t j = 0; j < n; ++j) {
                if (!layer.spiking) {
                    u_t[j] = current[j];
                    s_t[j] = current[j];
                    continue;
                }
                const double u = beta * v[l][j] + current[j];
                const double s = spike_fn.value(u - theta);
                u_t[j] = u;
                s_t[j] = s;
                v[l][j] = u - theta * s;
                if (l < 3 && u >= theta) ++tr.layer_spikes[l];
            }
            x = std::span<const double>(s_t, n);
        }
    }
    const auto n_out = static_cast<std::size_t>(net.output_size());
    const auto& src = readout == Readout::spike_count ? tr.output.back() : tr.membrane.back();
    tr.logits.assign(n_out, 0.0);
    for (int t = 0; t < timesteps; ++t)
        for (std::size_t j = 0; j < n_out; ++j) tr.logits[j] += src[static_cast<std::size_t>(t) * n_out + j];
    return tr;
}

/// Backpropagation through time for a recorded trace. `grad_logits` is
/// dL/d(logits). Gradients flow through the soft reset as well as the spike.
/// Returns dL/dW for every layer (same layout as the weights).
template <typename SpikeFn>
std::vector<std::vector<double>> backward_trace(const NetworkWeights& net, const ForwardTrace& tr,
                                                std::span<const double> grad_logits, const LifParamsTrain& lif,
                                                const SpikeFn& spike_fn, Readout readout = Readout::spike_count)
{
    const std::size_t n_layers = net.layers.size();
    const int T = tr.timesteps;
    const double beta = lif.beta;
    const double theta = lif.threshold;
    std::vector<std::vector<double>> grad_w(n_layers);
    std::vector<std::vector<double>> grad_u_next(n_layers); // dL/du at t+1
    for (std::size_t l = 0; l < n_layers; ++l) {
        grad_w[l].assign(net.layers[l].weights.size(), 0.0);
        grad_u_next[l].assign(static_cast<std::size_t>(net.layers[l].outputs), 0.0);
    }
    std::vector<double> grad_s;
    std::vector<double> grad_current;
    std::vector<double> grad_below;
    const int in_size = net.input_size();
    for (int t = T - 1; t >= 0; --t) {
        const auto n_top = static_cast<std::size_t>(net.output_size());
        grad_s.assign(n_top, 0.0);
        if (readout == Readout::spike_count)
            std::copy(grad_logits.begin(), grad_logits.end(), grad_s.begin());
        for (std::size_t li = n_layers; li-- > 0;) {
            const Layer& layer = net.layers[li];
            const auto n = static_cast<std::size_t>(layer.outputs);
            grad_current.assign(n, 0.0);
            const double* u_t = tr.membrane[li].data() + static_cast<std::size_t>(t) * n;
            const bool direct_membrane = readout == Readout::membrane && li == n_layers - 1;
            for (std::size_t j = 0; j < n; ++j) {
                if (!layer.spiking) {
                    grad_current[j] = grad_s[j] + (direct_membrane ? grad_logits[j] : 0.0);
                    continue;
                }
                const double x = u_t[j] - theta;
                const double ds = spike_fn.derivative(x);
                const double grad_v = beta * grad_u_next[li][j];
                double gu = grad_v * (1.0 - theta * ds) + grad_s[j] * ds;
                if (direct_membrane) gu += grad_logits[j];
                grad_current[j] = gu;
                grad_u_next[li][j] = gu;
            }
            std::span<const double> in = li == 0
                ? std::span<const double>(tr.input.data() + static_cast<std::size_t>(t) * in_size, static_cast<std::size_t>(in_size))
                : tr.output_at(li - 1, t, net.layers[li - 1].outputs);
            if (li > 0) {
                grad_below.assign(static_cast<std::size_t>(layer.inputs), 0.0);
                project_backward(layer, in, grad_current, grad_w[li], grad_below);
                grad_s.swap(grad_below);
            } else {
                project_backward(layer, in, grad_current, grad_w[li], {});
            }
        }
    }
    return grad_w;
}

// ---------------------------------------------------------------------------

/// Per-layer spike totals for one forward pass.
struct LayerSpikes {
    std::array<std::uint64_t, 3> counts{};
    std::uint64_t total() const { return counts[0] + counts[1] + counts[2]; }
};

struct ForwardResult {
    std::vector<std::uint32_t> class_counts;
    std::vector<double> logits; // equal to class_counts under the spike-count readout
    LayerSpikes spikes;
};

inline std::vector<double> raster_to_input(const SpikeRaster& raster)
{
    return {raster.data().begin(), raster.data().end()};
}

/// Inference on a (T, 48, 48) raster with Heaviside spikes.
inline ForwardResult forward(const SpikeRaster& raster, const NetworkWeights& net, const LifParamsTrain& lif = {},
                             Readout readout = Readout::spike_count)
{
    lif.validate();
    if (static_cast<std::size_t>(net.input_size()) != raster.frame_pixels())
        throw ContractError("raster of " + std::to_string(raster.size()) + "x" + std::to_string(raster.size()) +
                            " does not match network input of " + std::to_string(net.input_size()));
    const auto input = raster_to_input(raster);
    const auto tr = forward_trace(net, input, raster.timesteps(), lif, FastSigmoidSurrogate{}, readout);
    ForwardResult r;
    r.logits = tr.logits;
    const auto n_out = tr.logits.size();
    r.class_counts.assign(n_out, 0);
    for (int t = 0; t < raster.timesteps(); ++t)
        for (std::size_t j = 0; j < n_out; ++j)
            r.class_counts[j] += static_cast<std::uint32_t>(std::lround(tr.output.back()[static_cast<std::size_t>(t) * n_out + j]));
    r.spikes.counts = tr.layer_spikes;
    return r;
}

/// Argmax with ties resolved to the smallest index.
template <typename T>
int classify(std::span<const T> counts)
{
    if (counts.empty()) throw ContractError("classify needs at least one count");
    return static_cast<int>(std::distance(counts.begin(), std::max_element(counts.begin(), counts.end())));
}

template <typename T>
int classify(const std::vector<T>& counts)
{
    return classify(std::span<const T>(counts));
}

// ---------------------------------------------------------------------------

struct LayerGeometry {
    std::string name;
    int neurons = 0;
    std::size_t input_synapses = 0;       // as simulated (dense fan-in)
    std::size_t published_synapses = 0;   // figure listed for the deployed network
};

/// Population sizes and synapse counts of the recognition network, next to
/// the published deployment counts. The fully connected layers here are dense;
/// the published hidden/output counts are slightly lower.
inline std::vector<LayerGeometry> recognition_geometry()
{
    const auto net = NetworkWeights::recognition();
    std::vector<LayerGeometry> g;
    g.push_back({"input", kInputSide * kInputSide, 0, 0});
    g.push_back({"conv", net.layers[0].outputs, net.layers[0].synapse_count(), 6400});
    g.push_back({"hidden", net.layers[1].outputs, net.layers[1].synapse_count(), 130938});
    g.push_back({"output", net.layers[2].outputs, net.layers[2].synapse_count(), 12284});
    return g;
}

} // namespace spikesign
