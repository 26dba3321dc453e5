#pragma once

// Neuromorphic deployment emulation: 16-bit fixed-point weights, split into
// excitatory and inhibitory projections with per-layer scale factors, run on
// a current-based LIF with exponential synapses, refractoriness and axonal
// delay on a fixed 1 ms clock.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/network.hpp"

namespace spikesign {

/// Membrane time constant giving a per-step decay of beta.
inline double tau_m_from_beta(double beta, double dt = 1.0)
{
    if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1) to derive tau_m");
    return -dt / std::log(beta);
}

struct LifParamsDeploy {
    double dt = 1.0;          // ms
    double delay = 1.0;       // ms
    double tau_m = tau_m_from_beta(0.92, 1.0);
    double tau_syn_e = 5.0;   // ms
    double tau_syn_i = 3.0;   // ms
    double tau_refrac = 1.0;  // ms
    double v_rest = -65.0;    // mV
    double v_reset = -65.0;   // mV
    double v_thresh = -61.0;  // mV
    double w_fc = 0.3;
    double w_out = 2.0;
    double w_inh = 1.0;
    double input_gain = 2.0;  // scale of the input-to-conv projection

    void validate() const
    {
        if (!(v_thresh > v_reset)) throw ParameterError("v_thresh must exceed v_reset");
        if (!(dt > 0 && tau_m > 0 && tau_syn_e > 0 && tau_syn_i > 0 && tau_refrac >= 0 && delay >= 0))
            throw ParameterError("time constants must be positive");
    }

    int delay_steps() const { return static_cast<int>(std::lround(delay / dt)); }
    int refrac_steps() const { return static_cast<int>(std::lround(tau_refrac / dt)); }
};

// ---------------------------------------------------------------------------
// Fixed point

struct QuantLayer {
    int frac_bits = 8;
    std::vector<std::int16_t> values;

    double scale() const { return std::ldexp(1.0, frac_bits); }
    double dequantized(std::size_t i) const { return values[i] / scale(); }
};

struct QuantWeights {
    NetworkWeights shape; // layer descriptors; weights hold the dequantised values
    std::vector<QuantLayer> layers;
};

struct QuantLayerReport {
    int frac_bits = 0;
    std::size_t saturated = 0;
    double max_abs_error = 0.0; // over non-saturated weights
};

inline constexpr int kQuantMax = 32767;

/// Round half away from zero, then saturate to +-32767.
inline std::int16_t quantize_value(double w, int frac_bits, bool* saturated = nullptr)
{
    const double scaled = std::round(std::ldexp(w, frac_bits));
    const bool sat = scaled > kQuantMax || scaled < -kQuantMax;
    if (saturated) *saturated = sat;
    return static_cast<std::int16_t>(std::clamp(scaled, -static_cast<double>(kQuantMax), static_cast<double>(kQuantMax)));
}

inline QuantWeights quantize(const NetworkWeights& net, const std::vector<int>& frac_bits,
                             std::vector<QuantLayerReport>* report = nullptr)
{
    net.check_consistent();
    if (frac_bits.size() != net.layers.size())
        throw ParameterError("need one fractional bit count per layer");
    QuantWeights q;
    q.shape = net;
    if (report) report->assign(net.layers.size(), {});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const int f = frac_bits[l];
        if (f < 0 || f > 15) throw ParameterError("fractional bits must lie in [0, 15]");
        QuantLayer ql{f, std::vector<std::int16_t>(net.layers[l].weights.size())};
        for (std::size_t i = 0; i < ql.values.size(); ++i) {
            bool sat = false;
            ql.values[i] = quantize_value(net.layers[l].weights[i], f, &sat);
            q.shape.layers[l].weights[i] = ql.dequantized(i);
            if (report) {
                auto& r = (*report)[l];
                r.frac_bits = f;
                if (sat) ++r.saturated;
                else r.max_abs_error = std::max(r.max_abs_error, std::abs(ql.dequantized(i) - net.layers[l].weights[i]));
            }
        }
        q.layers.push_back(std::move(ql));
    }
    return q;
}

inline QuantWeights quantize(const NetworkWeights& net, int frac_bits, std::vector<QuantLayerReport>* report = nullptr)
{
    return quantize(net, std::vector<int>(net.layers.size(), frac_bits), report);
}

inline const NetworkWeights& dequantize(const QuantWeights& q) { return q.shape; }

// ---------------------------------------------------------------------------
// Projection mapping

/// Non-negative synaptic magnitudes routed to the excitatory or inhibitory
/// receptor of each target, in the weight layout of the source layer.
struct Projection {
    Layer layout;                   // geometry; layout.weights unused
    std::vector<double> excitatory; // >= 0
    std::vector<double> inhibitory; // >= 0
    double scale = 1.0;
    int delay_steps = 1;

    std::size_t connection_count() const
    {
        if (layout.kind == LayerKind::dense) {
            std::size_t n = 0;
            for (std::size_t i = 0; i < excitatory.size(); ++i) n += (excitatory[i] > 0.0 || inhibitory[i] > 0.0);
            return n;
        }
        std::size_t taps = 0;
        for (std::size_t i = 0; i < excitatory.size(); ++i) taps += (excitatory[i] > 0.0 || inhibitory[i] > 0.0);
        return taps * static_cast<std::size_t>(layout.conv.out_side() * layout.conv.out_side());
    }
};

struct DeployImage {
    std::vector<Projection> projections;
};

/// Hidden weights scaled by w_fc, readout by w_out, the input projection by
/// input_gain; negative weights go to the inhibitory receptor with their
/// magnitude further scaled by w_inh. Zero weights carry no connection.
inline DeployImage map_projections(const NetworkWeights& net, const LifParamsDeploy& p)
{
    p.validate();
    net.check_consistent();
    DeployImage img;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        Projection pr;
        pr.layout = layer;
        pr.layout.weights.clear();
        pr.scale = l == 0 ? p.input_gain : (l + 1 == net.layers.size() ? p.w_out : p.w_fc);
        pr.delay_steps = p.delay_steps();
        pr.excitatory.assign(layer.weights.size(), 0.0);
        pr.inhibitory.assign(layer.weights.size(), 0.0);
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            const double w = layer.weights[i];
            if (w > 0.0) pr.excitatory[i] = w * pr.scale;
            else if (w < 0.0) pr.inhibitory[i] = -w * pr.scale * p.w_inh;
        }
        img.projections.push_back(std::move(pr));
    }
    return img;
}

inline DeployImage map_projections(const QuantWeights& q, const LifParamsDeploy& p)
{
    return map_projections(dequantize(q), p);
}

// ---------------------------------------------------------------------------
// Simulation

/// State of one deployed population.
struct DeployPopulation {
    std::vector<double> v;
    std::vector<double> i_exc;
    std::vector<double> i_inh;
    std::vector<int> refractory;

    explicit DeployPopulation(std::size_t n, double v_rest) : v(n, v_rest), i_exc(n, 0.0), i_inh(n, 0.0), refractory(n, 0) {}
};

/// Adds the contribution of presynaptic spikes `pre` (0/1 per source) to the
/// target currents.
inline void deliver(const Projection& pr, std::span<const std::uint8_t> pre, DeployPopulation& post)
{
    const Layer& g = pr.layout;
    if (g.kind == LayerKind::dense) {
        for (int i = 0; i < g.inputs; ++i) {
            if (!pre[static_cast<std::size_t>(i)]) continue;
            const std::size_t base = static_cast<std::size_t>(i) * g.outputs;
            for (int j = 0; j < g.outputs; ++j) {
                post.i_exc[static_cast<std::size_t>(j)] += pr.excitatory[base + j];
                post.i_inh[static_cast<std::size_t>(j)] += pr.inhibitory[base + j];
            }
        }
        return;
    }
    const ConvGeometry& c = g.conv;
    const int os = c.out_side();
    for (int ch = 0; ch < c.channels; ++ch)
        for (int oy = 0; oy < os; ++oy)
            for (int ox = 0; ox < os; ++ox) {
                double e = 0.0, in = 0.0;
                for (int ky = 0; ky < c.kernel; ++ky)
                    for (int kx = 0; kx < c.kernel; ++kx) {
                        const std::size_t pix = static_cast<std::size_t>(oy * c.stride + ky) * c.in_side + ox * c.stride + kx;
                        if (!pre[pix]) continue;
                        const std::size_t k = static_cast<std::size_t>(ch * c.taps() + ky * c.kernel + kx);
                        e += pr.excitatory[k];
                        in += pr.inhibitory[k];
                    }
                const auto j = static_cast<std::size_t>((ch * os + oy) * os + ox);
                post.i_exc[j] += e;
                post.i_inh[j] += in;
            }
}

struct DeployResult {
    std::vector<std::uint32_t> class_counts;
    LayerSpikes spikes;
    std::vector<std::vector<int>> first_spike_step; // per layer, per neuron, -1 if silent
};

struct DeployTraceHook {
    // Optional per-step observer: (step, layer, population after update).
    std::function<void(int, std::size_t, const DeployPopulation&, std::span<const std::uint8_t>)> on_step;
};

/// Runs `raster` through the deployed network. The raster acts as a spike
/// source population; every projection, including the input one, delivers
/// after `delay` ms.
inline DeployResult deploy_forward(const SpikeRaster& raster, const DeployImage& image, const LifParamsDeploy& p,
                                   const DeployTraceHook* hook = nullptr)
{
    p.validate();
    if (image.projections.empty()) throw ContractError("deployment image is empty");
    const auto& first = image.projections.front().layout;
    if (static_cast<std::size_t>(first.inputs) != raster.frame_pixels())
        throw ContractError("raster does not match deployed input size");
    const std::size_t n_layers = image.projections.size();
    const int T = raster.timesteps();
    const double decay_m = std::exp(-p.dt / p.tau_m);
    const double decay_e = std::exp(-p.dt / p.tau_syn_e);
    const double decay_i = std::exp(-p.dt / p.tau_syn_i);
    const int refrac_steps = p.refrac_steps();

    std::vector<DeployPopulation> pops;
    // history[l] holds the spike vectors of source l (0 = input, l = layer l-1 output)
    std::vector<std::deque<std::vector<std::uint8_t>>> history(n_layers);
    DeployResult res;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto n = static_cast<std::size_t>(image.projections[l].layout.outputs);
        pops.emplace_back(n, p.v_rest);
        res.first_spike_step.emplace_back(n, -1);
    }
    const auto n_out = static_cast<std::size_t>(image.projections.back().layout.outputs);
    res.class_counts.assign(n_out, 0);

    std::vector<std::uint8_t> input(raster.frame_pixels());
    for (int t = 0; t < T; ++t) {
        std::copy(raster.frame(t), raster.frame(t) + raster.frame_pixels(), input.begin());
        std::vector<std::uint8_t> source = input;
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Projection& pr = image.projections[l];
            auto& pop = pops[l];
            auto& hist = history[l];
            hist.push_back(source);
            const auto d = static_cast<std::size_t>(pr.delay_steps);
            const bool arrived = hist.size() > d;

            for (std::size_t j = 0; j < pop.v.size(); ++j) {
                pop.i_exc[j] *= decay_e;
                pop.i_inh[j] *= decay_i;
            }
            if (arrived) {
                deliver(pr, hist.front(), pop);
                hist.pop_front();
            }

            std::vector<std::uint8_t> spikes(pop.v.size(), 0);
            for (std::size_t j = 0; j < pop.v.size(); ++j) {
                if (pop.refractory[j] > 0) {
                    --pop.refractory[j];
                    pop.v[j] = p.v_reset;
                    continue;
                }
                pop.v[j] = p.v_rest + (pop.v[j] - p.v_rest) * decay_m + (pop.i_exc[j] - pop.i_inh[j]);
                if (pop.v[j] >= p.v_thresh) {
                    spikes[j] = 1;
                    pop.v[j] = p.v_reset;
                    pop.refractory[j] = refrac_steps;
                    if (res.first_spike_step[l][j] < 0) res.first_spike_step[l][j] = t;
                    if (l < 3) ++res.spikes.counts[l];
                    if (l + 1 == n_layers) ++res.class_counts[j];
                }
            }
            if (hook && hook->on_step) hook->on_step(t, l, pop, spikes);
            source = std::move(spikes);
        }
    }
    return res;
}

} // namespace spikesign
