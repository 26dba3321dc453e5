#pragma once

// Spiking proto-object saliency: a bank of curved von Mises filters, opposing
// orientation pairs pooled into one response, per-pixel LIF integration and
// peak ROI selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"
#include "spikesign/lif.hpp"
#include "spikesign/roi.hpp"

namespace spikesign {

/// Modified Bessel function of the first kind, order zero.
///
/// Evaluated from the integral representation I0(x) = 1/pi * int_0^pi exp(x cos t) dt
/// with the trapezoid rule, which converges geometrically for this periodic
/// integrand. The integrand is scaled by exp(-|x|) to stay in range.
inline double bessel_i0(double x)
{
    const double a = std::abs(x);
    if (a > 700.0) return std::numeric_limits<double>::infinity();
    const int intervals = 32 + static_cast<int>(std::ceil(a));
    const double h = std::numbers::pi / intervals;
    double sum = 0.5 * (1.0 + std::exp(-2.0 * a));
    for (int j = 1; j < intervals; ++j) sum += std::exp(a * (std::cos(j * h) - 1.0));
    return std::exp(a) * sum / intervals;
}

struct VmKernel {
    double theta = 0.0;
    double radius = 0.0; // ring radius R0 in pixels
    double rho = 0.0;
    int size = 0;
    std::vector<double> weights; // size x size, row-major, unit L1 norm

    int center() const { return (size - 1) / 2; }
    double at(int x, int y) const { return weights[static_cast<std::size_t>(y) * size + x]; }
};

/// Unnormalised filter value at offset (dx, dy) from the kernel centre, with
/// dy growing downwards. The angular term vanishes at the origin where the
/// direction is undefined.
inline double vm_value(double dx, double dy, double theta, double radius, double rho)
{
    const double dist = std::hypot(dx, dy);
    const double angular = dist == 0.0 ? 0.0 : std::cos(std::atan2(-dy, dx) - theta);
    return std::exp(rho * radius * angular) / bessel_i0(dist - radius);
}

inline VmKernel vm_kernel(double theta, double radius, double rho, int size)
{
    if (size <= 0 || size % 2 == 0) throw ParameterError("kernel size must be odd and positive");
    if (!(radius >= 0.0) || !(radius < size / 2.0)) throw ParameterError("ring radius must satisfy 0 <= R0 < size/2");
    if (!(rho > 0.0)) throw ParameterError("concentration rho must be positive");
    VmKernel k{theta, radius, rho, size, std::vector<double>(static_cast<std::size_t>(size) * size)};
    const int c = k.center();
    double l1 = 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double v = vm_value(x - c, y - c, theta, radius, rho);
            k.weights[static_cast<std::size_t>(y) * size + x] = v;
            l1 += std::abs(v);
        }
    }
    for (double& v : k.weights) v /= l1;
    return k;
}

struct FilterBankParams {
    int orientations = 8;
    std::vector<double> radii{10.0};
    double rho = 0.1;
    int size = 0; // 0 selects 4 * max(radius) + 1
};

/// Kernels at orientations 2*pi*i/N for every radius. Every orientation i is
/// paired with its opposite i + N/2, so each kernel appears once as the
/// anchor of a pair and once as the displaced partner.
class FilterBank {
public:
    explicit FilterBank(FilterBankParams params = {}) : params_(std::move(params))
    {
        if (params_.orientations < 2 || params_.orientations % 2 != 0)
            throw ParameterError("orientation count must be even and >= 2");
        if (params_.radii.empty()) throw ParameterError("filter bank needs at least one radius");
        const double r_max = *std::max_element(params_.radii.begin(), params_.radii.end());
        if (params_.size == 0) params_.size = 4 * static_cast<int>(std::ceil(r_max)) + 1;
        for (double r : params_.radii)
            for (int i = 0; i < params_.orientations; ++i)
                kernels_.push_back(vm_kernel(orientation(i), r, params_.rho, params_.size));
        build_pooled(r_max);
    }

    const FilterBankParams& params() const noexcept { return params_; }
    const std::vector<VmKernel>& kernels() const noexcept { return kernels_; }
    int orientations() const noexcept { return params_.orientations; }

    double orientation(int i) const { return 2.0 * std::numbers::pi * i / params_.orientations; }

    const VmKernel& kernel(std::size_t scale, int orientation_index) const
    {
        return kernels_[scale * params_.orientations + static_cast<std::size_t>(orientation_index)];
    }

    /// Integer displacement of the opposing kernel for orientation theta:
    /// 2*R0 along the direction theta (image rows grow downwards).
    static std::pair<int, int> pair_displacement(double theta, double radius)
    {
        return {static_cast<int>(std::lround(2.0 * radius * std::cos(theta))),
                static_cast<int>(std::lround(-2.0 * radius * std::sin(theta)))};
    }

    /// All pairs folded into one correlation kernel (the model is linear up to
    /// the LIF stage). Indexed by offset m in [-half, half]^2.
    int pooled_half() const noexcept { return pooled_half_; }
    const std::vector<double>& pooled() const noexcept { return pooled_; }

private:
    void build_pooled(double r_max)
    {
        const int c = (params_.size - 1) / 2;
        pooled_half_ = c + static_cast<int>(std::ceil(2.0 * r_max));
        const int side = 2 * pooled_half_ + 1;
        pooled_.assign(static_cast<std::size_t>(side) * side, 0.0);
        auto add = [&](const VmKernel& k, int shift_x, int shift_y) {
            for (int y = 0; y < k.size; ++y)
                for (int x = 0; x < k.size; ++x) {
                    const int mx = x - c + shift_x + pooled_half_;
                    const int my = y - c + shift_y + pooled_half_;
                    pooled_[static_cast<std::size_t>(my) * side + mx] += k.at(x, y);
                }
        };
        const int n = params_.orientations;
        for (std::size_t s = 0; s < params_.radii.size(); ++s) {
            for (int i = 0; i < n; ++i) {
                add(kernel(s, i), 0, 0);
                const auto [dx, dy] = pair_displacement(orientation(i), params_.radii[s]);
                add(kernel(s, (i + n / 2) % n), dx, dy);
            }
        }
    }

    FilterBankParams params_;
    std::vector<VmKernel> kernels_;
    std::vector<double> pooled_;
    int pooled_half_ = 0;
};

/// Pooled opposing-pair response: for each orientation, corr(frame, VM_theta)(p) plus
/// corr(frame, VM_theta+pi)(p + D) where D is the pair displacement. Zero
/// padding, output the size of the frame. Scatters from non-zero pixels only.
inline std::vector<double> saliency_response(const EventFrame& frame, const FilterBank& bank)
{
    const int w = frame.width;
    const int h = frame.height;
    const int half = bank.pooled_half();
    const int side = 2 * half + 1;
    const auto& kernel = bank.pooled();
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int qy = 0; qy < h; ++qy) {
        for (int qx = 0; qx < w; ++qx) {
            const double f = frame.at(qx, qy);
            if (f == 0.0) continue;
            // out(p) += f(q) * K(q - p) for every p with |q - p| <= half.
            const int y_lo = std::max(0, qy - half), y_hi = std::min(h - 1, qy + half);
            const int x_lo = std::max(0, qx - half), x_hi = std::min(w - 1, qx + half);
            for (int py = y_lo; py <= y_hi; ++py) {
                const double* krow = kernel.data() + static_cast<std::size_t>(qy - py + half) * side;
                double* orow = out.data() + static_cast<std::size_t>(py) * w;
                for (int px = x_lo; px <= x_hi; ++px) orow[px] += f * krow[qx - px + half];
            }
        }
    }
    return out;
}

struct SaliencyParams {
    LifParamsTrain lif{};
    int steps = 35;
    double gain = 1.0; // current injected at the peak response
};

struct SaliencyMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> spike_counts;

    std::uint32_t at(int x, int y) const { return spike_counts[static_cast<std::size_t>(y) * width + x]; }
};

/// Drives one LIF neuron per pixel with the response normalised to the frame
/// peak and scaled by `gain`, for `steps` timesteps. With gain 1 the peak pixel
/// fires on every step and every weaker pixel strictly less often.
inline SaliencyMap compute_saliency(const EventFrame& frame, const FilterBank& bank, const SaliencyParams& params = {})
{
    params.lif.validate();
    if (params.steps <= 0) throw ParameterError("saliency steps must be positive");
    SaliencyMap map{frame.width, frame.height, std::vector<std::uint32_t>(frame.counts.size(), 0)};
    const auto response = saliency_response(frame, bank);
    const double peak = response.empty() ? 0.0 : *std::max_element(response.begin(), response.end());
    if (!(peak > 0.0)) return map;
    for (std::size_t i = 0; i < response.size(); ++i) {
        const double current = params.gain * (response[i] / peak);
        double u = 0.0;
        std::uint32_t spikes = 0;
        for (int t = 0; t < params.steps; ++t) {
            const auto step = lif_step(u, current, params.lif);
            u = step.membrane;
            spikes += step.spike ? 1U : 0U;
        }
        map.spike_counts[i] = spikes;
    }
    return map;
}

/// Row-major argmax; the first maximum wins.
template <typename T>
std::pair<int, int> argmax_xy(const std::vector<T>& values, int width)
{
    const auto it = std::max_element(values.begin(), values.end());
    const auto idx = static_cast<int>(std::distance(values.begin(), it));
    return {idx % width, idx / width};
}

inline Roi extract_roi(const SaliencyMap& map, int side, RoiMode mode)
{
    if (side > std::min(map.width, map.height))
        throw ParameterError("ROI side " + std::to_string(side) + " exceeds saliency map");
    if (mode == RoiMode::center_crop) return make_roi(map.width / 2, map.height / 2, side, map.width, map.height);
    const auto [x, y] = argmax_xy(map.spike_counts, map.width);
    return make_roi(x, y, side, map.width, map.height);
}

/// Binary PGM of the spike counts, scaled so the maximum maps to 255.
inline void write_pgm(const std::filesystem::path& path, const SaliencyMap& map)
{
    std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
    const std::uint32_t peak = map.spike_counts.empty()
                                   ? 0
                                   : *std::max_element(map.spike_counts.begin(), map.spike_counts.end());
    for (auto c : map.spike_counts)
        out.push_back(static_cast<char>(peak == 0 ? 0 : (c * 255U + peak / 2) / peak));
    detail::write_file_atomic(path, out);
}

} // namespace spikesign
