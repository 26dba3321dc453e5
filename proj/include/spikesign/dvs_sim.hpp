#pragma once

// Synthetic event camera: random-walk motion over a static grayscale image
// followed by a log-intensity contrast-threshold pixel model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spikesign/errors.hpp"
#include "spikesign/event.hpp"

namespace spikesign {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // row-major intensities, nominally 0..255

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct DvsConfig {
    double contrast_threshold_pos = 0.15;
    double contrast_threshold_neg = 0.15;
    std::uint64_t frame_dt_us = 1000;
    int n_frames = 36; // T + 1 so the stream spans a 35-step raster window
    int upsample_factor = 4;
    std::uint64_t seed = 42;
    double epsilon_intensity = 1.0;

    void validate() const
    {
        if (!(contrast_threshold_pos > 0) || !(contrast_threshold_neg > 0))
            throw ParameterError("contrast thresholds must be positive");
        if (n_frames < 1) throw ParameterError("n_frames must be at least 1");
        if (upsample_factor < 1) throw ParameterError("upsample_factor must be at least 1");
        if (frame_dt_us == 0) throw ParameterError("frame_dt_us must be positive");
        if (!(epsilon_intensity > 0)) throw ParameterError("epsilon_intensity must be positive");
    }
};

inline GrayImage upsample_nearest(const GrayImage& image, int factor)
{
    GrayImage out(image.width * factor, image.height * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = image.at(x / factor, y / factor);
    return out;
}

/// Shift by (dx, dy); pixels entering from outside are black.
inline GrayImage translate(const GrayImage& image, int dx, int dy)
{
    GrayImage out(image.width, image.height, 0.0);
    for (int y = 0; y < image.height; ++y) {
        const int sy = y - dy;
        if (sy < 0 || sy >= image.height) continue;
        for (int x = 0; x < image.width; ++x) {
            const int sx = x - dx;
            if (sx >= 0 && sx < image.width) out.at(x, y) = image.at(sx, sy);
        }
    }
    return out;
}

/// Frame 0 is the upsampled image; each later frame is the previous one moved
/// by a step drawn uniformly from {-1,0,+1}^2.
inline std::vector<GrayImage> random_walk_sequence(const GrayImage& image, const DvsConfig& cfg)
{
    cfg.validate();
    if (image.empty()) throw ParameterError("image is empty");
    std::mt19937_64 rng(cfg.seed);
    std::vector<GrayImage> frames;
    frames.reserve(static_cast<std::size_t>(cfg.n_frames));
    frames.push_back(upsample_nearest(image, cfg.upsample_factor));
    for (int k = 1; k < cfg.n_frames; ++k) {
        // Modulo keeps the draw identical across standard library implementations.
        const int dx = static_cast<int>(rng() % 3) - 1;
        const int dy = static_cast<int>(rng() % 3) - 1;
        frames.push_back(translate(frames.back(), dx, dy));
    }
    return frames;
}

/// Contrast-threshold event generation. Each pixel keeps a log-intensity
/// reference; crossings between consecutive frames are spread evenly over
/// (t_prev, t_frame].
inline EventStream emit_events(const std::vector<GrayImage>& frames, const DvsConfig& cfg)
{
    cfg.validate();
    if (frames.size() < 2) throw ParameterError("emit_events needs at least two frames");
    const int w = frames.front().width;
    const int h = frames.front().height;
    for (const auto& f : frames)
        if (f.width != w || f.height != h) throw ContractError("frames differ in size");

    std::vector<double> reference(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < reference.size(); ++i)
        reference[i] = std::log(frames[0].pixels[i] + cfg.epsilon_intensity);

    std::vector<Event> events;
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const std::uint64_t t_prev = (k - 1) * cfg.frame_dt_us;
        const std::size_t first_new = events.size();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double diff = std::log(frames[k].pixels[i] + cfg.epsilon_intensity) - reference[i];
                const bool positive = diff > 0;
                const double threshold = positive ? cfg.contrast_threshold_pos : cfg.contrast_threshold_neg;
                const auto n = static_cast<std::uint64_t>(std::floor(std::abs(diff) / threshold));
                if (n == 0) continue;
                for (std::uint64_t j = 1; j <= n; ++j) {
                    events.push_back(Event{t_prev + j * cfg.frame_dt_us / n, static_cast<std::uint16_t>(x),
                                           static_cast<std::uint16_t>(y),
                                           static_cast<std::int8_t>(positive ? 1 : -1)});
                }
                reference[i] += static_cast<double>(n) * threshold * (positive ? 1.0 : -1.0);
            }
        }
        std::stable_sort(events.begin() + static_cast<std::ptrdiff_t>(first_new), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }
    return EventStream(w, h, std::move(events));
}

inline EventStream convert_image_to_events(const GrayImage& image, const DvsConfig& cfg)
{
    if (cfg.n_frames < 2) {
        const auto frames = random_walk_sequence(image, cfg);
        return EventStream(frames.front().width, frames.front().height, {});
    }
    return emit_events(random_walk_sequence(image, cfg), cfg);
}

} // namespace spikesign
