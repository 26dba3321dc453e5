#pragma once

// Procedural 28x28 grayscale "hand shape" glyphs in the layout of SL-MNIST
// rows. Used as a stand-in dataset where the real images are not available.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "spikesign/dvs_sim.hpp"

namespace spikesign {

inline constexpr int kGlyphShapes = 8;

namespace detail {

inline double glyph_uniform(std::mt19937_64& rng, double lo, double hi)
{
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Membership test in the glyph's own frame, coordinates in [-1, 1].
inline bool glyph_inside(int shape, double u, double v)
{
    const double r = std::hypot(u, v);
    switch (shape % kGlyphShapes) {
    case 0: return r < 0.75;                                   // disc
    case 1: return r < 0.8 && r > 0.45;                        // ring
    case 2: return (std::abs(u) < 0.22 && std::abs(v) < 0.85) ||
                   (std::abs(v) < 0.22 && std::abs(u) < 0.85); // plus
    case 3: return v < 0.7 && v > -0.8 && std::abs(u) < (v + 0.8) * 0.55; // triangle
    case 4: return std::abs(u) < 0.25 && std::abs(v) < 0.9;     // vertical bar
    case 5: return (std::abs(u) < 0.2 && std::abs(v) < 0.85) || (v > 0.5 && v < 0.85 && u > -0.2 && u < 0.7); // L
    case 6: return std::abs(u) < 0.8 && std::abs(v) < 0.8 && !(std::abs(u) < 0.4 && std::abs(v) < 0.4); // square frame
    default: return std::abs(u) + std::abs(v) < 0.85;           // diamond
    }
}

} // namespace detail

/// One 28x28 glyph of class `shape` with random scale, offset, rotation,
/// contrast and static foreground texture on a dark background, drawn from `rng`.
inline GrayImage make_glyph(int shape, std::mt19937_64& rng)
{
    GrayImage img(28, 28);
    const double scale = detail::glyph_uniform(rng, 8.0, 11.0);
    const double cx = 13.5 + detail::glyph_uniform(rng, -3.0, 3.0);
    const double cy = 13.5 + detail::glyph_uniform(rng, -3.0, 3.0);
    const double angle = detail::glyph_uniform(rng, -0.3, 0.3);
    const double fg = detail::glyph_uniform(rng, 150.0, 230.0);
    const double bg = detail::glyph_uniform(rng, 0.0, 3.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            const double dx = (x - cx) / scale, dy = (y - cy) / scale;
            const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
            const double texture = detail::glyph_uniform(rng, -6.0, 6.0);
            img.at(x, y) = detail::glyph_inside(shape, u, v) ? std::clamp(fg + texture, 0.0, 255.0) : bg;
        }
    return img;
}

/// Rounds pixels to integers as they would appear in an SL-MNIST CSV row.
inline GrayImage quantize_pixels(GrayImage img)
{
    for (double& p : img.pixels) p = std::round(p);
    return img;
}

} // namespace spikesign
