#pragma once

#include <algorithm>
#include <string>

#include "spikesign/errors.hpp"

namespace spikesign {

enum class RoiMode { sva, center_crop };

inline std::string to_string(RoiMode mode) { return mode == RoiMode::sva ? "sva" : "center_crop"; }

inline RoiMode roi_mode_from_string(const std::string& s)
{
    if (s == "sva") return RoiMode::sva;
    if (s == "center_crop") return RoiMode::center_crop;
    throw ParameterError("unknown ROI mode '" + s + "' (expected sva or center_crop)");
}

/// Square crop window. center_x/center_y are the requested centre; left/top are
/// clamped so the window lies inside the sensor.
struct Roi {
    int center_x = 0;
    int center_y = 0;
    int side = 0;
    int left = 0;
    int top = 0;

    bool contains(double x, double y) const
    {
        return x >= left && x < left + side && y >= top && y < top + side;
    }

    friend bool operator==(const Roi&, const Roi&) = default;
};

inline Roi make_roi(int center_x, int center_y, int side, int sensor_width, int sensor_height)
{
    if (side <= 0) throw ParameterError("invalid ROI: side must be positive");
    if (side > sensor_width || side > sensor_height)
        throw ParameterError("invalid ROI: side " + std::to_string(side) + " exceeds sensor " +
                             std::to_string(sensor_width) + "x" + std::to_string(sensor_height));
    Roi roi;
    roi.center_x = center_x;
    roi.center_y = center_y;
    roi.side = side;
    roi.left = std::clamp(center_x - side / 2, 0, sensor_width - side);
    roi.top = std::clamp(center_y - side / 2, 0, sensor_height - side);
    return roi;
}

} // namespace spikesign
