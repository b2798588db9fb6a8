#pragma once

#include <cstdint>
#include <vector>

namespace mvdepth {

// Per-pixel depth in meters with a validity mask. Values must be positive
// and finite wherever valid.
struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    std::vector<uint8_t> valid;

    DepthMap() = default;
    DepthMap(int h, int w)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0),
          valid(static_cast<std::size_t>(h) * w, 0) {}

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    bool is_valid(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x]; }
};

struct ConfidenceMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // each in [0,1]

    ConfidenceMap() = default;
    ConfidenceMap(int h, int w)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0) {}
};

// Nearest-neighbor upsampling of a raw map; each output pixel copies its
// floor-divided source pixel.
std::vector<double> upsample_nearest_map(const std::vector<double>& src, int h, int w, int factor);
std::vector<uint8_t> upsample_nearest_mask(const std::vector<uint8_t>& src, int h, int w,
                                           int factor);

}  // namespace mvdepth
