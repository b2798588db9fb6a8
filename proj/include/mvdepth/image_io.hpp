#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mvdepth {

// Float image, row 0 at the top, channel-major [C,H,W], values are doubles
// that round-trip exactly through the 32-bit floats PFM stores.
struct FloatImage {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FloatImage() = default;
    FloatImage(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Snap a double to the nearest float32 value; files store float32, so
// generated samples are snapped up front to make write->load an identity.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// PFM: header "Pf" (1 channel) or "PF" (3 channels), dims, scale -1.0 for
// little-endian payload, rows stored bottom-up.
void write_pfm(const std::string& path, const FloatImage& img);
FloatImage read_pfm(const std::string& path);  // throws with file name + byte offset

// 8-bit binary PGM preview.
void write_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w);

}  // namespace mvdepth
