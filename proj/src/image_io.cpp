#include "mvdepth/image_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mvdepth/maps.hpp"

namespace mvdepth {

std::vector<double> upsample_nearest_map(const std::vector<double>& src, int h, int w,
                                         int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_nearest_map: factor must be >= 1");
    const int oh = h * factor, ow = w * factor;
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            out[static_cast<std::size_t>(y) * ow + x] =
                src[static_cast<std::size_t>(y / factor) * w + x / factor];
        }
    return out;
}

std::vector<uint8_t> upsample_nearest_mask(const std::vector<uint8_t>& src, int h, int w,
                                           int factor) {
    const int oh = h * factor, ow = w * factor;
    std::vector<uint8_t> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            out[static_cast<std::size_t>(y) * ow + x] =
                src[static_cast<std::size_t>(y / factor) * w + x / factor];
        }
    return out;
}

void write_pfm(const std::string& path, const FloatImage& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw std::invalid_argument("write_pfm: PFM supports 1 or 3 channels");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pfm: cannot open '" + path + "'");
    f << (img.channels == 1 ? "Pf" : "PF") << '\n'
      << img.width << ' ' << img.height << '\n'
      << "-1.0" << '\n';  // negative scale: little-endian
    // rows bottom-up, channels interleaved per pixel
    std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<float>(img.at(c, y, x));
            }
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("write_pfm: write failed for '" + path + "'");
}

FloatImage read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pfm: cannot open '" + path + "'");

    auto fail = [&](const std::string& what) -> std::runtime_error {
        const auto off = f.tellg();
        return std::runtime_error("read_pfm: " + what + " in '" + path + "' at byte offset " +
                                  std::to_string(off == std::streampos(-1)
                                                     ? static_cast<long long>(-1)
                                                     : static_cast<long long>(off)));
    };

    std::string magic;
    f >> magic;
    if (magic != "Pf" && magic != "PF") throw fail("bad magic '" + magic + "'");
    const int channels = magic == "Pf" ? 1 : 3;
    int width = 0, height = 0;
    double scl = 0.0;
    if (!(f >> width >> height)) throw fail("missing dimensions");
    if (width < 1 || height < 1) throw fail("non-positive dimensions");
    if (!(f >> scl) || scl == 0.0) throw fail("missing or zero scale");
    f.get();  // single whitespace byte after the scale line

    const bool little_endian = scl < 0.0;
    if (!little_endian) throw fail("big-endian PFM not supported");

    FloatImage img(channels, height, width);
    std::vector<float> row(static_cast<std::size_t>(width) * channels);
    for (int y = height - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (f.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float))) {
            throw fail("truncated pixel data (row " + std::to_string(y) + ")");
        }
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                img.at(c, y, x) =
                    static_cast<double>(row[static_cast<std::size_t>(x) * channels + c]);
            }
    }
    return img;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w) {
    if (static_cast<std::size_t>(h) * w != gray.size()) {
        throw std::invalid_argument("write_pgm: size mismatch");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pgm: cannot open '" + path + "'");
    f << "P5\n" << w << ' ' << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!f) throw std::runtime_error("write_pgm: write failed for '" + path + "'");
}

}  // namespace mvdepth
