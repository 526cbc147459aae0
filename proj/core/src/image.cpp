#include "carenet/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "carenet/error.hpp"

namespace carenet {

namespace {

// CRC-32 (PNG chunk checksums)
std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0xFFFFFFFF) {
    static std::uint32_t table[256];
    static bool built = false;
    if (!built) {
        for (std::uint32_t n = 0; n < 256; ++n) {
            std::uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320 ^ (c >> 1) : c >> 1;
            table[n] = c;
        }
        built = true;
    }
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFF;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32_be(out, crc32(body.data(), body.size()));
}

// zlib stream with stored (uncompressed) deflate blocks.
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
    std::vector<std::uint8_t> out;
    out.push_back(0x78);  // CMF: deflate, 32K window
    out.push_back(0x01);  // FLG with valid check bits
    std::size_t pos = 0;
    const std::size_t max_block = 65535;
    do {
        const std::size_t len = std::min(max_block, raw.size() - pos);
        const bool final = pos + len == raw.size();
        out.push_back(final ? 1 : 0);
        out.push_back(static_cast<std::uint8_t>(len & 0xFF));
        out.push_back(static_cast<std::uint8_t>(len >> 8));
        out.push_back(static_cast<std::uint8_t>(~len & 0xFF));
        out.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
        out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                   raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    } while (pos < raw.size());
    put_u32_be(out, adler32(raw.data(), raw.size()));
    return out;
}

void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& pixels, int channels) {
    require(width > 0 && height > 0, ErrorKind::Input, "image dimensions must be positive");
    require(pixels.size() == static_cast<std::size_t>(width) * height * channels, ErrorKind::Input,
            "pixel buffer does not match image dimensions");

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);            // grayscale / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    // Scanlines with filter byte 0 (none).
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * channels));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(y) * width * channels;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * channels);
    }
    put_chunk(out, "IDAT", zlib_stored(raw));
    put_chunk(out, "IEND", {});

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) raise(ErrorKind::Io, "cannot write " + path.string());
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) raise(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
    write_png(path, width, height, pixels, 1);
}

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb) {
    write_png(path, width, height, rgb, 3);
}

void write_png_heat(const std::filesystem::path& path, int width, int height,
                    const std::vector<double>& values) {
    require(values.size() == static_cast<std::size_t>(width) * height, ErrorKind::Input,
            "heatmap buffer does not match image dimensions");
    std::vector<std::uint8_t> rgb(values.size() * 3);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        // cold blue -> warm red ramp
        rgb[3 * i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
        rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(255.0 * (v < 0.5 ? 2.0 * v * v : 1.0 - (1.0 - v) * (1.0 - v) * 2.0)));
        rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - v)));
    }
    write_png_rgb(path, width, height, rgb);
}

}  // namespace carenet
