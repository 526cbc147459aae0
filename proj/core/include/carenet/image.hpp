#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace carenet {

// Minimal deterministic PNG writer (8-bit grayscale or RGB, stored-block
// deflate). No external compression dependency; identical input bytes yield
// identical files.

void write_png_gray(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);  // 3 bytes per pixel

// Values in [0,1] mapped through a blue-red heat colormap.
void write_png_heat(const std::filesystem::path& path, int width, int height,
                    const std::vector<double>& values);

}  // namespace carenet
