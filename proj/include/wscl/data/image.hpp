#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace wscl {

// Thrown for unreadable/unwritable files and undecodable images.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit image, row-major, channels interleaved (RGB order for colour).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

// PNG/JPEG decode. Colour files come back as 3-channel RGB; `grayscale`
// forces a single channel.
Image read_image(const std::filesystem::path& path, bool grayscale = false);
void write_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
Image decode_image(const std::vector<std::uint8_t>& bytes, bool grayscale = false);

}  // namespace wscl
