#include "wscl/data/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace wscl {

namespace {

cv::Mat to_mat(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("image: unsupported channel count " + std::to_string(image.channels));
  }
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(static_cast<int>(image.height), static_cast<int>(image.width), type);
  const std::size_t c = image.channels;
  for (std::size_t y = 0; y < image.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        // OpenCV stores BGR
        row[x * c + k] = image.at(y, x, c == 3 ? 2 - k : k);
      }
    }
  }
  return m;
}

Image from_mat(const cv::Mat& m) {
  const std::size_t c = static_cast<std::size_t>(m.channels());
  Image out(static_cast<std::size_t>(m.cols), static_cast<std::size_t>(m.rows), c);
  for (std::size_t y = 0; y < out.height; ++y) {
    const auto* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, c == 3 ? 2 - k : k) = row[x * c + k];
    }
  }
  return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path, bool grayscale) {
  const cv::Mat m = cv::imread(path.string(), grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  return from_mat(m);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_mat(image));
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  if (quality < 0 || quality > 100) throw std::invalid_argument("jpeg quality out of range");
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", to_mat(image), buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw IoError("jpeg encode failed");
  }
  return buf;
}

Image decode_image(const std::vector<std::uint8_t>& bytes, bool grayscale) {
  const cv::Mat m = cv::imdecode(bytes, grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("image decode failed");
  return from_mat(m);
}

}  // namespace wscl
