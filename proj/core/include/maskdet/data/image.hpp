#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace maskdet {

/// H x W x 3 interleaved RGB image quantised to 8 bits. at() exposes the
/// channel values as reals in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return pixels_.empty(); }

  double at(int y, int x, int c) const noexcept {
    return pixels_[index(y, x, c)] * (1.0 / 255.0);
  }
  std::uint8_t raw(int y, int x, int c) const noexcept { return pixels_[index(y, x, c)]; }
  void set(int y, int x, int c, double value) noexcept;
  void set_raw(int y, int x, int c, std::uint8_t v) noexcept { pixels_[index(y, x, c)] = v; }

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& bytes() noexcept { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace maskdet
