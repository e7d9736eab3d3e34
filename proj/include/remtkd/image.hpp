#pragma once

#include <cstdint>
#include <vector>

#include "remtkd/common.hpp"
#include "remtkd/tensor.hpp"

namespace remtkd {

// H×W×3 image, interleaved, values in [0,1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageTensor() = default;
  ImageTensor(int h, int w, float fill = 0.f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const ImageTensor&) const = default;
};

// H×W binary map; used for tamper masks and edge labels.
struct MaskMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  MaskMap() = default;
  MaskMap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }
  double area_fraction() const { return values.empty() ? 0.0 : double(count()) / values.size(); }
  bool empty() const { return count() == 0; }
  bool operator==(const MaskMap&) const = default;
};

struct EdgeMap {
  MaskMap map;
  int band_width = 0;
};

// Network input layout {3,H,W}.
template <class T>
Tensor<T> to_chw(const ImageTensor& img) {
  Tensor<T> t({3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = static_cast<T>(img.at(y, x, c));
  return t;
}

template <class T>
std::vector<T> mask_to_vector(const MaskMap& m) {
  return std::vector<T>(m.values.begin(), m.values.end());
}

}  // namespace remtkd
