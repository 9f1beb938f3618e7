#pragma once

#include <string>

#include "gsmooth/tensor.hpp"

namespace gsmooth {

// Planar (channel-major) float image; pixel values live in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  ArrayF pixels;  // layout [C,H,W]

  float& at(int c, int y, int x) {
    return pixels[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  Eigen::Index size() const { return pixels.size(); }
};

inline Image make_image(int height, int width, int channels,
                        float fill = 0.0f) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
    throw ShapeError("image dims must be positive with 1 or 3 channels");
  Image im;
  im.height = height;
  im.width = width;
  im.channels = channels;
  im.pixels = ArrayF::Constant(
      static_cast<Eigen::Index>(channels) * height * width, fill);
  return im;
}

inline void validate_image(const Image& im, const std::string& where) {
  if (im.height <= 0 || im.width <= 0 ||
      (im.channels != 1 && im.channels != 3))
    throw ShapeError(where + ": bad image dims");
  if (im.pixels.size() !=
      static_cast<Eigen::Index>(im.channels) * im.height * im.width)
    throw ShapeError(where + ": pixel buffer size mismatch");
}

inline void clamp01(Image& im) {
  im.pixels = im.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
}

}  // namespace gsmooth
