#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bide/common.hpp"
#include "bide/rng.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Pixel buffers
// ---------------------------------------------------------------------------

/// Row-major RGB, 8-bit channels.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  bool valid() const {
    return width > 0 && height > 0 &&
           pixels.size() == static_cast<std::size_t>(width) * height * 3;
  }
};

/// Square model input, values in [0,1]; the letterbox padding is exactly 0.
struct TensorImage {
  int side = 0;
  std::vector<double> data;  // side * side * 3

  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * side + x) * 3 + c];
  }
};

// ---------------------------------------------------------------------------
// Letterbox
// ---------------------------------------------------------------------------

/// Scales by side/max(width,height) with bilinear interpolation, centers the
/// result on a black square canvas. Aspect ratio is preserved to within one
/// pixel of rounding.
inline TensorImage letterbox(const ImageBuffer& img, int side) {
  require(side >= 1, "letterbox side must be >= 1");
  require(img.valid(), "letterbox: zero-sized or inconsistent image");

  const double scale = static_cast<double>(side) / std::max(img.width, img.height);
  const int out_w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  const int out_h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  const int x0 = (side - out_w) / 2;
  const int y0 = (side - out_h) / 2;

  TensorImage out;
  out.side = side;
  out.data.assign(static_cast<std::size_t>(side) * side * 3, 0.0);

  const double sx_scale = static_cast<double>(img.width) / out_w;
  const double sy_scale = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const int yi = static_cast<int>(sy);
    const int yj = std::min(yi + 1, img.height - 1);
    const double ty = sy - yi;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const int xi = static_cast<int>(sx);
      const int xj = std::min(xi + 1, img.width - 1);
      const double tx = sx - xi;
      for (int c = 0; c < 3; ++c) {
        const auto px = [&](int yy, int xx) {
          return static_cast<double>(
              img.pixels[(static_cast<std::size_t>(yy) * img.width + xx) * 3 + c]);
        };
        const double top = px(yi, xi) * (1.0 - tx) + px(yi, xj) * tx;
        const double bot = px(yj, xi) * (1.0 - tx) + px(yj, xj) * tx;
        // clamp: rounding may overshoot [0,1] by an ulp
        out.data[(static_cast<std::size_t>(y0 + y) * side + (x0 + x)) * 3 + c] =
            std::clamp((top * (1.0 - ty) + bot * ty) / 255.0, 0.0, 1.0);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training augmentations. Pure functions; randomness comes only from the
// injected generator.
// ---------------------------------------------------------------------------

inline ImageBuffer hflip(const ImageBuffer& img) {
  require(img.valid(), "hflip: invalid image");
  ImageBuffer out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            img.pixels[(static_cast<std::size_t>(y) * img.width +
                        (img.width - 1 - x)) * 3 + c];
  return out;
}

namespace detail {

inline double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace detail

inline ImageBuffer grayscale(const ImageBuffer& img) {
  require(img.valid(), "grayscale: invalid image");
  ImageBuffer out = img;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = detail::luminance(img.pixels[i * 3], img.pixels[i * 3 + 1],
                                       img.pixels[i * 3 + 2]);
    const std::uint8_t v = detail::to_u8(y);
    out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = v;
  }
  return out;
}

struct JitterRanges {
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
};

/// Scales brightness, contrast and saturation (in that order) by factors drawn
/// uniformly from [1-range, 1+range]. Ranges of zero make the pass an identity.
inline ImageBuffer color_jitter(const ImageBuffer& img, const JitterRanges& ranges,
                                Rng& rng) {
  require(img.valid(), "color_jitter: invalid image");
  require(ranges.brightness >= 0 && ranges.brightness < 1.0 &&
              ranges.contrast >= 0 && ranges.contrast < 1.0 &&
              ranges.saturation >= 0 && ranges.saturation < 1.0,
          "color_jitter: factor ranges must lie in [0, 1)");
  const double fb = rng.uniform(1.0 - ranges.brightness, 1.0 + ranges.brightness);
  const double fc = rng.uniform(1.0 - ranges.contrast, 1.0 + ranges.contrast);
  const double fs = rng.uniform(1.0 - ranges.saturation, 1.0 + ranges.saturation);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> buf(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i)
    buf[i] = std::clamp(img.pixels[i] * fb, 0.0, 255.0);

  NeumaierSum mean_acc;
  for (std::size_t i = 0; i < n; ++i)
    mean_acc.add(detail::luminance(buf[i * 3], buf[i * 3 + 1], buf[i * 3 + 2]));
  const double gray_mean = mean_acc.value() / static_cast<double>(n);
  for (std::size_t i = 0; i < n * 3; ++i)
    buf[i] = std::clamp(gray_mean + (buf[i] - gray_mean) * fc, 0.0, 255.0);

  ImageBuffer out = img;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = detail::luminance(buf[i * 3], buf[i * 3 + 1], buf[i * 3 + 2]);
    for (int c = 0; c < 3; ++c)
      out.pixels[i * 3 + c] = detail::to_u8(y + (buf[i * 3 + c] - y) * fs);
  }
  return out;
}

/// Normalized 1-D Gaussian, truncated at 3 sigma. Weights sum to 1.
inline std::vector<double> gaussian_kernel(double sigma) {
  require(std::isfinite(sigma) && sigma > 0, "gaussian kernel: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  NeumaierSum total;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    total.add(k[i + radius]);
  }
  const double norm = total.value();
  for (double& w : k) w /= norm;
  return k;
}

/// Separable convolution with edge clamping.
inline ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  require(img.valid(), "gaussian_blur: invalid image");
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = img.width, h = img.height;

  std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += k[i + radius] *
                 img.pixels[(static_cast<std::size_t>(y) * w + xx) * 3 + c];
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }

  ImageBuffer out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += k[i + radius] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
        }
        out.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = detail::to_u8(acc);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Binary PPM (P6), the only image format handled here.
// ---------------------------------------------------------------------------

inline ImageBuffer read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open image: " + path);
  std::string magic;
  in >> magic;
  require(magic == "P6", "not a binary PPM (P6) file: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  require(w > 0 && h > 0, "PPM has zero dimension: " + path);
  require(maxval == 255, "only 8-bit PPM supported: " + path);
  in.get();  // single whitespace after header
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  require(in.gcount() == static_cast<std::streamsize>(img.pixels.size()),
          "truncated PPM payload: " + path);
  return img;
}

inline void write_ppm(const ImageBuffer& img, const std::string& path) {
  require(img.valid(), "write_ppm: invalid image");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

}  // namespace bide
