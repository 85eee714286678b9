#include "damqa/views.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "damqa/error.hpp"

namespace damqa {

ImageBuffer::ImageBuffer(int w, int h)
    : width(w), height(h), data(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * kChannels) {}

ImageBuffer::ImageBuffer(int w, int h, std::vector<std::uint8_t> pixels)
    : width(w), height(h), data(std::move(pixels)) {
  if (!valid()) {
    throw InvalidImageError("image buffer size does not match " + std::to_string(w) + "x" +
                            std::to_string(h) + "x3");
  }
}

bool ImageBuffer::valid() const noexcept {
  return width >= 1 && height >= 1 &&
         data.size() == static_cast<std::size_t>(width) * height * kChannels;
}

std::span<const std::uint8_t> ImageBuffer::row(int y) const {
  const auto stride = static_cast<std::size_t>(width) * kChannels;
  return {data.data() + stride * y, stride};
}

namespace {

constexpr int kPrecisionBits = 22;

// Per-output-sample filter taps for one axis.
struct Taps {
  int first = 0;
  std::vector<std::int32_t> coefficients;
};

std::vector<Taps> triangle_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = filter_scale;  // triangle kernel has radius 1

  std::vector<Taps> taps(out_size);
  std::vector<double> weights;
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(center - support + 0.5));
    const int hi = std::min(in_size, static_cast<int>(center + support + 0.5));

    weights.clear();
    double total = 0.0;
    for (int x = lo; x < hi; ++x) {
      const double t = std::abs((x - center + 0.5) / filter_scale);
      const double w = t < 1.0 ? 1.0 - t : 0.0;
      weights.push_back(w);
      total += w;
    }

    auto& tap = taps[i];
    tap.first = lo;
    tap.coefficients.reserve(weights.size());
    for (double w : weights) {
      const double normalized = total > 0.0 ? w / total : 0.0;
      tap.coefficients.push_back(
          static_cast<std::int32_t>(std::lround(normalized * (1 << kPrecisionBits))));
    }
  }
  return taps;
}

std::uint8_t clamp_fixed(std::int64_t acc) {
  acc = (acc + (std::int64_t{1} << (kPrecisionBits - 1))) >> kPrecisionBits;
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(acc, 0, 255));
}

ImageBuffer resample_horizontal(const ImageBuffer& src, int out_width) {
  constexpr int C = ImageBuffer::kChannels;
  const auto taps = triangle_taps(src.width, out_width);
  ImageBuffer dst(out_width, src.height);
  for (int y = 0; y < src.height; ++y) {
    const auto* in = src.data.data() + static_cast<std::size_t>(y) * src.width * C;
    auto* out = dst.data.data() + static_cast<std::size_t>(y) * out_width * C;
    for (int x = 0; x < out_width; ++x) {
      const auto& tap = taps[x];
      for (int c = 0; c < C; ++c) {
        std::int64_t acc = 0;
        for (std::size_t k = 0; k < tap.coefficients.size(); ++k) {
          acc += static_cast<std::int64_t>(tap.coefficients[k]) * in[(tap.first + k) * C + c];
        }
        out[x * C + c] = clamp_fixed(acc);
      }
    }
  }
  return dst;
}

ImageBuffer resample_vertical(const ImageBuffer& src, int out_height) {
  constexpr int C = ImageBuffer::kChannels;
  const auto taps = triangle_taps(src.height, out_height);
  const std::size_t row_len = static_cast<std::size_t>(src.width) * C;
  ImageBuffer dst(src.width, out_height);
  for (int y = 0; y < out_height; ++y) {
    const auto& tap = taps[y];
    auto* out = dst.data.data() + y * row_len;
    for (std::size_t i = 0; i < row_len; ++i) {
      std::int64_t acc = 0;
      for (std::size_t k = 0; k < tap.coefficients.size(); ++k) {
        acc += static_cast<std::int64_t>(tap.coefficients[k]) *
               src.data[(tap.first + k) * row_len + i];
      }
      out[i] = clamp_fixed(acc);
    }
  }
  return dst;
}

long long round_ratio(long long num, long long den) {
  return (2 * num + den) / (2 * den);
}

}  // namespace

std::pair<int, int> resized_dimensions(int width, int height, int target) {
  if (width < 1 || height < 1) {
    throw InvalidImageError("cannot resize a zero-dimension image");
  }
  if (target < 1) {
    throw InvalidInputError("resize target must be at least 1");
  }
  if (width >= height) {
    const auto h = std::max<long long>(1, round_ratio(static_cast<long long>(height) * target, width));
    return {target, static_cast<int>(std::min<long long>(h, target))};
  }
  const auto w = std::max<long long>(1, round_ratio(static_cast<long long>(width) * target, height));
  return {static_cast<int>(std::min<long long>(w, target)), target};
}

ImageBuffer resize_longest_side(const ImageBuffer& img, int target) {
  if (!img.valid()) {
    throw InvalidImageError("invalid image: " + std::to_string(img.width) + "x" +
                            std::to_string(img.height));
  }
  const auto [w, h] = resized_dimensions(img.width, img.height, target);
  if (w == img.width && h == img.height) {
    return img;
  }
  ImageBuffer horizontal = w == img.width ? img : resample_horizontal(img, w);
  return h == img.height ? horizontal : resample_vertical(horizontal, h);
}

MaskBuffer full_mask(int width, int height) {
  if (width < 1 || height < 1) {
    throw InvalidInputError("mask dimensions must be positive");
  }
  return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 255)};
}

namespace {

std::vector<int> axis_positions(int extent, int window, int stride) {
  std::vector<int> positions;
  const int last = extent - window;
  for (int p = 0; p <= last; p += stride) {
    positions.push_back(p);
  }
  positions.push_back(last);  // residual window flush with the far edge
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  return positions;
}

}  // namespace

std::vector<PatchRect> enumerate_patches(int width, int height, int window, int stride) {
  if (window < 1 || stride < 1) {
    throw InvalidInputError("window and stride must be at least 1");
  }
  if (width < 1 || height < 1) {
    throw InvalidInputError("image dimensions must be positive");
  }
  if (width < window || height < window) {
    return {PatchRect{0, 0, width, height}};
  }
  const auto xs = axis_positions(width, window, stride);
  const auto ys = axis_positions(height, window, stride);
  std::vector<PatchRect> rects;
  rects.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) {
      rects.push_back({x, y, window, window});
    }
  }
  return rects;
}

ImageBuffer crop(const ImageBuffer& img, const PatchRect& rect) {
  if (rect.x < 0 || rect.y < 0 || rect.width < 1 || rect.height < 1 ||
      rect.x + rect.width > img.width || rect.y + rect.height > img.height) {
    throw std::logic_error("crop rectangle outside image bounds");
  }
  constexpr int C = ImageBuffer::kChannels;
  ImageBuffer out(rect.width, rect.height);
  const std::size_t len = static_cast<std::size_t>(rect.width) * C;
  for (int y = 0; y < rect.height; ++y) {
    const auto src = img.row(rect.y + y).subspan(static_cast<std::size_t>(rect.x) * C, len);
    std::copy(src.begin(), src.end(), out.data.begin() + y * len);
  }
  return out;
}

View make_full_view(const ImageBuffer& img) {
  if (!img.valid()) {
    throw InvalidImageError("invalid image");
  }
  return View{ViewKind::Full, PatchRect{0, 0, img.width, img.height}, img,
              full_mask(img.width, img.height), 0};
}

std::vector<View> make_views(const ImageBuffer& img, int window, int stride) {
  std::vector<View> views;
  views.push_back(make_full_view(img));
  const auto rects = enumerate_patches(img.width, img.height, window, stride);
  views.reserve(rects.size() + 1);
  int index = 1;
  for (const auto& rect : rects) {
    views.push_back(View{ViewKind::Patch, rect, crop(img, rect), full_mask(rect.width, rect.height),
                         index++});
  }
  return views;
}

}  // namespace damqa
