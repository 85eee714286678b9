#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace damqa {

/// Packed 8-bit RGB raster, row-major, no padding between rows.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height * 3

  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int w, int h);
  ImageBuffer(int w, int h, std::vector<std::uint8_t> pixels);

  bool valid() const noexcept;
  std::span<const std::uint8_t> row(int y) const;
  bool operator==(const ImageBuffer&) const = default;
};

/// Single-channel region mask; 255 marks foreground.
struct MaskBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const MaskBuffer&) const = default;
};

/// Window placement in resized-image pixels. Sliding-window patches are
/// square (width == height); the single K=1 patch and the full view cover
/// the whole image and may be rectangular.
struct PatchRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long long area() const noexcept { return static_cast<long long>(width) * height; }
  auto operator<=>(const PatchRect&) const = default;
};

enum class ViewKind { Full, Patch };

struct View {
  ViewKind kind = ViewKind::Full;
  PatchRect rect;
  ImageBuffer image;
  MaskBuffer mask;
  int index = 0;  // 0 is the full view, patches follow in enumeration order
};

inline constexpr int kDefaultResizeTarget = 1024;
inline constexpr int kDefaultWindow = 512;
inline constexpr int kDefaultStride = 256;

/// Scales `img` so that its longest side equals `target`, up or down.
/// The short side is rounded to the nearest integer (ties away from zero),
/// never below 1. Resampling uses a separable triangle filter whose support
/// widens with the downscale factor (antialiased bilinear), evaluated with
/// fixed-point coefficients so results are bit-identical across platforms.
/// Throws InvalidImageError on an empty or inconsistent image.
ImageBuffer resize_longest_side(const ImageBuffer& img, int target);

/// Output dimensions resize_longest_side would produce.
std::pair<int, int> resized_dimensions(int width, int height, int target);

MaskBuffer full_mask(int width, int height);

/// Sliding-window top-left coordinates over a w x h image.
///
/// Positions along each axis are 0, stride, 2*stride, ... up to
/// extent - window, plus the residual extent - window so the last window is
/// flush with the edge. Output is deduplicated and sorted row-major
/// (y, then x). When either side is shorter than the window, the whole image
/// is returned as a single rectangular patch.
std::vector<PatchRect> enumerate_patches(int width, int height, int window, int stride);

ImageBuffer crop(const ImageBuffer& img, const PatchRect& rect);

/// Full view followed by one view per enumerated patch. Every view carries a
/// full-foreground mask sized to its own crop. `img` must already be resized.
std::vector<View> make_views(const ImageBuffer& img, int window, int stride);

/// The full view only (baseline mode).
View make_full_view(const ImageBuffer& img);

}  // namespace damqa
