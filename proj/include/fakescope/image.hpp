#pragma once

#include <optional>
#include <span>
#include <string>

#include <opencv2/core.hpp>

#include "fakescope/core.hpp"

namespace fakescope {

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Raw encoded bytes of the record's source. Throws Io when a path cannot be read.
ImageBytes read_image_bytes(const ImageRecord& record);

/// Decodes to 8-bit BGR. Throws Decode.
cv::Mat decode_image(const ImageRecord& record);

/// "image/png", "image/jpeg", "image/gif", "image/webp", or empty when unknown.
std::string sniff_media_type(std::span<const std::uint8_t> bytes);

/// Largest size with the same aspect ratio whose longest side is <= max_dim.
ImageSize fit_within(ImageSize size, int max_dim);

/// A wire-ready image: base64 payload plus media type.
struct ImagePart {
  std::string media_type;
  std::string base64;
  int width = 0;
  int height = 0;

  std::string data_url() const { return "data:" + media_type + ";base64," + base64; }
};

/// Crops (if requested) and downscales so the longest side is <= max_dim.
/// Untouched images pass through with their original bytes; anything else is
/// re-encoded as PNG. Throws Decode or CropOutOfBounds.
ImagePart encode_image(const ImageRecord& record, const std::optional<Rect>& crop, int max_dim);

/// Single-channel float luminance in [0, 255], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

GrayImage to_gray(const cv::Mat& bgr);

}  // namespace fakescope
