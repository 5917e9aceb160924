#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fakescope/core.hpp"
#include "fakescope/image.hpp"

namespace fakescope {

/// Saliency grid in [0, 1], row-major. Cell (x, y) covers the source pixels
/// [ceil(x*sw/w), ceil((x+1)*sw/w)) horizontally, likewise vertically.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  int source_width = 0;
  int source_height = 0;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  /// Heatmap whose source dimensions equal its own.
  static Heatmap identity(int width, int height, std::vector<double> values);

  /// Throws Precondition on mismatched sizes or values outside [0, 1].
  void validate() const;
};

struct RoiBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double mass = 0.0;  // sum of heatmap values inside the box

  Rect rect() const { return {x, y, x + w, y + h}; }

  friend bool operator==(const RoiBox&, const RoiBox&) = default;
};

struct RoiSettings {
  double threshold = 0.6;
  int k = 3;
};

class SaliencyProvider {
 public:
  virtual ~SaliencyProvider() = default;
  virtual Heatmap compute(const ImageRecord& image) = 0;
};

/// Mean gradient-magnitude energy per tile over a grid x grid tiling.
class LocalContrastProvider : public SaliencyProvider {
 public:
  explicit LocalContrastProvider(int grid = 16) : grid_(grid) {}
  Heatmap compute(const ImageRecord& image) override;

 private:
  int grid_;
};

/// POSTs the encoded image bytes to an inference endpoint that answers
/// {"grid_width": W, "grid_height": H, "scores": [W*H floats, row-major]}.
class RemoteSaliencyProvider : public SaliencyProvider {
 public:
  explicit RemoteSaliencyProvider(std::string url, double timeout_seconds = 60.0)
      : url_(std::move(url)), timeout_seconds_(timeout_seconds) {}
  Heatmap compute(const ImageRecord& image) override;

  /// Reshapes a provider reply into a normalized heatmap. Throws RemoteProvider.
  static Heatmap parse_reply(const std::string& body, ImageSize source);

 private:
  std::string url_;
  double timeout_seconds_;
};

Heatmap compute_saliency(const ImageRecord& image, SaliencyProvider& provider);

/// Min-max normalization to [0, 1]; constant grids become all zeros.
void normalize(std::vector<double>& values);

/// Parallel (OpenMP) tile-energy kernel over a grayscale image.
Heatmap tile_energy_heatmap(const GrayImage& image, int grid);

/// Binarizes at `value > threshold`, labels 4-connected components and returns
/// each component's bounding box in source coordinates, in raster order of the
/// component's first cell.
std::vector<RoiBox> heatmap_to_boxes(const Heatmap& heatmap, double threshold);

/// Sorts boxes by mass (desc), ties by (y, x); pads the first min(k, n) by 10% of
/// their size on each side, clamped to the image. No boxes yields the full image.
std::vector<Rect> top_k_regions(std::vector<RoiBox> boxes, int k, ImageSize image);

/// Area of the union of the boxes' rectangles.
long long covered_area(const std::vector<RoiBox>& boxes);

namespace reference {

/// Serial tile-energy kernel; same contract as fakescope::tile_energy_heatmap.
Heatmap tile_energy_heatmap(const GrayImage& image, int grid);

}  // namespace reference

}  // namespace fakescope
