#include "fakescope/roi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <omp.h>

namespace fakescope {

Heatmap Heatmap::identity(int width, int height, std::vector<double> values) {
  Heatmap h{width, height, std::move(values), width, height};
  h.validate();
  return h;
}

void Heatmap::validate() const {
  if (width < 1 || height < 1 || source_width < width || source_height < height) {
    throw Error(ErrorCode::Precondition, "heatmap dimensions invalid");
  }
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::Precondition, "heatmap value count does not match dimensions");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw Error(ErrorCode::Precondition, "heatmap values must lie in [0, 1]");
    }
  }
}

void normalize(std::vector<double>& values) {
  if (values.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (!(range > 1e-12)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v = (v - min) / range;
}

namespace {

// First pixel of tile t when n pixels are split into g tiles by floor(p*g/n).
int tile_start(int t, int g, int n) {
  return static_cast<int>((static_cast<long long>(t) * n + g - 1) / g);
}

inline double pixel_energy(const GrayImage& img, int x, int y) {
  const int w = img.width;
  const int h = img.height;
  const double gx = (img.at(std::min(x + 1, w - 1), y) - img.at(std::max(x - 1, 0), y)) * 0.5;
  const double gy = (img.at(x, std::min(y + 1, h - 1)) - img.at(x, std::max(y - 1, 0))) * 0.5;
  return gx * gx + gy * gy;
}

void check_gray(const GrayImage& image, int grid) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw Error(ErrorCode::Decode, "empty or inconsistent grayscale image");
  }
  if (grid < 1) throw Error(ErrorCode::Precondition, "tile grid must be positive");
}

}  // namespace

Heatmap tile_energy_heatmap(const GrayImage& image, int grid) {
  check_gray(image, grid);
  const int gw = std::min(grid, image.width);
  const int gh = std::min(grid, image.height);
  std::vector<double> values(static_cast<std::size_t>(gw) * gh, 0.0);

#pragma omp parallel for schedule(static)
  for (int ty = 0; ty < gh; ++ty) {
    const int y0 = tile_start(ty, gh, image.height);
    const int y1 = tile_start(ty + 1, gh, image.height);
    std::vector<double> sums(gw, 0.0);
    std::vector<long long> counts(gw, 0);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const int tx = static_cast<int>(static_cast<long long>(x) * gw / image.width);
        sums[tx] += pixel_energy(image, x, y);
        ++counts[tx];
      }
    }
    for (int tx = 0; tx < gw; ++tx) {
      values[static_cast<std::size_t>(ty) * gw + tx] = sums[tx] / static_cast<double>(counts[tx]);
    }
  }
  normalize(values);
  return Heatmap{gw, gh, std::move(values), image.width, image.height};
}

namespace reference {

Heatmap tile_energy_heatmap(const GrayImage& image, int grid) {
  check_gray(image, grid);
  const int gw = std::min(grid, image.width);
  const int gh = std::min(grid, image.height);
  std::vector<double> sums(static_cast<std::size_t>(gw) * gh, 0.0);
  std::vector<long long> counts(sums.size(), 0);
  for (int y = 0; y < image.height; ++y) {
    const int ty = static_cast<int>(static_cast<long long>(y) * gh / image.height);
    for (int x = 0; x < image.width; ++x) {
      const int tx = static_cast<int>(static_cast<long long>(x) * gw / image.width);
      const std::size_t cell = static_cast<std::size_t>(ty) * gw + tx;
      sums[cell] += pixel_energy(image, x, y);
      ++counts[cell];
    }
  }
  for (std::size_t i = 0; i < sums.size(); ++i) sums[i] /= static_cast<double>(counts[i]);
  normalize(sums);
  return Heatmap{gw, gh, std::move(sums), image.width, image.height};
}

}  // namespace reference

Heatmap LocalContrastProvider::compute(const ImageRecord& image) {
  return tile_energy_heatmap(to_gray(decode_image(image)), grid_);
}

Heatmap RemoteSaliencyProvider::parse_reply(const std::string& body, ImageSize source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::RemoteProvider, std::string("invalid JSON: ") + e.what());
  }
  Heatmap h;
  try {
    h.width = doc.at("grid_width").get<int>();
    h.height = doc.at("grid_height").get<int>();
    h.values = doc.at("scores").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::RemoteProvider, std::string("bad saliency reply: ") + e.what());
  }
  if (h.width < 1 || h.height < 1 ||
      h.values.size() != static_cast<std::size_t>(h.width) * h.height) {
    throw Error(ErrorCode::RemoteProvider, "score count does not match grid dimensions");
  }
  if (h.width > source.width || h.height > source.height) {
    throw Error(ErrorCode::RemoteProvider, "saliency grid larger than the image");
  }
  for (double v : h.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::RemoteProvider, "non-finite score");
  }
  normalize(h.values);
  h.source_width = source.width;
  h.source_height = source.height;
  return h;
}

Heatmap RemoteSaliencyProvider::compute(const ImageRecord& image) {
  const cv::Mat decoded = decode_image(image);
  const ImageBytes bytes = read_image_bytes(image);

  const auto scheme_end = url_.find("://");
  const auto path_start =
      scheme_end == std::string::npos ? std::string::npos : url_.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url_.substr(path_start);

  httplib::Client client(origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(timeout_seconds_));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  auto res = client.Post(path, reinterpret_cast<const char*>(bytes.data()), bytes.size(),
                         "application/octet-stream");
  if (!res) {
    throw Error(ErrorCode::RemoteProvider, "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::RemoteProvider, "HTTP " + std::to_string(res->status));
  }
  return parse_reply(res->body, {decoded.cols, decoded.rows});
}

Heatmap compute_saliency(const ImageRecord& image, SaliencyProvider& provider) {
  Heatmap h = provider.compute(image);
  h.validate();
  return h;
}

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<RoiBox> heatmap_to_boxes(const Heatmap& heatmap, double threshold) {
  const int w = heatmap.width;
  const int h = heatmap.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  DisjointSet sets(n);
  std::vector<char> hot(n, 0);
  for (std::size_t i = 0; i < n; ++i) hot[i] = heatmap.values[i] > threshold ? 1 : 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (!hot[i]) continue;
      if (x > 0 && hot[i - 1]) sets.unite(i, i - 1);
      if (y > 0 && hot[i - w]) sets.unite(i, i - w);
    }
  }

  struct Extent {
    int x0, y0, x1, y1;
  };
  std::vector<int> order;  // component roots in raster order of first cell
  std::vector<Extent> extent(n);
  std::vector<char> seen(n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (!hot[i]) continue;
      const int root = sets.find(i);
      if (!seen[root]) {
        seen[root] = 1;
        order.push_back(root);
        extent[root] = {x, y, x, y};
      }
      Extent& e = extent[root];
      e.x0 = std::min(e.x0, x);
      e.y0 = std::min(e.y0, y);
      e.x1 = std::max(e.x1, x);
      e.y1 = std::max(e.y1, y);
    }
  }

  std::vector<RoiBox> boxes;
  boxes.reserve(order.size());
  for (int root : order) {
    const Extent& e = extent[root];
    double mass = 0.0;
    for (int y = e.y0; y <= e.y1; ++y) {
      for (int x = e.x0; x <= e.x1; ++x) mass += heatmap.at(x, y);
    }
    const int sx0 = tile_start(e.x0, w, heatmap.source_width);
    const int sx1 = tile_start(e.x1 + 1, w, heatmap.source_width);
    const int sy0 = tile_start(e.y0, h, heatmap.source_height);
    const int sy1 = tile_start(e.y1 + 1, h, heatmap.source_height);
    boxes.push_back({sx0, sy0, sx1 - sx0, sy1 - sy0, mass});
  }
  return boxes;
}

std::vector<Rect> top_k_regions(std::vector<RoiBox> boxes, int k, ImageSize image) {
  if (k < 1) throw Error(ErrorCode::Precondition, "k must be >= 1");
  if (boxes.empty()) return {Rect{0, 0, image.width, image.height}};
  std::stable_sort(boxes.begin(), boxes.end(), [](const RoiBox& a, const RoiBox& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), boxes.size());
  std::vector<Rect> crops;
  crops.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const RoiBox& b = boxes[i];
    const int px = static_cast<int>(std::lround(0.1 * b.w));
    const int py = static_cast<int>(std::lround(0.1 * b.h));
    Rect r{std::max(0, b.x - px), std::max(0, b.y - py), std::min(image.width, b.x + b.w + px),
           std::min(image.height, b.y + b.h + py)};
    crops.push_back(r);
  }
  return crops;
}

long long covered_area(const std::vector<RoiBox>& boxes) {
  std::set<int> xs_set;
  std::set<int> ys_set;
  for (const auto& b : boxes) {
    xs_set.insert({b.x, b.x + b.w});
    ys_set.insert({b.y, b.y + b.h});
  }
  const std::vector<int> xs(xs_set.begin(), xs_set.end());
  const std::vector<int> ys(ys_set.begin(), ys_set.end());
  long long area = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      for (const auto& b : boxes) {
        if (b.x <= xs[i] && xs[i + 1] <= b.x + b.w && b.y <= ys[j] && ys[j + 1] <= b.y + b.h) {
          area += static_cast<long long>(xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
          break;
        }
      }
    }
  }
  return area;
}

}  // namespace fakescope
