#include "fakescope/image.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fakescope/base64.hpp"

namespace fakescope {

ImageBytes read_image_bytes(const ImageRecord& record) {
  if (const auto* bytes = std::get_if<ImageBytes>(&record.source)) return *bytes;
  const auto& path = std::get<std::filesystem::path>(record.source);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read image '" + path.string() + "'");
  return ImageBytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

cv::Mat decode_image(const ImageRecord& record) {
  const ImageBytes bytes = read_image_bytes(record);
  cv::Mat image;
  if (!bytes.empty()) {
    image = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8UC1,
                                 const_cast<std::uint8_t*>(bytes.data())),
                         cv::IMREAD_COLOR);
  }
  if (image.empty()) throw Error(ErrorCode::Decode, "cannot decode image '" + record.id + "'");
  return image;
}

std::string sniff_media_type(std::span<const std::uint8_t> b) {
  auto starts = [&](std::initializer_list<std::uint8_t> sig) {
    return b.size() >= sig.size() && std::equal(sig.begin(), sig.end(), b.begin());
  };
  if (starts({0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A})) return "image/png";
  if (starts({0xFF, 0xD8, 0xFF})) return "image/jpeg";
  if (starts({'G', 'I', 'F', '8'})) return "image/gif";
  if (b.size() >= 12 && starts({'R', 'I', 'F', 'F'}) && b[8] == 'W' && b[9] == 'E' &&
      b[10] == 'B' && b[11] == 'P') {
    return "image/webp";
  }
  return {};
}

ImageSize fit_within(ImageSize size, int max_dim) {
  const int longest = std::max(size.width, size.height);
  if (longest <= max_dim) return size;
  auto scale = [&](int side) {
    const long long scaled = (static_cast<long long>(side) * max_dim + longest / 2) / longest;
    return std::max(1, static_cast<int>(scaled));
  };
  return {scale(size.width), scale(size.height)};
}

ImagePart encode_image(const ImageRecord& record, const std::optional<Rect>& crop, int max_dim) {
  if (max_dim < 1) throw Error(ErrorCode::Precondition, "max_dim must be positive");
  ImageBytes bytes = read_image_bytes(record);
  const std::string original_type = sniff_media_type(bytes);

  cv::Mat image;
  if (!bytes.empty()) {
    image = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8UC1, bytes.data()),
                         cv::IMREAD_UNCHANGED);
  }
  if (image.empty()) throw Error(ErrorCode::Decode, "cannot decode image '" + record.id + "'");

  bool modified = false;
  if (crop) {
    if (!crop->within(image.cols, image.rows)) {
      throw Error(ErrorCode::CropOutOfBounds,
                  "crop [" + std::to_string(crop->x0) + "," + std::to_string(crop->y0) + "," +
                      std::to_string(crop->x1) + "," + std::to_string(crop->y1) +
                      ") outside " + std::to_string(image.cols) + "x" +
                      std::to_string(image.rows) + " image '" + record.id + "'");
    }
    image = image(cv::Rect(crop->x0, crop->y0, crop->width(), crop->height())).clone();
    modified = true;
  }
  const ImageSize target = fit_within({image.cols, image.rows}, max_dim);
  if (target.width != image.cols || target.height != image.rows) {
    cv::Mat resized;
    cv::resize(image, resized, cv::Size(target.width, target.height), 0, 0, cv::INTER_AREA);
    image = resized;
    modified = true;
  }

  ImagePart part;
  part.width = image.cols;
  part.height = image.rows;
  if (!modified && !original_type.empty()) {
    part.media_type = original_type;
    part.base64 = base64_encode(bytes);
    return part;
  }
  std::vector<std::uint8_t> png;
  if (!cv::imencode(".png", image, png)) {
    throw Error(ErrorCode::Decode, "cannot re-encode image '" + record.id + "'");
  }
  part.media_type = "image/png";
  part.base64 = base64_encode(png);
  return part;
}

GrayImage to_gray(const cv::Mat& bgr) {
  cv::Mat gray;
  if (bgr.channels() == 1) {
    gray = bgr;
  } else {
    cv::cvtColor(bgr, gray, bgr.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
  }
  cv::Mat f;
  gray.convertTo(f, CV_32F);
  GrayImage out;
  out.width = f.cols;
  out.height = f.rows;
  out.pixels.resize(static_cast<std::size_t>(f.cols) * f.rows);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    std::copy(row, row + f.cols, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * f.cols);
  }
  return out;
}

}  // namespace fakescope
