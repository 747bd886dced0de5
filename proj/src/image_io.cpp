#include "stegogan/image_io.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>

namespace stegogan {

Image8 read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("cannot read image " + path.string());
  if (m.depth() != CV_8U) throw std::runtime_error("not an 8-bit image: " + path.string());
  const int c = m.channels();
  if (c != 1 && c != 3 && c != 4) throw std::runtime_error("unsupported channel count in " + path.string());
  const int out_c = c == 1 ? 1 : 3;
  Image8 img(out_c, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      if (out_c == 1) {
        img.at(y, x, 0) = row[x];
      } else {
        // OpenCV stores BGR(A).
        img.at(y, x, 0) = row[x * c + 2];
        img.at(y, x, 1) = row[x * c + 1];
        img.at(y, x, 2) = row[x * c + 0];
      }
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_image: channel count must be 1 or 3");
  cv::Mat m(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        row[x] = img.at(y, x, 0);
      } else {
        row[x * 3 + 0] = img.at(y, x, 2);
        row[x * 3 + 1] = img.at(y, x, 1);
        row[x * 3 + 2] = img.at(y, x, 0);
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write image " + path.string());
}

BinaryMask read_mask(const std::filesystem::path& path) {
  Image8 img = read_image(path);
  BinaryMask mask(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      bool on = false;
      for (int c = 0; c < img.channels; ++c) on = on || img.at(y, x, c) != 0;
      mask.at(y, x) = on ? 1 : 0;
    }
  return mask;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Image8 img(1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 255 : 0;
  write_image(path, img);
}

std::vector<std::string> list_images(const std::filesystem::path& dir) {
  static const std::vector<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::vector<std::string> names;
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace stegogan
