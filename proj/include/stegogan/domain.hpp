#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace stegogan {

enum class Domain { X, Y };

// Thrown when a run must stop because a loss went non-finite.
class NanAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration or checkpoint schema mismatch.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit image, interleaved HWC. Channel order is RGB for colour images.
struct Image8 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int c, int h, int w, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Image8& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// A C×H×W float tensor with values in [-1, 1] and a domain tag.
///
/// Construction validates the range and channel count; afterwards the object
/// is immutable. Batched network code works on plain N×C×H×W tensors and
/// only crosses into this type at I/O boundaries.
class ImageTensor {
 public:
  ImageTensor(torch::Tensor data, Domain tag);

  const torch::Tensor& data() const { return data_; }
  Domain domain() const { return tag_; }
  std::int64_t channels() const { return data_.size(0); }
  std::int64_t height() const { return data_.size(1); }
  std::int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
  Domain tag_;
};

// 0 -> -1, 255 -> +1.
ImageTensor normalize_image(const Image8& raw, Domain tag = Domain::X);
// Clamps to [-1, 1], maps back to [0, 255] and rounds half up.
Image8 denormalize_image(const ImageTensor& img);

// Batch helpers around the two conversions above.
torch::Tensor images_to_batch(const std::vector<Image8>& images);
Image8 tensor_to_image(const torch::Tensor& chw);

struct Hyperparameters {
  double lambda_cyc = 10.0;
  double lambda_id = 0.5;
  double lambda_reg = 0.3;
  double lambda_match = 1.0;
  double epsilon_amplitude = 0.01;
  int encoder_depth = 8;
  int batch_size = 1;
  int epochs = 200;
  // Taken verbatim from the published training details. The CycleGAN
  // reference code uses 0.0002; override when matching that baseline.
  double learning_rate = 0.002;
  double sigma1 = 5.0;
  double sigma2 = 10.0;

  void validate() const;
};

enum class Split { Train, Test };

struct ManifestEntry {
  std::optional<std::string> source_id;
  std::optional<std::string> target_id;
  std::optional<std::string> mask_path;

  bool operator==(const ManifestEntry&) const = default;
};

/// Declarative description of a train or test split.
///
/// On disk: `key=value` header lines, then one `source<TAB>target<TAB>mask`
/// record per line with `-` for an absent field. Directory paths are stored
/// as written; relative ones resolve against the manifest's own directory.
struct DatasetManifest {
  std::string source_dir;
  std::string target_dir;
  double unmatchable_ratio = 0.0;
  Split split = Split::Train;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> source_ids() const;
  std::vector<std::string> target_ids() const;
  void validate() const;

  bool operator==(const DatasetManifest&) const = default;
};

std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Resolves a manifest-relative directory.
std::filesystem::path resolve_dir(const std::filesystem::path& manifest_path, const std::string& dir);

std::string format_real(double v);

}  // namespace stegogan
