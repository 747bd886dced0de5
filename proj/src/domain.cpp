#include "stegogan/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stegogan {

Image8::Image8(int c, int h, int w, std::uint8_t fill)
    : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

ImageTensor::ImageTensor(torch::Tensor data, Domain tag) : data_(std::move(data)), tag_(tag) {
  if (data_.dim() != 3) throw std::invalid_argument("ImageTensor: expected C×H×W tensor");
  if (data_.size(0) != 1 && data_.size(0) != 3)
    throw std::invalid_argument("ImageTensor: channel count must be 1 or 3, got " + std::to_string(data_.size(0)));
  if (data_.numel() > 0) {
    const double lo = data_.min().item<double>();
    const double hi = data_.max().item<double>();
    if (lo < -1.0 || hi > 1.0) throw std::invalid_argument("ImageTensor: values outside [-1, 1]");
  }
}

ImageTensor normalize_image(const Image8& raw, Domain tag) {
  if (raw.channels != 1 && raw.channels != 3)
    throw std::invalid_argument("normalize_image: channel count must be 1 or 3, got " + std::to_string(raw.channels));
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(raw.data.data()), {raw.height, raw.width, raw.channels},
                              torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
  return ImageTensor(chw.clamp(-1.0, 1.0), tag);
}

Image8 denormalize_image(const ImageTensor& img) { return tensor_to_image(img.data()); }

Image8 tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw std::invalid_argument("tensor_to_image: expected C×H×W tensor");
  auto v = chw.detach().to(torch::kFloat64).clamp(-1.0, 1.0).add(1.0).mul(127.5).add(0.5).floor();
  auto hwc = v.clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  Image8 out(static_cast<int>(chw.size(0)), static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)));
  std::memcpy(out.data.data(), hwc.data_ptr<std::uint8_t>(), out.data.size());
  return out;
}

torch::Tensor images_to_batch(const std::vector<Image8>& images) {
  std::vector<torch::Tensor> items;
  items.reserve(images.size());
  for (const auto& im : images) items.push_back(normalize_image(im).data());
  return torch::stack(items);
}

void Hyperparameters::validate() const {
  if (lambda_cyc < 0 || lambda_id < 0 || lambda_reg < 0 || lambda_match < 0)
    throw ConfigError("hyperparameters: lambdas must be non-negative");
  if (epsilon_amplitude < 0) throw ConfigError("hyperparameters: epsilon_amplitude must be non-negative");
  if (encoder_depth < -1 || encoder_depth > 8) throw ConfigError("hyperparameters: encoder_depth must lie in [-1, 8]");
  if (batch_size <= 0) throw ConfigError("hyperparameters: batch_size must be positive");
  if (epochs < 0) throw ConfigError("hyperparameters: epochs must be non-negative");
  if (!(sigma1 < sigma2)) throw ConfigError("hyperparameters: sigma1 must be below sigma2");
}

std::vector<std::string> DatasetManifest::source_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries)
    if (e.source_id) ids.push_back(*e.source_id);
  return ids;
}

std::vector<std::string> DatasetManifest::target_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : entries)
    if (e.target_id) ids.push_back(*e.target_id);
  return ids;
}

void DatasetManifest::validate() const {
  if (unmatchable_ratio < 0.0 || unmatchable_ratio > 1.0)
    throw std::invalid_argument("manifest: unmatchable_ratio outside [0, 1]");
  if (split == Split::Test) {
    for (const auto& e : entries)
      if (!e.source_id || !e.target_id) throw std::invalid_argument("manifest: test split entries must be paired");
  }
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

namespace {

const std::string& field_or_dash(const std::optional<std::string>& f) {
  static const std::string dash = "-";
  return f ? *f : dash;
}

std::optional<std::string> dash_to_none(const std::string& s) {
  if (s == "-") return std::nullopt;
  return s;
}

}  // namespace

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "split=" << (m.split == Split::Train ? "train" : "test") << '\n';
  os << "unmatchable_ratio=" << format_real(m.unmatchable_ratio) << '\n';
  os << "source_dir=" << m.source_dir << '\n';
  os << "target_dir=" << m.target_dir << '\n';
  for (const auto& e : m.entries)
    os << field_or_dash(e.source_id) << '\t' << field_or_dash(e.target_id) << '\t' << field_or_dash(e.mask_path) << '\n';
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.find('\t') == std::string::npos) {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "split") {
        if (value == "train") m.split = Split::Train;
        else if (value == "test") m.split = Split::Test;
        else throw std::invalid_argument("manifest: unknown split '" + value + "'");
      } else if (key == "unmatchable_ratio") {
        m.unmatchable_ratio = std::stod(value);
      } else if (key == "source_dir") {
        m.source_dir = value;
      } else if (key == "target_dir") {
        m.target_dir = value;
      } else {
        throw std::invalid_argument("manifest: unknown header key '" + key + "'");
      }
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": expected 3 fields");
    m.entries.push_back({dash_to_none(fields[0]), dash_to_none(fields[1]), dash_to_none(fields[2])});
  }
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  m.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  os << format_manifest(m);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str());
}

std::filesystem::path resolve_dir(const std::filesystem::path& manifest_path, const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace stegogan
