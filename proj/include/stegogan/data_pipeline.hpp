#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stegogan/domain.hpp"

namespace stegogan {

// Scene labels of the synthetic world.
enum SceneLabel : std::uint8_t { kBackground = 0, kCircle = 1, kRect = 2 };
constexpr int kSceneLabels = 3;

using Rgb = std::array<std::uint8_t, 3>;

// Map-style palette: fill and outline colour per label.
constexpr std::array<Rgb, kSceneLabels> kMapFill = {{{242, 239, 233}, {170, 211, 223}, {217, 208, 201}}};
constexpr std::array<Rgb, kSceneLabels> kMapOutline = {{{242, 239, 233}, {100, 150, 190}, {150, 140, 130}}};
constexpr Rgb kHighwayColour = {240, 160, 30};

struct SyntheticWorldConfig {
  int resolution = 64;
  int n_train_per_domain = 300;
  int n_test_pairs = 200;
  double unmatchable_ratio = 0.4;
  int glyph_density = 2;  // glyphs per glyph-bearing image
  int glyph_size = 12;
  int glyph_thickness = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// One label image (values SceneLabel) with the shape list that produced it.
struct Scene {
  int height = 0, width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

Scene generate_scene(int resolution, std::uint64_t seed);
// Textured photo-style rendering (domain X).
Image8 render_photo(const Scene& s, std::uint64_t seed);
// Palette remap with a one-pixel outline on the inner boundary of each shape (domain Y).
Image8 render_map(const Scene& s);
// Inverse of render_map on its palette; pixels outside the palette get 255.
std::vector<std::uint8_t> invert_map(const Image8& map);
// Stamps `count` cross glyphs in highway orange and returns their footprint.
BinaryMask stamp_glyphs(Image8& map, int count, int size, int thickness, std::uint64_t seed);

struct SyntheticWorld {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  int glyph_images = 0;
};

/// Writes trainX/, trainY/, trainY_masks/, testX/, testY/, scenes/ and the
/// train.tsv / test.tsv manifests under `out_dir`.
SyntheticWorld build_synthetic(const SyntheticWorldConfig& cfg, const std::filesystem::path& out_dir);

/// Flags pixels whose three channels are all strictly within 20 of
/// (240, 160, 30).
BinaryMask detect_highway_pixels(const Image8& map);
bool contains_highway(const Image8& map);

struct RatioCorpusStats {
  int highway = 0;
  int plain = 0;
};

/// Selects `total` target maps of which ⌊ratio·total⌋ contain highway pixels,
/// and `total` source photos whose paired map has none. Photos and maps are
/// paired by filename. Sampling is without replacement and seeded.
DatasetManifest build_ratio_dataset(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir,
                                    double ratio, int total, std::uint64_t seed,
                                    RatioCorpusStats* stats = nullptr);

// Number of highway maps a ratio/total request asks for.
int highway_quota(double ratio, int total);

// Any-channel difference, dilated with a Euclidean disc of the given radius.
BinaryMask derive_toponym_mask(const Image8& with_text, const Image8& without_text, int radius = 4);
BinaryMask dilate_disc(const BinaryMask& m, int radius);

enum class MriLabel { Tumorous, Healthy, Excluded };
std::string to_string(MriLabel l);

// More than 1% tumour pixels: tumorous; none: healthy; otherwise excluded.
MriLabel label_mri_slice(const BinaryMask& tumor);

}  // namespace stegogan
