#include "stegogan/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "stegogan/image_io.hpp"

namespace fs = std::filesystem;

namespace stegogan {

namespace {

// Builders draw straight from the engine rather than through <random>
// distributions so the output bytes do not depend on the standard library.
std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int draw(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

enum Stream : std::uint64_t { kTrainX = 1, kTrainY = 2, kTest = 3, kPhoto = 4, kGlyph = 5, kPick = 6 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s, int index) {
  return mix(mix(seed, s), static_cast<std::uint64_t>(index));
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.png", prefix, i);
  return buf;
}

bool near(std::uint8_t v, int ref) { return std::abs(static_cast<int>(v) - ref) < 20; }

}  // namespace

void SyntheticWorldConfig::validate() const {
  if (resolution < 16 || resolution % 4 != 0)
    throw std::invalid_argument("synthetic: resolution must be a multiple of 4 and at least 16");
  if (n_train_per_domain <= 0 || n_test_pairs < 0) throw std::invalid_argument("synthetic: bad image counts");
  if (unmatchable_ratio < 0.0 || unmatchable_ratio > 1.0)
    throw std::invalid_argument("synthetic: unmatchable_ratio must lie in [0, 1]");
  if (glyph_density < 1 || glyph_size < 3 || glyph_thickness < 1 || glyph_thickness > glyph_size ||
      glyph_size > resolution)
    throw std::invalid_argument("synthetic: bad glyph geometry");
}

Scene generate_scene(int resolution, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Scene s;
  s.height = s.width = resolution;
  s.labels.assign(static_cast<std::size_t>(resolution) * resolution, kBackground);
  const int n_shapes = draw(rng, 2, 4);
  const double scale = resolution / 64.0;
  for (int k = 0; k < n_shapes; ++k) {
    const bool circle = rng() % 2 == 0;
    const int cy = draw(rng, 0, resolution - 1);
    const int cx = draw(rng, 0, resolution - 1);
    if (circle) {
      const int r = static_cast<int>(draw(rng, 5, 12) * scale);
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) s.labels[y * resolution + x] = kCircle;
    } else {
      const int h = static_cast<int>(draw(rng, 8, 20) * scale);
      const int w = static_cast<int>(draw(rng, 8, 20) * scale);
      for (int y = std::max(0, cy - h / 2); y < std::min(resolution, cy - h / 2 + h); ++y)
        for (int x = std::max(0, cx - w / 2); x < std::min(resolution, cx - w / 2 + w); ++x)
          s.labels[y * resolution + x] = kRect;
    }
  }
  return s;
}

Image8 render_photo(const Scene& s, std::uint64_t seed) {
  static constexpr std::array<Rgb, kSceneLabels> base = {{{86, 125, 70}, {52, 84, 150}, {140, 132, 128}}};
  std::mt19937_64 rng(seed);
  const int shift = draw(rng, -10, 10);
  Image8 img(3, s.height, s.width);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const auto& c = base[s.at(y, x)];
      const int n = draw(rng, -12, 12);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(c[ch] + shift + n, 0, 255));
    }
  return img;
}

Image8 render_map(const Scene& s) {
  Image8 img(3, s.height, s.width);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const auto l = s.at(y, x);
      bool edge = false;
      if (l != kBackground) {
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny >= 0 && ny < s.height && nx >= 0 && nx < s.width && s.at(ny, nx) != l) edge = true;
        }
      }
      const auto& c = edge ? kMapOutline[l] : kMapFill[l];
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
    }
  return img;
}

std::vector<std::uint8_t> invert_map(const Image8& map) {
  if (map.channels != 3) throw std::invalid_argument("invert_map: expected an RGB map");
  std::vector<std::uint8_t> labels(map.pixel_count(), 255);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const Rgb px = {map.at(y, x, 0), map.at(y, x, 1), map.at(y, x, 2)};
      for (int l = 0; l < kSceneLabels; ++l)
        if (px == kMapFill[l] || px == kMapOutline[l]) labels[static_cast<std::size_t>(y) * map.width + x] = l;
    }
  return labels;
}

BinaryMask stamp_glyphs(Image8& map, int count, int size, int thickness, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BinaryMask mask(map.height, map.width);
  const int lo_off = (size - thickness) / 2;
  for (int g = 0; g < count; ++g) {
    const int top = draw(rng, 0, map.height - size);
    const int left = draw(rng, 0, map.width - size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool bar = (y >= lo_off && y < lo_off + thickness) || (x >= lo_off && x < lo_off + thickness);
        if (!bar) continue;
        for (int ch = 0; ch < 3; ++ch) map.at(top + y, left + x, ch) = kHighwayColour[ch];
        mask.at(top + y, left + x) = 1;
      }
  }
  return mask;
}

namespace {

Image8 label_image(const Scene& s) {
  Image8 img(1, s.height, s.width);
  img.data = s.labels;
  return img;
}

}  // namespace

SyntheticWorld build_synthetic(const SyntheticWorldConfig& cfg, const fs::path& out) {
  cfg.validate();
  const int n = cfg.n_train_per_domain;
  const int res = cfg.resolution;
  SyntheticWorld world;
  world.glyph_images = static_cast<int>(std::floor(cfg.unmatchable_ratio * n + 1e-9));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 pick(mix(cfg.seed, kPick));
  shuffle(order, pick);
  std::vector<char> has_glyph(n, 0);
  for (int i = 0; i < world.glyph_images; ++i) has_glyph[order[i]] = 1;

  DatasetManifest train;
  train.source_dir = "trainX";
  train.target_dir = "trainY";
  train.unmatchable_ratio = cfg.unmatchable_ratio;
  train.split = Split::Train;
  for (int i = 0; i < n; ++i) {
    const auto name = numbered("x", i);
    const auto scene = generate_scene(res, stream_seed(cfg.seed, kTrainX, i));
    write_image(out / "trainX" / name, render_photo(scene, stream_seed(cfg.seed, kPhoto, i)));
    write_image(out / "scenes" / name, label_image(scene));
    train.entries.push_back({name, std::nullopt, std::nullopt});
  }
  for (int i = 0; i < n; ++i) {
    const auto name = numbered("y", i);
    const auto scene = generate_scene(res, stream_seed(cfg.seed, kTrainY, i));
    auto map = render_map(scene);
    BinaryMask mask(res, res);
    if (has_glyph[i])
      mask = stamp_glyphs(map, cfg.glyph_density, cfg.glyph_size, cfg.glyph_thickness,
                          stream_seed(cfg.seed, kGlyph, i));
    write_image(out / "trainY" / name, map);
    write_mask(out / "trainY_masks" / name, mask);
    write_image(out / "scenes" / name, label_image(scene));
    train.entries.push_back({std::nullopt, name, "trainY_masks/" + name});
  }

  DatasetManifest test;
  test.source_dir = "testX";
  test.target_dir = "testY";
  test.unmatchable_ratio = 0.0;
  test.split = Split::Test;
  for (int i = 0; i < cfg.n_test_pairs; ++i) {
    const auto name = numbered("t", i);
    const auto scene = generate_scene(res, stream_seed(cfg.seed, kTest, i));
    write_image(out / "testX" / name, render_photo(scene, stream_seed(cfg.seed, kPhoto, n + i)));
    write_image(out / "testY" / name, render_map(scene));
    write_image(out / "scenes" / name, label_image(scene));
    test.entries.push_back({name, name, std::nullopt});
  }

  world.train_manifest = out / "train.tsv";
  world.test_manifest = out / "test.tsv";
  write_manifest(world.train_manifest, train);
  write_manifest(world.test_manifest, test);
  return world;
}

BinaryMask detect_highway_pixels(const Image8& map) {
  if (map.channels != 3) throw std::invalid_argument("detect_highway_pixels: expected a 3-channel image");
  BinaryMask m(map.height, map.width);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      m.at(y, x) = near(map.at(y, x, 0), kHighwayColour[0]) && near(map.at(y, x, 1), kHighwayColour[1]) &&
                   near(map.at(y, x, 2), kHighwayColour[2]);
  return m;
}

bool contains_highway(const Image8& map) { return !detect_highway_pixels(map).empty(); }

int highway_quota(double ratio, int total) {
  if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("ratio must lie in [0, 1]");
  if (total < 0) throw std::invalid_argument("total must be non-negative");
  // Guard against 0.65·548 landing a hair under an integer in binary.
  return static_cast<int>(std::floor(ratio * total + 1e-9));
}

DatasetManifest build_ratio_dataset(const fs::path& source_dir, const fs::path& target_dir, double ratio, int total,
                                    std::uint64_t seed, RatioCorpusStats* stats) {
  const int want_highway = highway_quota(ratio, total);
  const auto photos = list_images(source_dir);
  std::vector<std::string> highway, plain, plain_photos;
  for (const auto& name : list_images(target_dir)) {
    const bool hw = contains_highway(read_image(target_dir / name));
    (hw ? highway : plain).push_back(name);
    if (!hw && std::binary_search(photos.begin(), photos.end(), name)) plain_photos.push_back(name);
  }
  if (stats) *stats = {static_cast<int>(highway.size()), static_cast<int>(plain.size())};
  const auto need = [](const std::vector<std::string>& pool, int n, const char* what) {
    if (static_cast<int>(pool.size()) < n)
      throw std::invalid_argument(std::string("build_ratio_dataset: need ") + std::to_string(n) + " " + what +
                                  ", corpus has " + std::to_string(pool.size()));
  };
  need(highway, want_highway, "highway maps");
  need(plain, total - want_highway, "highway-free maps");
  need(plain_photos, total, "photos of highway-free scenes");

  const auto take = [](std::vector<std::string> pool, int n, std::mt19937_64& rng) {
    shuffle(pool, rng);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  std::mt19937_64 rng(seed);
  auto hw_sel = take(highway, want_highway, rng);
  auto plain_sel = take(plain, total - want_highway, rng);
  auto src_sel = take(plain_photos, total, rng);

  DatasetManifest m;
  m.source_dir = source_dir.string();
  m.target_dir = target_dir.string();
  m.unmatchable_ratio = total > 0 ? static_cast<double>(want_highway) / total : 0.0;
  m.split = Split::Train;
  for (const auto& s : src_sel) m.entries.push_back({s, std::nullopt, std::nullopt});
  std::vector<std::string> targets = hw_sel;
  targets.insert(targets.end(), plain_sel.begin(), plain_sel.end());
  std::sort(targets.begin(), targets.end());
  for (const auto& t : targets) m.entries.push_back({std::nullopt, t, std::nullopt});
  return m;
}

BinaryMask dilate_disc(const BinaryMask& m, int radius) {
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (dy * dy + dx * dx <= radius * radius && ny >= 0 && ny < m.height && nx >= 0 && nx < m.width)
            out.at(ny, nx) = 1;
        }
    }
  return out;
}

BinaryMask derive_toponym_mask(const Image8& with_text, const Image8& without_text, int radius) {
  if (!with_text.same_shape(without_text)) throw std::invalid_argument("derive_toponym_mask: images are not aligned");
  BinaryMask diff(with_text.height, with_text.width);
  for (int y = 0; y < with_text.height; ++y)
    for (int x = 0; x < with_text.width; ++x)
      for (int c = 0; c < with_text.channels; ++c)
        if (with_text.at(y, x, c) != without_text.at(y, x, c)) diff.at(y, x) = 1;
  return dilate_disc(diff, radius);
}

std::string to_string(MriLabel l) {
  switch (l) {
    case MriLabel::Tumorous: return "tumorous";
    case MriLabel::Healthy: return "healthy";
    default: return "excluded";
  }
}

MriLabel label_mri_slice(const BinaryMask& tumor) {
  const auto n = tumor.count();
  if (n == 0) return MriLabel::Healthy;
  if (n * 100 > tumor.data.size()) return MriLabel::Tumorous;
  return MriLabel::Excluded;
}

}  // namespace stegogan
