#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stegogan/evaluation.hpp"
#include "test_support.hpp"

using namespace stegogan;

namespace {

Image8 random_image(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img(c, h, w);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

// Target plus small signed noise so accuracy thresholds are exercised.
Image8 near_copy(const Image8& t, int spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img = t;
  for (auto& v : img.data) v = static_cast<std::uint8_t>(std::clamp<int>(v + static_cast<int>(rng() % (2 * spread + 1)) - spread, 0, 255));
  return img;
}

BinaryMask random_mask(int h, int w, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(p);
  BinaryMask m(h, w);
  for (auto& v : m.data) v = flip(rng);
  return m;
}

double rmse_loop(const Image8& a, const Image8& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    s += d * d;
  }
  return std::sqrt(s / a.data.size());
}

double acc_loop(const Image8& a, const Image8& b, double sigma) {
  int ok = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      bool all = true;
      for (int c = 0; c < a.channels; ++c) all = all && std::abs(int(a.at(y, x, c)) - int(b.at(y, x, c))) < sigma;
      ok += all;
    }
  return 100.0 * ok / (a.height * a.width);
}

// Flood fill with an explicit stack.
bool has_component_loop(const BinaryMask& m, int min_px) {
  std::vector<char> seen(m.data.size(), 0);
  for (int sy = 0; sy < m.height; ++sy)
    for (int sx = 0; sx < m.width; ++sx) {
      if (!m.at(sy, sx) || seen[sy * m.width + sx]) continue;
      int area = 0;
      std::vector<std::pair<int, int>> stack{{sy, sx}};
      seen[sy * m.width + sx] = 1;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        ++area;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= m.height || nx >= m.width) continue;
            if (m.at(ny, nx) && !seen[ny * m.width + nx]) {
              seen[ny * m.width + nx] = 1;
              stack.push_back({ny, nx});
            }
          }
      }
      if (area >= min_px) return true;
    }
  return false;
}

// Detector that flags pixels whose red channel is 255.
BinaryMask red_detector(const Image8& img) {
  BinaryMask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.at(y, x) = img.at(y, x, 0) == 255;
  return m;
}

}  // namespace

TEST(Rmse, MatchesScalarLoop) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = random_image(3, 8, 8, s), b = random_image(3, 8, 8, s + 100);
    EXPECT_EQ(rmse(a, b), rmse_loop(a, b));
  }
  const auto a = random_image(3, 8, 8, 1);
  EXPECT_EQ(rmse(a, a), 0.0);
  Image8 lo(3, 4, 4, 10), hi(3, 4, 4, 20);
  EXPECT_DOUBLE_EQ(rmse(lo, hi), 10.0);
  EXPECT_THROW(rmse(lo, Image8(3, 4, 5)), std::invalid_argument);
}

TEST(Rmse, SetIsPerImageMean) {
  std::vector<Image8> p{Image8(1, 2, 2, 0), Image8(1, 2, 2, 0)}, t{Image8(1, 2, 2, 3), Image8(1, 2, 2, 5)};
  EXPECT_DOUBLE_EQ(rmse(p, t), 4.0);
}

TEST(Accuracy, MatchesScalarLoopAndIsMonotone) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto t = random_image(3, 8, 8, s);
    const auto p = near_copy(t, 12, s + 7);
    double last = -1;
    for (double sigma : {1.0, 2.0, 5.0, 10.0, 13.0}) {
      const double a = accuracy_at(p, t, sigma);
      EXPECT_EQ(a, acc_loop(p, t, sigma));
      EXPECT_GE(a, last);
      last = a;
    }
  }
  const auto t = random_image(3, 8, 8, 3);
  EXPECT_EQ(accuracy_at(t, t, 5), 100.0);
  EXPECT_THROW(accuracy_at(t, t, 0), std::invalid_argument);
}

TEST(Accuracy, EveryChannelMustBeClose) {
  Image8 t(3, 1, 1, 100), p(3, 1, 1, 100);
  p.at(0, 0, 2) = 110;
  EXPECT_EQ(accuracy_at(p, t, 5), 0.0);
  EXPECT_EQ(accuracy_at(p, t, 11), 100.0);
}

TEST(FalsePositives, WorkedExample) {
  // One image of a hundred carries a single ten-pixel component.
  std::vector<Image8> set(100, Image8(3, 256, 256, 0));
  for (int x = 0; x < 10; ++x) set[37].at(5, x, 0) = 255;
  const auto r = false_positive_rates(set, red_detector, 5);
  EXPECT_DOUBLE_EQ(r.ifpr, 1.0);
  EXPECT_NEAR(r.pfpr, 10.0 / 65536 / 100 * 1e4, 1e-15);
  EXPECT_NEAR(r.pfpr, 0.0153, 5e-5);
  const auto none = false_positive_rates(std::vector<Image8>(3, Image8(3, 8, 8, 0)), red_detector);
  EXPECT_EQ(none.pfpr, 0.0);
  EXPECT_EQ(none.ifpr, 0.0);
}

TEST(FalsePositives, DiagonalPixelsJoinOneComponent) {
  BinaryMask m(8, 8);
  for (int i = 0; i < 5; ++i) m.at(i, i) = 1;
  EXPECT_EQ(component_sizes(m), std::vector<int>{5});
  m.at(7, 0) = 1;
  EXPECT_EQ(component_sizes(m), (std::vector<int>{5, 1}));
}

TEST(FalsePositives, MatchScalarLoopAndAreMonotone) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    std::vector<Image8> set;
    for (int i = 0; i < 4; ++i) {
      Image8 img(3, 8, 8, 0);
      const auto m = random_mask(8, 8, 0.05 + 0.05 * (s % 5), s * 10 + i);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) img.at(y, x, 0) = m.at(y, x) ? 255 : 0;
      set.push_back(img);
    }
    double pf = 0;
    int hits = 0;
    for (const auto& img : set) {
      const auto m = red_detector(img);
      pf += double(m.count()) / 64;
      hits += has_component_loop(m, 5);
    }
    const auto r = false_positive_rates(set, red_detector, 5);
    EXPECT_EQ(r.pfpr, pf / 4 * 1e4);
    EXPECT_EQ(r.ifpr, 100.0 * hits / 4);
    set[s % 4].at(static_cast<int>(s % 8), static_cast<int>((s * 3) % 8), 0) = 255;
    const auto more = false_positive_rates(set, red_detector, 5);
    EXPECT_GE(more.pfpr, r.pfpr);
    EXPECT_GE(more.ifpr, r.ifpr);
  }
}

TEST(MaskQuality, ConventionExamples) {
  BinaryMask gt(8, 8);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 4; ++x) gt.at(y, x) = 1;
  const auto same = mask_scores(gt, gt);
  EXPECT_EQ(*same.iou, 100.0);
  EXPECT_EQ(*same.precision, 100.0);
  EXPECT_EQ(*same.recall, 100.0);

  const auto empty = mask_scores(BinaryMask(8, 8), gt);
  EXPECT_EQ(*empty.iou, 0.0);
  EXPECT_FALSE(empty.precision.has_value());
  EXPECT_EQ(*empty.recall, 0.0);

  auto doubled = gt;  // 4×2 rectangle widened to 4×4
  for (int y = 2; y < 6; ++y)
    for (int x = 4; x < 6; ++x) doubled.at(y, x) = 1;
  const auto d = mask_scores(doubled, gt);
  EXPECT_EQ(*d.recall, 100.0);
  EXPECT_EQ(*d.precision, 50.0);
  EXPECT_EQ(*d.iou, 50.0);

  const auto no_gt = mask_scores(doubled, BinaryMask(8, 8));
  EXPECT_TRUE(no_gt.precision.has_value());
  EXPECT_FALSE(no_gt.recall.has_value());
}

TEST(MaskQuality, MatchesScalarLoop) {
  std::vector<BinaryMask> pred, gt;
  double iou = 0, prec = 0, rec = 0;
  int n_iou = 0, n_prec = 0, n_rec = 0;
  for (std::uint64_t s = 0; s < 25; ++s) {
    pred.push_back(random_mask(8, 8, 0.3, s));
    gt.push_back(s % 7 == 0 ? BinaryMask(8, 8) : random_mask(8, 8, 0.3, s + 500));
    int tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < 64; ++i) {
      const bool p = pred.back().data[i], g = gt.back().data[i];
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    if (tp + fp + fn) iou += 100.0 * tp / (tp + fp + fn), ++n_iou;
    if (tp + fp) prec += 100.0 * tp / (tp + fp), ++n_prec;
    if (tp + fn) rec += 100.0 * tp / (tp + fn), ++n_rec;
    const auto one = mask_scores(pred.back(), gt.back());
    if (tp + fp + fn) EXPECT_EQ(*one.iou, 100.0 * tp / (tp + fp + fn));
  }
  const auto q = mask_quality(pred, gt);
  EXPECT_NEAR(*q.miou, iou / n_iou, 1e-12);
  EXPECT_NEAR(*q.precision, prec / n_prec, 1e-12);
  EXPECT_NEAR(*q.recall, rec / n_rec, 1e-12);
}

TEST(Frechet, ClosedFormForShiftedScaledSet) {
  // b = 2a + c has μ_b = 2μ_a + c and Σ_b = 4Σ_a, so
  // FID = ‖μ_a + c‖² + tr(Σ_a + 4Σ_a − 2·2Σ_a) = ‖μ_a + c‖² + tr Σ_a.
  auto a = torch::randn({200, 16}, torch::TensorOptions().dtype(torch::kFloat64)) * 0.7 + 0.3;
  auto shift = torch::linspace(-1, 1, 16, torch::kFloat64);
  auto b = 2 * a + shift;
  const auto mu = a.mean(0);
  const auto centred = a - mu;
  const auto cov = centred.t().mm(centred) / 199;
  const double expect = (mu + shift).pow(2).sum().item<double>() + cov.trace().item<double>();
  EXPECT_NEAR(frechet_distance(a, b), expect, 1e-6);
  EXPECT_NEAR(frechet_distance(b, a), expect, 1e-6);
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-6);
}

TEST(Frechet, DiagonalMomentsClosedForm) {
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto v1 = torch::linspace(0.5, 2.0, 16, opts), v2 = torch::linspace(3.0, 0.1, 16, opts);
  auto mu1 = torch::zeros({16}, opts), mu2 = torch::full({16}, 0.5, opts);
  double expect = 16 * 0.25;
  for (int i = 0; i < 16; ++i) {
    const double a = v1[i].item<double>(), b = v2[i].item<double>();
    expect += a + b - 2 * std::sqrt(a * b);
  }
  EXPECT_NEAR(frechet_distance_from_moments(mu1, torch::diag(v1), mu2, torch::diag(v2)), expect, 1e-9);
}

TEST(Kid, SelfDistanceIsNoiseAndShiftIsPositive) {
  torch::manual_seed(3);
  auto a = torch::randn({300, 16}, torch::kFloat64);
  auto b = torch::randn({300, 16}, torch::kFloat64);
  EXPECT_LT(std::abs(kernel_inception_distance(a, b, 10, 100, 1)), 20.0);
  EXPECT_GT(kernel_inception_distance(a, b + 1.0, 10, 100, 1), 200.0);
}

TEST(Embedder, DeterministicAndSixtyFourDims) {
  RandomConvEmbedder e1(3, 1234), e2(3, 1234);
  auto batch = torch::rand({2, 3, 32, 32}) * 2 - 1;
  auto f = e1.extract(batch);
  EXPECT_EQ(f.sizes(), (torch::IntArrayRef{2, 64}));
  EXPECT_EQ(f.scalar_type(), torch::kFloat64);
  EXPECT_TRUE(torch::equal(f, e2.extract(batch)));
}

TEST(FidKid, IdenticalSetsScoreZero) {
  std::vector<Image8> set;
  for (std::uint64_t s = 0; s < 12; ++s) set.push_back(random_image(3, 16, 16, s));
  RandomConvEmbedder e(3, 1234);
  const auto d = fid_kid(set, set, e);
  EXPECT_NEAR(d.fid, 0.0, 1e-3);
}

TEST(Footprint, ThresholdsTheInvertedConsistency) {
  auto c = torch::tensor({1.0, 0.6, 0.5, 0.2}).reshape({1, 2, 2});
  const auto f = footprint_from_consistency(c);
  EXPECT_EQ(f.data, (std::vector<std::uint8_t>{0, 0, 0, 1}));
}

TEST(Probe, ZeroAmplitudeRowsAgree) {
  torch::manual_seed(0);
  auto nets = CycleNetworks(testing_support::tiny_model(ModelKind::CycleGan));
  nets->eval();
  auto y = torch::rand({2, 3, 16, 16}) * 2 - 1;
  BinaryMask m(16, 16);
  for (int i = 0; i < 20; ++i) m.data[i] = 1;
  const auto rows = steganography_probe(nets, y, {m, m}, {0.0, 0.0, 0.5}, 4, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].unmatchable_error, rows[1].unmatchable_error);
  EXPECT_EQ(rows[0].matchable_error, rows[1].matchable_error);
  EXPECT_NE(rows[0].unmatchable_error, rows[2].unmatchable_error);
  EXPECT_NE(format_probe_table(rows).find("amplitude"), std::string::npos);
}
