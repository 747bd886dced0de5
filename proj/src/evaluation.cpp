#include "stegogan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "stegogan/stego_cycle.hpp"

namespace F = torch::nn::functional;

namespace stegogan {

namespace {

void check_aligned(const Image8& a, const Image8& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

void check_sets(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": set sizes differ");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty set");
}

template <typename PerImage>
double mean_over(std::size_t n, PerImage f) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += f(i);
  return s / static_cast<double>(n);
}

}  // namespace

double rmse(const Image8& pred, const Image8& target) {
  check_aligned(pred, target, "rmse");
  double s = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.data.size()));
}

double rmse(const std::vector<Image8>& pred, const std::vector<Image8>& target) {
  check_sets(pred.size(), target.size(), "rmse");
  return mean_over(pred.size(), [&](std::size_t i) { return rmse(pred[i], target[i]); });
}

double accuracy_at(const Image8& pred, const Image8& target, double sigma) {
  check_aligned(pred, target, "accuracy_at");
  if (!(sigma > 0)) throw std::invalid_argument("accuracy_at: sigma must be positive");
  std::size_t ok = 0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      bool all = true;
      for (int c = 0; c < pred.channels; ++c)
        all = all && std::abs(static_cast<double>(pred.at(y, x, c)) - target.at(y, x, c)) < sigma;
      ok += all;
    }
  return 100.0 * static_cast<double>(ok) / static_cast<double>(pred.pixel_count());
}

double accuracy_at(const std::vector<Image8>& pred, const std::vector<Image8>& target, double sigma) {
  check_sets(pred.size(), target.size(), "accuracy_at");
  return mean_over(pred.size(), [&](std::size_t i) { return accuracy_at(pred[i], target[i], sigma); });
}

std::vector<int> component_sizes(const BinaryMask& m) {
  std::vector<int> sizes;
  std::vector<char> seen(m.data.size(), 0);
  std::vector<int> stack;
  for (int y0 = 0; y0 < m.height; ++y0)
    for (int x0 = 0; x0 < m.width; ++x0) {
      const int start = y0 * m.width + x0;
      if (!m.data[start] || seen[start]) continue;
      int size = 0;
      seen[start] = 1;
      stack.push_back(start);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        ++size;
        const int py = p / m.width, px = p % m.width;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = py + dy, nx = px + dx;
            if (ny < 0 || ny >= m.height || nx < 0 || nx >= m.width) continue;
            const int q = ny * m.width + nx;
            if (m.data[q] && !seen[q]) {
              seen[q] = 1;
              stack.push_back(q);
            }
          }
      }
      sizes.push_back(size);
    }
  return sizes;
}

FalsePositiveRates false_positive_rates(const std::vector<Image8>& generated, const PixelDetector& detector,
                                        int min_instance_px) {
  FalsePositiveRates r;
  if (generated.empty()) return r;
  double frac = 0;
  int hit = 0;
  for (const auto& img : generated) {
    const auto m = detector(img);
    frac += static_cast<double>(m.count()) / static_cast<double>(m.data.size());
    const auto sizes = component_sizes(m);
    hit += std::any_of(sizes.begin(), sizes.end(), [&](int s) { return s >= min_instance_px; });
  }
  const double n = static_cast<double>(generated.size());
  r.pfpr = frac / n * 1e4;
  r.ifpr = hit / n * 100.0;
  return r;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_eigen(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  if (c.dim() == 1) c = c.unsqueeze(1);
  if (c.dim() != 2) throw std::invalid_argument("features must be N×D");
  Mat m(c.size(0), c.size(1));
  const double* p = c.data_ptr<double>();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = p[i * m.cols() + j];
  return m;
}

void moments(const Mat& f, Vec& mu, Mat& sigma) {
  if (f.rows() < 2) throw std::invalid_argument("frechet_distance: need at least two samples per set");
  mu = f.colwise().mean();
  const Mat centred = f.rowwise() - mu.transpose();
  sigma = centred.transpose() * centred / static_cast<double>(f.rows() - 1);
}

Mat psd_sqrt(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double frechet(const Vec& mu1, const Mat& s1, const Vec& mu2, const Mat& s2) {
  if (mu1.size() != mu2.size() || s1.rows() != s2.rows()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Mat r1 = psd_sqrt(s1);
  const Mat inner = r1 * s2 * r1;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

}  // namespace

double frechet_distance(const torch::Tensor& a, const torch::Tensor& b) {
  Vec mu1, mu2;
  Mat s1, s2;
  moments(to_eigen(a), mu1, s1);
  moments(to_eigen(b), mu2, s2);
  return frechet(mu1, s1, mu2, s2);
}

double frechet_distance_from_moments(const torch::Tensor& mu1, const torch::Tensor& sigma1, const torch::Tensor& mu2,
                                     const torch::Tensor& sigma2) {
  return frechet(to_eigen(mu1).col(0), to_eigen(sigma1), to_eigen(mu2).col(0), to_eigen(sigma2));
}

double kernel_inception_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b, int subsets,
                                 int subset_size, std::uint64_t seed) {
  const Mat a = to_eigen(feats_a), b = to_eigen(feats_b);
  if (a.cols() != b.cols()) throw std::invalid_argument("kid: feature dimensions differ");
  const Eigen::Index m = std::min<Eigen::Index>({subset_size, a.rows(), b.rows()});
  if (m < 2) throw std::invalid_argument("kid: need at least two samples per set");
  const double d = static_cast<double>(a.cols());
  const auto kernel = [d](const Mat& x, const Mat& y) {
    return ((x * y.transpose()).array() / d + 1.0).cube().matrix().eval();
  };
  std::mt19937_64 rng(seed);
  const auto subset = [&](const Mat& f) {
    std::vector<Eigen::Index> idx(f.rows());
    for (Eigen::Index i = 0; i < f.rows(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    Mat s(m, f.cols());
    for (Eigen::Index i = 0; i < m; ++i) s.row(i) = f.row(idx[i]);
    return s;
  };
  double total = 0;
  for (int t = 0; t < subsets; ++t) {
    const Mat x = subset(a), y = subset(b);
    const Mat kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
    const double mm = static_cast<double>(m);
    const double sxx = (kxx.sum() - kxx.trace()) / (mm * (mm - 1));
    const double syy = (kyy.sum() - kyy.trace()) / (mm * (mm - 1));
    total += sxx + syy - 2.0 * kxy.sum() / (mm * mm);
  }
  return total / subsets * 1000.0;
}

RandomConvEmbedder::RandomConvEmbedder(int in_channels, std::uint64_t seed) {
  auto gen = make_generator(seed);
  const std::vector<std::array<std::int64_t, 3>> shapes = {{16, in_channels, 4}, {32, 16, 4}, {32, 32, 3}};
  for (const auto& [out, in, k] : shapes) {
    const double fan_in = static_cast<double>(in * k * k);
    weights_.push_back(torch::randn({out, in, k, k}, gen, torch::kFloat32) * std::sqrt(2.0 / fan_in));
  }
}

torch::Tensor RandomConvEmbedder::extract(const torch::Tensor& batch) {
  torch::NoGradGuard no_grad;
  auto h = batch.to(torch::kFloat32);
  for (const auto& w : weights_) h = torch::relu(F::conv2d(h, w, F::Conv2dFuncOptions().stride(2).padding(1)));
  auto avg = h.mean({2, 3});
  auto mx = std::get<0>(h.flatten(2).max(2));
  return torch::cat({avg, mx}, 1).to(torch::kFloat64);
}

DistributionScores fid_kid(const std::vector<Image8>& real, const std::vector<Image8>& fake,
                           FeatureExtractor& extractor) {
  const auto features = [&](const std::vector<Image8>& set) {
    std::vector<torch::Tensor> out;
    for (std::size_t i = 0; i < set.size(); i += 64) {
      std::vector<Image8> chunk(set.begin() + i, set.begin() + std::min(set.size(), i + 64));
      out.push_back(extractor.extract(images_to_batch(chunk)));
    }
    return torch::cat(out);
  };
  const auto fa = features(real), fb = features(fake);
  return {frechet_distance(fa, fb), kernel_inception_distance(fa, fb)};
}

MaskScores mask_scores(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) throw std::invalid_argument("mask_scores: shapes differ");
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    tp += p && g;
    np += p;
    ng += g;
  }
  MaskScores s;
  const std::size_t uni = np + ng - tp;
  if (uni > 0) s.iou = 100.0 * static_cast<double>(tp) / static_cast<double>(uni);
  if (np > 0) s.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(np);
  if (ng > 0) s.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(ng);
  return s;
}

MaskQuality mask_quality(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
  check_sets(pred.size(), gt.size(), "mask_quality");
  double sum[3] = {0, 0, 0};
  int cnt[3] = {0, 0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto s = mask_scores(pred[i], gt[i]);
    const std::optional<double>* parts[3] = {&s.iou, &s.precision, &s.recall};
    for (int k = 0; k < 3; ++k)
      if (parts[k]->has_value()) {
        sum[k] += **parts[k];
        ++cnt[k];
      }
  }
  MaskQuality q;
  std::optional<double>* out[3] = {&q.miou, &q.precision, &q.recall};
  for (int k = 0; k < 3; ++k)
    if (cnt[k] > 0) *out[k] = sum[k] / cnt[k];
  return q;
}

BinaryMask footprint_from_consistency(const torch::Tensor& consistency) {
  auto c = consistency.detach().to(torch::kFloat64);
  if (c.dim() == 3) c = c.squeeze(0);
  if (c.dim() != 2) throw std::invalid_argument("footprint: expected H×W or 1×H×W consistency mask");
  auto flags = ((1.0 - c) > 0.5).to(torch::kUInt8).contiguous();
  BinaryMask m(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  std::copy_n(flags.data_ptr<std::uint8_t>(), m.data.size(), m.data.begin());
  return m;
}

std::vector<BinaryMask> predict_footprints(CycleNetworks& nets, const torch::Tensor& y_batch) {
  if (!nets->has_mask()) throw std::invalid_argument("predict_footprints: model has no mask predictor");
  torch::NoGradGuard no_grad;
  std::vector<BinaryMask> out;
  for (std::int64_t i = 0; i < y_batch.size(0); i += 32) {
    auto y = y_batch.slice(0, i, std::min(y_batch.size(0), i + 32));
    auto m = nets->mask->forward(nets->g_yx->encode(y));
    auto consistency = consistency_mask(m, y.size(2), y.size(3));
    for (std::int64_t k = 0; k < consistency.size(0); ++k) out.push_back(footprint_from_consistency(consistency[k]));
  }
  return out;
}

std::vector<ProbeRow> steganography_probe(CycleNetworks& nets, const torch::Tensor& y_batch,
                                          const std::vector<BinaryMask>& masks, const std::vector<double>& amplitudes,
                                          std::uint64_t seed, int repeats) {
  if (static_cast<std::size_t>(y_batch.size(0)) != masks.size())
    throw std::invalid_argument("steganography_probe: one mask per image required");
  if (repeats < 1) throw std::invalid_argument("steganography_probe: repeats must be positive");
  torch::NoGradGuard no_grad;
  const auto n = y_batch.size(0), h = y_batch.size(2), w = y_batch.size(3);
  auto region = torch::zeros({n, 1, h, w}, torch::kFloat64);
  for (std::int64_t i = 0; i < n; ++i) {
    if (masks[i].height != h || masks[i].width != w) throw std::invalid_argument("steganography_probe: mask size");
    auto t = torch::from_blob(const_cast<std::uint8_t*>(masks[i].data.data()), {h, w}, torch::kUInt8);
    region[i][0] = t.to(torch::kFloat64);
  }
  const auto c = static_cast<double>(y_batch.size(1));
  const double in_px = region.sum().item<double>() * c;
  const double out_px = static_cast<double>(n * h * w) * c - in_px;

  std::vector<ProbeRow> rows;
  for (double a : amplitudes) {
    auto gen = make_generator(seed);
    double in_err = 0, out_err = 0;
    for (int r = 0; r < repeats; ++r)
      for (std::int64_t i = 0; i < n; i += 16) {
        auto y = y_batch.slice(0, i, std::min(n, i + 16));
        auto reg = region.slice(0, i, std::min(n, i + 16));
        auto err = (backward_cycle(y, nets, a, gen).y_rec - y).abs().to(torch::kFloat64) * 127.5;
        in_err += (err * reg).sum().item<double>();
        out_err += (err * (1.0 - reg)).sum().item<double>();
      }
    ProbeRow row;
    row.amplitude = a;
    row.unmatchable_error = in_px > 0 ? in_err / (in_px * repeats) : 0.0;
    row.matchable_error = out_px > 0 ? out_err / (out_px * repeats) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string format_probe_table(const std::vector<ProbeRow>& rows) {
  std::ostringstream os;
  os << "amplitude\tunmatchable_error\tmatchable_error\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6g\t%.6f\t%.6f\n", r.amplitude, r.unmatchable_error, r.matchable_error);
    os << buf;
  }
  return os.str();
}

}  // namespace stegogan
