#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stegogan/domain.hpp"
#include "stegogan/networks.hpp"

namespace stegogan {

// Per-image root mean squared error in 0–255 units, meaned over the set.
double rmse(const Image8& pred, const Image8& target);
double rmse(const std::vector<Image8>& pred, const std::vector<Image8>& target);

// Percentage of pixels whose every channel differs by less than sigma,
// per image, meaned over the set.
double accuracy_at(const Image8& pred, const Image8& target, double sigma);
double accuracy_at(const std::vector<Image8>& pred, const std::vector<Image8>& target, double sigma);

using PixelDetector = std::function<BinaryMask(const Image8&)>;

struct FalsePositiveRates {
  double pfpr = 0;  // per ten thousand
  double ifpr = 0;  // percent
};

/// pFPR: mean over images of the flagged-pixel fraction, ×10⁴.
/// iFPR: share of images with at least one 8-connected flagged component of
/// area ≥ min_instance_px, ×100.
FalsePositiveRates false_positive_rates(const std::vector<Image8>& generated, const PixelDetector& detector,
                                        int min_instance_px = 5);

// Sizes of the 8-connected components of a mask, in scan order of their first pixel.
std::vector<int> component_sizes(const BinaryMask& m);

/// Fréchet distance between Gaussian fits of two N×D feature sets:
/// ‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^½), sample covariances with N−1.
/// tr((Σ₁Σ₂)^½) is taken as tr((Σ₁^½ Σ₂ Σ₁^½)^½), which only needs
/// symmetric eigendecompositions and stays defined for singular Σ.
double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);
double frechet_distance_from_moments(const torch::Tensor& mu1, const torch::Tensor& sigma1, const torch::Tensor& mu2,
                                     const torch::Tensor& sigma2);

/// Unbiased MMD² with the kernel (a·b/D + 1)³, averaged over `subsets`
/// random subsets of min(subset_size, N) rows from each set, ×1000.
double kernel_inception_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b, int subsets = 10,
                                 int subset_size = 100, std::uint64_t seed = 0);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // N×C×H×W batch in [-1, 1] -> N×D double features.
  virtual torch::Tensor extract(const torch::Tensor& batch) = 0;
};

/// Three strided random conv layers with frozen seeded weights; features
/// are the global average and max of the last activation (64 dims).
class RandomConvEmbedder : public FeatureExtractor {
 public:
  explicit RandomConvEmbedder(int in_channels = 3, std::uint64_t seed = 1234);
  torch::Tensor extract(const torch::Tensor& batch) override;

 private:
  std::vector<torch::Tensor> weights_;
};

struct DistributionScores {
  double fid = 0;
  double kid = 0;
};

DistributionScores fid_kid(const std::vector<Image8>& real, const std::vector<Image8>& fake,
                           FeatureExtractor& extractor);

struct MaskScores {
  std::optional<double> iou, precision, recall;  // percent; empty when undefined
};

MaskScores mask_scores(const BinaryMask& pred, const BinaryMask& gt);

struct MaskQuality {
  std::optional<double> miou, precision, recall;  // means over images where defined
};

MaskQuality mask_quality(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

// Unmatchable footprint 1 − I(m) thresholded at 0.5; `consistency` is 1×H×W or H×W.
BinaryMask footprint_from_consistency(const torch::Tensor& consistency);

// Predicted footprint of each image in an N×C×H×W batch of domain-Y images.
std::vector<BinaryMask> predict_footprints(CycleNetworks& nets, const torch::Tensor& y_batch);

struct ProbeRow {
  double amplitude = 0;
  double unmatchable_error = 0;  // mean |y_rec − y| inside the masks, 0–255 units
  double matchable_error = 0;    // same, outside the masks
};

/// Backward-cycle reconstruction error of y with x_gen perturbed by Gaussian
/// noise of each amplitude, split by the ground-truth masks.
std::vector<ProbeRow> steganography_probe(CycleNetworks& nets, const torch::Tensor& y_batch,
                                          const std::vector<BinaryMask>& masks, const std::vector<double>& amplitudes,
                                          std::uint64_t seed = 0, int repeats = 1);

std::string format_probe_table(const std::vector<ProbeRow>& rows);

}  // namespace stegogan
