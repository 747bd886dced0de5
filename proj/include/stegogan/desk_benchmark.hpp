#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stegogan/evaluation.hpp"
#include "stegogan/training.hpp"

namespace stegogan {

/// Reduced-scale hallucination benchmark on the synthetic world: a CycleGAN
/// baseline, StegoGAN, and StegoGAN without the mask regulariser, trained on
/// the same data and scored on the glyph-free paired test split.
struct DeskConfig {
  std::filesystem::path root;  // world and runs are cached here
  int resolution = 64;
  int n_train_per_domain = 300;
  int n_test_pairs = 200;
  double unmatchable_ratio = 0.4;
  int epochs = 60;
  int batch_size = 1;
  int ngf = 16;
  int ndf = 16;
  int disc_layers = 2;  // receptive field 34 fits the 64-pixel images
  double learning_rate = 0.0002;
  double stego_lambda_reg = 0.3;
  std::uint64_t seed = 7;
  std::vector<double> probe_amplitudes = {0.0, 0.01};
};

struct DeskRunMetrics {
  std::string name;
  FalsePositiveRates fpr;
  DistributionScores dist;
  double rmse = 0;
  std::optional<MaskQuality> masks;
  std::vector<ProbeRow> probe;
  long iterations = 0;
};

struct DeskResults {
  DeskRunMetrics baseline, stego, stego_noreg;
};

TrainConfig desk_train_config(const DeskConfig& d, ModelKind kind, double lambda_reg);

// Builds or reuses the world, trains or resumes each run, then scores all three.
DeskResults run_desk_benchmark(const DeskConfig& d, bool verbose = false);

DeskRunMetrics evaluate_desk_run(const DeskConfig& d, const std::string& name,
                                 const std::filesystem::path& checkpoint);

std::string format_desk_results(const DeskResults& r);

}  // namespace stegogan
