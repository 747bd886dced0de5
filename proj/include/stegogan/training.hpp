#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stegogan/domain.hpp"
#include "stegogan/networks.hpp"
#include "stegogan/objectives.hpp"
#include "stegogan/stego_cycle.hpp"

namespace stegogan {

enum class LrSchedule { Constant, LinearDecay };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);

/// Everything a training run depends on. Serialised as `key=value` lines
/// whose keys are the field names below (Hyperparameters fields flattened).
struct TrainConfig {
  Hyperparameters hp;
  GanMode gan_mode = GanMode::LSGAN;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // 0: only the per-epoch checkpoint
  LrSchedule lr_schedule = LrSchedule::Constant;
  int pool_size = 50;
  bool adv_on_clean = true;
  RegReduction reg_reduction = RegReduction::Mean;

  ModelKind model = ModelKind::StegoGan;
  int ngf = 64;
  int ndf = 64;
  int disc_layers = 3;
  long max_iterations = 0;  // 0: no cap

  void validate() const;
  ModelOptions model_options(int image_channels) const;
};

std::string format_config(const TrainConfig& cfg);
// Keys absent from `text` keep their value from `base`. Unknown keys throw.
TrainConfig parse_config(const std::string& text, const TrainConfig& base = {});
TrainConfig read_config(const std::filesystem::path& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Replay buffer of past fakes for discriminator updates.
///
/// Until full, every incoming image is stored and returned. Afterwards each
/// image is either returned as is or, with probability ½, swapped for a
/// uniformly chosen stored image which is returned in its place.
class ImagePool {
 public:
  explicit ImagePool(int capacity) : capacity_(capacity) {}

  torch::Tensor query(const torch::Tensor& batch, std::mt19937_64& rng);

  int capacity() const { return capacity_; }
  std::size_t size() const { return images_.size(); }
  // Stacked N×C×H×W copy of the stored images (empty tensor when none).
  torch::Tensor state() const;
  void restore(const torch::Tensor& stacked);

 private:
  int capacity_;
  std::vector<torch::Tensor> images_;
};

// Training images stacked per domain, normalised to [-1, 1].
struct TrainingData {
  torch::Tensor sources;  // X
  torch::Tensor targets;  // Y
  int channels() const { return static_cast<int>(sources.size(1)); }
};

TrainingData load_training_data(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainingData data);

  // One generator update followed by one discriminator update.
  LossReport step();

  long iteration() const { return iteration_; }
  long iterations_per_epoch() const;
  long total_iterations() const;
  bool finished() const { return iteration_ >= total_iterations(); }

  // Learning-rate multiplier for the epoch containing `iteration`.
  double lr_factor(long iteration) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores networks, optimisers, pools, RNG streams and the iteration
  // counter. Throws ConfigError when the architecture disagrees.
  void load_checkpoint(const std::filesystem::path& path);

  CycleNetworks& networks() { return nets_; }
  const TrainConfig& config() const { return cfg_; }

  // Where a non-finite loss dumps the offending bundle before throwing.
  void set_nan_dump_path(std::filesystem::path p) { nan_dump_ = std::move(p); }

  enum class Phase { Start, AfterGenerator, AfterDiscriminator };
  // Called at the three phase boundaries of every step.
  void set_phase_observer(std::function<void(Phase)> f) { observer_ = std::move(f); }

  // Hashes of the two parameter groups, for phase-isolation checks.
  std::uint64_t generator_hash();
  std::uint64_t discriminator_hash();

 private:
  void set_discriminators_trainable(bool on);
  void apply_lr(long iteration);
  [[noreturn]] void abort_on_nan(const TranslationBundle& b, const std::string& why);

  TrainConfig cfg_;
  TrainingData data_;
  CycleNetworks nets_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  ImagePool pool_x_, pool_y_, pool_y_clean_;
  std::mt19937_64 rng_;
  torch::Generator noise_;
  long iteration_ = 0;
  std::filesystem::path nan_dump_ = "nan_dump.pt";
  std::function<void(Phase)> observer_;
};

constexpr std::int64_t kCheckpointSchema = 1;

void save_bundle(const TranslationBundle& b, const std::filesystem::path& path);

struct LoadedModel {
  TrainConfig config;
  int image_channels = 3;
  long iteration = 0;
  CycleNetworks nets{nullptr};
};

// Networks only, in eval mode, for translation and evaluation.
LoadedModel load_model(const std::filesystem::path& checkpoint);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
  long iterations_run = 0;
  long final_iteration = 0;
  std::vector<LossReport> reports;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  bool deterministic = false;
  bool quiet = true;
};

/// Runs (or continues) training and writes into `out_dir`:
/// checkpoint.pt (refreshed every epoch and at the end),
/// checkpoint_<iter>.pt every `checkpoint_every` iterations, and
/// loss_log.txt with one line per iteration (appended to on resume).
TrainResult train(const std::filesystem::path& manifest_path, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const TrainOptions& opts = {});

void set_deterministic(bool on);

}  // namespace stegogan
