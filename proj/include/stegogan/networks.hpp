#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace stegogan {

constexpr int kResidualBlocks = 9;

struct GeneratorOptions {
  int in_channels = 3;
  int out_channels = 3;
  int ngf = 64;
  // Index of the last residual block that belongs to the encoder; -1 keeps
  // every block in the decoder, 8 keeps none.
  int split_depth = 1;
};

class ResnetBlockImpl : public torch::nn::Module {
 public:
  explicit ResnetBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential block_{nullptr};
};
TORCH_MODULE(ResnetBlock);

/// ResNet-9 generator cut into an encoder and a decoder.
///
/// Layout: reflection-padded 7×7 stem, two stride-2 downsampling convs,
/// nine residual blocks at 4·ngf channels, two transposed-conv upsampling
/// stages and a 7×7 output conv with tanh. The encoder holds the stem plus
/// residual blocks [0, split_depth]; the decoder holds the rest. The latent
/// FeatureMap therefore always has 4·ngf channels at a quarter of the input
/// resolution, whatever the split.
class SplitGeneratorImpl : public torch::nn::Module {
 public:
  explicit SplitGeneratorImpl(const GeneratorOptions& opts);

  torch::Tensor encode(const torch::Tensor& x);
  torch::Tensor decode(const torch::Tensor& z);
  torch::Tensor forward(const torch::Tensor& x) { return decode(encode(x)); }

  const GeneratorOptions& options() const { return opts_; }
  std::int64_t latent_channels() const { return 4LL * opts_.ngf; }
  int encoder_blocks() const { return opts_.split_depth + 1; }
  int decoder_blocks() const { return kResidualBlocks - encoder_blocks(); }

 private:
  GeneratorOptions opts_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(SplitGenerator);

// Unsplit reference generator with the same layers in the same order.
class ResnetGeneratorImpl : public torch::nn::Module {
 public:
  ResnetGeneratorImpl(int in_channels, int out_channels, int ngf);
  torch::Tensor forward(const torch::Tensor& x) { return model_->forward(x); }

 private:
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(ResnetGenerator);

// Three channel-preserving 3×3 convs, ReLU between, sigmoid at the end.
class MaskPredictorImpl : public torch::nn::Module {
 public:
  explicit MaskPredictorImpl(std::int64_t latent_channels);
  torch::Tensor forward(const torch::Tensor& z);

 private:
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(MaskPredictor);

/// PatchGAN discriminator with `n_layers` stride-2 stages.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  PatchDiscriminatorImpl(int in_channels, int ndf = 64, int n_layers = 3);
  torch::Tensor forward(const torch::Tensor& img) { return net_->forward(img); }

  // Receptive field of one output score in input pixels (70 for n_layers=3).
  int receptive_field() const { return receptive_field_; }

 private:
  torch::nn::Sequential net_{nullptr};
  int receptive_field_ = 0;
};
TORCH_MODULE(PatchDiscriminator);

int patch_receptive_field(int n_layers);

SplitGenerator build_generator(int in_channels, int out_channels, int split_depth, int ngf = 64);
MaskPredictor build_mask_predictor(std::int64_t latent_channels);

// Score map of an N×C×H×W batch; throws when the image is smaller than the
// discriminator's receptive field.
torch::Tensor discriminate(PatchDiscriminator& d, const torch::Tensor& img);

// Gaussian(0, 0.02) conv weights, zero biases.
void init_weights(torch::nn::Module& module);

// Copies parameters in registration order; shapes must agree.
void copy_parameters(torch::nn::Module& from, torch::nn::Module& to);

// FNV-1a over every parameter's bytes.
std::uint64_t parameter_hash(const torch::nn::Module& module);

enum class ModelKind { StegoGan, CycleGan };

struct ModelOptions {
  ModelKind kind = ModelKind::StegoGan;
  int image_channels = 3;
  int ngf = 64;
  int ndf = 64;
  int disc_layers = 3;
  int encoder_depth = 8;
};

/// The five trainable networks of one model. For ModelKind::CycleGan the
/// mask predictor is absent.
class CycleNetworksImpl : public torch::nn::Module {
 public:
  explicit CycleNetworksImpl(const ModelOptions& opts);

  const ModelOptions& options() const { return opts_; }
  bool has_mask() const { return opts_.kind == ModelKind::StegoGan; }

  std::vector<torch::Tensor> generator_parameters();
  std::vector<torch::Tensor> discriminator_parameters();

  SplitGenerator g_xy{nullptr};
  SplitGenerator g_yx{nullptr};
  MaskPredictor mask{nullptr};
  PatchDiscriminator d_x{nullptr};
  PatchDiscriminator d_y{nullptr};

 private:
  ModelOptions opts_;
};
TORCH_MODULE(CycleNetworks);

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

}  // namespace stegogan
