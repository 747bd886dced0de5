#include "stegogan/networks.hpp"

#include <cstring>
#include <stdexcept>

#include "stegogan/domain.hpp"

namespace nn = torch::nn;

namespace stegogan {

namespace {

nn::Conv2d conv(int in, int out, int k, int stride, int pad, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

nn::InstanceNorm2d inorm(int ch) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch).affine(false)); }

// Layers shared by the split and unsplit generators, in forward order.
struct GeneratorLayers {
  nn::Sequential stem;
  std::vector<ResnetBlock> blocks;
  nn::Sequential head;
};

GeneratorLayers make_generator_layers(int in_channels, int out_channels, int ngf) {
  GeneratorLayers g;
  g.stem = nn::Sequential(nn::ReflectionPad2d(3), conv(in_channels, ngf, 7, 1, 0), inorm(ngf), nn::ReLU(true));
  for (int i = 0; i < 2; ++i) {
    const int mult = 1 << i;
    g.stem->push_back(conv(ngf * mult, ngf * mult * 2, 3, 2, 1));
    g.stem->push_back(inorm(ngf * mult * 2));
    g.stem->push_back(nn::ReLU(true));
  }
  for (int i = 0; i < kResidualBlocks; ++i) g.blocks.emplace_back(ngf * 4);
  g.head = nn::Sequential();
  for (int i = 0; i < 2; ++i) {
    const int mult = 1 << (2 - i);
    g.head->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(ngf * mult, ngf * mult / 2, 3).stride(2).padding(1).output_padding(1)));
    g.head->push_back(inorm(ngf * mult / 2));
    g.head->push_back(nn::ReLU(true));
  }
  g.head->push_back(nn::ReflectionPad2d(3));
  g.head->push_back(conv(ngf, out_channels, 7, 1, 0));
  g.head->push_back(nn::Tanh());
  return g;
}

void append(nn::Sequential& dst, const nn::Sequential& src) {
  for (const auto& any : *src) dst->push_back(any);
}

}  // namespace

ResnetBlockImpl::ResnetBlockImpl(int channels) {
  block_ = register_module("block", nn::Sequential(nn::ReflectionPad2d(1), conv(channels, channels, 3, 1, 0),
                                                   inorm(channels), nn::ReLU(true), nn::ReflectionPad2d(1),
                                                   conv(channels, channels, 3, 1, 0), inorm(channels)));
}

torch::Tensor ResnetBlockImpl::forward(const torch::Tensor& x) { return x + block_->forward(x); }

SplitGeneratorImpl::SplitGeneratorImpl(const GeneratorOptions& opts) : opts_(opts) {
  if (opts.split_depth < -1 || opts.split_depth > kResidualBlocks - 1)
    throw std::invalid_argument("build_generator: split_depth must lie in [-1, 8], got " +
                                std::to_string(opts.split_depth));
  if (opts.ngf <= 0) throw std::invalid_argument("build_generator: ngf must be positive");
  auto layers = make_generator_layers(opts.in_channels, opts.out_channels, opts.ngf);
  nn::Sequential enc, dec;
  append(enc, layers.stem);
  for (int i = 0; i < kResidualBlocks; ++i) {
    if (i <= opts.split_depth) enc->push_back(layers.blocks[i]);
    else dec->push_back(layers.blocks[i]);
  }
  append(dec, layers.head);
  encoder_ = register_module("encoder", enc);
  decoder_ = register_module("decoder", dec);
}

torch::Tensor SplitGeneratorImpl::encode(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != opts_.in_channels)
    throw std::invalid_argument("generator: expected N×" + std::to_string(opts_.in_channels) + "×H×W input");
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0)
    throw std::invalid_argument("generator: spatial size must be divisible by 4");
  return encoder_->forward(x);
}

torch::Tensor SplitGeneratorImpl::decode(const torch::Tensor& z) {
  if (z.dim() != 4 || z.size(1) != latent_channels())
    throw std::invalid_argument("generator: latent must have " + std::to_string(latent_channels()) + " channels");
  return decoder_->forward(z);
}

ResnetGeneratorImpl::ResnetGeneratorImpl(int in_channels, int out_channels, int ngf) {
  auto layers = make_generator_layers(in_channels, out_channels, ngf);
  nn::Sequential all;
  append(all, layers.stem);
  for (auto& b : layers.blocks) all->push_back(b);
  append(all, layers.head);
  model_ = register_module("model", all);
}

MaskPredictorImpl::MaskPredictorImpl(std::int64_t c) {
  const int ch = static_cast<int>(c);
  net_ = register_module("net", nn::Sequential(conv(ch, ch, 3, 1, 1), nn::ReLU(true), conv(ch, ch, 3, 1, 1),
                                               nn::ReLU(true), conv(ch, ch, 3, 1, 1), nn::Sigmoid()));
}

torch::Tensor MaskPredictorImpl::forward(const torch::Tensor& z) { return net_->forward(z); }

int patch_receptive_field(int n_layers) {
  // Two stride-1 4×4 convs, then n_layers stride-2 4×4 convs, walked backwards.
  int rf = 1;
  rf += 3;
  rf += 3;
  for (int i = 0; i < n_layers; ++i) rf = (rf - 1) * 2 + 4;
  return rf;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int in_channels, int ndf, int n_layers) {
  if (n_layers < 1) throw std::invalid_argument("discriminator: n_layers must be at least 1");
  nn::Sequential s(conv(in_channels, ndf, 4, 2, 1), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  int mult = 1;
  for (int n = 1; n < n_layers; ++n) {
    const int prev = mult;
    mult = std::min(1 << n, 8);
    s->push_back(conv(ndf * prev, ndf * mult, 4, 2, 1));
    s->push_back(inorm(ndf * mult));
    s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  const int prev = mult;
  mult = std::min(1 << n_layers, 8);
  s->push_back(conv(ndf * prev, ndf * mult, 4, 1, 1));
  s->push_back(inorm(ndf * mult));
  s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  s->push_back(conv(ndf * mult, 1, 4, 1, 1));
  net_ = register_module("net", s);
  receptive_field_ = patch_receptive_field(n_layers);
}

SplitGenerator build_generator(int in_channels, int out_channels, int split_depth, int ngf) {
  SplitGenerator g(GeneratorOptions{in_channels, out_channels, ngf, split_depth});
  init_weights(*g);
  return g;
}

MaskPredictor build_mask_predictor(std::int64_t latent_channels) {
  MaskPredictor m(latent_channels);
  init_weights(*m);
  return m;
}

torch::Tensor discriminate(PatchDiscriminator& d, const torch::Tensor& img) {
  if (img.dim() != 4) throw std::invalid_argument("discriminate: expected N×C×H×W batch");
  const int rf = d->receptive_field();
  if (img.size(2) < rf || img.size(3) < rf)
    throw std::invalid_argument("discriminate: image " + std::to_string(img.size(2)) + "×" +
                                std::to_string(img.size(3)) + " is smaller than the " + std::to_string(rf) +
                                "-pixel receptive field");
  return d->forward(img);
}

void init_weights(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::normal_(c->weight, 0.0, 0.02);
      if (c->bias.defined()) nn::init::zeros_(c->bias);
    } else if (auto* t = m->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(t->weight, 0.0, 0.02);
      if (t->bias.defined()) nn::init::zeros_(t->bias);
    }
  }
}

void copy_parameters(nn::Module& from, nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw std::invalid_argument("copy_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i].sizes().equals(dst[i].sizes())) throw std::invalid_argument("copy_parameters: shape mismatch");
    dst[i].copy_(src[i]);
  }
}

std::uint64_t parameter_hash(const nn::Module& module) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : module.parameters()) {
    auto c = p.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const std::size_t n = c.numel() * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

CycleNetworksImpl::CycleNetworksImpl(const ModelOptions& opts) : opts_(opts) {
  const int c = opts.image_channels;
  if (c != 1 && c != 3) throw std::invalid_argument("networks: image_channels must be 1 or 3");
  g_xy = register_module("G_XtoY", build_generator(c, c, opts.encoder_depth, opts.ngf));
  g_yx = register_module("G_YtoX", build_generator(c, c, opts.encoder_depth, opts.ngf));
  if (has_mask()) mask = register_module("M", build_mask_predictor(g_yx->latent_channels()));
  d_x = register_module("D_X", PatchDiscriminator(c, opts.ndf, opts.disc_layers));
  d_y = register_module("D_Y", PatchDiscriminator(c, opts.ndf, opts.disc_layers));
  init_weights(*d_x);
  init_weights(*d_y);
}

std::vector<torch::Tensor> CycleNetworksImpl::generator_parameters() {
  auto params = g_xy->parameters();
  auto more = g_yx->parameters();
  params.insert(params.end(), more.begin(), more.end());
  if (has_mask()) {
    auto mp = mask->parameters();
    params.insert(params.end(), mp.begin(), mp.end());
  }
  return params;
}

std::vector<torch::Tensor> CycleNetworksImpl::discriminator_parameters() {
  auto params = d_x->parameters();
  auto more = d_y->parameters();
  params.insert(params.end(), more.begin(), more.end());
  return params;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::StegoGan ? "stegogan" : "cyclegan"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "stegogan") return ModelKind::StegoGan;
  if (s == "cyclegan") return ModelKind::CycleGan;
  throw ConfigError("unknown model kind '" + s + "'");
}

}  // namespace stegogan
