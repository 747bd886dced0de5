#include "stegogan/stego_cycle.hpp"

#include <stdexcept>

#include <ATen/CPUGeneratorImpl.h>

#include "stegogan/domain.hpp"

namespace F = torch::nn::functional;

namespace stegogan {

Disentangled disentangle(const torch::Tensor& z, const torch::Tensor& m) {
  if (!z.sizes().equals(m.sizes())) throw std::invalid_argument("disentangle: mask and feature map shapes differ");
  return {m * z, (1 - m) * z};
}

torch::Tensor perturb(const torch::Tensor& img, double amplitude, torch::Generator& gen) {
  if (amplitude < 0) throw std::invalid_argument("perturb: amplitude must be non-negative");
  if (amplitude == 0) return img;
  auto noise = torch::randn(img.sizes(), gen, img.options().requires_grad(false));
  return img + noise * amplitude;
}

TranslationBundle backward_cycle(const torch::Tensor& y, CycleNetworks& nets, double amplitude,
                                 torch::Generator& gen) {
  TranslationBundle b;
  b.y = y;
  if (!nets->has_mask()) {
    b.x_gen = nets->g_yx->forward(y);
    b.y_rec = nets->g_xy->forward(perturb(b.x_gen, amplitude, gen));
    b.y_rec_clean = b.y_rec;
    return b;
  }
  b.z_gen = nets->g_yx->encode(y);
  b.m_gen = nets->mask->forward(b.z_gen);
  auto parts = disentangle(b.z_gen, b.m_gen);
  b.z_gen_unmatch = parts.unmatch;
  b.z_gen_match = parts.match;
  b.x_gen = nets->g_yx->decode(b.z_gen_match);
  b.y_rec_clean = nets->g_xy->forward(b.x_gen);
  auto z_noisy = nets->g_xy->encode(perturb(b.x_gen, amplitude, gen));
  if (!z_noisy.sizes().equals(b.z_gen_unmatch.sizes()))
    throw ConfigError("backward cycle: latent shapes of the two generators differ");
  b.y_rec = nets->g_xy->decode(z_noisy + b.z_gen_unmatch);
  return b;
}

void forward_cycle(TranslationBundle& b, const torch::Tensor& x, CycleNetworks& nets) {
  b.x = x;
  if (!nets->has_mask()) {
    b.y_gen = nets->g_xy->forward(x);
    b.y_gen_clean = b.y_gen;
    b.x_rec = nets->g_yx->forward(b.y_gen);
    return;
  }
  auto z_x = nets->g_xy->encode(x);
  if (!b.z_gen_unmatch.defined() || !z_x.sizes().equals(b.z_gen_unmatch.sizes()))
    throw std::invalid_argument("forward cycle: z_gen_unmatch shape does not match the encoder output");
  b.y_gen = nets->g_xy->decode(z_x + b.z_gen_unmatch);
  b.y_gen_clean = nets->g_xy->decode(z_x);
  b.z_rec = nets->g_yx->encode(b.y_gen);
  b.m_rec = nets->mask->forward(b.z_rec);
  b.x_rec = nets->g_yx->decode((1 - b.m_rec) * b.z_rec);
}

TranslationBundle run_cycles(const torch::Tensor& x, const torch::Tensor& y, CycleNetworks& nets, double amplitude,
                             torch::Generator& gen) {
  auto b = backward_cycle(y, nets, amplitude, gen);
  forward_cycle(b, x, nets);
  return b;
}

torch::Tensor consistency_mask(const torch::Tensor& m, std::int64_t height, std::int64_t width) {
  if (m.dim() != 4) throw std::invalid_argument("consistency_mask: expected N×C×h×w mask");
  if (height < m.size(2) || width < m.size(3))
    throw std::invalid_argument("consistency_mask: target resolution is smaller than the mask");
  auto flipped = 1 - std::get<0>(m.max(/*dim=*/1, /*keepdim=*/true));
  return F::interpolate(flipped, F::InterpolateFuncOptions()
                                     .size(std::vector<std::int64_t>{height, width})
                                     .mode(torch::kNearest));
}

torch::Tensor translate(const torch::Tensor& x, CycleNetworks& nets) {
  torch::NoGradGuard no_grad;
  return nets->g_xy->forward(x);
}

torch::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

}  // namespace stegogan
