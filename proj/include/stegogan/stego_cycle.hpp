#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "stegogan/networks.hpp"

namespace stegogan {

/// Every artifact of one backward + forward pass. All tensors are batched
/// (N×C×H×W). Mask and latent fields stay undefined for the CycleGAN
/// baseline, where the clean fields alias the plain ones.
struct TranslationBundle {
  torch::Tensor x, y;

  // Backward cycle: y -> x_gen -> y_rec.
  torch::Tensor z_gen, m_gen, z_gen_unmatch, z_gen_match;
  torch::Tensor x_gen, y_rec_clean, y_rec;

  // Forward cycle: x -> y_gen -> x_rec.
  torch::Tensor y_gen, y_gen_clean, z_rec, m_rec, x_rec;

  // Identity mappings G_YtoX(x) and G_XtoY(y); only filled when needed.
  torch::Tensor idt_x, idt_y;
};

struct Disentangled {
  torch::Tensor unmatch;
  torch::Tensor match;
};

// unmatch = m ⊙ z, match = (1 - m) ⊙ z.
Disentangled disentangle(const torch::Tensor& z, const torch::Tensor& m);

// img + N(0, amplitude²) per element, not clamped.
torch::Tensor perturb(const torch::Tensor& img, double amplitude, torch::Generator& gen);

// The baseline perturbs x_gen too; its training config sets the amplitude to 0.
TranslationBundle backward_cycle(const torch::Tensor& y, CycleNetworks& nets, double amplitude,
                                 torch::Generator& gen);

// Fills the forward-cycle fields of `bundle` from x and bundle.z_gen_unmatch.
void forward_cycle(TranslationBundle& bundle, const torch::Tensor& x, CycleNetworks& nets);

// Backward cycle first, then the forward cycle consuming its unmatchable
// features. Gradients flow through both as one graph.
TranslationBundle run_cycles(const torch::Tensor& x, const torch::Tensor& y, CycleNetworks& nets, double amplitude,
                             torch::Generator& gen);

/// I(m): 1 - channel-max of m, nearest-upsampled to height×width.
/// m is N×C×h×w; the result is N×1×height×width.
torch::Tensor consistency_mask(const torch::Tensor& m, std::int64_t height, std::int64_t width);

// Inference: G_XtoY(x) with no mask and no injected features.
torch::Tensor translate(const torch::Tensor& x, CycleNetworks& nets);

torch::Generator make_generator(std::uint64_t seed);

}  // namespace stegogan
