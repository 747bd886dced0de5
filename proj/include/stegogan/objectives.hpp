#pragma once

#include <string>

#include <torch/torch.h>

#include "stegogan/domain.hpp"
#include "stegogan/stego_cycle.hpp"

namespace stegogan {

enum class GanMode { LSGAN, Vanilla };
enum class AdversarialRole { Generator, Discriminator };

std::string to_string(GanMode mode);
GanMode parse_gan_mode(const std::string& s);

// How the L½ penalty is aggregated over a mask: the mean over every element,
// or the sum over channels averaged over batch and pixels.
enum class RegReduction { Mean, ChannelSum };

std::string to_string(RegReduction r);
RegReduction parse_reg_reduction(const std::string& s);

/// Least-squares form by default:
///   discriminator: ½·mean((d_real − 1)²) + ½·mean(d_fake²)
///   generator:     mean((d_fake − 1)²)
/// Vanilla mode uses the same structure with binary cross-entropy on logits.
/// d_real is ignored (and may be undefined) for the generator role.
torch::Tensor adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake, AdversarialRole role,
                               GanMode mode = GanMode::LSGAN);

// mean|x_rec − x| + mean|y_rec − y|.
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec, const torch::Tensor& y,
                         const torch::Tensor& y_rec);

// mean|G_YtoX(x) − x| + mean|G_XtoY(y) − y|.
torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& g_yx_of_x, const torch::Tensor& y,
                            const torch::Tensor& g_xy_of_y);

// mean(|m_gen|^½) + mean(|m_rec|^½). Negative entries are a contract
// violation and throw. The gradient at exactly zero is taken as zero.
// ChannelSum scales each term by the channel count.
torch::Tensor mask_regularization(const torch::Tensor& m_gen, const torch::Tensor& m_rec,
                                  RegReduction reduction = RegReduction::Mean);

// mean(I(m_gen) ⊙ |y_gen − y_gen_clean|) + mean(I(m_rec) ⊙ |y_rec − y_rec_clean|),
// consistency masks broadcast over colour channels.
torch::Tensor matchable_consistency_loss(const TranslationBundle& bundle);

struct LossReport {
  double gan = 0, cyc = 0, id = 0, reg = 0, match = 0;
  double total_gen = 0;
  double total_disc = 0;

  bool finite() const;
};

// Discriminator outputs on generated images, taken with D frozen.
struct DiscriminatorScores {
  torch::Tensor x_gen;        // D_X(x_gen)
  torch::Tensor y_gen;        // D_Y(y_gen)
  torch::Tensor y_gen_clean;  // D_Y(y_gen_clean); undefined to skip
};

struct GeneratorObjective {
  torch::Tensor total;
  torch::Tensor gan, cyc, id, reg, match;
  LossReport report;
};

/// total = gan + λ_cyc·cyc + λ_id·λ_cyc·id + λ_reg·reg + λ_match·match.
///
/// The two D_Y terms are averaged when the clean translation is scored too,
/// so the adversarial weight on G_XtoY matches the baseline. Identity is
/// skipped when the bundle has no identity fields; reg and match are zero
/// for bundles without masks. Throws NanAbort on a non-finite component.
GeneratorObjective total_generator_loss(const TranslationBundle& bundle, const DiscriminatorScores& scores,
                                        const Hyperparameters& hp, GanMode mode = GanMode::LSGAN,
                                        RegReduction reduction = RegReduction::Mean);

torch::Tensor discriminator_loss(PatchDiscriminator& d, const torch::Tensor& real_batch,
                                 const torch::Tensor& fake_batch, GanMode mode = GanMode::LSGAN);

// `iter gan cyc id reg match total_gen total_disc`
std::string format_loss_line(long iteration, const LossReport& r);

}  // namespace stegogan
