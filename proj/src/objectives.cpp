#include "stegogan/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace stegogan {

std::string to_string(GanMode mode) { return mode == GanMode::LSGAN ? "lsgan" : "vanilla"; }

GanMode parse_gan_mode(const std::string& s) {
  if (s == "lsgan") return GanMode::LSGAN;
  if (s == "vanilla") return GanMode::Vanilla;
  throw ConfigError("unknown gan_mode '" + s + "'");
}

namespace {

torch::Tensor toward(const torch::Tensor& scores, double target, GanMode mode) {
  if (mode == GanMode::LSGAN) return (scores - target).pow(2).mean();
  return F::binary_cross_entropy_with_logits(scores, torch::full_like(scores, target));
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// sqrt(m) with a zero gradient where m == 0.
torch::Tensor safe_sqrt(const torch::Tensor& m) {
  auto positive = m > 0;
  auto safe = torch::where(positive, m, torch::ones_like(m));
  return torch::where(positive, safe.sqrt(), torch::zeros_like(m));
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.detach().item<double>() : 0.0; }

}  // namespace

torch::Tensor adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake, AdversarialRole role,
                               GanMode mode) {
  if (role == AdversarialRole::Generator) return toward(d_fake, 1.0, mode);
  return 0.5 * toward(d_real, 1.0, mode) + 0.5 * toward(d_fake, 0.0, mode);
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec, const torch::Tensor& y,
                         const torch::Tensor& y_rec) {
  require_same_shape(x, x_rec, "cycle_loss");
  require_same_shape(y, y_rec, "cycle_loss");
  return (x_rec - x).abs().mean() + (y_rec - y).abs().mean();
}

torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& g_yx_of_x, const torch::Tensor& y,
                            const torch::Tensor& g_xy_of_y) {
  require_same_shape(x, g_yx_of_x, "identity_loss");
  require_same_shape(y, g_xy_of_y, "identity_loss");
  return (g_yx_of_x - x).abs().mean() + (g_xy_of_y - y).abs().mean();
}

std::string to_string(RegReduction r) { return r == RegReduction::Mean ? "mean" : "channel_sum"; }

RegReduction parse_reg_reduction(const std::string& s) {
  if (s == "mean") return RegReduction::Mean;
  if (s == "channel_sum") return RegReduction::ChannelSum;
  throw ConfigError("unknown reg_reduction '" + s + "' (expected mean or channel_sum)");
}

torch::Tensor mask_regularization(const torch::Tensor& m_gen, const torch::Tensor& m_rec, RegReduction reduction) {
  const auto term = [&](const torch::Tensor& m) {
    if (m.numel() > 0 && m.detach().min().item<double>() < 0)
      throw std::invalid_argument("mask_regularization: negative mask value");
    auto r = safe_sqrt(m).mean();
    return reduction == RegReduction::ChannelSum && m.dim() == 4 ? r * static_cast<double>(m.size(1)) : r;
  };
  return term(m_gen) + term(m_rec);
}

torch::Tensor matchable_consistency_loss(const TranslationBundle& b) {
  if (!b.m_gen.defined() || !b.m_rec.defined() || !b.y_gen.defined() || !b.y_gen_clean.defined() ||
      !b.y_rec.defined() || !b.y_rec_clean.defined())
    throw std::invalid_argument("matchable_consistency_loss: bundle is missing fields");
  require_same_shape(b.y_gen, b.y_gen_clean, "matchable_consistency_loss");
  require_same_shape(b.y_rec, b.y_rec_clean, "matchable_consistency_loss");
  auto i_gen = consistency_mask(b.m_gen, b.y_gen.size(2), b.y_gen.size(3));
  auto i_rec = consistency_mask(b.m_rec, b.y_rec.size(2), b.y_rec.size(3));
  return (i_gen * (b.y_gen - b.y_gen_clean).abs()).mean() + (i_rec * (b.y_rec - b.y_rec_clean).abs()).mean();
}

bool LossReport::finite() const {
  for (double v : {gan, cyc, id, reg, match, total_gen, total_disc})
    if (!std::isfinite(v)) return false;
  return true;
}

GeneratorObjective total_generator_loss(const TranslationBundle& b, const DiscriminatorScores& scores,
                                        const Hyperparameters& hp, GanMode mode, RegReduction reduction) {
  GeneratorObjective out;
  const auto gen = AdversarialRole::Generator;
  torch::Tensor none;
  auto adv_y = adversarial_loss(none, scores.y_gen, gen, mode);
  if (scores.y_gen_clean.defined()) adv_y = 0.5 * (adv_y + adversarial_loss(none, scores.y_gen_clean, gen, mode));
  out.gan = adv_y + adversarial_loss(none, scores.x_gen, gen, mode);
  out.cyc = cycle_loss(b.x, b.x_rec, b.y, b.y_rec);

  auto zero = torch::zeros({}, out.gan.options());
  out.id = (b.idt_x.defined() && b.idt_y.defined()) ? identity_loss(b.x, b.idt_x, b.y, b.idt_y) : zero;
  const bool masked = b.m_gen.defined() && b.m_rec.defined();
  out.reg = masked ? mask_regularization(b.m_gen, b.m_rec, reduction) : zero;
  out.match = masked ? matchable_consistency_loss(b) : zero;

  out.total = out.gan + hp.lambda_cyc * out.cyc + (hp.lambda_id * hp.lambda_cyc) * out.id +
              hp.lambda_reg * out.reg + hp.lambda_match * out.match;

  out.report.gan = scalar(out.gan);
  out.report.cyc = scalar(out.cyc);
  out.report.id = scalar(out.id);
  out.report.reg = scalar(out.reg);
  out.report.match = scalar(out.match);
  out.report.total_gen = scalar(out.total);
  if (!out.report.finite()) throw NanAbort("non-finite generator loss: " + format_loss_line(-1, out.report));
  return out;
}

torch::Tensor discriminator_loss(PatchDiscriminator& d, const torch::Tensor& real_batch,
                                 const torch::Tensor& fake_batch, GanMode mode) {
  auto d_real = discriminate(d, real_batch);
  auto d_fake = discriminate(d, fake_batch.detach());
  return adversarial_loss(d_real, d_fake, AdversarialRole::Discriminator, mode);
}

std::string format_loss_line(long iteration, const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld %.9g %.9g %.9g %.9g %.9g %.9g %.9g", iteration, r.gan, r.cyc, r.id, r.reg,
                r.match, r.total_gen, r.total_disc);
  return buf;
}

}  // namespace stegogan
