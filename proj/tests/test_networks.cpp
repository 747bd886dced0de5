#include <gtest/gtest.h>

#include "stegogan/networks.hpp"
#include "test_support.hpp"

using namespace stegogan;

TEST(SplitGenerator, LatentShapeIsIndependentOfDepth) {
  torch::NoGradGuard no_grad;
  auto x = torch::rand({1, 3, 32, 32}) * 2 - 1;
  for (int d = -1; d <= 8; ++d) {
    auto g = build_generator(3, 3, d, 8);
    auto z = g->encode(x);
    EXPECT_EQ(z.sizes(), (std::vector<std::int64_t>{1, 32, 8, 8})) << "depth " << d;
    EXPECT_EQ(g->encoder_blocks() + g->decoder_blocks(), kResidualBlocks);
    EXPECT_EQ(g->decode(z).sizes(), x.sizes());
  }
}

TEST(SplitGenerator, FullSizeLatentIs256By64By64) {
  torch::NoGradGuard no_grad;
  auto g = build_generator(3, 3, -1, 64);
  auto z = g->encode(torch::zeros({1, 3, 256, 256}));
  EXPECT_EQ(z.sizes(), (std::vector<std::int64_t>{1, 256, 64, 64}));
}

TEST(SplitGenerator, DepthMovesBlocksBetweenHalves) {
  EXPECT_EQ(build_generator(3, 3, -1, 4)->encoder_blocks(), 0);
  EXPECT_EQ(build_generator(3, 3, 8, 4)->decoder_blocks(), 0);
  EXPECT_EQ(build_generator(3, 3, 1, 4)->encoder_blocks(), 2);
  EXPECT_THROW(build_generator(3, 3, 9, 4), std::invalid_argument);
  EXPECT_THROW(build_generator(3, 3, -2, 4), std::invalid_argument);
}

TEST(SplitGenerator, EverySplitComputesTheUnsplitNetwork) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(5);
  ResnetGenerator reference(3, 3, 4);
  init_weights(*reference);
  auto x = torch::rand({2, 3, 16, 16}) * 2 - 1;
  const auto expected = reference->forward(x);
  for (int d = -1; d <= 8; ++d) {
    auto g = build_generator(3, 3, d, 4);
    copy_parameters(*reference, *g);
    EXPECT_TRUE(torch::equal(g->forward(x), expected)) << "depth " << d;
  }
}

TEST(SplitGenerator, RejectsBadInput) {
  auto g = build_generator(3, 3, 2, 4);
  EXPECT_THROW(g->encode(torch::zeros({1, 1, 16, 16})), std::invalid_argument);
  EXPECT_THROW(g->encode(torch::zeros({1, 3, 18, 16})), std::invalid_argument);
  EXPECT_THROW(g->decode(torch::zeros({1, 8, 4, 4})), std::invalid_argument);
}

TEST(SplitGenerator, OutputInTanhRange) {
  torch::NoGradGuard no_grad;
  auto g = build_generator(3, 3, 4, 4);
  auto y = g->forward(torch::randn({2, 3, 16, 16}) * 5);
  EXPECT_LE(y.abs().max().item<double>(), 1.0);
}

TEST(MaskPredictor, PreservesShapeAndRange) {
  torch::NoGradGuard no_grad;
  auto m = build_mask_predictor(16);
  auto out = m->forward(torch::randn({2, 16, 5, 7}) * 10);
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 16, 5, 7}));
  EXPECT_GE(out.min().item<double>(), 0.0);
  EXPECT_LE(out.max().item<double>(), 1.0);
}

TEST(PatchDiscriminator, ReceptiveFieldAndScoreMap) {
  EXPECT_EQ(patch_receptive_field(3), 70);
  EXPECT_EQ(patch_receptive_field(2), 34);
  EXPECT_EQ(patch_receptive_field(1), 16);
  torch::NoGradGuard no_grad;
  PatchDiscriminator d(3, 8, 3);
  EXPECT_EQ(d->receptive_field(), 70);
  EXPECT_EQ(discriminate(d, torch::zeros({1, 3, 256, 256})).sizes(), (std::vector<std::int64_t>{1, 1, 30, 30}));
  EXPECT_THROW(discriminate(d, torch::zeros({1, 3, 64, 64})), std::invalid_argument);
  PatchDiscriminator d2(3, 8, 2);
  EXPECT_EQ(discriminate(d2, torch::zeros({1, 3, 64, 64})).sizes(), (std::vector<std::int64_t>{1, 1, 14, 14}));
}

TEST(PatchDiscriminator, ReceptiveFieldMatchesLayerArithmetic) {
  // Instance norm couples every pixel, so the field is derived from the
  // conv kernels and strides instead of from gradient support.
  for (int layers : {1, 2, 3}) {
    PatchDiscriminator d(3, 4, layers);
    std::int64_t rf = 1, jump = 1;
    for (const auto& m : d->modules(false)) {
      if (const auto* c = m->as<torch::nn::Conv2d>()) {
        rf += ((*c->options.kernel_size())[0] - 1) * jump;
        jump *= (*c->options.stride())[0];
      }
    }
    EXPECT_EQ(rf, d->receptive_field());
    EXPECT_EQ(rf, patch_receptive_field(layers));
  }
}

TEST(InitWeights, GaussianConvWeightsZeroBias) {
  torch::manual_seed(1);
  auto g = build_generator(3, 3, 8, 16);
  std::vector<torch::Tensor> weights;
  for (const auto& p : g->named_parameters()) {
    if (p.key().find("bias") != std::string::npos) EXPECT_EQ(p.value().abs().max().item<double>(), 0.0);
    else weights.push_back(p.value().detach().flatten());
  }
  auto all = torch::cat(weights);
  EXPECT_NEAR(all.mean().item<double>(), 0.0, 1e-3);
  EXPECT_NEAR(all.std().item<double>(), 0.02, 1e-3);
}

TEST(CycleNetworks, BaselineHasNoMask) {
  CycleNetworks stego(testing_support::tiny_model(ModelKind::StegoGan));
  CycleNetworks base(testing_support::tiny_model(ModelKind::CycleGan));
  EXPECT_TRUE(stego->has_mask());
  EXPECT_FALSE(base->has_mask());
  EXPECT_GT(stego->generator_parameters().size(), base->generator_parameters().size());
  EXPECT_EQ(stego->discriminator_parameters().size(), base->discriminator_parameters().size());
}

TEST(ParameterHash, DetectsAnyChange) {
  auto g = build_generator(3, 3, 0, 4);
  const auto h = parameter_hash(*g);
  EXPECT_EQ(h, parameter_hash(*g));
  {
    torch::NoGradGuard no_grad;
    g->parameters().back().view(-1)[0] += 1e-6;
  }
  EXPECT_NE(h, parameter_hash(*g));
}

TEST(ModelKind, ParseRoundTrip) {
  EXPECT_EQ(parse_model_kind(to_string(ModelKind::StegoGan)), ModelKind::StegoGan);
  EXPECT_EQ(parse_model_kind(to_string(ModelKind::CycleGan)), ModelKind::CycleGan);
  EXPECT_THROW(parse_model_kind("pix2pix"), ConfigError);
}
