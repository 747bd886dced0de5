#include <gtest/gtest.h>

#include "stegogan/domain.hpp"
#include "stegogan/image_io.hpp"
#include "test_support.hpp"

using namespace stegogan;
using testing_support::TempDir;

TEST(ImageTensor, NormalisationEndpoints) {
  Image8 img(3, 1, 2);
  img.data = {0, 0, 0, 255, 255, 255};
  auto t = normalize_image(img, Domain::Y);
  EXPECT_EQ(t.domain(), Domain::Y);
  EXPECT_FLOAT_EQ(t.data()[0][0][0].item<float>(), -1.0f);
  EXPECT_FLOAT_EQ(t.data()[0][0][1].item<float>(), 1.0f);
}

TEST(ImageTensor, RoundTripIsExactForEveryByte) {
  Image8 img(1, 1, 256);
  for (int v = 0; v < 256; ++v) img.data[v] = static_cast<std::uint8_t>(v);
  EXPECT_EQ(denormalize_image(normalize_image(img)).data, img.data);
}

TEST(ImageTensor, RejectsOutOfRangeAndBadChannels) {
  EXPECT_THROW(ImageTensor(torch::full({3, 2, 2}, 1.5), Domain::X), std::invalid_argument);
  EXPECT_THROW(ImageTensor(torch::zeros({2, 2, 2}), Domain::X), std::invalid_argument);
  EXPECT_THROW(ImageTensor(torch::zeros({2, 2}), Domain::X), std::invalid_argument);
  EXPECT_NO_THROW(ImageTensor(torch::zeros({1, 2, 2}), Domain::X));
}

TEST(ImageTensor, DenormaliseClampsAndRoundsHalfUp) {
  auto t = torch::tensor({-2.0f, 2.0f, 0.0f}).reshape({1, 1, 3});
  auto img = tensor_to_image(t);
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{0, 255, 128}));
}

TEST(Hyperparameters, DefaultsMatchPublishedSettings) {
  Hyperparameters hp;
  EXPECT_DOUBLE_EQ(hp.lambda_cyc, 10.0);
  EXPECT_DOUBLE_EQ(hp.lambda_id, 0.5);
  EXPECT_DOUBLE_EQ(hp.lambda_reg, 0.3);
  EXPECT_DOUBLE_EQ(hp.lambda_match, 1.0);
  EXPECT_DOUBLE_EQ(hp.learning_rate, 0.002);
  EXPECT_EQ(hp.epochs, 200);
  EXPECT_NO_THROW(hp.validate());
}

TEST(Hyperparameters, ValidationRejectsBadValues) {
  Hyperparameters hp;
  hp.encoder_depth = 9;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.lambda_reg = -0.1;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.batch_size = 0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.sigma1 = 10;
  EXPECT_THROW(hp.validate(), ConfigError);
}

namespace {

DatasetManifest sample_manifest() {
  DatasetManifest m;
  m.source_dir = "trainX";
  m.target_dir = "/abs/trainY";
  m.unmatchable_ratio = 0.65;
  m.split = Split::Train;
  m.entries.push_back({"a.png", std::nullopt, std::nullopt});
  m.entries.push_back({std::nullopt, "b.png", "masks/b.png"});
  m.entries.push_back({"c.png", "c.png", std::nullopt});
  return m;
}

}  // namespace

TEST(Manifest, FormatParseRoundTrip) {
  const auto m = sample_manifest();
  const auto text = format_manifest(m);
  EXPECT_EQ(parse_manifest(text), m);
  EXPECT_EQ(format_manifest(parse_manifest(text)), text);
  EXPECT_NE(text.find("a.png\t-\t-\n"), std::string::npos);
  EXPECT_NE(text.find("-\tb.png\tmasks/b.png\n"), std::string::npos);
}

TEST(Manifest, TestSplitMustBePaired) {
  auto m = sample_manifest();
  m.split = Split::Test;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.entries.erase(m.entries.begin(), m.entries.begin() + 2);
  EXPECT_NO_THROW(m.validate());
}

TEST(Manifest, RejectsUnknownHeaderKeysAndBadRecords) {
  EXPECT_THROW(parse_manifest("bogus=1\n"), std::invalid_argument);
  EXPECT_THROW(parse_manifest("split=train\nonly_one_field\n"), std::invalid_argument);
  EXPECT_THROW(parse_manifest("split=train\nunmatchable_ratio=1.5\n"), std::invalid_argument);
}

TEST(Manifest, FileRoundTripAndRelativeDirs) {
  TempDir dir;
  const auto path = dir / "sub/train.tsv";
  write_manifest(path, sample_manifest());
  EXPECT_EQ(read_manifest(path), sample_manifest());
  EXPECT_EQ(resolve_dir(path, "trainX"), dir.path() / "sub" / "trainX");
  EXPECT_EQ(resolve_dir(path, "/abs/trainY"), std::filesystem::path("/abs/trainY"));
}

TEST(ImageIo, PngRoundTripKeepsRgbOrder) {
  TempDir dir;
  Image8 img(3, 2, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 13);
  write_image(dir / "a.png", img);
  const auto back = read_image(dir / "a.png");
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.data, img.data);
  BinaryMask m(2, 2);
  m.at(1, 0) = 1;
  write_mask(dir / "m.png", m);
  EXPECT_EQ(read_mask(dir / "m.png").data, m.data);
  EXPECT_EQ(list_images(dir.path()), (std::vector<std::string>{"a.png", "m.png"}));
  EXPECT_THROW(read_image(dir / "missing.png"), std::runtime_error);
}
