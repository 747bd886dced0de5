#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "stegogan/training.hpp"
#include "test_support.hpp"

using namespace stegogan;
using testing_support::TempDir;
using testing_support::tiny_config;
using testing_support::tiny_world;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainingData tiny_data(const std::filesystem::path& manifest) {
  return load_training_data(read_manifest(manifest), manifest);
}

}  // namespace

TEST(TrainConfig, FormatParseRoundTrip) {
  TrainConfig c;
  c.hp.lambda_reg = 0.25;
  c.hp.encoder_depth = 1;
  c.hp.learning_rate = 1.0 / 3.0;
  c.gan_mode = GanMode::Vanilla;
  c.lr_schedule = LrSchedule::LinearDecay;
  c.adv_on_clean = false;
  c.reg_reduction = RegReduction::ChannelSum;
  c.model = ModelKind::CycleGan;
  c.seed = 123456789012345ULL;
  const auto text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(text).hp.learning_rate, 1.0 / 3.0);
}

TEST(TrainConfig, TableRowsParse) {
  // GoogleMaps, PlanIGN and Brats rows of the published settings table.
  const auto g = parse_config("lambda_reg=0.3\nencoder_depth=8\nbatch_size=1\nlambda_match=1\n");
  EXPECT_EQ(g.hp.encoder_depth, 8);
  const auto p = parse_config("lambda_reg=0.25\nencoder_depth=1\nbatch_size=1\nlambda_match=1\n");
  EXPECT_DOUBLE_EQ(p.hp.lambda_reg, 0.25);
  const auto b = parse_config("lambda_reg=0.3\nencoder_depth=8\nbatch_size=12\nlambda_match=1\n");
  EXPECT_EQ(b.hp.batch_size, 12);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("lamda_reg=0.3\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs=ten\n"), ConfigError);
  EXPECT_THROW(parse_config("pool_size=-1\n"), ConfigError);
  EXPECT_THROW(parse_config("lr_schedule=cosine\n"), ConfigError);
  EXPECT_THROW(parse_config("just text\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("# comment\n\nseed = 4  # trailing\n"));
}

TEST(ImagePool, ZeroCapacityPassesThrough) {
  ImagePool pool(0);
  std::mt19937_64 rng(1);
  auto b = torch::rand({2, 3, 4, 4});
  EXPECT_TRUE(torch::equal(pool.query(b, rng), b));
  EXPECT_EQ(pool.size(), 0u);
}

TEST(ImagePool, FillsThenSwapsAboutHalfTheTime) {
  ImagePool pool(50);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    auto img = torch::full({1, 1, 1, 1}, static_cast<float>(i));
    EXPECT_TRUE(torch::equal(pool.query(img, rng), img));
  }
  EXPECT_EQ(pool.size(), 50u);
  int swapped = 0;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) {
    auto img = torch::full({1, 1, 1, 1}, static_cast<float>(1000 + i));
    auto out = pool.query(img, rng);
    swapped += !torch::equal(out, img);
    EXPECT_EQ(pool.size(), 50u);
  }
  EXPECT_NEAR(static_cast<double>(swapped) / trials, 0.5, 0.04);
}

TEST(ImagePool, StateRestoreRoundTrip) {
  ImagePool a(3), b(3);
  std::mt19937_64 rng(1);
  a.query(torch::rand({2, 1, 2, 2}), rng);
  b.restore(a.state());
  EXPECT_TRUE(torch::equal(a.state(), b.state()));
  ImagePool small(1);
  EXPECT_THROW(small.restore(a.state()), ConfigError);
}

TEST(Trainer, IterationCountsAndSchedule) {
  TempDir dir;
  const auto world = tiny_world(dir.path(), 6);
  auto cfg = tiny_config();
  cfg.hp.epochs = 4;
  cfg.hp.batch_size = 4;
  cfg.lr_schedule = LrSchedule::LinearDecay;
  Trainer t(cfg, tiny_data(world.train_manifest));
  EXPECT_EQ(t.iterations_per_epoch(), 2);
  EXPECT_EQ(t.total_iterations(), 8);
  EXPECT_DOUBLE_EQ(t.lr_factor(0), 1.0);
  EXPECT_DOUBLE_EQ(t.lr_factor(3), 1.0);
  EXPECT_NEAR(t.lr_factor(4), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(t.lr_factor(7), 1.0 / 3.0, 1e-15);
}

TEST(Trainer, PhasesTouchOnlyTheirOwnParameters) {
  TempDir dir;
  const auto world = tiny_world(dir.path());
  Trainer t(tiny_config(), tiny_data(world.train_manifest));
  // Checked through the optimiser parameter groups: the two sets are disjoint
  // and together cover every network.
  const auto g = t.networks()->generator_parameters();
  const auto d = t.networks()->discriminator_parameters();
  EXPECT_EQ(g.size() + d.size(), t.networks()->parameters().size());
  for (const auto& a : g)
    for (const auto& b : d) EXPECT_NE(a.data_ptr(), b.data_ptr());

  std::uint64_t g_start = 0, d_start = 0, g_mid = 0, d_mid = 0;
  int checked = 0;
  t.set_phase_observer([&](Trainer::Phase p) {
    const auto gh = t.generator_hash(), dh = t.discriminator_hash();
    if (p == Trainer::Phase::Start) {
      g_start = gh;
      d_start = dh;
    } else if (p == Trainer::Phase::AfterGenerator) {
      EXPECT_NE(gh, g_start);
      EXPECT_EQ(dh, d_start) << "generator phase changed a discriminator";
      g_mid = gh;
      d_mid = dh;
    } else {
      EXPECT_EQ(gh, g_mid) << "discriminator phase changed a generator or M";
      EXPECT_NE(dh, d_mid);
      ++checked;
    }
  });
  for (int i = 0; i < 3; ++i) t.step();
  EXPECT_EQ(checked, 3);
}

TEST(Trainer, StepProducesFiniteDecomposableReport) {
  TempDir dir;
  const auto world = tiny_world(dir.path());
  Trainer t(tiny_config(), tiny_data(world.train_manifest));
  for (int i = 0; i < 3; ++i) {
    const auto r = t.step();
    EXPECT_TRUE(r.finite());
    EXPECT_NEAR(r.total_gen, r.gan + 10 * r.cyc + 5 * r.id + 0.3 * r.reg + r.match, 1e-5);
  }
  EXPECT_EQ(t.iteration(), 3);
}

TEST(Train, ZeroEpochsWritesInitialCheckpointAndEmptyLog) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.hp.epochs = 0;
  const auto r = train(world.train_manifest, cfg, dir / "run");
  EXPECT_TRUE(std::filesystem::exists(r.checkpoint));
  EXPECT_EQ(slurp(r.loss_log), "");
  EXPECT_EQ(load_model(r.checkpoint).iteration, 0);
}

TEST(Train, LogHasOneLinePerIterationAndPeriodicCheckpoints) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.max_iterations = 5;
  cfg.checkpoint_every = 2;
  const auto r = train(world.train_manifest, cfg, dir / "run");
  std::istringstream log(slurp(r.loss_log));
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    ++n;
    std::istringstream fields(line);
    long it;
    double v;
    fields >> it;
    EXPECT_EQ(it, n);
    int count = 0;
    while (fields >> v) ++count;
    EXPECT_EQ(count, 7);
  }
  EXPECT_EQ(n, 5);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/checkpoint_2.pt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/checkpoint_4.pt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "run/checkpoint_5.pt"));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  Trainer a(tiny_config(), tiny_data(world.train_manifest));
  a.step();
  a.save_checkpoint(dir / "c.pt");
  Trainer b(tiny_config(), tiny_data(world.train_manifest));
  b.load_checkpoint(dir / "c.pt");
  EXPECT_EQ(b.iteration(), 1);
  EXPECT_EQ(a.generator_hash(), b.generator_hash());
  EXPECT_EQ(a.discriminator_hash(), b.discriminator_hash());
  const auto m = load_model(dir / "c.pt");
  EXPECT_EQ(parameter_hash(*m.nets), parameter_hash(*a.networks()));
}

TEST(Resume, SplitRunMatchesStraightRun) {
  set_deterministic(true);
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.max_iterations = 6;
  const auto straight = train(world.train_manifest, cfg, dir / "straight");
  auto half = cfg;
  half.max_iterations = 3;
  train(world.train_manifest, half, dir / "split");
  const auto resumed = train(world.train_manifest, cfg, dir / "split", {dir / "split/checkpoint.pt"});
  EXPECT_EQ(resumed.iterations_run, 3);
  EXPECT_EQ(parameter_hash(*load_model(straight.checkpoint).nets), parameter_hash(*load_model(resumed.checkpoint).nets));
  EXPECT_EQ(slurp(straight.loss_log), slurp(resumed.loss_log));
  set_deterministic(false);
}

TEST(Resume, AtFinalIterationIsANoOp) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.max_iterations = 2;
  const auto first = train(world.train_manifest, cfg, dir / "run");
  const auto before = slurp(first.loss_log);
  const auto again = train(world.train_manifest, cfg, dir / "run", {first.checkpoint});
  EXPECT_EQ(again.iterations_run, 0);
  EXPECT_EQ(slurp(first.loss_log), before);
}

TEST(Resume, MismatchedLatentChannelsIsAConfigError) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.hp.epochs = 0;
  const auto r = train(world.train_manifest, cfg, dir / "run");
  auto wider = cfg;
  wider.ngf = 8;
  wider.hp.epochs = 1;
  EXPECT_THROW(train(world.train_manifest, wider, dir / "run2", {r.checkpoint}), ConfigError);
}

TEST(Resume, SchemaVersionIsChecked) {
  TempDir dir;
  torch::serialize::OutputArchive a;
  a.write("schema_version", c10::IValue(std::int64_t{99}));
  a.save_to((dir / "bad.pt").string());
  EXPECT_THROW(load_model(dir / "bad.pt"), ConfigError);
}

TEST(Train, RejectsTestSplit) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  EXPECT_THROW(train(world.test_manifest, tiny_config(), dir / "run"), std::invalid_argument);
}

TEST(Train, NanAbortDumpsTheBundle) {
  TempDir dir;
  const auto world = tiny_world(dir / "w");
  auto cfg = tiny_config();
  cfg.hp.learning_rate = 1e30;
  cfg.max_iterations = 20;
  EXPECT_THROW(train(world.train_manifest, cfg, dir / "run"), NanAbort);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/nan_dump.pt"));
}
