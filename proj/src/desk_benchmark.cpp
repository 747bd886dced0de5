#include "stegogan/desk_benchmark.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stegogan/data_pipeline.hpp"
#include "stegogan/image_io.hpp"

namespace fs = std::filesystem;

namespace stegogan {

namespace {

std::string world_stamp(const DeskConfig& d) {
  std::ostringstream os;
  os << d.resolution << ' ' << d.n_train_per_domain << ' ' << d.n_test_pairs << ' ' << format_real(d.unmatchable_ratio)
     << ' ' << d.seed << '\n';
  return os.str();
}

fs::path ensure_world(const DeskConfig& d) {
  const auto dir = d.root / "world";
  const auto stamp = dir / "stamp.txt";
  if (fs::exists(stamp)) {
    std::ifstream in(stamp);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() == world_stamp(d)) return dir;
    fs::remove_all(dir);
  }
  SyntheticWorldConfig w;
  w.resolution = d.resolution;
  w.n_train_per_domain = d.n_train_per_domain;
  w.n_test_pairs = d.n_test_pairs;
  w.unmatchable_ratio = d.unmatchable_ratio;
  w.seed = d.seed;
  build_synthetic(w, dir);
  std::ofstream(stamp) << world_stamp(d);
  return dir;
}

std::vector<Image8> read_all(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<Image8> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(read_image(dir / id));
  return out;
}

fs::path train_or_resume(const DeskConfig& d, const fs::path& world, const std::string& name, const TrainConfig& cfg,
                         bool verbose) {
  const auto out = d.root / name;
  const auto ckpt = out / "checkpoint.pt";
  TrainOptions opts;
  opts.quiet = !verbose;
  if (fs::exists(ckpt)) {
    // A finished run resumes as a no-op; a config change starts over.
    const auto saved = load_model(ckpt).config;
    if (format_config(saved) == format_config(cfg)) opts.resume = ckpt;
  }
  if (verbose) std::fprintf(stderr, "[desk] %s: %s\n", name.c_str(), opts.resume ? "resuming" : "training");
  train(world / "train.tsv", cfg, out, opts);
  return ckpt;
}

}  // namespace

TrainConfig desk_train_config(const DeskConfig& d, ModelKind kind, double lambda_reg) {
  TrainConfig c;
  c.model = kind;
  c.hp.epochs = d.epochs;
  c.hp.batch_size = d.batch_size;
  c.hp.learning_rate = d.learning_rate;
  c.hp.encoder_depth = 8;
  c.ngf = d.ngf;
  c.ndf = d.ndf;
  c.disc_layers = d.disc_layers;
  c.seed = d.seed;
  c.lr_schedule = LrSchedule::LinearDecay;
  if (kind == ModelKind::CycleGan) {
    c.hp.lambda_reg = 0;
    c.hp.lambda_match = 0;
    c.hp.epsilon_amplitude = 0;
  } else {
    c.hp.lambda_reg = lambda_reg;
  }
  return c;
}

DeskRunMetrics evaluate_desk_run(const DeskConfig& d, const std::string& name, const fs::path& checkpoint) {
  const auto world = d.root / "world";
  auto model = load_model(checkpoint);
  auto& nets = model.nets;
  DeskRunMetrics m;
  m.name = name;
  m.iterations = model.iteration;

  const auto test = read_manifest(world / "test.tsv");
  const auto real_x = read_all(resolve_dir(world / "test.tsv", test.source_dir), test.source_ids());
  const auto real_y = read_all(resolve_dir(world / "test.tsv", test.target_dir), test.target_ids());
  auto fake = translate(images_to_batch(real_x), nets);
  std::vector<Image8> fake_y;
  for (std::int64_t i = 0; i < fake.size(0); ++i) fake_y.push_back(tensor_to_image(fake[i]));
  m.fpr = false_positive_rates(fake_y, detect_highway_pixels);
  RandomConvEmbedder embedder(3, 1234);
  m.dist = fid_kid(real_y, fake_y, embedder);
  m.rmse = rmse(fake_y, real_y);

  // Glyph-bearing training maps feed the mask and probe measurements.
  const auto train = read_manifest(world / "train.tsv");
  std::vector<Image8> glyph_maps;
  std::vector<BinaryMask> glyph_masks;
  const auto target_dir = resolve_dir(world / "train.tsv", train.target_dir);
  for (const auto& e : train.entries) {
    if (!e.target_id || !e.mask_path) continue;
    auto mask = read_mask(world / *e.mask_path);
    if (mask.empty()) continue;
    glyph_maps.push_back(read_image(target_dir / *e.target_id));
    glyph_masks.push_back(std::move(mask));
  }
  if (!glyph_maps.empty()) {
    const auto y = images_to_batch(glyph_maps);
    if (nets->has_mask()) m.masks = mask_quality(predict_footprints(nets, y), glyph_masks);
    m.probe = steganography_probe(nets, y, glyph_masks, d.probe_amplitudes, d.seed, 3);
  }
  return m;
}

DeskResults run_desk_benchmark(const DeskConfig& d, bool verbose) {
  fs::create_directories(d.root);
  const auto world = ensure_world(d);
  DeskResults r;
  const auto cb = desk_train_config(d, ModelKind::CycleGan, 0.0);
  const auto cs = desk_train_config(d, ModelKind::StegoGan, d.stego_lambda_reg);
  const auto cn = desk_train_config(d, ModelKind::StegoGan, 0.0);
  r.baseline = evaluate_desk_run(d, "baseline", train_or_resume(d, world, "baseline", cb, verbose));
  r.stego = evaluate_desk_run(d, "stegogan", train_or_resume(d, world, "stegogan", cs, verbose));
  r.stego_noreg = evaluate_desk_run(d, "stegogan_noreg", train_or_resume(d, world, "stegogan_noreg", cn, verbose));
  std::ofstream(d.root / "results.txt") << format_desk_results(r);
  return r;
}

std::string format_desk_results(const DeskResults& r) {
  std::ostringstream os;
  char buf[256];
  for (const auto* m : {&r.baseline, &r.stego, &r.stego_noreg}) {
    std::snprintf(buf, sizeof(buf), "%s iterations=%ld pfpr=%.4f ifpr=%.3f fid=%.6g kid=%.6g rmse=%.4f", m->name.c_str(),
                  m->iterations, m->fpr.pfpr, m->fpr.ifpr, m->dist.fid, m->dist.kid, m->rmse);
    os << buf;
    if (m->masks) {
      const auto show = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); };
      os << " miou=" << show(m->masks->miou) << " precision=" << show(m->masks->precision)
         << " recall=" << show(m->masks->recall);
    }
    for (const auto& p : m->probe) {
      std::snprintf(buf, sizeof(buf), " probe[%g]=%.4f/%.4f", p.amplitude, p.unmatchable_error, p.matchable_error);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace stegogan
