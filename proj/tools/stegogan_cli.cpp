// stegogan: dataset builders, training, translation and evaluation.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stegogan/data_pipeline.hpp"
#include "stegogan/evaluation.hpp"
#include "stegogan/image_io.hpp"
#include "stegogan/stego_cycle.hpp"
#include "stegogan/training.hpp"

#ifndef STEGOGAN_VERSION
#define STEGOGAN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stegogan;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("STEGO_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("STEGO_SEED is not an integer: ") + s);
  }
}

// --seed, then STEGO_SEED, then the fallback.
std::uint64_t pick_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (auto e = env_seed()) return *e;
  return fallback;
}

void write_run_record(const fs::path& out, const std::string& command, const json& config,
                      std::optional<std::uint64_t> seed) {
  fs::create_directories(out);
  json rec;
  rec["command"] = command;
  rec["config"] = config;
  rec["seed"] = seed ? json(*seed) : json(nullptr);
  rec["version"] = STEGOGAN_VERSION;
  std::ofstream(out / "run.json") << rec.dump(2) << '\n';
}

json config_json(const TrainConfig& cfg) {
  json j = json::object();
  std::istringstream is(format_config(cfg));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<Image8> read_dir_images(const fs::path& dir, const std::vector<std::string>& names) {
  std::vector<Image8> out;
  for (const auto& n : names) out.push_back(read_image(dir / n));
  return out;
}

std::vector<std::string> require_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  auto names = list_images(dir);
  if (names.empty()) throw std::runtime_error("no images in " + dir.string());
  return names;
}

// ---- build-dataset ---------------------------------------------------------

struct SyntheticArgs {
  SyntheticWorldConfig cfg;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_synthetic(SyntheticArgs& a) {
  a.cfg.seed = pick_seed(a.seed, 0);
  const auto world = build_synthetic(a.cfg, a.out);
  json c = {{"resolution", a.cfg.resolution},        {"n_train_per_domain", a.cfg.n_train_per_domain},
            {"n_test_pairs", a.cfg.n_test_pairs},    {"unmatchable_ratio", a.cfg.unmatchable_ratio},
            {"glyph_density", a.cfg.glyph_density},  {"glyph_images", world.glyph_images}};
  write_run_record(a.out, "build-dataset synthetic", c, a.cfg.seed);
  std::printf("train manifest: %s\ntest manifest: %s\nglyph images: %d\n", world.train_manifest.c_str(),
              world.test_manifest.c_str(), world.glyph_images);
  return 0;
}

struct RatioArgs {
  std::string source, target, out;
  double ratio = 0;
  int total = 548;
  std::optional<std::uint64_t> seed;
};

int run_ratio(RatioArgs& a) {
  const auto seed = pick_seed(a.seed, 0);
  RatioCorpusStats stats;
  const auto m = build_ratio_dataset(fs::absolute(a.source), fs::absolute(a.target), a.ratio, a.total, seed, &stats);
  fs::create_directories(a.out);
  write_manifest(fs::path(a.out) / "train.tsv", m);
  json c = {{"source", a.source},         {"target", a.target},     {"ratio", a.ratio},
            {"total", a.total},           {"highway_maps", stats.highway}, {"plain_maps", stats.plain},
            {"selected_highway", highway_quota(a.ratio, a.total)}};
  write_run_record(a.out, "build-dataset ratio", c, seed);
  std::printf("corpus: %d highway maps, %d without\nselected: %d highway of %d targets\n", stats.highway,
              stats.plain, highway_quota(a.ratio, a.total), a.total);
  return 0;
}

struct ToponymArgs {
  std::string with_text, without_text, out;
  int radius = 4;
};

int run_toponym(ToponymArgs& a) {
  const auto names = require_images(a.with_text);
  int written = 0;
  for (const auto& n : names) {
    const auto other = fs::path(a.without_text) / n;
    if (!fs::exists(other)) throw std::runtime_error("no counterpart for " + n + " in " + a.without_text);
    write_mask(fs::path(a.out) / n, derive_toponym_mask(read_image(fs::path(a.with_text) / n), read_image(other),
                                                        a.radius));
    ++written;
  }
  write_run_record(a.out, "build-dataset toponym-mask",
                   {{"with_text", a.with_text}, {"without_text", a.without_text}, {"radius", a.radius}},
                   std::nullopt);
  std::printf("%d masks written\n", written);
  return 0;
}

struct MriArgs {
  std::string masks, out;
};

int run_mri(MriArgs& a) {
  const auto names = require_images(a.masks);
  fs::create_directories(a.out);
  std::ofstream tsv(fs::path(a.out) / "labels.tsv");
  std::map<std::string, int> counts;
  for (const auto& n : names) {
    const auto label = label_mri_slice(read_mask(fs::path(a.masks) / n));
    tsv << n << '\t' << to_string(label) << '\n';
    ++counts[to_string(label)];
  }
  write_run_record(a.out, "build-dataset mri-label", {{"masks", a.masks}, {"counts", counts}}, std::nullopt);
  for (const auto& [k, v] : counts) std::printf("%s=%d\n", k.c_str(), v);
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, resume;
  bool deterministic = false;
  bool verbose = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

int run_train(TrainArgs& a) {
  // Precedence: --seed / --set, then the config file, then STEGO_SEED, then defaults.
  TrainConfig cfg;
  if (auto e = env_seed()) cfg.seed = *e;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw std::runtime_error("cannot read config " + a.config);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str(), cfg);
  }
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  write_run_record(a.out, "train", config_json(cfg), cfg.seed);
  std::ofstream(fs::path(a.out) / "config.txt") << format_config(cfg);
  TrainOptions opts;
  opts.deterministic = a.deterministic;
  opts.quiet = !a.verbose;
  if (!a.resume.empty()) opts.resume = a.resume;
  const auto r = train(a.data, cfg, a.out, opts);
  std::printf("iterations run: %ld (final iteration %ld)\ncheckpoint: %s\nloss log: %s\n", r.iterations_run,
              r.final_iteration, r.checkpoint.c_str(), r.loss_log.c_str());
  return 0;
}

// ---- translate / export-masks ------------------------------------------------

struct ModelIoArgs {
  std::string ckpt, in, out;
};

int run_translate(ModelIoArgs& a) {
  auto model = load_model(a.ckpt);
  const auto names = require_images(a.in);
  for (const auto& n : names) {
    auto x = images_to_batch({read_image(fs::path(a.in) / n)});
    write_image(fs::path(a.out) / n, tensor_to_image(translate(x, model.nets)[0]));
  }
  write_run_record(a.out, "translate", config_json(model.config), model.config.seed);
  std::printf("%zu images translated\n", names.size());
  return 0;
}

int run_export_masks(ModelIoArgs& a) {
  auto model = load_model(a.ckpt);
  if (!model.nets->has_mask()) throw UsageError("export-masks needs a StegoGAN checkpoint");
  const auto names = require_images(a.in);
  for (const auto& n : names) {
    auto y = images_to_batch({read_image(fs::path(a.in) / n)});
    write_mask(fs::path(a.out) / n, predict_footprints(model.nets, y)[0]);
  }
  write_run_record(a.out, "export-masks", config_json(model.config), model.config.seed);
  std::printf("%zu masks written\n", names.size());
  return 0;
}

// ---- evaluate ----------------------------------------------------------------

struct EvalArgs {
  std::string pred, target, metrics = "rmse,acc,fpr", report, out, pred_masks, gt_masks;
  double sigma1 = 5, sigma2 = 10;
  int min_instance_px = 5;
};

int run_evaluate(EvalArgs& a) {
  const auto names = require_images(a.pred);
  const auto metrics = split_list(a.metrics);
  const auto pred = read_dir_images(a.pred, names);
  std::vector<Image8> target;
  const auto needs_target = [&](const std::string& m) { return m == "rmse" || m == "acc" || m == "fid" || m == "kid"; };
  for (const auto& m : metrics) {
    if (m != "rmse" && m != "acc" && m != "fpr" && m != "fid" && m != "kid" && m != "mask")
      throw UsageError("unknown metric '" + m + "'");
    if (needs_target(m) && target.empty()) {
      if (a.target.empty()) throw UsageError("--target is required for " + m);
      target = read_dir_images(a.target, names);
    }
  }
  std::ostringstream rep;
  const auto put = [&](const std::string& k, double v) { rep << k << '=' << format_real(v) << '\n'; };
  const auto put_opt = [&](const std::string& k, const std::optional<double>& v) {
    rep << k << '=' << (v ? format_real(*v) : std::string("n/a")) << '\n';
  };
  std::optional<DistributionScores> dist;
  for (const auto& m : metrics) {
    if (m == "rmse") put("rmse", rmse(pred, target));
    if (m == "acc") {
      put("acc_sigma1", accuracy_at(pred, target, a.sigma1));
      put("acc_sigma2", accuracy_at(pred, target, a.sigma2));
    }
    if (m == "fpr") {
      const auto f = false_positive_rates(pred, detect_highway_pixels, a.min_instance_px);
      put("pfpr", f.pfpr);
      put("ifpr", f.ifpr);
    }
    if (m == "fid" || m == "kid") {
      if (!dist) {
        RandomConvEmbedder embedder(pred.front().channels);
        dist = fid_kid(target, pred, embedder);
      }
      put(m, m == "fid" ? dist->fid : dist->kid);
    }
    if (m == "mask") {
      if (a.pred_masks.empty() || a.gt_masks.empty()) throw UsageError("mask metric needs --pred-masks and --gt-masks");
      std::vector<BinaryMask> pm, gm;
      for (const auto& n : require_images(a.pred_masks)) {
        pm.push_back(read_mask(fs::path(a.pred_masks) / n));
        gm.push_back(read_mask(fs::path(a.gt_masks) / n));
      }
      const auto q = mask_quality(pm, gm);
      put_opt("miou", q.miou);
      put_opt("precision", q.precision);
      put_opt("recall", q.recall);
    }
  }
  const fs::path report = a.report.empty() ? fs::path(a.out) / "report.txt" : fs::path(a.report);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  std::ofstream(report) << rep.str();
  std::cout << rep.str();
  const fs::path out = !a.out.empty() ? fs::path(a.out) : (report.has_parent_path() ? report.parent_path() : ".");
  write_run_record(out, "evaluate",
                   {{"pred", a.pred}, {"target", a.target}, {"metrics", a.metrics}, {"sigma1", a.sigma1},
                    {"sigma2", a.sigma2}, {"min_instance_px", a.min_instance_px}},
                   std::nullopt);
  return 0;
}

// ---- probe-stego -------------------------------------------------------------

struct ProbeArgs {
  std::string ckpt, data, out, amplitudes = "0,0.001,0.003,0.01,0.03";
  int repeats = 3;
  std::optional<std::uint64_t> seed;
};

int run_probe(ProbeArgs& a) {
  auto model = load_model(a.ckpt);
  const auto manifest = read_manifest(a.data);
  const auto dir = resolve_dir(a.data, manifest.target_dir);
  const auto base = fs::path(a.data).parent_path();
  std::vector<Image8> maps;
  std::vector<BinaryMask> masks;
  for (const auto& e : manifest.entries) {
    if (!e.target_id || !e.mask_path) continue;
    auto m = read_mask(base / *e.mask_path);
    if (m.empty()) continue;
    maps.push_back(read_image(dir / *e.target_id));
    masks.push_back(std::move(m));
  }
  if (maps.empty()) throw std::runtime_error("probe-stego: the manifest lists no target with a non-empty mask");
  std::vector<double> amps;
  for (const auto& s : split_list(a.amplitudes)) {
    try {
      amps.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw UsageError("bad amplitude '" + s + "'");
    }
  }
  const auto seed = pick_seed(a.seed, 0);
  const auto rows = steganography_probe(model.nets, images_to_batch(maps), masks, amps, seed, a.repeats);
  const auto table = format_probe_table(rows);
  fs::create_directories(a.out);
  std::ofstream(fs::path(a.out) / "probe.tsv") << table;
  std::cout << table;
  write_run_record(a.out, "probe-stego", {{"ckpt", a.ckpt}, {"data", a.data}, {"amplitudes", a.amplitudes},
                                          {"repeats", a.repeats}, {"images", maps.size()}},
                   seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StegoGAN: non-bijective image-to-image translation"};
  app.set_version_flag("--version", STEGOGAN_VERSION);
  app.require_subcommand(0, 1);

  auto* build = app.add_subcommand("build-dataset", "build a dataset and its manifest");
  build->require_subcommand(1);

  SyntheticArgs syn;
  auto* s_syn = build->add_subcommand("synthetic", "synthetic photo/map world with glyphs");
  s_syn->add_option("--out", syn.out, "output directory")->required();
  s_syn->add_option("--resolution", syn.cfg.resolution);
  s_syn->add_option("--n-train", syn.cfg.n_train_per_domain);
  s_syn->add_option("--n-test", syn.cfg.n_test_pairs);
  s_syn->add_option("--ratio", syn.cfg.unmatchable_ratio);
  s_syn->add_option("--glyph-density", syn.cfg.glyph_density);
  s_syn->add_option("--seed", syn.seed);

  RatioArgs ratio;
  auto* s_ratio = build->add_subcommand("ratio", "fixed highway ratio subset of a photo/map corpus");
  s_ratio->add_option("--source", ratio.source, "photo directory")->required();
  s_ratio->add_option("--target", ratio.target, "map directory")->required();
  s_ratio->add_option("--ratio", ratio.ratio)->required();
  s_ratio->add_option("--total", ratio.total);
  s_ratio->add_option("--out", ratio.out)->required();
  s_ratio->add_option("--seed", ratio.seed);

  ToponymArgs topo;
  auto* s_topo = build->add_subcommand("toponym-mask", "masks from maps with and without labels");
  s_topo->add_option("--with-text", topo.with_text)->required();
  s_topo->add_option("--without-text", topo.without_text)->required();
  s_topo->add_option("--radius", topo.radius);
  s_topo->add_option("--out", topo.out)->required();

  MriArgs mri;
  auto* s_mri = build->add_subcommand("mri-label", "label slices as tumorous, healthy or excluded");
  s_mri->add_option("--masks", mri.masks)->required();
  s_mri->add_option("--out", mri.out)->required();

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train StegoGAN or the CycleGAN baseline");
  s_train->add_option("--config", tr.config, "key=value config file");
  s_train->add_option("--data", tr.data, "train manifest")->required();
  s_train->add_option("--out", tr.out)->required();
  s_train->add_option("--resume", tr.resume, "checkpoint to continue from");
  s_train->add_flag("--deterministic", tr.deterministic);
  s_train->add_flag("--verbose", tr.verbose);
  s_train->add_option("--seed", tr.seed);
  s_train->add_option("--set", tr.overrides, "override a config key (key=value)");

  ModelIoArgs tl;
  auto* s_tl = app.add_subcommand("translate", "translate a directory of domain-X images");
  s_tl->add_option("--ckpt", tl.ckpt)->required();
  s_tl->add_option("--in", tl.in)->required();
  s_tl->add_option("--out", tl.out)->required();

  ModelIoArgs em;
  auto* s_em = app.add_subcommand("export-masks", "unmatchable footprints of domain-Y images");
  s_em->add_option("--ckpt", em.ckpt)->required();
  s_em->add_option("--in", em.in)->required();
  s_em->add_option("--out", em.out)->required();

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "score generated images");
  s_ev->add_option("--pred", ev.pred)->required();
  s_ev->add_option("--target", ev.target);
  s_ev->add_option("--metrics", ev.metrics, "comma list of rmse,acc,fpr,fid,kid,mask");
  s_ev->add_option("--report", ev.report);
  s_ev->add_option("--out", ev.out);
  s_ev->add_option("--sigma1", ev.sigma1);
  s_ev->add_option("--sigma2", ev.sigma2);
  s_ev->add_option("--min-instance-px", ev.min_instance_px);
  s_ev->add_option("--pred-masks", ev.pred_masks);
  s_ev->add_option("--gt-masks", ev.gt_masks);

  ProbeArgs pr;
  auto* s_pr = app.add_subcommand("probe-stego", "reconstruction error under x_gen perturbation");
  s_pr->add_option("--ckpt", pr.ckpt)->required();
  s_pr->add_option("--data", pr.data, "train manifest with masks")->required();
  s_pr->add_option("--out", pr.out)->required();
  s_pr->add_option("--amplitudes", pr.amplitudes);
  s_pr->add_option("--repeats", pr.repeats);
  s_pr->add_option("--seed", pr.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }

  try {
    if (s_syn->parsed()) return run_synthetic(syn);
    if (s_ratio->parsed()) return run_ratio(ratio);
    if (s_topo->parsed()) return run_toponym(topo);
    if (s_mri->parsed()) return run_mri(mri);
    if (s_train->parsed()) return run_train(tr);
    if (s_tl->parsed()) return run_translate(tl);
    if (s_em->parsed()) return run_export_masks(em);
    if (s_ev->parsed()) {
      if (ev.report.empty() && ev.out.empty()) throw UsageError("evaluate needs --report or --out");
      return run_evaluate(ev);
    }
    if (s_pr->parsed()) return run_probe(pr);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NanAbort& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
