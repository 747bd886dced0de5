#include "stegogan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stegogan/image_io.hpp"

namespace fs = std::filesystem;

namespace stegogan {

std::string to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "linear_decay"; }

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "linear_decay") return LrSchedule::LinearDecay;
  throw ConfigError("unknown lr_schedule '" + s + "'");
}

void TrainConfig::validate() const {
  hp.validate();
  if (pool_size < 0) throw ConfigError("config: pool_size must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be non-negative");
  if (max_iterations < 0) throw ConfigError("config: max_iterations must be non-negative");
  if (ngf <= 0 || ndf <= 0) throw ConfigError("config: ngf and ndf must be positive");
  if (disc_layers < 1) throw ConfigError("config: disc_layers must be at least 1");
}

ModelOptions TrainConfig::model_options(int image_channels) const {
  ModelOptions o;
  o.kind = model;
  o.image_channels = image_channels;
  o.ngf = ngf;
  o.ndf = ndf;
  o.disc_layers = disc_layers;
  o.encoder_depth = hp.encoder_depth;
  return o;
}

namespace {

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return n;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
  auto& hp = c.hp;
  if (key == "lambda_cyc") hp.lambda_cyc = to_double(key, value);
  else if (key == "lambda_id") hp.lambda_id = to_double(key, value);
  else if (key == "lambda_reg") hp.lambda_reg = to_double(key, value);
  else if (key == "lambda_match") hp.lambda_match = to_double(key, value);
  else if (key == "epsilon_amplitude") hp.epsilon_amplitude = to_double(key, value);
  else if (key == "encoder_depth") hp.encoder_depth = static_cast<int>(to_integer(key, value));
  else if (key == "batch_size") hp.batch_size = static_cast<int>(to_integer(key, value));
  else if (key == "epochs") hp.epochs = static_cast<int>(to_integer(key, value));
  else if (key == "learning_rate") hp.learning_rate = to_double(key, value);
  else if (key == "sigma1") hp.sigma1 = to_double(key, value);
  else if (key == "sigma2") hp.sigma2 = to_double(key, value);
  else if (key == "gan_mode") c.gan_mode = parse_gan_mode(value);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, value));
  else if (key == "checkpoint_every") c.checkpoint_every = static_cast<long>(to_integer(key, value));
  else if (key == "lr_schedule") c.lr_schedule = parse_lr_schedule(value);
  else if (key == "pool_size") c.pool_size = static_cast<int>(to_integer(key, value));
  else if (key == "adv_on_clean") c.adv_on_clean = to_bool(key, value);
  else if (key == "reg_reduction") c.reg_reduction = parse_reg_reduction(value);
  else if (key == "model") c.model = parse_model_kind(value);
  else if (key == "ngf") c.ngf = static_cast<int>(to_integer(key, value));
  else if (key == "ndf") c.ndf = static_cast<int>(to_integer(key, value));
  else if (key == "disc_layers") c.disc_layers = static_cast<int>(to_integer(key, value));
  else if (key == "max_iterations") c.max_iterations = static_cast<long>(to_integer(key, value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "model=" << to_string(c.model) << '\n'
     << "lambda_cyc=" << exact(c.hp.lambda_cyc) << '\n'
     << "lambda_id=" << exact(c.hp.lambda_id) << '\n'
     << "lambda_reg=" << exact(c.hp.lambda_reg) << '\n'
     << "lambda_match=" << exact(c.hp.lambda_match) << '\n'
     << "epsilon_amplitude=" << exact(c.hp.epsilon_amplitude) << '\n'
     << "encoder_depth=" << c.hp.encoder_depth << '\n'
     << "batch_size=" << c.hp.batch_size << '\n'
     << "epochs=" << c.hp.epochs << '\n'
     << "learning_rate=" << exact(c.hp.learning_rate) << '\n'
     << "sigma1=" << exact(c.hp.sigma1) << '\n'
     << "sigma2=" << exact(c.hp.sigma2) << '\n'
     << "gan_mode=" << to_string(c.gan_mode) << '\n'
     << "seed=" << c.seed << '\n'
     << "checkpoint_every=" << c.checkpoint_every << '\n'
     << "lr_schedule=" << to_string(c.lr_schedule) << '\n'
     << "pool_size=" << c.pool_size << '\n'
     << "adv_on_clean=" << (c.adv_on_clean ? "true" : "false") << '\n'
     << "reg_reduction=" << to_string(c.reg_reduction) << '\n'
     << "ngf=" << c.ngf << '\n'
     << "ndf=" << c.ndf << '\n'
     << "disc_layers=" << c.disc_layers << '\n'
     << "max_iterations=" << c.max_iterations << '\n';
  return os.str();
}

TrainConfig parse_config(const std::string& text, const TrainConfig& base) {
  TrainConfig c = base;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
    apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

TrainConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

torch::Tensor ImagePool::query(const torch::Tensor& batch, std::mt19937_64& rng) {
  if (capacity_ == 0) return batch;
  std::vector<torch::Tensor> out;
  out.reserve(batch.size(0));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::int64_t i = 0; i < batch.size(0); ++i) {
    auto img = batch[i].detach().clone();
    if (images_.size() < static_cast<std::size_t>(capacity_)) {
      images_.push_back(img);
      out.push_back(img);
    } else if (coin(rng) > 0.5) {
      std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
      const auto k = pick(rng);
      out.push_back(images_[k]);
      images_[k] = img;
    } else {
      out.push_back(img);
    }
  }
  return torch::stack(out);
}

torch::Tensor ImagePool::state() const {
  if (images_.empty()) return torch::empty({0});
  return torch::stack(images_);
}

void ImagePool::restore(const torch::Tensor& stacked) {
  images_.clear();
  if (stacked.dim() < 4) return;
  if (stacked.size(0) > capacity_) throw ConfigError("image pool: checkpoint holds more images than the capacity");
  for (std::int64_t i = 0; i < stacked.size(0); ++i) images_.push_back(stacked[i].clone());
}

namespace {

torch::Tensor load_stack(const fs::path& dir, const std::vector<std::string>& ids) {
  if (ids.empty()) throw std::invalid_argument("training data: no images listed for " + dir.string());
  std::vector<Image8> images;
  images.reserve(ids.size());
  for (const auto& id : ids) {
    images.push_back(read_image(dir / id));
    if (!images.back().same_shape(images.front()))
      throw std::invalid_argument("training data: " + id + " differs in shape from " + ids.front());
  }
  return images_to_batch(images);
}

}  // namespace

TrainingData load_training_data(const DatasetManifest& m, const fs::path& manifest_path) {
  m.validate();
  if (m.split != Split::Train) throw std::invalid_argument("train: manifest split must be train");
  TrainingData d;
  d.sources = load_stack(resolve_dir(manifest_path, m.source_dir), m.source_ids());
  d.targets = load_stack(resolve_dir(manifest_path, m.target_dir), m.target_ids());
  if (!d.sources.sizes().slice(1).equals(d.targets.sizes().slice(1)))
    throw std::invalid_argument("training data: source and target images differ in shape");
  return d;
}

Trainer::Trainer(TrainConfig cfg, TrainingData data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      pool_x_(cfg_.pool_size),
      pool_y_(cfg_.pool_size),
      pool_y_clean_(cfg_.pool_size),
      rng_(cfg_.seed),
      noise_(make_generator(cfg_.seed ^ 0x9E3779B97F4A7C15ULL)) {
  cfg_.validate();
  torch::manual_seed(cfg_.seed);
  nets_ = CycleNetworks(cfg_.model_options(data_.channels()));
  const auto adam = [&] {
    return torch::optim::AdamOptions(cfg_.hp.learning_rate).betas(std::make_tuple(0.5, 0.999));
  };
  opt_g_ = std::make_unique<torch::optim::Adam>(nets_->generator_parameters(), adam());
  opt_d_ = std::make_unique<torch::optim::Adam>(nets_->discriminator_parameters(), adam());
}

long Trainer::iterations_per_epoch() const {
  const auto n = std::max(data_.sources.size(0), data_.targets.size(0));
  return static_cast<long>((n + cfg_.hp.batch_size - 1) / cfg_.hp.batch_size);
}

long Trainer::total_iterations() const {
  const long full = iterations_per_epoch() * cfg_.hp.epochs;
  return cfg_.max_iterations > 0 ? std::min(full, cfg_.max_iterations) : full;
}

double Trainer::lr_factor(long iteration) const {
  if (cfg_.lr_schedule == LrSchedule::Constant) return 1.0;
  const long epoch = iteration / iterations_per_epoch();
  const long n_decay = cfg_.hp.epochs / 2;
  const long n_const = cfg_.hp.epochs - n_decay;
  return 1.0 - static_cast<double>(std::max(0L, epoch + 1 - n_const)) / static_cast<double>(n_decay + 1);
}

void Trainer::apply_lr(long iteration) {
  const double lr = cfg_.hp.learning_rate * lr_factor(iteration);
  for (auto* opt : {opt_g_.get(), opt_d_.get()})
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void Trainer::set_discriminators_trainable(bool on) {
  for (auto& p : nets_->discriminator_parameters()) p.set_requires_grad(on);
}

std::uint64_t Trainer::generator_hash() {
  std::uint64_t h = parameter_hash(*nets_->g_xy) * 31 + parameter_hash(*nets_->g_yx);
  if (nets_->has_mask()) h = h * 31 + parameter_hash(*nets_->mask);
  return h;
}

std::uint64_t Trainer::discriminator_hash() {
  return parameter_hash(*nets_->d_x) * 31 + parameter_hash(*nets_->d_y);
}

void Trainer::abort_on_nan(const TranslationBundle& b, const std::string& why) {
  try {
    save_bundle(b, nan_dump_);
  } catch (const std::exception&) {
  }
  throw NanAbort(why + " at iteration " + std::to_string(iteration_) + " (bundle dumped to " + nan_dump_.string() +
                 ")");
}

LossReport Trainer::step() {
  const auto mark = [this](Phase p) {
    if (observer_) observer_(p);
  };
  mark(Phase::Start);
  apply_lr(iteration_);
  const auto bs = cfg_.hp.batch_size;
  std::uniform_int_distribution<std::int64_t> pick_x(0, data_.sources.size(0) - 1);
  std::uniform_int_distribution<std::int64_t> pick_y(0, data_.targets.size(0) - 1);
  std::vector<std::int64_t> ix(bs), iy(bs);
  for (int i = 0; i < bs; ++i) ix[i] = pick_x(rng_);
  for (int i = 0; i < bs; ++i) iy[i] = pick_y(rng_);
  auto x = data_.sources.index_select(0, torch::tensor(ix));
  auto y = data_.targets.index_select(0, torch::tensor(iy));

  // Generators and M; discriminators frozen.
  set_discriminators_trainable(false);
  opt_g_->zero_grad();
  auto b = run_cycles(x, y, nets_, cfg_.hp.epsilon_amplitude, noise_);
  if (cfg_.hp.lambda_id > 0) {
    b.idt_x = nets_->g_yx->forward(x);
    b.idt_y = nets_->g_xy->forward(y);
  }
  DiscriminatorScores scores;
  scores.x_gen = discriminate(nets_->d_x, b.x_gen);
  scores.y_gen = discriminate(nets_->d_y, b.y_gen);
  const bool clean_adv = nets_->has_mask() && cfg_.adv_on_clean;
  if (clean_adv) scores.y_gen_clean = discriminate(nets_->d_y, b.y_gen_clean);
  GeneratorObjective obj;
  try {
    obj = total_generator_loss(b, scores, cfg_.hp, cfg_.gan_mode, cfg_.reg_reduction);
  } catch (const NanAbort& e) {
    abort_on_nan(b, e.what());
  }
  obj.total.backward();
  opt_g_->step();
  mark(Phase::AfterGenerator);

  // Discriminators on pooled fakes.
  set_discriminators_trainable(true);
  opt_d_->zero_grad();
  auto fake_x = pool_x_.query(b.x_gen.detach(), rng_);
  auto fake_y = pool_y_.query(b.y_gen.detach(), rng_);
  if (clean_adv) fake_y = torch::cat({fake_y, pool_y_clean_.query(b.y_gen_clean.detach(), rng_)});
  auto loss_d = discriminator_loss(nets_->d_x, x, fake_x, cfg_.gan_mode) +
                discriminator_loss(nets_->d_y, y, fake_y, cfg_.gan_mode);
  obj.report.total_disc = loss_d.item<double>();
  if (!std::isfinite(obj.report.total_disc)) abort_on_nan(b, "non-finite discriminator loss");
  loss_d.backward();
  opt_d_->step();
  mark(Phase::AfterDiscriminator);

  ++iteration_;
  return obj.report;
}

namespace {

void write_string(torch::serialize::OutputArchive& a, const std::string& key, const std::string& value) {
  a.write(key, c10::IValue(value));
}

std::string read_string(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v) || !v.isString()) throw ConfigError("checkpoint: missing '" + key + "'");
  return v.toStringRef();
}

std::int64_t read_int(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v) || !v.isInt()) throw ConfigError("checkpoint: missing '" + key + "'");
  return v.toInt();
}

const char* const kNetNames[] = {"G_XtoY", "G_YtoX", "M", "D_X", "D_Y"};

std::vector<torch::nn::Module*> net_list(CycleNetworks& n) {
  return {n->g_xy.get(), n->g_yx.get(), n->has_mask() ? n->mask.get() : nullptr, n->d_x.get(), n->d_y.get()};
}

void save_nets(torch::serialize::OutputArchive& a, CycleNetworks& nets) {
  auto list = net_list(nets);
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i]) continue;
    torch::serialize::OutputArchive sub;
    list[i]->save(sub);
    a.write(kNetNames[i], sub);
  }
}

void load_nets(torch::serialize::InputArchive& a, CycleNetworks& nets) {
  auto list = net_list(nets);
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i]) continue;
    torch::serialize::InputArchive sub;
    if (!a.try_read(kNetNames[i], sub)) throw ConfigError(std::string("checkpoint: missing network ") + kNetNames[i]);
    try {
      list[i]->load(sub);
    } catch (const c10::Error& e) {
      throw ConfigError(std::string("checkpoint: network ") + kNetNames[i] + " does not match the configuration");
    }
  }
}

// Architecture fields that must agree between a checkpoint and a run.
void check_compatible(const TrainConfig& saved, int saved_channels, const TrainConfig& now, int now_channels) {
  const auto latent = [](const TrainConfig& c) { return 4L * c.ngf; };
  if (latent(saved) != latent(now))
    throw ConfigError("resume: latent channels differ (checkpoint " + std::to_string(latent(saved)) + ", config " +
                      std::to_string(latent(now)) + ")");
  if (saved.model != now.model) throw ConfigError("resume: model kind differs");
  if (saved.ndf != now.ndf || saved.disc_layers != now.disc_layers)
    throw ConfigError("resume: discriminator architecture differs");
  if (saved.hp.encoder_depth != now.hp.encoder_depth) throw ConfigError("resume: encoder_depth differs");
  if (saved_channels != now_channels) throw ConfigError("resume: image channel count differs");
}

void open_checkpoint(torch::serialize::InputArchive& a, const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  a.load_from(path.string());
  const auto schema = read_int(a, "schema_version");
  if (schema != kCheckpointSchema)
    throw ConfigError("checkpoint: schema version " + std::to_string(schema) + " is not supported");
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
  auto& nets = const_cast<CycleNetworks&>(nets_);
  torch::serialize::OutputArchive a;
  a.write("schema_version", c10::IValue(kCheckpointSchema));
  write_string(a, "config", format_config(cfg_));
  a.write("image_channels", c10::IValue(static_cast<std::int64_t>(data_.channels())));
  a.write("iteration", c10::IValue(static_cast<std::int64_t>(iteration_)));
  std::ostringstream rng;
  rng << rng_;
  write_string(a, "rng", rng.str());
  a.write("noise_state", noise_.get_state());
  save_nets(a, nets);
  torch::serialize::OutputArchive og, od;
  opt_g_->save(og);
  opt_d_->save(od);
  a.write("opt_G", og);
  a.write("opt_D", od);
  a.write("pool_x", pool_x_.state());
  a.write("pool_y", pool_y_.state());
  a.write("pool_y_clean", pool_y_clean_.state());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  a.save_to(tmp.string());
  fs::rename(tmp, path);
}

void Trainer::load_checkpoint(const fs::path& path) {
  torch::serialize::InputArchive a;
  open_checkpoint(a, path);
  const auto saved = parse_config(read_string(a, "config"));
  check_compatible(saved, static_cast<int>(read_int(a, "image_channels")), cfg_, data_.channels());
  load_nets(a, nets_);
  torch::serialize::InputArchive og, od;
  if (!a.try_read("opt_G", og) || !a.try_read("opt_D", od)) throw ConfigError("checkpoint: missing optimiser state");
  opt_g_->load(og);
  opt_d_->load(od);
  torch::Tensor px, py, pyc;
  a.read("pool_x", px);
  a.read("pool_y", py);
  a.read("pool_y_clean", pyc);
  pool_x_.restore(px);
  pool_y_.restore(py);
  pool_y_clean_.restore(pyc);
  std::istringstream rng(read_string(a, "rng"));
  rng >> rng_;
  torch::Tensor noise;
  a.read("noise_state", noise);
  noise_.set_state(noise);
  iteration_ = static_cast<long>(read_int(a, "iteration"));
}

void save_bundle(const TranslationBundle& b, const fs::path& path) {
  torch::serialize::OutputArchive a;
  const std::pair<const char*, const torch::Tensor*> fields[] = {
      {"x", &b.x},         {"y", &b.y},         {"z_gen", &b.z_gen},     {"m_gen", &b.m_gen},
      {"z_gen_unmatch", &b.z_gen_unmatch},      {"z_gen_match", &b.z_gen_match},
      {"x_gen", &b.x_gen}, {"y_rec_clean", &b.y_rec_clean},          {"y_rec", &b.y_rec},
      {"y_gen", &b.y_gen}, {"y_gen_clean", &b.y_gen_clean},          {"z_rec", &b.z_rec},
      {"m_rec", &b.m_rec}, {"x_rec", &b.x_rec}, {"idt_x", &b.idt_x}, {"idt_y", &b.idt_y}};
  for (const auto& [name, t] : fields)
    if (t->defined()) a.write(name, t->detach());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  a.save_to(path.string());
}

LoadedModel load_model(const fs::path& checkpoint) {
  torch::serialize::InputArchive a;
  open_checkpoint(a, checkpoint);
  LoadedModel m;
  m.config = parse_config(read_string(a, "config"));
  m.image_channels = static_cast<int>(read_int(a, "image_channels"));
  m.iteration = static_cast<long>(read_int(a, "iteration"));
  m.nets = CycleNetworks(m.config.model_options(m.image_channels));
  load_nets(a, m.nets);
  m.nets->eval();
  return m;
}

void set_deterministic(bool on) { at::globalContext().setDeterministicAlgorithms(on, /*warn_only=*/false); }

TrainResult train(const fs::path& manifest_path, const TrainConfig& cfg, const fs::path& out_dir,
                  const TrainOptions& opts) {
  cfg.validate();
  if (opts.deterministic) set_deterministic(true);
  auto manifest = read_manifest(manifest_path);
  Trainer trainer(cfg, load_training_data(manifest, manifest_path));
  fs::create_directories(out_dir);
  trainer.set_nan_dump_path(out_dir / "nan_dump.pt");

  TrainResult r;
  r.checkpoint = out_dir / "checkpoint.pt";
  r.loss_log = out_dir / "loss_log.txt";
  if (opts.resume) {
    trainer.load_checkpoint(*opts.resume);
  } else {
    std::ofstream(r.loss_log, std::ios::trunc);
  }
  if (trainer.finished()) {
    if (!opts.resume) trainer.save_checkpoint(r.checkpoint);
    r.final_iteration = trainer.iteration();
    return r;
  }

  std::ofstream log(r.loss_log, std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + r.loss_log.string());
  const long per_epoch = trainer.iterations_per_epoch();
  while (!trainer.finished()) {
    auto report = trainer.step();
    const long it = trainer.iteration();
    log << format_loss_line(it, report) << '\n';
    r.reports.push_back(report);
    ++r.iterations_run;
    if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
      log.flush();
      trainer.save_checkpoint(out_dir / ("checkpoint_" + std::to_string(it) + ".pt"));
      trainer.save_checkpoint(r.checkpoint);
    } else if (it % per_epoch == 0) {
      log.flush();
      trainer.save_checkpoint(r.checkpoint);
    }
    if (!opts.quiet && it % per_epoch == 0)
      std::fprintf(stderr, "epoch %ld/%d  %s\n", it / per_epoch, cfg.hp.epochs, format_loss_line(it, report).c_str());
  }
  log.flush();
  trainer.save_checkpoint(r.checkpoint);
  r.final_iteration = trainer.iteration();
  return r;
}

}  // namespace stegogan
