#include "footreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "footreg/config.hpp"
#include "footreg/serialize.hpp"

namespace footreg {

double lr_at(long t, const Schedule& s) {
  if (t < 0 || t >= s.total_batches) {
    throw std::out_of_range("lr_at: batch " + std::to_string(t) + " outside [0, " +
                            std::to_string(s.total_batches) + ")");
  }
  if (t < s.constant_batches) return s.base_lr;
  const double decay = static_cast<double>(s.total_batches - s.constant_batches);
  return s.base_lr * static_cast<double>(s.total_batches - t) / decay;
}

// ---- Adam ----------------------------------------------------------------------------

void adam_update(std::span<float> param, std::span<const float> grad, AdamSlot& slot, long step,
                 double lr, const AdamHyper& h) {
  if (!grad.empty() && grad.size() != param.size()) {
    throw ShapeError("adam_update", "gradient length differs from parameter length");
  }
  if (slot.m.size() != param.size()) {
    slot.m.assign(param.size(), 0.0f);
    slot.v.assign(param.size(), 0.0f);
  }
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    const double m = h.beta1 * slot.m[i] + (1.0 - h.beta1) * g;
    const double v = h.beta2 * slot.v[i] + (1.0 - h.beta2) * g * g;
    slot.m[i] = static_cast<float>(m);
    slot.v[i] = static_cast<float>(v);
    param[i] = static_cast<float>(param[i] - lr * (m / c1) / (std::sqrt(v / c2) + h.eps));
  }
}

Adam::Adam(std::vector<Tensor> params, AdamHyper hyper)
    : params_(std::move(params)), slots_(params_.size()), hyper_(hyper) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].numel(), 0.0f);
    slots_[i].v.assign(params_[i].numel(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_update(params_[i].data(), params_[i].grad(), slots_[i], step_, lr, hyper_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.push_back({prefix + ".step", Tensor::from_data({1}, {static_cast<float>(step_)})});
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const int n = static_cast<int>(slots_[i].m.size());
    out.push_back({prefix + ".m." + std::to_string(i), Tensor::from_data({n}, slots_[i].m)});
    out.push_back({prefix + ".v." + std::to_string(i), Tensor::from_data({n}, slots_[i].v)});
  }
  return out;
}

void Adam::load_state(const std::string& prefix, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  auto fetch = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing optimizer tensor " + name);
    return *it->second;
  };
  step_ = static_cast<long>(fetch(prefix + ".step").item());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const Tensor& m = fetch(prefix + ".m." + std::to_string(i));
    const Tensor& v = fetch(prefix + ".v." + std::to_string(i));
    if (m.numel() != params_[i].numel() || v.numel() != params_[i].numel()) {
      throw FormatError("optimizer slot " + std::to_string(i) + " does not match its parameter");
    }
    slots_[i].m.assign(m.data().begin(), m.data().end());
    slots_[i].v.assign(v.data().begin(), v.data().end());
  }
}

// ---- loss records ----------------------------------------------------------------------

bool LossRecord::finite() const {
  return std::isfinite(l_d) && std::isfinite(l_gan) && std::isfinite(l_bce_g) &&
         std::isfinite(l_bce_r) && std::isfinite(l_potts) && std::isfinite(l_ncut) &&
         std::isfinite(total);
}

std::string loss_log_row(const LossRecord& r) {
  std::ostringstream out;
  out.precision(9);
  out << r.batch_index << ',' << r.l_d << ',' << r.l_gan << ',' << r.l_bce_g << ',' << r.l_bce_r
      << ',' << r.l_potts << ',' << r.l_ncut << ',' << r.total;
  return out.str();
}

// ---- one training step -------------------------------------------------------------------

Batch make_batch(const std::vector<SampleTriple>& data, const std::vector<AffinityMatrix>& affinities,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = data.at(indices[0]);
  const int h = first.ideal_mask.dim(1), w = first.ideal_mask.dim(2);
  const int n = static_cast<int>(indices.size());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<float> x(n * hw), z(3 * n * hw), y(n * hw);
  Batch b;
  for (int i = 0; i < n; ++i) {
    const auto& t = data.at(indices[static_cast<std::size_t>(i)]);
    if (t.ideal_mask.dim(1) != h || t.ideal_mask.dim(2) != w) {
      throw ShapeError("make_batch", "samples of differing raster size in one batch");
    }
    std::copy(t.input_mask.data().begin(), t.input_mask.data().end(), x.begin() + i * hw);
    std::copy(t.image.data().begin(), t.image.data().end(), z.begin() + 3 * i * hw);
    std::copy(t.ideal_mask.data().begin(), t.ideal_mask.data().end(), y.begin() + i * hw);
    if (!affinities.empty()) b.affinities.push_back(&affinities.at(indices[static_cast<std::size_t>(i)]));
  }
  b.x = Tensor::from_data({n, 1, h, w}, std::move(x));
  b.z = Tensor::from_data({n, 3, h, w}, std::move(z));
  b.y = Tensor::from_data({n, 1, h, w}, std::move(y));
  return b;
}

namespace {

class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
};

}  // namespace

ForwardPass forward_pass(const Batch& batch, NetworkBundle& bundle) {
  return {generator_forward(batch.x, batch.z, bundle, Mode::train),
          reconstruction_forward(batch.y, bundle, Mode::train)};
}

void discriminator_step(const ForwardPass& pass, NetworkBundle& bundle, Adam& opt, double lr,
                        LossRecord& rec, int d_steps) {
  const Tensor fake = pass.generated.detach();
  const Tensor real = pass.reconstructed.detach();
  for (int k = 0; k < d_steps; ++k) {
    const Tensor d_real = discriminator_forward(real, bundle, Mode::train);
    const Tensor d_fake = discriminator_forward(fake, bundle, Mode::train);
    const Tensor l_d = loss_discriminator(d_real, d_fake);
    rec.l_d = l_d.item();
    if (!std::isfinite(rec.l_d)) throw NumericalError("non-finite discriminator loss", rec);
    opt.zero_grad();
    l_d.backward();
    opt.step(lr);
  }
  opt.zero_grad();
}

void generator_step(const ForwardPass& pass, const Batch& batch, NetworkBundle& bundle, Adam& opt,
                    const LossWeights& weights, double lr, LossRecord& rec, BceVariant bce) {
  FreezeGuard freeze(bundle.discriminator_parameters());
  LossComponents c;
  c.gan = loss_gan_generator(discriminator_forward(pass.generated, bundle, Mode::frozen));
  c.bce_g = loss_bce(batch.x, pass.generated, bce);
  c.bce_r = loss_bce(batch.y, pass.reconstructed, bce);
  if (!batch.affinities.empty()) {
    const SegmentationMask s = make_segmentation(pass.generated);
    c.potts = loss_potts(s, batch.affinities);
    c.ncut = loss_ncut(s, batch.affinities);
  } else {
    c.potts = Tensor::scalar(0.0f);
    c.ncut = Tensor::scalar(0.0f);
  }
  const Tensor total = full_objective(c, weights);
  rec.l_gan = c.gan.item();
  rec.l_bce_g = c.bce_g.item();
  rec.l_bce_r = c.bce_r.item();
  rec.l_potts = c.potts.item();
  rec.l_ncut = c.ncut.item();
  rec.total = total.item();
  if (!rec.finite()) throw NumericalError("non-finite generator objective", rec);
  opt.zero_grad();
  total.backward();
  opt.step(lr);
  opt.zero_grad();
}

LossRecord train_step(const Batch& batch, NetworkBundle& bundle, Adam& opt_generator,
                      Adam& opt_discriminator, const LossWeights& weights, double lr,
                      BceVariant bce, int d_steps) {
  LossRecord rec;
  rec.batch_index = weights.batch_index;
  rec.lr = lr;
  const ForwardPass pass = forward_pass(batch, bundle);
  discriminator_step(pass, bundle, opt_discriminator, lr, rec, d_steps);
  generator_step(pass, batch, bundle, opt_generator, weights, lr, rec, bce);
  return rec;
}

// ---- Trainer -----------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, std::vector<SampleTriple> train_set)
    : config_(std::move(config)), data_(std::move(train_set)) {
  if (data_.empty()) throw std::invalid_argument("Trainer: empty training set");
  if (config_.batch_size < 1) throw std::invalid_argument("Trainer: batch_size must be >= 1");
  affinities_.reserve(data_.size());
  for (const auto& t : data_) affinities_.push_back(build_affinity(t.image, config_.affinity));
  bundle_ = init_parameters(config_.net, config_.seed);
  opt_g_ = Adam(bundle_.generator_parameters(), config_.adam);
  opt_d_ = Adam(bundle_.discriminator_parameters(), config_.adam);
}

std::vector<std::size_t> Trainer::batch_indices(long t) const {
  const std::size_t n = data_.size();
  const std::size_t b = static_cast<std::size_t>(config_.batch_size);
  std::vector<std::size_t> out;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t pos = static_cast<std::size_t>(t) * b + j;
    const std::size_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(sample_seed(config_.seed ^ 0xB47C4ull, epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

LossRecord Trainer::step() {
  const auto idx = batch_indices(batch_index_);
  const Batch batch = make_batch(data_, affinities_, idx);
  LossWeights w = config_.weights;
  w.batch_index = batch_index_;
  const double lr = lr_at(batch_index_, config_.schedule);
  LossRecord rec = train_step(batch, bundle_, opt_g_, opt_d_, w, lr, config_.bce, config_.d_steps);
  ++batch_index_;
  return rec;
}

void Trainer::save_checkpoint(const std::string& stem) const {
  std::vector<NamedTensor> tensors = bundle_.state();
  for (auto& nt : opt_g_.state("opt.G")) tensors.push_back(std::move(nt));
  for (auto& nt : opt_d_.state("opt.D")) tensors.push_back(std::move(nt));
  const std::string tmp = stem + ".freg.tmp";
  save_tensors(tmp, tensors);
  std::filesystem::rename(tmp, stem + ".freg");
  {
    std::ofstream cfg(stem + ".netcfg", std::ios::trunc);
    cfg << net_config_to_text(bundle_.config);
  }
  std::ofstream man(stem + ".manifest", std::ios::trunc);
  if (!man) throw FormatError("cannot write " + stem + ".manifest");
  man << "batch_index = " << batch_index_ << '\n';
  man << "rng_seed = " << config_.seed << '\n';
  man << "crc32 = " << hex32(crc32_file(stem + ".freg")) << '\n';
  man << train_config_to_text(config_);
}

long verify_checkpoint(const std::string& stem) {
  std::ifstream man(stem + ".manifest");
  if (!man) throw FormatError("missing checkpoint manifest " + stem + ".manifest");
  long batch = -1;
  std::string crc;
  std::string line;
  while (std::getline(man, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (key == "batch_index") batch = std::stol(value);
    if (key == "crc32") crc = value;
  }
  if (batch < 0 || crc.empty()) throw FormatError("checkpoint manifest incomplete: " + stem);
  if (hex32(crc32_file(stem + ".freg")) != crc) {
    throw FormatError("checkpoint corrupted (CRC mismatch): " + stem + ".freg");
  }
  return batch;
}

void Trainer::load_checkpoint(const std::string& stem) {
  const long batch = verify_checkpoint(stem);
  const auto tensors = load_tensors(stem + ".freg");
  bundle_.load_state(tensors);
  opt_g_.load_state("opt.G", tensors);
  opt_d_.load_state("opt.D", tensors);
  batch_index_ = batch;
}

// ---- driver ---------------------------------------------------------------------------------

TrainingResult run_training(const TrainConfig& config, std::vector<SampleTriple> train_set,
                            const std::filesystem::path& out_dir, const std::string& resume_from,
                            long stop_at) {
  std::filesystem::create_directories(out_dir);
  Trainer trainer(config, std::move(train_set));
  if (!resume_from.empty()) trainer.load_checkpoint(resume_from);

  const auto log_path = out_dir / "losses.csv";
  // Keep log rows that precede the resume point so row count tracks batches run.
  std::vector<std::string> kept;
  if (!resume_from.empty() && std::filesystem::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stol(line.substr(0, line.find(','))) < trainer.batch_index()) kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  log << kLossLogHeader << '\n';
  for (const auto& l : kept) log << l << '\n';

  write_text_file(out_dir / "resolved.cfg", train_config_to_text(config));

  const long end = stop_at >= 0 ? std::min(stop_at, config.schedule.total_batches)
                                 : config.schedule.total_batches;
  const std::string stem = (out_dir / "checkpoint").string();
  TrainingResult result;
  while (trainer.batch_index() < end) {
    LossRecord rec;
    try {
      rec = trainer.step();
    } catch (const NumericalError& e) {
      log.flush();
      std::ofstream diag(out_dir / "numerical_failure.txt", std::ios::trunc);
      diag << e.what() << '\n' << kLossLogHeader << '\n' << loss_log_row(e.record()) << '\n';
      throw;
    }
    log << loss_log_row(rec) << '\n';
    ++result.batches_run;
    if (config.checkpoint_interval > 0 && trainer.batch_index() % config.checkpoint_interval == 0) {
      log.flush();
      trainer.save_checkpoint(stem);
    }
  }
  log.flush();
  trainer.save_checkpoint(stem);
  result.final_batch_index = trainer.batch_index();
  result.final_checkpoint = stem;
  result.loss_log = log_path;
  return result;
}

}  // namespace footreg
