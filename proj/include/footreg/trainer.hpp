#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "footreg/affinity.hpp"
#include "footreg/losses.hpp"
#include "footreg/networks.hpp"
#include "footreg/synthdata.hpp"

namespace footreg {

struct Schedule {
  long total_batches = 80000;
  long constant_batches = 60000;  // lr decays linearly to zero after this
  double base_lr = 0.0002;
};

/// base_lr for t < constant_batches, then base_lr * (total - t) / (total - constant).
double lr_at(long t, const Schedule& schedule);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  std::vector<float> m;
  std::vector<float> v;
};

/// One bias-corrected Adam step; `step` is the 1-based update count.
void adam_update(std::span<float> param, std::span<const float> grad, AdamSlot& slot, long step,
                 double lr, const AdamHyper& hyper = {});

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, AdamHyper hyper = {});

  /// Missing gradients count as zero.
  void step(double lr);
  void zero_grad();
  long steps() const { return step_; }

  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const std::string& prefix, const std::vector<NamedTensor>& tensors);

 private:
  std::vector<Tensor> params_;
  std::vector<AdamSlot> slots_;
  AdamHyper hyper_;
  long step_ = 0;
};

struct TrainConfig {
  NetConfig net;
  LossWeights weights;
  Schedule schedule;
  AffinityParams affinity;
  AdamHyper adam;
  BceVariant bce = BceVariant::two_term;
  int batch_size = 8;
  int d_steps = 1;  // discriminator updates per batch
  std::uint64_t seed = 1;
  long checkpoint_interval = 1000;
};

struct LossRecord {
  long batch_index = 0;
  double l_d = 0.0;
  double l_gan = 0.0;
  double l_bce_g = 0.0;
  double l_bce_r = 0.0;
  double l_potts = 0.0;
  double l_ncut = 0.0;
  double total = 0.0;
  double lr = 0.0;

  bool finite() const;
};

inline constexpr const char* kLossLogHeader =
    "batch_index,L_D,L_GAN,L_BCE_G,L_BCE_R,L_Potts,L_ncut,total";
std::string loss_log_row(const LossRecord& r);

/// Raised when a loss turns non-finite; parameters are left at their last good values.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, LossRecord record)
      : std::runtime_error(what), record_(record) {}
  const LossRecord& record() const { return record_; }

 private:
  LossRecord record_;
};

struct Batch {
  Tensor x;  // [N,1,H,W]
  Tensor z;  // [N,3,H,W]
  Tensor y;  // [N,1,H,W]
  std::vector<const AffinityMatrix*> affinities;
};

Batch make_batch(const std::vector<SampleTriple>& data, const std::vector<AffinityMatrix>& affinities,
                 std::span<const std::size_t> indices);

/// G(x, z) and R(y) of one batch, computed once and shared by both updates.
struct ForwardPass {
  Tensor generated;
  Tensor reconstructed;
};

ForwardPass forward_pass(const Batch& batch, NetworkBundle& bundle);
/// Updates D only, on detached copies of the pass outputs. Sets rec.l_d.
void discriminator_step(const ForwardPass& pass, NetworkBundle& bundle, Adam& opt, double lr,
                        LossRecord& rec, int d_steps = 1);
/// Updates E_G, E_R and F on the full objective; D runs frozen. Sets the other loss fields.
void generator_step(const ForwardPass& pass, const Batch& batch, NetworkBundle& bundle, Adam& opt,
                    const LossWeights& weights, double lr, LossRecord& rec,
                    BceVariant bce = BceVariant::two_term);

/// Discriminator update on detached G/R outputs, then one joint E_G/E_R/F update
/// of the full objective with D frozen. weights.batch_index selects delta/epsilon.
LossRecord train_step(const Batch& batch, NetworkBundle& bundle, Adam& opt_generator,
                      Adam& opt_discriminator, const LossWeights& weights, double lr,
                      BceVariant bce = BceVariant::two_term, int d_steps = 1);

/// Owns the mutable training state and the deterministic batch stream.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<SampleTriple> train_set);

  long batch_index() const { return batch_index_; }
  const TrainConfig& config() const { return config_; }
  NetworkBundle& bundle() { return bundle_; }
  const NetworkBundle& bundle() const { return bundle_; }

  /// Sample indices of batch t: consecutive slices of per-epoch seeded permutations.
  std::vector<std::size_t> batch_indices(long t) const;
  LossRecord step();

  /// Writes <stem>.freg, <stem>.netcfg and <stem>.manifest (with CRC of the .freg).
  void save_checkpoint(const std::string& stem) const;
  /// Restores parameters, running statistics, optimizer moments and batch index.
  void load_checkpoint(const std::string& stem);

 private:
  TrainConfig config_;
  std::vector<SampleTriple> data_;
  std::vector<AffinityMatrix> affinities_;
  NetworkBundle bundle_;
  Adam opt_g_;
  Adam opt_d_;
  long batch_index_ = 0;
};

struct TrainingResult {
  long batches_run = 0;
  long final_batch_index = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_log;
};

/// Runs from batch 0 (or from `resume_from` when non-empty) until total_batches or
/// `stop_at`, whichever comes first. Checkpoints land in out_dir/checkpoint.* every
/// checkpoint_interval batches and at the end; the loss log is out_dir/losses.csv.
TrainingResult run_training(const TrainConfig& config, std::vector<SampleTriple> train_set,
                            const std::filesystem::path& out_dir,
                            const std::string& resume_from = {}, long stop_at = -1);

/// Verifies the manifest CRC and returns the stored batch index.
long verify_checkpoint(const std::string& stem);

}  // namespace footreg
