#pragma once

#include <span>

#include "footreg/affinity.hpp"
#include "footreg/tensor.hpp"

namespace footreg {

struct LossWeights {
  float alpha = 3.0f;        // adversarial
  float beta = 3.0f;         // BCE on the generator path
  float gamma = 1.0f;        // BCE on the reconstruction path
  float delta_max = 200.0f;  // Potts
  float epsilon_max = 2.0f;  // normalized cut
  long warmup_batches = 30000;
  long batch_index = 0;

  /// Linear ramp from zero, saturating at warmup_batches.
  float delta_at(long t) const;
  float epsilon_at(long t) const;
  float delta() const { return delta_at(batch_index); }
  float epsilon() const { return epsilon_at(batch_index); }
};

/// Two-class segmentation [p, 1 - p] built from the single sigmoid output.
struct SegmentationMask {
  Tensor channels;  // [N, 2, H, W]
};

SegmentationMask make_segmentation(const Tensor& probability);

inline constexpr float kBceClamp = 1e-7f;
inline constexpr float kNcutDenominatorEps = 1e-6f;

enum class BceVariant {
  two_term,   // -[t log p + (1 - t) log(1 - p)]
  one_sided,  // -t log p
};

/// mean (1 - D(R(y)))^2 + mean D(G(x,z))^2
Tensor loss_discriminator(const Tensor& d_on_recon, const Tensor& d_on_gen);
/// mean (1 - D(G(x,z)))^2
Tensor loss_gan_generator(const Tensor& d_on_gen);
/// Per-pixel mean binary cross entropy; prediction clamped to [1e-7, 1 - 1e-7].
Tensor loss_bce(const Tensor& target, const Tensor& prediction,
                BceVariant variant = BceVariant::two_term);

/// sum_k S_k . W (1 - S_k) / n_pixels, averaged over the batch. One matrix per sample.
Tensor loss_potts(const SegmentationMask& s, std::span<const AffinityMatrix* const> w);
/// sum_k S_k . W (1 - S_k) / (d . S_k + eps), averaged over the batch.
Tensor loss_ncut(const SegmentationMask& s, std::span<const AffinityMatrix* const> w_hat);

struct LossComponents {
  Tensor gan;
  Tensor bce_g;
  Tensor bce_r;
  Tensor potts;
  Tensor ncut;
};

/// alpha L_GAN + beta L_BCE_G + gamma L_BCE_R + delta(t) L_Potts + epsilon(t) L_ncut,
/// with t = weights.batch_index.
Tensor full_objective(const LossComponents& components, const LossWeights& weights);

}  // namespace footreg
