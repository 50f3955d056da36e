#include "footreg/losses.hpp"

#include <algorithm>

namespace footreg {

namespace {

float ramp(float max_value, long t, long warmup) {
  if (t <= 0) return 0.0f;
  if (warmup <= 0 || t >= warmup) return max_value;
  return static_cast<float>(static_cast<double>(max_value) * static_cast<double>(t) /
                            static_cast<double>(warmup));
}

void require_scores(const char* op, const Tensor& scores) {
  if (!scores.defined() || scores.numel() == 0 || scores.rank() != 1) {
    throw ShapeError(op, "expected a non-empty [N] score vector");
  }
}

void check_raster(const char* op, const SegmentationMask& s,
                  std::span<const AffinityMatrix* const> w) {
  const Tensor& c = s.channels;
  if (c.rank() != 4 || c.dim(1) != 2) {
    throw ShapeError(op, "segmentation must be [N,2,H,W], got " + shape_to_string(c.shape()));
  }
  if (w.size() != static_cast<std::size_t>(c.dim(0))) {
    throw ShapeError(op, std::to_string(w.size()) + " affinity matrices for a batch of " +
                             std::to_string(c.dim(0)));
  }
  for (const AffinityMatrix* m : w) {
    if (m->height() != c.dim(2) || m->width() != c.dim(3)) {
      throw ShapeError(op, "affinity raster " + std::to_string(m->height()) + "x" +
                               std::to_string(m->width()) + " does not match segmentation " +
                               shape_to_string(c.shape()));
    }
  }
}

// S_k . W (1 - S_k)
Tensor cut_term(const AffinityMatrix& w, const Tensor& s_k) {
  return dot(s_k, apply(w, rsub_scalar(1.0f, s_k)));
}

Tensor batch_average(std::vector<Tensor> per_sample) {
  Tensor total = per_sample.front();
  for (std::size_t i = 1; i < per_sample.size(); ++i) total = add(total, per_sample[i]);
  return scale(total, 1.0f / static_cast<float>(per_sample.size()));
}

}  // namespace

float LossWeights::delta_at(long t) const { return ramp(delta_max, t, warmup_batches); }
float LossWeights::epsilon_at(long t) const { return ramp(epsilon_max, t, warmup_batches); }

SegmentationMask make_segmentation(const Tensor& probability) {
  if (probability.rank() != 4 || probability.dim(1) != 1) {
    throw ShapeError("make_segmentation", "expected [N,1,H,W], got " +
                                              shape_to_string(probability.shape()));
  }
  return {concat_channels(probability, rsub_scalar(1.0f, probability))};
}

Tensor loss_discriminator(const Tensor& d_on_recon, const Tensor& d_on_gen) {
  require_scores("loss_discriminator", d_on_recon);
  require_scores("loss_discriminator", d_on_gen);
  return add(mean(square(rsub_scalar(1.0f, d_on_recon))), mean(square(d_on_gen)));
}

Tensor loss_gan_generator(const Tensor& d_on_gen) {
  require_scores("loss_gan_generator", d_on_gen);
  return mean(square(rsub_scalar(1.0f, d_on_gen)));
}

Tensor loss_bce(const Tensor& target, const Tensor& prediction, BceVariant variant) {
  if (target.shape() != prediction.shape()) {
    throw ShapeError("loss_bce", "target " + shape_to_string(target.shape()) +
                                     " vs prediction " + shape_to_string(prediction.shape()));
  }
  const Tensor p = clamp(prediction, kBceClamp, 1.0f - kBceClamp);
  Tensor ll = mul(target, log(p));
  if (variant == BceVariant::two_term) {
    ll = add(ll, mul(rsub_scalar(1.0f, target), log(rsub_scalar(1.0f, p))));
  }
  return scale(mean(ll), -1.0f);
}

Tensor loss_potts(const SegmentationMask& s, std::span<const AffinityMatrix* const> w) {
  check_raster("loss_potts", s, w);
  const int n = s.channels.dim(0);
  std::vector<Tensor> per_sample;
  for (int b = 0; b < n; ++b) {
    const AffinityMatrix& m = *w[static_cast<std::size_t>(b)];
    Tensor term = add(cut_term(m, plane(s.channels, b, 0)), cut_term(m, plane(s.channels, b, 1)));
    per_sample.push_back(scale(term, 1.0f / static_cast<float>(m.n_pixels())));
  }
  return batch_average(std::move(per_sample));
}

Tensor loss_ncut(const SegmentationMask& s, std::span<const AffinityMatrix* const> w_hat) {
  check_raster("loss_ncut", s, w_hat);
  const int n = s.channels.dim(0);
  std::vector<Tensor> per_sample;
  for (int b = 0; b < n; ++b) {
    const AffinityMatrix& m = *w_hat[static_cast<std::size_t>(b)];
    const Tensor d = degree(m);
    Tensor total;
    for (int k = 0; k < 2; ++k) {
      const Tensor s_k = plane(s.channels, b, k);
      Tensor ratio = div(cut_term(m, s_k), add_scalar(dot(d, s_k), kNcutDenominatorEps));
      total = total.defined() ? add(total, ratio) : ratio;
    }
    per_sample.push_back(total);
  }
  return batch_average(std::move(per_sample));
}

Tensor full_objective(const LossComponents& c, const LossWeights& weights) {
  const long t = weights.batch_index;
  Tensor total = add(scale(c.gan, weights.alpha), scale(c.bce_g, weights.beta));
  total = add(total, scale(c.bce_r, weights.gamma));
  total = add(total, scale(c.potts, weights.delta_at(t)));
  return add(total, scale(c.ncut, weights.epsilon_at(t)));
}

}  // namespace footreg
