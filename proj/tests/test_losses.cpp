#include <doctest.h>

#include <cmath>
#include <random>

#include "footreg/losses.hpp"
#include "oracles.hpp"

using namespace footreg;

namespace {

Tensor scores(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return Tensor::from_data({n}, std::move(v));
}

// [1,1,H,W] probability map
Tensor prob(int h, int w, std::vector<float> v, bool grad = false) {
  return Tensor::from_data({1, 1, h, w}, std::move(v), grad);
}

// Left half one tone, right half another.
Tensor two_tone(int h, int w, float a, float b) {
  std::vector<float> v(std::size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[y * w + x] = x < w / 2 ? a : b;
  return Tensor::from_data({1, h, w}, v);
}

std::vector<float> half_mask(int h, int w, int split) {
  std::vector<float> v(std::size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[y * w + x] = x < split ? 1.0f : 0.0f;
  return v;
}

// sum_k s_k . W (1 - s_k) from explicit pairs, in double.
double dense_cut(const std::vector<oracle::PairWeight>& pairs, const std::vector<float>& p) {
  double total = 0.0;
  for (const auto& pw : pairs) {
    total += pw.w * p[pw.i] * (1.0 - p[pw.j]);
    total += pw.w * (1.0 - p[pw.i]) * p[pw.j];
  }
  return total;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("least-squares adversarial terms") {
  CHECK(loss_discriminator(scores({1, 1}), scores({0, 0})).item() == 0.0f);
  CHECK(loss_discriminator(scores({0.5f, 0.5f}), scores({0.5f, 0.5f})).item() == 0.5f);
  CHECK(loss_discriminator(scores({0}), scores({1})).item() == 2.0f);
  CHECK(loss_gan_generator(scores({1})).item() == 0.0f);
  CHECK(loss_gan_generator(scores({0})).item() == 1.0f);
  CHECK(loss_gan_generator(scores({0.5f, 0.5f, 0.5f})).item() == 0.25f);
  CHECK_THROWS(loss_gan_generator(Tensor::zeros({0})));
}

TEST_CASE("binary cross entropy") {
  CHECK(loss_bce(Tensor::full({1, 1, 2, 2}, 1), Tensor::full({1, 1, 2, 2}, 1)).item() <= 1e-6f);
  CHECK(loss_bce(Tensor::full({4}, 1), Tensor::full({4}, 0.5f)).item() == doctest::Approx(0.6931472));
  CHECK_THROWS_AS(loss_bce(Tensor::zeros({4}), Tensor::zeros({5})), ShapeError);

  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  std::vector<float> t(200), p = oracle::uniform(rng, 200, 0.001f, 0.999f);
  for (auto& v : t) v = coin(rng) ? 1.0f : 0.0f;
  double ref = 0.0, ref_one = 0.0;
  for (int i = 0; i < 200; ++i) {
    ref -= t[i] * std::log(double(p[i])) + (1 - t[i]) * std::log(1.0 - p[i]);
    ref_one -= t[i] * std::log(double(p[i]));
  }
  Tensor tt = Tensor::from_data({200}, t), pp = Tensor::from_data({200}, p);
  CHECK(loss_bce(tt, pp).item() == doctest::Approx(ref / 200).epsilon(1e-6));
  CHECK(loss_bce(tt, pp, BceVariant::one_sided).item() == doctest::Approx(ref_one / 200).epsilon(1e-6));

  // minimum at p == t
  const float at_target = loss_bce(tt, Tensor::from_data({200}, t)).item();
  std::vector<float> off(t);
  for (auto& v : off) v = v == 1.0f ? 0.9f : 0.1f;
  CHECK(at_target < loss_bce(tt, Tensor::from_data({200}, off)).item());
}

TEST_CASE("segmentation channels sum to one") {
  Tensor p = prob(2, 3, {0, 0.25f, 0.5f, 0.75f, 1, 0.1f});
  SegmentationMask s = make_segmentation(p);
  CHECK(s.channels.shape() == Shape{1, 2, 2, 3});
  for (int i = 0; i < 6; ++i) CHECK(s.channels.at(i) + s.channels.at(6 + i) == 1.0f);
}

TEST_CASE("Potts and normalized cut closed forms") {
  std::mt19937_64 rng(9);
  const int h = 8, w = 8;
  Tensor img = Tensor::from_data({3, h, w}, oracle::uniform(rng, 3 * h * w, 0, 1));
  AffinityParams params{0.3, 4.0, 3.0};
  AffinityMatrix m = build_affinity(img, params);
  const AffinityMatrix* mp[] = {&m};
  const auto pairs = oracle::dense_affinity({img.data().begin(), img.data().end()}, 3, h, w,
                                            params.sigma_i, params.sigma_x, params.radius);
  double sum_w = 0.0;
  for (const auto& pw : pairs) sum_w += pw.w;

  auto seg = [&](float v) { return make_segmentation(Tensor::full({1, 1, h, w}, v)); };
  CHECK(loss_potts(seg(1.0f), mp).item() == 0.0f);
  CHECK(loss_potts(seg(0.0f), mp).item() == 0.0f);
  CHECK(loss_ncut(seg(1.0f), mp).item() == 0.0f);
  CHECK(loss_potts(seg(0.5f), mp).item() == doctest::Approx(2 * 0.25 * sum_w / (h * w)).epsilon(1e-5));
  CHECK(loss_ncut(seg(0.5f), mp).item() == doctest::Approx(1.0).epsilon(1e-5));

  const auto p = oracle::uniform(rng, h * w, 0, 1);
  double d_dot_p = 0.0, d_dot_q = 0.0;
  std::vector<double> d(h * w, 0.0);
  for (const auto& pw : pairs) d[pw.i] += pw.w;
  for (int i = 0; i < h * w; ++i) {
    d_dot_p += d[i] * p[i];
    d_dot_q += d[i] * (1.0 - p[i]);
  }
  double cut_p = 0.0;
  for (const auto& pw : pairs) cut_p += pw.w * p[pw.i] * (1.0 - p[pw.j]);
  // for symmetric W, s.W(1-s) is the same for both channels
  const auto s = make_segmentation(prob(h, w, p));
  CHECK(loss_potts(s, mp).item() == doctest::Approx(dense_cut(pairs, p) / (h * w)).epsilon(1e-5));
  CHECK(loss_ncut(s, mp).item() ==
        doctest::Approx(cut_p / (d_dot_p + 1e-6) + cut_p / (d_dot_q + 1e-6)).epsilon(1e-5));
}

TEST_CASE("Potts is zero when no in-radius pair crosses the partition") {
  const int h = 6, w = 8;
  std::vector<float> mask(h * w, 0.0f);
  for (int y = 0; y < h; ++y) mask[y * w] = 1.0f;
  const auto s = make_segmentation(prob(h, w, mask));

  // radius 1 admits no neighbours at all
  AffinityMatrix none = build_affinity(Tensor::full({1, h, w}, 0.5f), AffinityParams{0.075, 4.0, 1.0});
  const AffinityMatrix* np[] = {&none};
  CHECK(none.offsets().empty());
  CHECK(loss_potts(s, np).item() == 0.0f);

  // same partition under radius 3 does cross pairs
  AffinityMatrix some = build_affinity(Tensor::full({1, h, w}, 0.5f), AffinityParams{0.075, 4.0, 3.0});
  const AffinityMatrix* sp[] = {&some};
  CHECK(loss_potts(s, sp).item() > 0.0f);
}

TEST_CASE("image-aligned partitions score low") {
  const int h = 8, w = 8;
  Tensor img = two_tone(h, w, 0.2f, 0.8f);
  AffinityMatrix m = build_affinity(img, AffinityParams{0.075, 4.0, 3.0});
  const AffinityMatrix* mp[] = {&m};
  const auto aligned = make_segmentation(prob(h, w, half_mask(h, w, 4)));
  const auto shifted = make_segmentation(prob(h, w, half_mask(h, w, 2)));
  CHECK(loss_ncut(aligned, mp).item() < 0.05f);
  CHECK(loss_potts(aligned, mp).item() < loss_potts(shifted, mp).item());

  const auto pairs = oracle::dense_affinity({img.data().begin(), img.data().end()}, 1, h, w, 0.075, 4.0, 3.0);
  const auto a = half_mask(h, w, 4);
  CHECK(loss_potts(aligned, mp).item() == doctest::Approx(dense_cut(pairs, a) / (h * w)).epsilon(1e-5));
}

TEST_CASE("losses are nonnegative") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor img = Tensor::from_data({3, 6, 6}, oracle::uniform(rng, 108, 0, 1));
    AffinityMatrix m = build_affinity(img, AffinityParams{0.2, 4.0, 3.0});
    const AffinityMatrix* mp[] = {&m};
    const auto s = make_segmentation(prob(6, 6, oracle::uniform(rng, 36, 0, 1)));
    CHECK(loss_potts(s, mp).item() >= 0.0f);
    CHECK(loss_ncut(s, mp).item() >= 0.0f);
  }
}

TEST_CASE("raster mismatch") {
  AffinityMatrix m = build_affinity(Tensor::full({1, 4, 4}, 0.5f), {});
  const AffinityMatrix* mp[] = {&m};
  const auto s = make_segmentation(Tensor::full({1, 1, 4, 8}, 0.5f));
  CHECK_THROWS(loss_potts(s, mp));
  CHECK_THROWS(loss_ncut(s, mp));
  const auto two = make_segmentation(Tensor::full({2, 1, 4, 4}, 0.5f));
  CHECK_THROWS(loss_potts(two, mp));
}

TEST_CASE("Potts gradient identity") {
  std::mt19937_64 rng(77);
  const int h = 6, w = 6, n = h * w;
  Tensor img = Tensor::from_data({3, h, w}, oracle::uniform(rng, 3 * n, 0, 1));
  AffinityMatrix m = build_affinity(img, AffinityParams{0.3, 4.0, 3.0});
  const AffinityMatrix* mp[] = {&m};
  const auto pairs = oracle::dense_affinity({img.data().begin(), img.data().end()}, 3, h, w, 0.3, 4.0, 3.0);
  const auto pv = oracle::uniform(rng, n, 0, 1);
  Tensor p = prob(h, w, pv, true);
  loss_potts(make_segmentation(p), mp).backward();
  std::vector<double> w1(n, 0.0), wp(n, 0.0);
  for (const auto& pw : pairs) {
    w1[pw.i] += pw.w;
    wp[pw.i] += pw.w * pv[pw.j];
  }
  for (int i = 0; i < n; ++i) {
    CHECK(p.grad()[i] == doctest::Approx(2.0 * (w1[i] - 2.0 * wp[i]) / n).epsilon(1e-5).scale(1e-5));
  }
}

TEST_CASE("regularized loss gradients against finite differences") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 2, h = 6, w = 6;
    std::vector<AffinityMatrix> ms;
    for (int b = 0; b < n; ++b) {
      ms.push_back(build_affinity(Tensor::from_data({3, h, w}, oracle::uniform(rng, 3 * h * w, 0, 1)),
                                  AffinityParams{0.3, 4.0, 3.0}));
    }
    std::vector<const AffinityMatrix*> mp{&ms[0], &ms[1]};
    Tensor p = Tensor::from_data({n, 1, h, w}, oracle::uniform(rng, n * h * w, 0.05f, 0.95f));
    auto potts = [&](auto& v) { return loss_potts(make_segmentation(v[0]), mp); };
    auto ncut = [&](auto& v) { return loss_ncut(make_segmentation(v[0]), mp); };
    // The losses come back as one float near 1 while single-pixel gradients are
    // O(1/n); a 2e-2 step keeps that rounding well under the tolerance. Potts is
    // quadratic in p, so the step adds no bias.
    CHECK(oracle::gradcheck(potts, {p.clone()}, trial, 2e-2).worst_relative_error < 1e-3);
    CHECK(oracle::gradcheck(ncut, {p.clone()}, trial, 2e-2).worst_relative_error < 1e-3);
  }
}

TEST_CASE("warm-up and full objective") {
  LossWeights lw;
  CHECK(lw.delta_at(0) == 0.0f);
  CHECK(lw.epsilon_at(0) == 0.0f);
  CHECK(lw.delta_at(15000) == 100.0f);
  CHECK(lw.delta_at(30000) == 200.0f);
  CHECK(lw.epsilon_at(90000) == 2.0f);

  LossComponents c{Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3), Tensor::scalar(4), Tensor::scalar(5)};
  lw.batch_index = 0;
  CHECK(full_objective(c, lw).item() == doctest::Approx(3 * 1 + 3 * 2 + 1 * 3));
  lw.batch_index = 30000;
  CHECK(full_objective(c, lw).item() == doctest::Approx(3 + 6 + 3 + 200 * 4 + 2 * 5));
  LossComponents z{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
  CHECK(full_objective(z, lw).item() == 0.0f);

  // At t = 0 the regularized terms pass no gradient.
  Tensor potts = Tensor::scalar(4, true), ncut = Tensor::scalar(5, true);
  lw.batch_index = 0;
  full_objective({Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3), potts, ncut}, lw).backward();
  CHECK((!potts.has_grad() || potts.grad()[0] == 0.0f));
  CHECK((!ncut.has_grad() || ncut.grad()[0] == 0.0f));
}

}  // TEST_SUITE
