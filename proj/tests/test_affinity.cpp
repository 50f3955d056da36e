#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "footreg/affinity.hpp"
#include "oracles.hpp"

using namespace footreg;

namespace {

Tensor random_image(std::mt19937_64& rng, int c, int h, int w) {
  return Tensor::from_data({c, h, w}, oracle::uniform(rng, std::size_t(c) * h * w, 0, 1));
}

std::vector<float> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_SUITE("affinity") {

TEST_CASE("scalar weights") {
  AffinityParams p{0.075, 4.0, 5.0};
  AffinityMatrix flat = build_affinity(Tensor::full({1, 6, 6}, 0.3f), p);
  CHECK(flat.weight(0, 1) == doctest::Approx(0.9394130628));  // exp(-1/16)
  CHECK(flat.weight(0, 6) == doctest::Approx(0.9394130628));

  // values 0.075 apart at distance 3 along a row
  std::vector<float> v(36, 0.2f);
  v[3] = 0.275f;
  AffinityMatrix m = build_affinity(Tensor::from_data({1, 6, 6}, v), p);
  CHECK(m.weight(0, 3) == doctest::Approx(0.2096113871).epsilon(1e-6));  // e^-1 * e^-9/16
  CHECK(m.weight(3, 0) == m.weight(0, 3));
  CHECK(m.weight(0, 5) == 0.0f);  // distance 5 == r
  CHECK(m.weight(0, 0) == 0.0f);
}

TEST_CASE("cutoff is strict") {
  AffinityParams p{0.075, 4.0, 3.0};
  AffinityMatrix m = build_affinity(Tensor::full({1, 8, 8}, 0.5f), p);
  CHECK(m.weight(0, 3) == 0.0f);      // distance 3
  CHECK(m.weight(0, 2) > 0.0f);       // distance 2
  CHECK(m.weight(0, 8 * 2 + 2) > 0);  // distance sqrt(8)
  CHECK(m.weight(0, 8 * 3) == 0.0f);
  const auto offsets = neighbor_offsets(3.0);
  CHECK(offsets.size() == 24u);  // 5x5 lattice block minus the origin
}

TEST_CASE("sparse build equals the dense oracle") {
  std::mt19937_64 rng(17);
  for (double r : {3.0, 5.0, 19.0}) {
    for (int c : {1, 3}) {
      const int h = 9, w = 11;
      Tensor img = random_image(rng, c, h, w);
      AffinityParams p{0.075, 4.0, r};
      AffinityMatrix m = build_affinity(img, p);
      const auto pairs = oracle::dense_affinity(vec(img), c, h, w, p.sigma_i, p.sigma_x, r);
      std::map<std::pair<std::size_t, std::size_t>, double> dense;
      for (const auto& pw : pairs) dense[{pw.i, pw.j}] = pw.w;
      std::size_t stored = 0;
      for (std::size_t o = 0; o < m.offsets().size(); ++o) {
        const auto off = m.offsets()[o];
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (y + off.dy >= 0 && y + off.dy < h && x + off.dx >= 0 && x + off.dx < w) ++stored;
      }
      CHECK(stored == pairs.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < m.n_pixels(); ++i)
        for (std::size_t j = 0; j < m.n_pixels(); ++j) {
          auto it = dense.find({i, j});
          const double want = it == dense.end() ? 0.0 : it->second;
          if (it == dense.end()) CHECK(m.weight(i, j) == 0.0f);
          worst = std::max(worst, std::abs(m.weight(i, j) - want));
        }
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("apply and degree against the dense product") {
  std::mt19937_64 rng(23);
  Tensor img = random_image(rng, 3, 8, 8);
  AffinityParams p{0.3, 4.0, 5.0};
  AffinityMatrix m = build_affinity(img, p);
  const auto pairs = oracle::dense_affinity(vec(img), 3, 8, 8, p.sigma_i, p.sigma_x, p.radius);
  const auto s = oracle::uniform(rng, 64, 0, 1);
  std::vector<double> ws(64, 0.0), d(64, 0.0);
  for (const auto& pw : pairs) {
    ws[pw.i] += pw.w * s[pw.j];
    d[pw.i] += pw.w;
  }
  Tensor out = apply(m, Tensor::from_data({64}, s));
  Tensor deg = degree(m);
  Tensor ones = apply(m, Tensor::full({64}, 1.0f));
  for (int i = 0; i < 64; ++i) {
    CHECK(out.at(i) == doctest::Approx(ws[i]).epsilon(1e-5));
    CHECK(deg.at(i) == doctest::Approx(d[i]).epsilon(1e-5));
    CHECK(deg.at(i) == ones.at(i));
  }
  const Tensor zero = apply(m, Tensor::zeros({64}));
  for (float v : zero.data()) CHECK(v == 0.0f);
  CHECK_THROWS(apply(m, Tensor::zeros({63})));
}

TEST_CASE("degree grows away from the border") {
  AffinityMatrix m = build_affinity(Tensor::full({1, 3, 3}, 0.4f), AffinityParams{0.075, 4.0, 5.0});
  CHECK(m.degree()[4] > m.degree()[0]);
}

TEST_CASE("symmetry") {
  std::mt19937_64 rng(31);
  AffinityMatrix m = build_affinity(random_image(rng, 3, 10, 12), AffinityParams{0.2, 4.0, 5.0});
  for (int trial = 0; trial < 5; ++trial) {
    auto a = oracle::uniform(rng, m.n_pixels(), -1, 1);
    auto b = oracle::uniform(rng, m.n_pixels(), -1, 1);
    const auto wa = m.multiply(a), wb = m.multiply(b);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      lhs += double(wa[i]) * b[i];
      rhs += double(a[i]) * wb[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
  for (std::size_t i = 0; i < m.n_pixels(); ++i)
    for (std::size_t j = 0; j < m.n_pixels(); ++j) REQUIRE(m.weight(i, j) == m.weight(j, i));
}

TEST_CASE("weight never grows with contrast") {
  AffinityParams p{0.075, 4.0, 5.0};
  float prev = 2.0f;
  for (float delta : {0.0f, 0.01f, 0.05f, 0.1f, 0.3f}) {
    std::vector<float> v(16, 0.1f);
    v[1] = 0.1f + delta;
    const float w = build_affinity(Tensor::from_data({1, 4, 4}, v), p).weight(0, 1);
    CHECK(w <= prev);
    prev = w;
  }
}

TEST_CASE("one build serves both matrices") {
  std::mt19937_64 rng(5);
  Tensor img = random_image(rng, 3, 8, 8);
  AffinityMatrix a = build_affinity(img, {});
  AffinityMatrix b = build_affinity(img, {});
  for (std::size_t o = 0; o < a.offsets().size(); ++o) {
    auto pa = a.plane(o), pb = b.plane(o);
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS(build_affinity(Tensor::zeros({2, 4, 4}), {}));
  CHECK_THROWS(AffinityParams{0.0, 4.0, 5.0}.validate());
  CHECK_THROWS(AffinityParams{0.075, 4.0, -1.0}.validate());
}

TEST_CASE("gradient of apply") {
  std::mt19937_64 rng(41);
  AffinityMatrix m = build_affinity(random_image(rng, 1, 6, 6), AffinityParams{0.3, 4.0, 3.0});
  auto s = Tensor::from_data({36}, oracle::uniform(rng, 36, 0, 1));
  CHECK(oracle::gradcheck([&](auto& v) { return apply(m, v[0]); }, {s}, 7).worst_relative_error < 1e-3);
}

}  // TEST_SUITE
