#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

namespace oracle {

std::vector<double> conv2d(const std::vector<float>& input, int n, int c, int h, int w,
                           const std::vector<float>& kernel, int out_c, int k,
                           const std::vector<float>& bias) {
  const int pad = k / 2;
  std::vector<double> out(std::size_t(n) * out_c * h * w, 0.0);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_c; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = bias[o];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y + ky - pad, sx = x + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += double(input[((std::size_t(b) * c + ci) * h + sy) * w + sx]) *
                       kernel[((std::size_t(o) * c + ci) * k + ky) * k + kx];
              }
          out[((std::size_t(b) * out_c + o) * h + y) * w + x] = acc;
        }
  return out;
}

ChannelStats channel_stats(const std::vector<float>& x, int n, int c, int h, int w) {
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = double(n) * h * w;
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h * w; ++i) sum += x[(std::size_t(b) * c + ch) * h * w + i];
    const double mu = sum / count;
    double sq = 0.0;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h * w; ++i) {
        const double d = x[(std::size_t(b) * c + ch) * h * w + i] - mu;
        sq += d * d;
      }
    s.mean[ch] = mu;
    s.var[ch] = sq / count;
  }
  return s;
}

std::vector<PairWeight> dense_affinity(const std::vector<float>& features, int c, int h, int w,
                                       double sigma_i, double sigma_x, double radius) {
  std::vector<PairWeight> pairs;
  const std::size_t n = std::size_t(h) * w;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dy = double(i / w) - double(j / w);
      const double dx = double(i % w) - double(j % w);
      const double d2 = dy * dy + dx * dx;
      if (std::sqrt(d2) >= radius) continue;
      double f2 = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double d = double(features[ch * n + i]) - features[ch * n + j];
        f2 += d * d;
      }
      pairs.push_back({i, j, std::exp(-f2 / (sigma_i * sigma_i)) * std::exp(-d2 / (sigma_x * sigma_x))});
    }
  }
  return pairs;
}

double ScalarAdam::step(double param, double grad, double lr) {
  ++t;
  m = beta1 * m + (1 - beta1) * grad;
  v = beta2 * v + (1 - beta2) * grad * grad;
  const double m_hat = m / (1 - std::pow(beta1, double(t)));
  const double v_hat = v / (1 - std::pow(beta2, double(t)));
  return param - lr * m_hat / (std::sqrt(v_hat) + eps);
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  return (1 + b2) * precision * recall / (b2 * precision + recall);
}

double learning_rate(long t, long total, long constant, double base) {
  if (t < constant) return base;
  return base * double(total - t) / double(total - constant);
}

double warmup(double max_value, long t, long warmup) {
  if (warmup <= 0 || t >= warmup) return max_value;
  return max_value * double(t) / double(warmup);
}

namespace {

double probe(const OpFn& op, const std::vector<Tensor>& leaves, const std::vector<float>& r) {
  footreg::NoGradGuard guard;
  const Tensor out = op(leaves);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += double(out.data()[i]) * r[i];
  return s;
}

}  // namespace

GradCheck gradcheck(const OpFn& op, std::vector<Tensor> leaves, std::uint64_t seed, double step) {
  return gradcheck(op, std::move(leaves), seed, std::vector<double>{step});
}

GradCheck gradcheck(const OpFn& op, std::vector<Tensor> leaves, std::uint64_t seed,
                    const std::vector<double>& steps) {
  for (auto& t : leaves) t.set_requires_grad(true);
  std::vector<float> r;
  Tensor analytic_out;
  {
    analytic_out = op(leaves);
    std::mt19937_64 rng(seed);
    r = uniform(rng, analytic_out.numel(), -1.0f, 1.0f);
    Tensor weights = Tensor::from_data(analytic_out.shape(), r);
    footreg::dot(analytic_out, weights).backward();
  }

  GradCheck result;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto data = leaves[l].data();
    std::vector<double> numeric(data.size()), analytic(data.size(), 0.0);
    if (leaves[l].has_grad()) {
      for (std::size_t i = 0; i < data.size(); ++i) analytic[i] = leaves[l].grad()[i];
    }
    const double step = steps[std::min(l, steps.size() - 1)];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float saved = data[i];
      data[i] = float(saved + step);
      const double actual_plus = double(data[i]) - saved;
      const double up = probe(op, leaves, r);
      data[i] = float(saved - step);
      const double actual_minus = saved - double(data[i]);
      const double down = probe(op, leaves, r);
      data[i] = saved;
      numeric[i] = (up - down) / (actual_plus + actual_minus);
    }
    const double e = relative_error(analytic, numeric);
    if (e > result.worst_relative_error) {
      result.worst_relative_error = e;
      result.leaf = l;
    }
  }
  return result;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

std::vector<float> uniform(std::mt19937_64& rng, std::size_t n, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<float> away_from_zero(std::mt19937_64& rng, std::size_t n, float gap) {
  std::uniform_real_distribution<float> mag(gap, 1.0f);
  std::bernoulli_distribution sign(0.5);
  std::vector<float> v(n);
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return v;
}

std::vector<float> pool_friendly(std::mt19937_64& rng, int n, int c, int h, int w, float gap) {
  std::vector<float> v(std::size_t(n) * c * h * w);
  std::uniform_real_distribution<float> base(-1.0f, 1.0f);
  std::array<int, 4> rank{0, 1, 2, 3};
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < h; y += 2)
      for (int x = 0; x < w; x += 2) {
        std::shuffle(rank.begin(), rank.end(), rng);
        const float b = base(rng);
        int q = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            v[(std::size_t(p) * h + y + dy) * w + x + dx] = b + gap * float(rank[q++]);
      }
  return v;
}

std::uint64_t checksum(const std::vector<Tensor>& tensors) {
  // FNV-1a over the raw float bytes.
  std::uint64_t hash = 1469598103934665603ull;
  for (const auto& t : tensors) {
    for (float f : t.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) {
        hash ^= (bits >> (8 * b)) & 0xffu;
        hash *= 1099511628211ull;
      }
    }
  }
  return hash;
}

}  // namespace oracle
