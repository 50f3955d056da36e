#include "footreg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <cblas.h>

namespace footreg {

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool g_grad_enabled = true;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(op, "operands have shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
  }
}

void require_rank4(const char* op, const Tensor& t) {
  if (t.rank() != 4) {
    throw ShapeError(op, "expected [N,C,H,W], got " + shape_to_string(t.shape()));
  }
}

bool wants_grad(const TensorImpl& impl) { return impl.requires_grad; }

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("shape", "non-positive dimension in " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::vector<float>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool value) { g_grad_enabled = value; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0f, requires_grad);
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(shape_numel(shape), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_data", "shape " + shape_to_string(shape) + " needs " +
                                      std::to_string(shape_numel(shape)) + " values, got " +
                                      std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("dim", "axis out of range");
  return impl_->shape[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", "tensor is not a scalar: " + shape_to_string(shape()));
  return impl_->data[0];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.set_requires_grad(requires_grad());
  return copy;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_to_string(shape()));
  }
  // Collect every graph-produced tensor reachable from the loss.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!seen.insert(t).second) continue;
    if (!t->grad_fn) continue;
    order.push_back(t);
    for (const auto& in : t->grad_fn->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](const TensorImpl* a, const TensorImpl* b) {
    return a->grad_fn->sequence > b->grad_fn->sequence;
  });
  // Interior gradients are per-sweep scratch; leaves accumulate.
  for (TensorImpl* t : order) t->grad.clear();
  impl_->ensure_grad()[0] += 1.0f;
  for (TensorImpl* t : order) {
    if (t->grad.empty()) continue;
    t->grad_fn->backward(*t);
  }
}

// ---- recording --------------------------------------------------------------

namespace detail {

Tensor record(Shape shape, std::vector<float> values, std::vector<Tensor> inputs, const char* op,
              BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    auto node = std::make_shared<Node>();
    node->sequence = g_sequence.fetch_add(1);
    node->op = op;
    for (const auto& in : inputs) node->inputs.push_back(in.impl_ptr());
    node->backward = std::move(backward);
    impl->grad_fn = std::move(node);
    impl->requires_grad = true;
  }
  return Tensor(std::move(impl));
}

void accumulate(TensorImpl& target, std::span<const float> delta) {
  auto& g = target.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

using detail::record;

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvGeometry {
  int n, c, h, w, k, ksize, pad;
  int hw() const { return h * w; }
  int rows() const { return c * ksize * ksize; }
  int cols() const { return n * h * w; }
};

// col[(ci*ks + ky)*ks + kx][b*HW + y*W + x] = input[b, ci, y+ky-pad, x+kx-pad]
void im2col(const ConvGeometry& g, const float* input, float* col) {
  const std::size_t cols = static_cast<std::size_t>(g.cols());
  for (int ci = 0; ci < g.c; ++ci) {
    for (int ky = 0; ky < g.ksize; ++ky) {
      for (int kx = 0; kx < g.ksize; ++kx) {
        float* row = col + static_cast<std::size_t>((ci * g.ksize + ky) * g.ksize + kx) * cols;
        const int dx = kx - g.pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(g.w, g.w - dx);
        for (int b = 0; b < g.n; ++b) {
          const float* plane = input + (static_cast<std::size_t>(b) * g.c + ci) * g.hw();
          float* out = row + static_cast<std::size_t>(b) * g.hw();
          for (int y = 0; y < g.h; ++y) {
            const int sy = y + ky - g.pad;
            float* dst = out + y * g.w;
            if (sy < 0 || sy >= g.h || x_lo >= x_hi) {
              std::fill(dst, dst + g.w, 0.0f);
              continue;
            }
            const float* src = plane + sy * g.w;
            std::fill(dst, dst + x_lo, 0.0f);
            std::copy(src + x_lo + dx, src + x_hi + dx, dst + x_lo);
            std::fill(dst + x_hi, dst + g.w, 0.0f);
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* input_grad) {
  const std::size_t cols = static_cast<std::size_t>(g.cols());
  for (int ci = 0; ci < g.c; ++ci) {
    for (int ky = 0; ky < g.ksize; ++ky) {
      for (int kx = 0; kx < g.ksize; ++kx) {
        const float* row =
            col + static_cast<std::size_t>((ci * g.ksize + ky) * g.ksize + kx) * cols;
        const int dx = kx - g.pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(g.w, g.w - dx);
        for (int b = 0; b < g.n; ++b) {
          float* plane = input_grad + (static_cast<std::size_t>(b) * g.c + ci) * g.hw();
          const float* src_plane = row + static_cast<std::size_t>(b) * g.hw();
          for (int y = 0; y < g.h; ++y) {
            const int sy = y + ky - g.pad;
            if (sy < 0 || sy >= g.h) continue;
            const float* src = src_plane + y * g.w;
            float* dst = plane + sy * g.w;
            for (int x = x_lo; x < x_hi; ++x) dst[x + dx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

void set_blas_threads(int n) { openblas_set_num_threads(n); }

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require_rank4("conv2d", input);
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d", "kernel must be [K,C,k,k], got " + shape_to_string(kernel.shape()));
  }
  const int ksize = kernel.dim(2);
  if (kernel.dim(3) != ksize || ksize % 2 == 0) {
    throw ShapeError("conv2d", "kernel must be odd and square, got " +
                                   shape_to_string(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d", "input has " + std::to_string(input.dim(1)) +
                                   " channels but kernel expects " + std::to_string(kernel.dim(1)));
  }
  if (bias.numel() != static_cast<std::size_t>(kernel.dim(0))) {
    throw ShapeError("conv2d", "bias length " + std::to_string(bias.numel()) +
                                   " does not match " + std::to_string(kernel.dim(0)) + " filters");
  }
  const ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                       kernel.dim(0), ksize,        ksize / 2};
  const int hw = g.hw();

  std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
  im2col(g, input.data().data(), col.data());
  std::vector<float> out_mat(static_cast<std::size_t>(g.k) * g.cols());
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.k, g.cols(), g.rows(), 1.0f,
              kernel.data().data(), g.rows(), col.data(), g.cols(), 0.0f, out_mat.data(),
              g.cols());
  col.clear();
  col.shrink_to_fit();

  std::vector<float> out(static_cast<std::size_t>(g.n) * g.k * hw);
  const auto b_data = bias.data();
  for (int b = 0; b < g.n; ++b) {
    for (int k = 0; k < g.k; ++k) {
      const float* src = out_mat.data() + static_cast<std::size_t>(k) * g.cols() +
                         static_cast<std::size_t>(b) * hw;
      float* dst = out.data() + (static_cast<std::size_t>(b) * g.k + k) * hw;
      const float bk = b_data[static_cast<std::size_t>(k)];
      for (int p = 0; p < hw; ++p) dst[p] = src[p] + bk;
    }
  }

  auto in_impl = input.impl_ptr();
  auto w_impl = kernel.impl_ptr();
  auto b_impl = bias.impl_ptr();
  return record({g.n, g.k, g.h, g.w}, std::move(out), {input, kernel, bias}, "conv2d",
                [g, in_impl, w_impl, b_impl](TensorImpl& self) {
                  const int hw = g.hw();
                  // dout as [K, N*HW]
                  std::vector<float> dmat(static_cast<std::size_t>(g.k) * g.cols());
                  for (int b = 0; b < g.n; ++b) {
                    for (int k = 0; k < g.k; ++k) {
                      const float* src =
                          self.grad.data() + (static_cast<std::size_t>(b) * g.k + k) * hw;
                      std::copy(src, src + hw,
                                dmat.data() + static_cast<std::size_t>(k) * g.cols() +
                                    static_cast<std::size_t>(b) * hw);
                    }
                  }
                  if (wants_grad(*b_impl)) {
                    auto& gb = b_impl->ensure_grad();
                    for (int k = 0; k < g.k; ++k) {
                      double s = 0.0;
                      const float* row = dmat.data() + static_cast<std::size_t>(k) * g.cols();
                      for (int i = 0; i < g.cols(); ++i) s += row[i];
                      gb[static_cast<std::size_t>(k)] += static_cast<float>(s);
                    }
                  }
                  const bool need_w = wants_grad(*w_impl);
                  const bool need_x = wants_grad(*in_impl);
                  if (need_w) {
                    std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
                    im2col(g, in_impl->data.data(), col.data());
                    auto& gw = w_impl->ensure_grad();
                    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.k, g.rows(), g.cols(),
                                1.0f, dmat.data(), g.cols(), col.data(), g.cols(), 1.0f,
                                gw.data(), g.rows());
                  }
                  if (need_x) {
                    std::vector<float> dcol(static_cast<std::size_t>(g.rows()) * g.cols());
                    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, g.rows(), g.cols(), g.k,
                                1.0f, w_impl->data.data(), g.rows(), dmat.data(), g.cols(), 0.0f,
                                dcol.data(), g.cols());
                    auto& gx = in_impl->ensure_grad();
                    col2im(g, dcol.data(), gx.data());
                  }
                });
}

// ---- batch normalization ----------------------------------------------------

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode) {
  require_rank4("batch_norm", input);
  const int n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm", "gamma/beta length must equal channel count " +
                                       std::to_string(c));
  }
  if (stats.mean.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm", "running statistics sized for " +
                                       std::to_string(stats.mean.size()) + " channels, input has " +
                                       std::to_string(c));
  }
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  const bool use_batch = mode != Mode::eval;
  if (use_batch && count < 2) {
    throw ShapeError("batch_norm", "training mode needs N*H*W >= 2");
  }
  if (!use_batch && !stats.initialized) {
    throw std::logic_error("batch_norm: eval mode before any training step (uninitialized running statistics)");
  }

  const auto x = input.data();
  std::vector<float> mean_c(c), inv_std(c);
  for (int ch = 0; ch < c; ++ch) {
    double m, v;
    if (use_batch) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (int i = 0; i < hw; ++i) s += p[i];
      }
      m = s / static_cast<double>(count);
      double sq = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (int i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          sq += d * d;
        }
      }
      v = sq / static_cast<double>(count);
      if (mode == Mode::train) {
        const double unbiased = sq / static_cast<double>(count - 1);
        const float mom = stats.momentum;
        stats.mean[ch] = mom * stats.mean[ch] + (1.0f - mom) * static_cast<float>(m);
        stats.var[ch] = mom * stats.var[ch] + (1.0f - mom) * static_cast<float>(unbiased);
      }
    } else {
      m = stats.mean[ch];
      v = stats.var[ch];
    }
    mean_c[ch] = static_cast<float>(m);
    inv_std[ch] = static_cast<float>(1.0 / std::sqrt(v + kBatchNormEps));
  }
  if (mode == Mode::train) stats.initialized = true;

  std::vector<float> xhat(input.numel());
  std::vector<float> out(input.numel());
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        const float xh = (x[off + i] - mean_c[ch]) * inv_std[ch];
        xhat[off + i] = xh;
        out[off + i] = gm[ch] * xh + bt[ch];
      }
    }
  }

  auto in_impl = input.impl_ptr();
  auto g_impl = gamma.impl_ptr();
  auto b_impl = beta.impl_ptr();
  return record(input.shape(), std::move(out), {input, gamma, beta}, "batch_norm",
                [n, c, hw, use_batch, xhat = std::move(xhat), inv_std, in_impl, g_impl,
                 b_impl](TensorImpl& self) {
                  const auto& dy = self.grad;
                  const double count = static_cast<double>(n) * hw;
                  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                  for (int b = 0; b < n; ++b) {
                    for (int ch = 0; ch < c; ++ch) {
                      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
                      double s = 0.0, sx = 0.0;
                      for (int i = 0; i < hw; ++i) {
                        s += dy[off + i];
                        sx += static_cast<double>(dy[off + i]) * xhat[off + i];
                      }
                      sum_dy[ch] += s;
                      sum_dy_xhat[ch] += sx;
                    }
                  }
                  if (wants_grad(*g_impl)) {
                    auto& gg = g_impl->ensure_grad();
                    for (int ch = 0; ch < c; ++ch) gg[ch] += static_cast<float>(sum_dy_xhat[ch]);
                  }
                  if (wants_grad(*b_impl)) {
                    auto& gb = b_impl->ensure_grad();
                    for (int ch = 0; ch < c; ++ch) gb[ch] += static_cast<float>(sum_dy[ch]);
                  }
                  if (!wants_grad(*in_impl)) return;
                  auto& gx = in_impl->ensure_grad();
                  const auto& gm = g_impl->data;
                  for (int b = 0; b < n; ++b) {
                    for (int ch = 0; ch < c; ++ch) {
                      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
                      const double scale_c = static_cast<double>(gm[ch]) * inv_std[ch];
                      if (use_batch) {
                        const double mean_dy = sum_dy[ch] / count;
                        const double mean_dy_xhat = sum_dy_xhat[ch] / count;
                        for (int i = 0; i < hw; ++i) {
                          gx[off + i] += static_cast<float>(
                              scale_c * (dy[off + i] - mean_dy - xhat[off + i] * mean_dy_xhat));
                        }
                      } else {
                        for (int i = 0; i < hw; ++i) {
                          gx[off + i] += static_cast<float>(scale_c * dy[off + i]);
                        }
                      }
                    }
                  }
                });
}

// ---- pointwise activations ----------------------------------------------------

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  auto in_impl = input.impl_ptr();
  return record(input.shape(), std::move(out), {input}, "relu", [in_impl](TensorImpl& self) {
    auto& gx = in_impl->ensure_grad();
    const auto& x = in_impl->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0f) gx[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& input) {
  const auto x = input.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x[i];
    if (v >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      out[i] = e / (1.0f + e);
    }
  }
  auto in_impl = input.impl_ptr();
  std::vector<float> saved = out;
  return record(input.shape(), std::move(out), {input}, "sigmoid",
                [in_impl, s = std::move(saved)](TensorImpl& self) {
                  auto& gx = in_impl->ensure_grad();
                  for (std::size_t i = 0; i < s.size(); ++i) {
                    gx[i] += self.grad[i] * s[i] * (1.0f - s[i]);
                  }
                });
}

// ---- resampling ----------------------------------------------------------------

Tensor max_pool2(const Tensor& input) {
  require_rank4("max_pool2", input);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("max_pool2", "spatial dims must be even, got " +
                                      shape_to_string(input.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  const auto x = input.data();
  std::vector<float> out(static_cast<std::size_t>(n) * c * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t in_off = static_cast<std::size_t>(plane) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) {
        std::size_t best = in_off + static_cast<std::size_t>(2 * y) * w + 2 * xo;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_off + static_cast<std::size_t>(2 * y + dy) * w + 2 * xo + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[out_off + static_cast<std::size_t>(y) * ow + xo] = x[best];
        argmax[out_off + static_cast<std::size_t>(y) * ow + xo] = static_cast<std::uint32_t>(best);
      }
    }
  }
  auto in_impl = input.impl_ptr();
  return record({n, c, oh, ow}, std::move(out), {input}, "max_pool2",
                [in_impl, argmax = std::move(argmax)](TensorImpl& self) {
                  auto& gx = in_impl->ensure_grad();
                  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
                });
}

Tensor upsample2(const Tensor& input) {
  require_rank4("upsample2", input);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = 2 * h, ow = 2 * w;
  const auto x = input.data();
  std::vector<float> out(static_cast<std::size_t>(n) * c * oh * ow);
  for (int plane = 0; plane < n * c; ++plane) {
    const float* src = x.data() + static_cast<std::size_t>(plane) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) dst[y * ow + xo] = src[(y / 2) * w + xo / 2];
    }
  }
  auto in_impl = input.impl_ptr();
  return record({n, c, oh, ow}, std::move(out), {input}, "upsample2",
                [in_impl, n, c, h, w](TensorImpl& self) {
                  auto& gx = in_impl->ensure_grad();
                  const int ow = 2 * w;
                  for (int plane = 0; plane < n * c; ++plane) {
                    const float* src = self.grad.data() + static_cast<std::size_t>(plane) * 4 * h * w;
                    float* dst = gx.data() + static_cast<std::size_t>(plane) * h * w;
                    for (int y = 0; y < 2 * h; ++y) {
                      for (int xo = 0; xo < ow; ++xo) dst[(y / 2) * w + xo / 2] += src[y * ow + xo];
                    }
                  }
                });
}

// ---- elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record(a.shape(), std::move(out), {a, b}, "add", [ai, bi](TensorImpl& self) {
    if (wants_grad(*ai)) detail::accumulate(*ai, self.grad);
    if (wants_grad(*bi)) detail::accumulate(*bi, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record(a.shape(), std::move(out), {a, b}, "sub", [ai, bi](TensorImpl& self) {
    if (wants_grad(*ai)) detail::accumulate(*ai, self.grad);
    if (wants_grad(*bi)) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record(a.shape(), std::move(out), {a, b}, "mul", [ai, bi](TensorImpl& self) {
    if (wants_grad(*ai)) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bi->data[i];
    }
    if (wants_grad(*bi)) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ai->data[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record(a.shape(), std::move(out), {a, b}, "div", [ai, bi](TensorImpl& self) {
    if (wants_grad(*ai)) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bi->data[i];
    }
    if (wants_grad(*bi)) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float bv = bi->data[i];
        g[i] -= self.grad[i] * ai->data[i] / (bv * bv);
      }
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "scale", [ai, factor](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, float value) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + value;
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "add_scalar",
                [ai](TensorImpl& self) { detail::accumulate(*ai, self.grad); });
}

Tensor rsub_scalar(float value, const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value - a.data()[i];
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "rsub_scalar", [ai](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "square", [ai](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * ai->data[i] * self.grad[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "log", [ai](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / ai->data[i];
  });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.data()[i], lo, hi);
  auto ai = a.impl_ptr();
  return record(a.shape(), std::move(out), {a}, "clamp", [ai, lo, hi](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float v = ai->data[i];
      if (v >= lo && v <= hi) g[i] += self.grad[i];
    }
  });
}

// ---- reductions and reshaping ---------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  auto ai = a.impl_ptr();
  return record({}, {static_cast<float>(s)}, {a}, "sum", [ai](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    const float go = self.grad[0];
    for (auto& v : g) v += go;
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  auto ai = a.impl_ptr();
  return record({}, {static_cast<float>(s / n)}, {a}, "mean", [ai, n](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    const float go = static_cast<float>(self.grad[0] / n);
    for (auto& v : g) v += go;
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot", "lengths differ: " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    s += static_cast<double>(a.data()[i]) * b.data()[i];
  }
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record({}, {static_cast<float>(s)}, {a, b}, "dot", [ai, bi](TensorImpl& self) {
    const float go = self.grad[0];
    if (wants_grad(*ai)) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * bi->data[i];
    }
    if (wants_grad(*bi)) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * ai->data[i];
    }
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape", "cannot view " + shape_to_string(a.shape()) + " as " +
                                    shape_to_string(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  auto ai = a.impl_ptr();
  return record(shape, std::move(out), {a}, "reshape",
                [ai](TensorImpl& self) { detail::accumulate(*ai, self.grad); });
}

Tensor sample_mean(const Tensor& a) {
  require_rank4("sample_mean", a);
  const int n = a.dim(0);
  const std::size_t per = a.numel() / static_cast<std::size_t>(n);
  std::vector<float> out(n);
  for (int b = 0; b < n; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += a.data()[b * per + i];
    out[b] = static_cast<float>(s / static_cast<double>(per));
  }
  auto ai = a.impl_ptr();
  return record({n}, std::move(out), {a}, "sample_mean", [ai, n, per](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (int b = 0; b < n; ++b) {
      const float go = self.grad[b] / static_cast<float>(per);
      for (std::size_t i = 0; i < per; ++i) g[b * per + i] += go;
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4("concat_channels", a);
  require_rank4("concat_channels", b);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels", "batch/spatial dims differ: " +
                                            shape_to_string(a.shape()) + " vs " +
                                            shape_to_string(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<float> out(static_cast<std::size_t>(n) * (ca + cb) * hw);
  for (int s = 0; s < n; ++s) {
    const auto ad = a.data().subspan(static_cast<std::size_t>(s) * ca * hw,
                                     static_cast<std::size_t>(ca) * hw);
    const auto bd = b.data().subspan(static_cast<std::size_t>(s) * cb * hw,
                                     static_cast<std::size_t>(cb) * hw);
    float* dst = out.data() + static_cast<std::size_t>(s) * (ca + cb) * hw;
    std::copy(ad.begin(), ad.end(), dst);
    std::copy(bd.begin(), bd.end(), dst + ad.size());
  }
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  return record({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, "concat_channels",
                [ai, bi, n, ca, cb, hw](TensorImpl& self) {
                  for (int s = 0; s < n; ++s) {
                    const float* src = self.grad.data() + static_cast<std::size_t>(s) * (ca + cb) * hw;
                    if (wants_grad(*ai)) {
                      auto& g = ai->ensure_grad();
                      float* dst = g.data() + static_cast<std::size_t>(s) * ca * hw;
                      for (int i = 0; i < ca * hw; ++i) dst[i] += src[i];
                    }
                    if (wants_grad(*bi)) {
                      auto& g = bi->ensure_grad();
                      float* dst = g.data() + static_cast<std::size_t>(s) * cb * hw;
                      for (int i = 0; i < cb * hw; ++i) dst[i] += src[ca * hw + i];
                    }
                  }
                });
}

Tensor plane(const Tensor& a, int n, int c) {
  require_rank4("plane", a);
  if (n < 0 || n >= a.dim(0) || c < 0 || c >= a.dim(1)) {
    throw ShapeError("plane", "index (" + std::to_string(n) + "," + std::to_string(c) +
                                  ") out of range for " + shape_to_string(a.shape()));
  }
  const int hw = a.dim(2) * a.dim(3);
  const std::size_t off = (static_cast<std::size_t>(n) * a.dim(1) + c) * hw;
  std::vector<float> out(a.data().begin() + off, a.data().begin() + off + hw);
  auto ai = a.impl_ptr();
  return record({hw}, std::move(out), {a}, "plane", [ai, off, hw](TensorImpl& self) {
    auto& g = ai->ensure_grad();
    for (int i = 0; i < hw; ++i) g[off + i] += self.grad[i];
  });
}

}  // namespace footreg
