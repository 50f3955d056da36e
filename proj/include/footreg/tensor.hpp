#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace footreg {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when an operation receives operands whose shapes do not fit its contract.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : std::invalid_argument(op + ": " + detail), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

struct TensorImpl;

/// One recorded operation of the autodiff graph. `sequence` is the global
/// execution index; backward visits nodes in strictly decreasing sequence.
struct Node {
  std::uint64_t sequence = 0;
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads output.grad and accumulates into inputs that require grad.
  std::function<void(TensorImpl& output)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  bool has_grad() const { return !grad.empty(); }
  std::vector<float>& ensure_grad();
};

/// Dense row-major float tensor. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<float> values,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<float> data() { return impl_->data; }
  std::span<const float> data() const { return impl_->data; }
  float item() const;
  float at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool has_grad() const { return impl_->has_grad(); }
  std::span<const float> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  /// Same values, no graph history, requires_grad false.
  Tensor detach() const;
  Tensor clone() const;

  TensorImpl& impl() const { return *impl_; }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool value);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {
using BackwardFn = std::function<void(TensorImpl& output)>;
/// Wraps a freshly computed result and, when grad mode is on and any input
/// requires grad, records the node that produced it.
Tensor record(Shape shape, std::vector<float> values, std::vector<Tensor> inputs,
              const char* op, BackwardFn backward);
void accumulate(TensorImpl& target, std::span<const float> delta);
}  // namespace detail

/// Pins the BLAS backend to n threads. Training runs use 1 so results are bit-reproducible.
void set_blas_threads(int n);

// ---- layer primitives --------------------------------------------------

/// Stride-1 cross-correlation with zero padding k/2 (odd square kernels),
/// so spatial size is preserved.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct RunningStats {
  std::vector<float> mean;
  std::vector<float> var;
  bool initialized = false;
  float momentum = 0.9f;  // running = momentum * running + (1 - momentum) * batch

  explicit RunningStats(int channels = 0) : mean(channels, 0.0f), var(channels, 1.0f) {}
};

enum class Mode {
  train,   // batch statistics, running statistics updated
  frozen,  // batch statistics, running statistics left untouched
  eval,    // running statistics
};

inline constexpr float kBatchNormEps = 1e-5f;

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode);
Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
Tensor max_pool2(const Tensor& input);
Tensor upsample2(const Tensor& input);

// ---- elementwise and reductions used by the losses ----------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float value);
/// value - a
Tensor rsub_scalar(float value, const Tensor& a);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
/// Gradient passes only where lo <= a <= hi.
Tensor clamp(const Tensor& a, float lo, float hi);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, const Shape& shape);
/// [N,C,H,W] -> [N], mean over C·H·W per sample.
Tensor sample_mean(const Tensor& a);
/// Concatenate [N,Ca,H,W] and [N,Cb,H,W] along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Flattened H·W view (copy) of sample n, channel c.
Tensor plane(const Tensor& a, int n, int c);

}  // namespace footreg
