#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to shared storage: copying a Tensor aliases the
// same values and gradient buffer. Operations never mutate their inputs; they
// allocate a fresh output and, when any input requires a gradient, record a
// backward rule on the active Tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace inpaint {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Arithmetic width used inside GEMM-backed kernels. Storage is always double.
enum class Precision { f64, f32 };
void set_compute_precision(Precision p);
Precision compute_precision();

/// Explicit, injectable random source. Every initializer takes one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the storage; visible through every aliasing handle.
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient values (zeros if nothing has accumulated yet).
  std::vector<double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  /// Fresh storage with copied values and no gradient participation.
  Tensor detach() const;
  bool is_same(const Tensor& other) const { return node_ == other.node_; }

  detail::TensorNode& node() const;
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of differentiable operations.
class Tape {
 public:
  using Rule = std::function<void(std::span<const double> out_grad)>;

  void record(const Tensor& output, std::vector<Tensor> inputs, Rule rule);

  /// Seeds d(loss)/d(loss) = 1 and replays the rules newest-first. A tape can be
  /// replayed once; clear() it before recording the next pass.
  void backward(const Tensor& loss);

  /// Zeroes the gradient of every tensor the tape has touched and forgets the records.
  void clear();

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Record {
    Tensor output;
    std::vector<Tensor> inputs;
    Rule rule;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
};

/// Tape that operations record onto in the current thread.
Tape& active_tape();

/// Routes recording to `tape` for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording; outputs built inside never require a gradient.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// True when recording is on and at least one input requires a gradient.
bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

/// Gradient buffer of `t` for accumulation inside backward rules, allocated
/// on demand. Empty span when `t` does not take gradients.
std::span<double> grad_sink(const Tensor& t);

}  // namespace inpaint
