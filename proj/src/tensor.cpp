#include "inpaint/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {
Precision g_precision = Precision::f64;
thread_local Tape g_default_tape;
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_recording = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_compute_precision(Precision p) { g_precision = p; }
Precision compute_precision() { return g_precision; }

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

int Rng::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(engine_);
}

// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::TensorNode>()) {
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  node_->values.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<detail::TensorNode>()) {
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  node_->shape = std::move(shape);
  node_->values = std::move(values);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.node_->values) v = rng.normal(0.0, stddev);
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.node_->values) v = rng.uniform(lo, hi);
  return t;
}

detail::TensorNode& Tensor::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().values.size(); }

std::span<const double> Tensor::data() const { return node().values; }
std::span<double> Tensor::mutable_data() { return node().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node().values[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node().requires_grad = on;
  if (!on) node().grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = node();
  if (n.grad.empty()) return std::vector<double>(n.values.size(), 0.0);
  return n.grad;
}

Tensor Tensor::grad_tensor() const { return Tensor(shape(), grad()); }

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node().values); }

// ---------------------------------------------------------------------------

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, Rule rule) {
  if (consumed_) throw std::logic_error("recording onto a tape that was already replayed");
  records_.push_back(Record{output, std::move(inputs), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (consumed_) throw std::logic_error("tape already replayed; clear() before the next pass");
  if (!loss.requires_grad()) throw std::logic_error("loss does not depend on any gradient input");
  consumed_ = true;
  grad_sink(loss)[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const auto& out = it->output.node();
    if (out.grad.empty()) continue;  // nothing flowed here
    it->rule(out.grad);
  }
}

void Tape::clear() {
  for (auto& r : records_) {
    r.output.zero_grad();
    for (auto& in : r.inputs)
      if (in.defined()) in.zero_grad();
  }
  records_.clear();
  consumed_ = false;
}

Tape& active_tape() { return g_active_tape ? *g_active_tape : g_default_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_recording) { g_recording = false; }
NoGradScope::~NoGradScope() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_recording) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

std::span<double> grad_sink(const Tensor& t) {
  auto& n = t.node();
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

}  // namespace inpaint
