#include "vimf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "vimf/errors.hpp"

namespace vimf {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
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

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(numel_of(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (data.size() != numel_of(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::from_values(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}



std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}



double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl().data[flat];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl().grad.has_value(); }

std::span<const double> Tensor::grad() const {
  if (!impl().grad) throw TapeError("tensor has no gradient");
  return *impl().grad;
}

Tensor Tensor::grad_tensor() const { return Tensor(shape(), std::vector<double>(grad().begin(), grad().end())); }

void Tensor::zero_grad() { impl().grad.reset(); }

bool Tensor::is_recorded() const { return impl().node.has_value(); }

Tensor Tensor::clone() const { return Tensor(shape(), impl().data); }

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// ---------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> g_generation{1};
thread_local ComputationTape* t_active = nullptr;

}  // namespace

ComputationTape::ComputationTape() : generation_(g_generation.fetch_add(1)) {}

void ComputationTape::record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  if (cleared_) {
    generation_ = g_generation.fetch_add(1);
    cleared_ = false;
  }
  output.impl().requires_grad = true;
  output.impl().node = detail::NodeRef{generation_, records_.size()};
  records_.push_back(Record{std::string(op), std::move(inputs), std::move(fn)});
}

void ComputationTape::backward(const Tensor& loss) {
  if (cleared_) throw TapeError("backward on a cleared tape");
  if (loss.numel() != 1) throw TapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  const auto& node = loss.impl().node;
  if (!node || node->tape_generation != generation_ || node->index >= records_.size()) {
    throw TapeError("loss is not reachable on this tape");
  }

  std::vector<std::vector<double>> node_grads(node->index + 1);
  node_grads[node->index] = {1.0};

  for (std::size_t i = node->index + 1; i-- > 0;) {
    if (node_grads[i].empty()) continue;
    Record& rec = records_[i];
    GradSlots slots(rec.inputs.size(), nullptr);
    for (std::size_t j = 0; j < rec.inputs.size(); ++j) {
      if (!rec.inputs[j].defined()) continue;
      detail::TensorImpl& in = rec.inputs[j].impl();
      const std::size_t n = in.data.size();
      if (in.node && in.node->tape_generation == generation_) {
        auto& buf = node_grads[in.node->index];
        if (buf.empty()) buf.assign(n, 0.0);
        slots[j] = &buf;
      } else if (in.requires_grad) {
        if (!in.grad) in.grad.emplace(n, 0.0);
        slots[j] = &*in.grad;
      }
    }
    rec.fn(node_grads[i], slots);
    std::vector<double>().swap(node_grads[i]);
  }
}

void ComputationTape::clear() {
  records_.clear();
  records_.shrink_to_fit();
  cleared_ = true;
}

std::vector<std::string> ComputationTape::op_names() const {
  std::vector<std::string> names;
  names.reserve(records_.size());
  for (const auto& r : records_) names.push_back(r.op);
  return names;
}

void backward(ComputationTape& tape, const Tensor& loss) { tape.backward(loss); }

TapeScope::TapeScope(ComputationTape& tape) : previous_(t_active) { t_active = &tape; }
TapeScope::~TapeScope() { t_active = previous_; }

ComputationTape* active_tape() { return t_active; }

Tensor record_op(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  ComputationTape* tape = t_active;
  if (!tape) return output;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return output;
  tape->record(op, std::move(inputs), output, std::move(fn));
  return output;
}

}  // namespace vimf
