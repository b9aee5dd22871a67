#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vimf {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct NodeRef {
  std::uint64_t tape_generation = 0;
  std::size_t index = 0;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::optional<NodeRef> node;
};

}  // namespace detail

// Dense row-major float64 array. Copies of a Tensor share storage; use
// clone() for an independent copy. Gradients accumulate into leaves
// (requires_grad tensors that were not produced by a recorded op).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_values(std::initializer_list<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl().data.size(); }

  std::span<const double> data() const { return impl().data; }
  // Writing to a tensor that a tape has already consumed invalidates that tape.
  std::span<double> mutable_data() { return impl().data; }
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  bool is_recorded() const;
  Tensor clone() const;
  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl& impl() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
  }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Reverse-mode tape

using GradSlots = std::vector<std::vector<double>*>;
// grad_in[i] is null when input i needs no gradient; otherwise accumulate into it.
using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSlots& grad_in)>;

class ComputationTape {
 public:
  ComputationTape();
  ComputationTape(const ComputationTape&) = delete;
  ComputationTape& operator=(const ComputationTape&) = delete;

  std::size_t size() const { return records_.size(); }
  bool cleared() const { return cleared_; }
  std::uint64_t generation() const { return generation_; }

  // Records an op if any input requires grad; marks `output` as a tape node.
  void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);
  void backward(const Tensor& loss);
  void clear();

  std::vector<std::string> op_names() const;

 private:
  struct Record {
    std::string op;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };

  std::uint64_t generation_;
  std::vector<Record> records_;
  bool cleared_ = false;
};

void backward(ComputationTape& tape, const Tensor& loss);

// Installs a tape as the thread's active recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(ComputationTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  ComputationTape* previous_;
};

ComputationTape* active_tape();

// Used by primitives: records onto the active tape when any input needs grad.
Tensor record_op(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

}  // namespace vimf
