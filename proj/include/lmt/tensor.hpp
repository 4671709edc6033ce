#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lmt/rng.hpp"
#include "lmt/subword.hpp"

namespace lmt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor with shared ownership of its storage.
///
/// Copies of a Tensor are handles to the same storage; use clone() for a deep
/// copy. Gradients are allocated lazily the first time something accumulates
/// into them.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient access is through the shared storage, so it is available on
  // const handles (backward rules hold const copies of their inputs).
  std::span<T> grad() const { return impl_->grad; }
  /// Gradient buffer, zero-filled on first access.
  std::vector<T>& grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  Tensor clone() const;
  /// Deep copy that does not require gradients.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations append themselves while the tape is active on the calling
/// thread (see TapeScope) and at least one input requires a gradient. Entries
/// are in execution order, so replaying them backwards is a valid reverse
/// topological order.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward);
  /// Seeds d(loss)/d(loss) = 1 and runs every entry's rule in reverse order.
  /// Throws ShapeError if `loss` is not a scalar.
  void backward(const Tensor<T>& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

/// Makes `tape` the recording target for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

// Elementwise and shape ops.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// x[..., n] + bias[n]
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

/// a[..., m, k] x b[..., k, n]. b's leading dims must equal a's, or b must be 2-D.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);

/// Normalizes over the last dimension, then applies gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

/// Inverted dropout. Returns `x` itself when not training or p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training);

/// Rows of table[V, d] selected by ids; output shape is lead + [d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& lead);

/// scores[B, h, Tq, Tk] + penalty where mask[B, 1, Tq, Tk] == 0.
template <typename T>
Tensor<T> masked_add(const Tensor<T>& scores, std::span<const std::uint8_t> mask, T penalty);

/// Mean over non-ignored rows of
/// (1 - ls) * -log p[target] + ls * mean_v(-log p[v]).
/// Throws ConfigError if every row is ignored.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets, double label_smoothing,
                        TokenId ignore_id);

}  // namespace lmt
