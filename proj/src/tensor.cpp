#include "lmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lmt/error.hpp"

namespace lmt {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

template <typename T>
std::vector<T>& Tensor<T>::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
  out.impl_->grad = impl_->grad;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
void Tape<T>::record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward) {
  entries_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + (loss.defined() ? to_string(loss.shape()) : "[]"));
  }
  loss.grad_buffer()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

namespace {

// Registers `out` on the active tape when gradients are needed.
template <typename T>
bool track(const char* op, std::vector<Tensor<T>> inputs, Tensor<T>& out, std::function<void()> fn) {
  Tape<T>* tape = active_tape<T>();
  bool needed = false;
  for (const auto& t : inputs) needed = needed || t.requires_grad();
  if (!tape || !needed) return false;
  out.set_requires_grad(true);
  tape->record(op, std::move(inputs), out, std::move(fn));
  return true;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  }
}

// C[m,n] += A[m,k] * B[k,n]. Rows of A are taken four at a time so each row
// of B is loaded once per block.
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict A, const T* __restrict B,
             T* __restrict C) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = C + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = A[i * k + p], a1 = A[(i + 1) * k + p], a2 = A[(i + 2) * k + p], a3 = A[(i + 3) * k + p];
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a = A[i * k + p];
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C[m,k] += G[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* G, const T* B, T* C) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
  }
  gemm_nn(m, n, k, G, bt.data(), C);
}

// C[k,n] += A[m,k]^T * G[m,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict A, const T* __restrict G,
             T* __restrict C) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* g0 = G + i * n;
    const T* g1 = g0 + n;
    const T* g2 = g1 + n;
    const T* g3 = g2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = A[i * k + p], a1 = A[(i + 1) * k + p], a2 = A[(i + 2) * k + p], a3 = A[(i + 3) * k + p];
      T* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a0 * g0[j] + a1 * g1[j] + a2 * g2[j] + a3 * g3[j];
    }
  }
  for (; i < m; ++i) {
    const T* g = G + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a = A[i * k + p];
      T* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * g[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  Tensor<T> y(a.shape(), std::move(out));
  track<T>("add", {a, b}, y, [a, b, y]() mutable {
    const auto g = y.grad();
    for (const Tensor<T>* in : {&a, &b}) {
      if (!in->requires_grad()) continue;
      auto& gi = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = bias.size();
  if (bias.rank() != 1 || x.shape().back() != n) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % n];
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("add_bias", {x, bias}, y, [x, bias, y, n]() mutable {
    const auto g = y.grad();
    if (x.requires_grad()) {
      auto& gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto& gb = bias.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  Tensor<T> y(a.shape(), std::move(out));
  track<T>("mul", {a, b}, y, [a, b, y]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad_buffer();
      const auto bd = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad_buffer();
      const auto ad = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("scale", {x}, y, [x, y, factor]() mutable {
    const auto g = y.grad();
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> y({1}, {acc});
  track<T>("sum", {x}, y, [x, y]() mutable {
    const T g = y.grad()[0];
    for (auto& v : x.grad_buffer()) v += g;
  });
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("relu", {x}, y, [x, y]() mutable {
    const auto g = y.grad();
    const auto xd = x.data();
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > T(0)) gx[i] += g[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  track<T>("reshape", {x}, y, [x, y]() mutable {
    const auto g = y.grad();
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return y;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw ShapeError("permute: axis count does not match rank");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(axes[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.dim(i);
  // stride in the input for each output axis
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[axes[i]];

  const std::size_t n = x.size();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < n; ++o) {
    gather[o] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      offset += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      offset -= src_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<T> out(n);
  const auto xd = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xd[gather[o]];
  Tensor<T> y(out_shape, std::move(out));
  track<T>("permute", {x}, y, [x, y, gather = std::move(gather)]() mutable {
    const auto g = y.grad();
    auto& gx = x.grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) gx[gather[o]] += g[o];
  });
  return y;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2);
  const std::size_t n = b.dim(b.rank() - 1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ in " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const bool shared_b = batch_b.empty();
  if (!shared_b && batch_a != batch_b) {
    throw ShapeError("matmul: batch dimensions " + to_string(a.shape()) + " x " + to_string(b.shape()) +
                     " are not broadcastable");
  }
  Shape out_shape = batch_a;
  out_shape.push_back(m);
  out_shape.push_back(n);
  // A shared right operand lets the batch fold into the row dimension.
  const std::size_t batches = shared_b ? 1 : numel(batch_a);
  if (shared_b) m *= numel(batch_a);
  std::vector<T> out(batches * m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t s = 0; s < batches; ++s) {
    gemm_nn(m, k, n, ad + s * m * k, bd + (shared_b ? 0 : s * k * n), out.data() + s * m * n);
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  track<T>("matmul", {a, b}, y, [a, b, y, m, k, n, batches, shared_b]() mutable {
    const T* g = y.grad().data();
    if (a.requires_grad()) {
      T* ga = a.grad_buffer().data();
      const T* bd = b.data().data();
      for (std::size_t s = 0; s < batches; ++s) {
        gemm_nt(m, n, k, g + s * m * n, bd + (shared_b ? 0 : s * k * n), ga + s * m * k);
      }
    }
    if (b.requires_grad()) {
      T* gb = b.grad_buffer().data();
      const T* ad = a.data().data();
      for (std::size_t s = 0; s < batches; ++s) {
        gemm_tn(m, k, n, ad + s * m * k, g + s * m * n, gb + (shared_b ? 0 : s * k * n));
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  const auto xd = x.data();
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xd[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("softmax", {x}, y, [x, y, outer, inner, len]() mutable {
    const auto g = y.grad();
    const auto yd = y.data();
    auto& gx = x.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = T(0);
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * yd[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = base + j * inner;
          gx[i] += yd[i] * (g[i] - dot);
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / len;
  const auto xd = x.data();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * len;
    const T mx = *std::max_element(row, row + len);
    T total = T(0);
    for (std::size_t j = 0; j < len; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = row[j] - lse;
  }
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("log_softmax", {x}, y, [x, y, rows, len]() mutable {
    const auto g = y.grad();
    const auto yd = y.data();
    auto& gx = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T gs = T(0);
      for (std::size_t j = 0; j < len; ++j) gs += g[r * len + j];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t i = r * len + j;
        gx[i] += g[i] - std::exp(yd[i]) * gs;
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias must match last dimension of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<T> xhat(x.size());
  std::vector<T> rstd(rows);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      xhat[i] = (row[j] - mean) * rstd[r];
      out[i] = xhat[i] * gd[j] + bd[j];
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("layer_norm", {x, gain, bias}, y,
           [x, gain, bias, y, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
             const auto g = y.grad();
             const auto gd = gain.data();
             if (gain.requires_grad() || bias.requires_grad()) {
               auto& gg = gain.grad_buffer();
               auto& gb = bias.grad_buffer();
               for (std::size_t i = 0; i < g.size(); ++i) {
                 gg[i % d] += g[i] * xhat[i];
                 gb[i % d] += g[i];
               }
             }
             if (!x.requires_grad()) return;
             auto& gx = x.grad_buffer();
             for (std::size_t r = 0; r < rows; ++r) {
               T mean_g = T(0);
               T mean_gx = T(0);
               for (std::size_t j = 0; j < d; ++j) {
                 const T gh = g[r * d + j] * gd[j];
                 mean_g += gh;
                 mean_gx += gh * xhat[r * d + j];
               }
               mean_g /= T(d);
               mean_gx /= T(d);
               for (std::size_t j = 0; j < d; ++j) {
                 const std::size_t i = r * d + j;
                 gx[i] += rstd[r] * (g[i] * gd[j] - mean_g - xhat[i] * mean_gx);
               }
             }
           });
  return y;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  Tensor<T> y(x.shape(), std::move(out));
  track<T>("dropout", {x}, y, [x, y, mask = std::move(mask)]() mutable {
    const auto g = y.grad();
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
  return y;
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& lead) {
  if (table.rank() != 2) throw ShapeError("embedding table must be 2-D");
  if (numel(lead) != ids.size()) throw ShapeError("embedding: id count does not match " + to_string(lead));
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  const auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Shape shape = lead;
  shape.push_back(d);
  Tensor<T> y(std::move(shape), std::move(out));
  std::vector<TokenId> kept(ids.begin(), ids.end());
  track<T>("embedding", {table}, y, [table, y, d, kept = std::move(kept)]() mutable {
    const auto g = y.grad();
    auto& gt = table.grad_buffer();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      T* dst = gt.data() + static_cast<std::size_t>(kept[i]) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
    }
  });
  return y;
}

template <typename T>
Tensor<T> masked_add(const Tensor<T>& scores, std::span<const std::uint8_t> mask, T penalty) {
  if (scores.rank() != 4) throw ShapeError("masked_add expects [B, h, Tq, Tk] scores");
  const std::size_t B = scores.dim(0);
  const std::size_t H = scores.dim(1);
  const std::size_t plane = scores.dim(2) * scores.dim(3);
  if (mask.size() != B * plane) throw ShapeError("masked_add: mask must be [B, 1, Tq, Tk]");
  std::vector<T> out(scores.data().begin(), scores.data().end());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      T* dst = out.data() + (b * H + h) * plane;
      const std::uint8_t* m = mask.data() + b * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!m[i]) dst[i] += penalty;
      }
    }
  }
  Tensor<T> y(scores.shape(), std::move(out));
  track<T>("masked_add", {scores}, y, [scores, y]() mutable {
    const auto g = y.grad();
    auto& gs = scores.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
  });
  return y;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets, double label_smoothing,
                        TokenId ignore_id) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [N, V] logits");
  const std::size_t N = logits.dim(0);
  const std::size_t V = logits.dim(1);
  if (targets.size() != N) throw ShapeError("cross_entropy: need one target per row");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must be in [0, 1)");
  const T ls = T(label_smoothing);
  const auto xd = logits.data();
  std::vector<T> probs(N * V, T(0));
  std::size_t counted = 0;
  T total = T(0);
  for (std::size_t r = 0; r < N; ++r) {
    if (targets[r] == ignore_id) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= V) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " + std::to_string(V) + ")");
    }
    ++counted;
    const T* row = xd.data() + r * V;
    const T mx = *std::max_element(row, row + V);
    T z = T(0);
    for (std::size_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    T mean_nll = T(0);
    for (std::size_t j = 0; j < V; ++j) {
      mean_nll += lse - row[j];
      probs[r * V + j] = std::exp(row[j] - lse);
    }
    mean_nll /= T(V);
    total += (T(1) - ls) * (lse - row[static_cast<std::size_t>(targets[r])]) + ls * mean_nll;
  }
  if (counted == 0) throw ConfigError("cross_entropy: every row is ignored");
  Tensor<T> y({1}, {total / T(counted)});
  std::vector<TokenId> kept(targets.begin(), targets.end());
  track<T>("cross_entropy", {logits}, y,
           [logits, y, N, V, ls, ignore_id, counted, probs = std::move(probs), kept = std::move(kept)]() mutable {
             const T g = y.grad()[0] / T(counted);
             auto& gl = logits.grad_buffer();
             const T uniform = ls / T(V);
             for (std::size_t r = 0; r < N; ++r) {
               if (kept[r] == ignore_id) continue;
               for (std::size_t j = 0; j < V; ++j) gl[r * V + j] += g * (probs[r * V + j] - uniform);
               gl[r * V + static_cast<std::size_t>(kept[r])] -= g * (T(1) - ls);
             }
           });
  return y;
}

#define LMT_INSTANTIATE(T)                                                                                   \
  template class Tensor<T>;                                                                                  \
  template class Tape<T>;                                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                       \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                 \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                    \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&, bool);                                          \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>, const Shape&);                    \
  template Tensor<T> masked_add(const Tensor<T>&, std::span<const std::uint8_t>, T);                         \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>, double, TokenId);

LMT_INSTANTIATE(float)
LMT_INSTANTIATE(double)

#undef LMT_INSTANTIATE

}  // namespace lmt
