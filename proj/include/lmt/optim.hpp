#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmt/model.hpp"

namespace lmt {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// First/second moments per parameter, in parameter order.
template <typename T>
struct OptimState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  /// Zero moments shaped like `params`.
  static OptimState zeros_like(const std::vector<NamedParameter<T>>& params);
};

/// One Adam update of a single tensor. `step` is the 1-based step count
/// after incrementing. With weight_decay > 0 the parameter is first shrunk
/// by lr * weight_decay (decoupled decay); with weight_decay == 0 the result is
/// exactly the plain Adam update.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t step,
                 double lr, double weight_decay = 0.0);

/// Adam over every parameter. Missing gradients count as zero. Throws
/// NumericError naming the first parameter with a non-finite gradient.
template <typename T>
void adam_step(std::vector<NamedParameter<T>>& params, OptimState<T>& state, double lr);

/// AdamW: decoupled decay applies only to parameters flagged `decay`.
template <typename T>
void adamw_step(std::vector<NamedParameter<T>>& params, OptimState<T>& state, double lr, double weight_decay);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<NamedParameter<T>>& params, double max_norm);

}  // namespace lmt
