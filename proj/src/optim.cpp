#include "lmt/optim.hpp"

#include <cmath>

#include "lmt/error.hpp"

namespace lmt {

template <typename T>
OptimState<T> OptimState<T>::zeros_like(const std::vector<NamedParameter<T>>& params) {
  OptimState state;
  for (const auto& p : params) {
    state.m.emplace_back(p.tensor.size(), T(0));
    state.v.emplace_back(p.tensor.size(), T(0));
  }
  return state;
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t step,
                 double lr, double weight_decay) {
  const T b1 = T(kAdamBeta1);
  const T b2 = T(kAdamBeta2);
  const double t = static_cast<double>(step);
  const T step_size = T(lr / (1.0 - std::pow(kAdamBeta1, t)));
  const T bias2_sqrt = T(std::sqrt(1.0 - std::pow(kAdamBeta2, t)));
  const T eps = T(kAdamEps);
  const T shrink = T(1.0 - lr * weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad.empty() ? T(0) : grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    if (weight_decay != 0.0) param[i] *= shrink;
    param[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + eps);
  }
}

namespace {

template <typename T>
void step_all(std::vector<NamedParameter<T>>& params, OptimState<T>& state, double lr, double weight_decay) {
  if (state.m.size() != params.size()) state = OptimState<T>::zeros_like(params);
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.tensor.size()) throw ShapeError("optimizer moments do not match parameter " + p.name);
    const std::span<const T> grad = p.tensor.grad();
    adam_update<T>(p.tensor.data(), grad, state.m[i], state.v[i], state.step, lr, p.decay ? weight_decay : 0.0);
  }
}

}  // namespace

template <typename T>
void adam_step(std::vector<NamedParameter<T>>& params, OptimState<T>& state, double lr) {
  step_all(params, state, lr, 0.0);
}

template <typename T>
void adamw_step(std::vector<NamedParameter<T>>& params, OptimState<T>& state, double lr, double weight_decay) {
  step_all(params, state, lr, weight_decay);
}

template <typename T>
double clip_grad_norm(std::vector<NamedParameter<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T coef = T(max_norm / (norm + 1e-6));
    for (auto& p : params) {
      for (T& g : p.tensor.grad()) g *= coef;
    }
  }
  return norm;
}

template struct OptimState<float>;
template struct OptimState<double>;
template void adam_update(std::span<float>, std::span<const float>, std::span<float>, std::span<float>, std::uint64_t,
                          double, double);
template void adam_update(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                          std::uint64_t, double, double);
template void adam_step(std::vector<NamedParameter<float>>&, OptimState<float>&, double);
template void adam_step(std::vector<NamedParameter<double>>&, OptimState<double>&, double);
template void adamw_step(std::vector<NamedParameter<float>>&, OptimState<float>&, double, double);
template void adamw_step(std::vector<NamedParameter<double>>&, OptimState<double>&, double, double);
template double clip_grad_norm(std::vector<NamedParameter<float>>&, double);
template double clip_grad_norm(std::vector<NamedParameter<double>>&, double);

}  // namespace lmt
