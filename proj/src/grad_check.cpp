// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualsig/error.hpp"

namespace dualsig {

static_assert(std::numeric_limits<CheckReal>::digits >= 64, "gradient checks need an extended-precision type");

namespace {

template <typename T>
double relative_error(T a, T numeric) {
  const T denom = std::max({std::abs(a), std::abs(numeric), T(1e-8)});
  return static_cast<double>(std::abs(a - numeric) / denom);
}

void record(GradCheckResult& r, double rel, std::size_t t, std::size_t i, double a, double numeric) {
  ++r.checked;
  if (rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst_tensor = t;
    r.worst_index = i;
    r.worst_analytic = a;
    r.worst_numeric = numeric;
  }
}

// analytic[o][t] = gradient of output o with respect to leaf t
template <typename T>
std::vector<std::vector<std::vector<T>>> analytic_gradients(const std::function<std::vector<Tensor<T>>()>& f,
                                                            std::span<Tensor<T>> leaves) {
  for (auto& leaf : leaves) leaf.set_requires_grad(true);
  std::size_t n_out = 0;
  {
    NoGradScope<T> no_grad;
    n_out = f().size();
  }
  std::vector<std::vector<std::vector<T>>> analytic(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    for (auto& leaf : leaves) leaf.zero_grad();
    Tape<T> tape;
    TapeScope<T> scope(tape);
    auto outs = f();
    tape.backward(outs.at(o));
    for (auto& leaf : leaves) {
      auto g = leaf.grad_mut();
      analytic[o].emplace_back(g.begin(), g.end());
    }
  }
  return analytic;
}

// Central difference of every output with respect to element i of leaf t.
template <typename T>
std::vector<T> central_difference(const std::function<std::vector<Tensor<T>>()>& f, Tensor<T>& leaf, std::size_t i,
                                  T step) {
  auto values = leaf.mutable_data();
  const T saved = values[i];
  values[i] = saved + step;
  const auto up = f();
  values[i] = saved - step;
  const auto down = f();
  values[i] = saved;
  std::vector<T> out(up.size());
  for (std::size_t o = 0; o < up.size(); ++o) out[o] = (up[o].item() - down[o].item()) / (T(2) * step);
  return out;
}

template <typename T>
std::vector<GradCheckResult> check_outputs(const std::function<std::vector<Tensor<T>>()>& f,
                                           std::span<Tensor<T>> leaves, double h) {
  const auto analytic = analytic_gradients<T>(f, leaves);
  std::vector<GradCheckResult> results(analytic.size());
  NoGradScope<T> no_grad;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    for (std::size_t i = 0; i < leaves[t].numel(); ++i) {
      const auto numeric = central_difference<T>(f, leaves[t], i, static_cast<T>(h));
      for (std::size_t o = 0; o < results.size(); ++o) {
        const T a = analytic[o][t][i];
        record(results[o], relative_error(a, numeric[o]), t, i, static_cast<double>(a),
               static_cast<double>(numeric[o]));
      }
    }
  }
  return results;
}

template <typename T>
GradCheckResult check_leaves(const std::function<Tensor<T>()>& f, std::span<Tensor<T>> leaves, double h) {
  return check_outputs<T>([&] { return std::vector<Tensor<T>>{f()}; }, leaves, h).front();
}

template <typename T>
double check_single(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, double h) {
  std::vector<Tensor<T>> leaves{x};
  return check_leaves<T>([&] { return f(x); }, leaves, h).max_rel_error;
}

}  // namespace

std::vector<GradCheckResult> grad_check_outputs_screened(const std::function<std::vector<Tensor<CheckReal>>()>& f,
                                                         std::span<Tensor<CheckReal>> leaves,
                                                         const std::function<std::vector<Tensor<double>>()>& screen,
                                                         std::span<Tensor<double>> screen_leaves, double h,
                                                         double rescore_above) {
  if (screen_leaves.size() != leaves.size()) throw ContractError("grad_check: screen leaves differ from leaves");
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    if (screen_leaves[t].shape() != leaves[t].shape()) throw ContractError("grad_check: screen leaf shape differs");
  }
  const auto analytic = analytic_gradients<CheckReal>(f, leaves);
  std::vector<GradCheckResult> results(analytic.size());
  NoGradScope<CheckReal> no_grad;
  NoGradScope<double> no_grad_screen;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    for (std::size_t i = 0; i < leaves[t].numel(); ++i) {
      const auto coarse = central_difference<double>(screen, screen_leaves[t], i, h);
      if (coarse.size() != results.size()) throw ContractError("grad_check: screen returns a different output count");
      bool rescore = false;
      for (std::size_t o = 0; o < results.size(); ++o) {
        rescore = rescore || relative_error(static_cast<double>(analytic[o][t][i]), coarse[o]) >= rescore_above;
      }
      if (!rescore) {
        for (std::size_t o = 0; o < results.size(); ++o) {
          const double a = static_cast<double>(analytic[o][t][i]);
          record(results[o], relative_error(a, coarse[o]), t, i, a, coarse[o]);
        }
        continue;
      }
      const auto fine = central_difference<CheckReal>(f, leaves[t], i, static_cast<CheckReal>(h));
      for (std::size_t o = 0; o < results.size(); ++o) {
        const CheckReal a = analytic[o][t][i];
        record(results[o], relative_error(a, fine[o]), t, i, static_cast<double>(a), static_cast<double>(fine[o]));
      }
    }
  }
  return results;
}

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> leaves, double h) {
  return check_leaves<double>(f, leaves, h);
}

GradCheckResult grad_check(const std::function<Tensor<CheckReal>()>& f, std::span<Tensor<CheckReal>> leaves,
                           double h) {
  return check_leaves<CheckReal>(f, leaves, h);
}

std::vector<GradCheckResult> grad_check_outputs(const std::function<std::vector<Tensor<double>>()>& f,
                                                std::span<Tensor<double>> leaves, double h) {
  return check_outputs<double>(f, leaves, h);
}

std::vector<GradCheckResult> grad_check_outputs(const std::function<std::vector<Tensor<CheckReal>>()>& f,
                                                std::span<Tensor<CheckReal>> leaves, double h) {
  return check_outputs<CheckReal>(f, leaves, h);
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x, double h) {
  return check_single<double>(f, x, h);
}

double grad_check(const std::function<Tensor<CheckReal>(const Tensor<CheckReal>&)>& f, Tensor<CheckReal> x, double h) {
  return check_single<CheckReal>(f, x, h);
}

}  // namespace dualsig
