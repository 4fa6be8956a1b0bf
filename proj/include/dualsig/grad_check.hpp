// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dualsig/tensor.hpp"

namespace dualsig {

/// Extended precision used by gradient checks; holds at least a 64-bit mantissa on x86-64.
using CheckReal = long double;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients of `f` with respect to every element of `leaves`
/// against central differences (f(x+h) - f(x-h)) / 2h. Relative error per
/// element is |a - n| / max(|a|, |n|, 1e-8). `f` must rebuild its graph from
/// the current leaf values on every call; leaves are restored afterwards.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> leaves,
                           double h = 1e-5);
GradCheckResult grad_check(const std::function<Tensor<CheckReal>()>& f, std::span<Tensor<CheckReal>> leaves,
                           double h = 1e-5);

/// Checks several scalar outputs of one function; every finite-difference
/// probe evaluates `f` once and scores all outputs. One result per output.
std::vector<GradCheckResult> grad_check_outputs(const std::function<std::vector<Tensor<double>>()>& f,
                                                std::span<Tensor<double>> leaves, double h = 1e-5);
std::vector<GradCheckResult> grad_check_outputs(const std::function<std::vector<Tensor<CheckReal>>()>& f,
                                                std::span<Tensor<CheckReal>> leaves, double h = 1e-5);

/// Two-precision form for large leaf sets. Central differences are first
/// taken through `screen`, a double-precision mirror of `f` over
/// `screen_leaves` (same shapes and values as `leaves`); an entry whose error
/// there reaches `rescore_above` for any output is measured again through `f`.
/// Analytic gradients always come from `f`.
std::vector<GradCheckResult> grad_check_outputs_screened(const std::function<std::vector<Tensor<CheckReal>>()>& f,
                                                         std::span<Tensor<CheckReal>> leaves,
                                                         const std::function<std::vector<Tensor<double>>()>& screen,
                                                         std::span<Tensor<double>> screen_leaves, double h = 1e-5,
                                                         double rescore_above = 1e-6);

/// Single-input form: `f` receives the leaf tensor. Returns the max relative error.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x, double h = 1e-5);
double grad_check(const std::function<Tensor<CheckReal>(const Tensor<CheckReal>&)>& f, Tensor<CheckReal> x,
                  double h = 1e-5);

}  // namespace dualsig
