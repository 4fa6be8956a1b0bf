// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <type_traits>

#include <cblas.h>

namespace dualsig {

namespace {

template <typename T>
void check_finite(const char* op, std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T, typename MakeBackward>
Tensor<T> finish(const char* op, Tensor<T> out, std::vector<Tensor<T>> inputs, MakeBackward&& make_backward) {
  check_finite<T>(op, out.data());
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return out;
  const bool tracked = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!tracked) return out;
  out.set_requires_grad(true);
  tape->record(std::move(inputs), out, make_backward(out));
  return out;
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Row-major C = op(A) op(B) + beta C with op(X) the optional transpose;
// C is m x n and the shared dimension is k. Runs single-threaded so results
// do not depend on scheduling.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T beta,
          T* c) {
  static const bool single_threaded = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)single_threaded;
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const auto M = static_cast<blasint>(m), N = static_cast<blasint>(n), K = static_cast<blasint>(k);
  const blasint lda = trans_a ? M : K, ldb = trans_b ? K : N;
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, M, N, K, 1.0f, a, lda, b, ldb, beta, c, N);
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, M, N, K, 1.0, a, lda, b, ldb, beta, c, N);
  }
}

// Same contract for element types BLAS lacks. Four output columns are
// accumulated at once so the x87 chains of long double overlap.
template <typename T>
void blocked_gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
                  T beta, T* c) {
  const std::size_t as_i = trans_a ? 1 : k, as_p = trans_a ? m : 1;
  const std::size_t bs_p = trans_b ? 1 : n, bs_j = trans_b ? k : 1;
  auto store = [&](std::size_t idx, T v) { c[idx] = beta == T(0) ? v : beta * c[idx] + v; };
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * as_i;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      const T* bp = b + j * bs_j;
      for (std::size_t p = 0; p < k; ++p, bp += bs_p) {
        const T av = arow[p * as_p];
        s0 += av * bp[0];
        s1 += av * bp[bs_j];
        s2 += av * bp[2 * bs_j];
        s3 += av * bp[3 * bs_j];
      }
      store(i * n + j, s0);
      store(i * n + j + 1, s1);
      store(i * n + j + 2, s2);
      store(i * n + j + 3, s3);
    }
    for (; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p * as_p] * b[p * bs_p + j * bs_j];
      store(i * n + j, acc);
    }
  }
}

template <typename T>
void gemm_any(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T beta,
              T* c) {
  if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
    gemm<T>(trans_a, trans_b, m, n, k, a, b, beta, c);
  } else {
    blocked_gemm<T>(trans_a, trans_b, m, n, k, a, b, beta, c);
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  gemm_any<T>(false, false, m, n, k, pa, pb, T(0), out.data());
  return finish<T>("matmul", Tensor<T>::from_data({m, n}, std::move(out)), {a, b}, [a, b, m, k, n](Tensor<T> c) {
    return [a, b, c, m, k, n]() mutable {
      const T* gc = c.grad().data();
      if (a.requires_grad()) gemm_any<T>(false, true, m, k, n, gc, b.data().data(), T(1), a.grad_mut().data());
      if (b.requires_grad()) gemm_any<T>(true, false, k, n, m, a.data().data(), gc, T(1), b.grad_mut().data());
    };
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return finish<T>("add", Tensor<T>::from_data(a.shape(), std::move(out)), {a, b}, [a, b](Tensor<T> c) {
    return [a, b, c]() mutable {
      auto gc = c.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
      }
    };
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return finish<T>("mul", Tensor<T>::from_data(a.shape(), std::move(out)), {a, b}, [a, b](Tensor<T> c) {
    return [a, b, c]() mutable {
      auto gc = c.grad();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * a.data()[i];
      }
    };
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  return finish<T>("scale", Tensor<T>::from_data(x.shape(), std::move(out)), {x}, [x, factor](Tensor<T> c) {
    return [x, c, factor]() mutable {
      auto gc = c.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * factor;
    };
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank("add_bias", bias, 1);
  const std::size_t n = x.shape().back();
  if (bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.data()[j];
  }
  return finish<T>("add_bias", Tensor<T>::from_data(x.shape(), std::move(out)), {x, bias},
                   [x, bias, rows, n](Tensor<T> c) {
                     return [x, bias, c, rows, n]() mutable {
                       auto gc = c.grad();
                       if (x.requires_grad()) {
                         auto g = x.grad_mut();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
                       }
                       if (bias.requires_grad()) {
                         auto g = bias.grad_mut();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < n; ++j) g[j] += gc[r * n + j];
                         }
                       }
                     };
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return finish<T>("sum", Tensor<T>::scalar(total), {x}, [x](Tensor<T> c) {
    return [x, c]() mutable {
      const T gc = c.grad()[0];
      for (T& g : x.grad_mut()) g += gc;
    };
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return finish<T>("tanh", Tensor<T>::from_data(x.shape(), std::move(out)), {x}, [x](Tensor<T> c) {
    return [x, c]() mutable {
      auto gc = c.grad();
      auto y = c.data();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * (T(1) - y[i] * y[i]);
    };
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return finish<T>("gelu", Tensor<T>::from_data(x.shape(), std::move(out)), {x}, [x](Tensor<T> c) {
    return [x, c]() mutable {
      auto gc = c.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = x.data()[i];
        const T t = std::tanh(kC * (v + kA * v * v * v));
        const T dt = (T(1) - t * t) * kC * (T(1) + T(3) * kA * v * v);
        g[i] += gc[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
      }
    };
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t n = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T z = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return finish<T>("softmax", Tensor<T>::from_data(s, std::move(out)), {x}, [x, outer, inner, n](Tensor<T> c) {
    return [x, c, outer, inner, n]() mutable {
      auto gc = c.grad();
      auto y = c.data();
      auto g = x.grad_mut();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < n; ++j) dot += y[base + j * inner] * gc[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t at = base + j * inner;
            g[at] += y[at] * (gc[at] - dot);
          }
        }
      }
    };
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets, std::optional<TokenId> ignore_index) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " rows");
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  std::size_t counted = 0;
  for (TokenId t : tgt) {
    if (ignore_index && t == *ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
    }
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: no target positions to score");

  auto lv = logits.data();
  // Stash log-softmax of counted rows for backward.
  std::vector<T> probs(rows * classes, T(0));
  T total = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (ignore_index && tgt[r] == *ignore_index) continue;
    const T* row = lv.data() + r * classes;
    const T mx = *std::max_element(row, row + classes);
    T z = T(0);
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < classes; ++j) probs[r * classes + j] = std::exp(row[j] - lse);
    total += lse - row[tgt[r]];
  }
  const T inv = T(1) / static_cast<T>(counted);
  return finish<T>("cross_entropy", Tensor<T>::scalar(total * inv), {logits},
                   [logits, tgt = std::move(tgt), probs = std::move(probs), ignore_index, rows, classes, inv](Tensor<T> c) {
                     return [logits, c, tgt, probs, ignore_index, rows, classes, inv]() mutable {
                       const T gc = c.grad()[0] * inv;
                       auto g = logits.grad_mut();
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (ignore_index && tgt[r] == *ignore_index) continue;
                         for (std::size_t j = 0; j < classes; ++j) g[r * classes + j] += gc * probs[r * classes + j];
                         g[r * classes + static_cast<std::size_t>(tgt[r])] -= gc;
                       }
                     };
                   });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_rank("layer_norm", gamma, 1);
  require_rank("layer_norm", beta, 1);
  const std::size_t n = x.shape().back();
  if (gamma.dim(0) != n || beta.dim(0) != n) {
    throw ShapeError("layer_norm: affine parameters do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return finish<T>("layer_norm", Tensor<T>::from_data(x.shape(), std::move(out)), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows, n](Tensor<T> c) {
                     return [x, gamma, beta, c, xhat, rstd, rows, n]() mutable {
                       auto gc = c.grad();
                       auto gv = gamma.data();
                       if (gamma.requires_grad()) {
                         auto gg = gamma.grad_mut();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < n; ++j) gg[j] += gc[r * n + j] * xhat[r * n + j];
                         }
                       }
                       if (beta.requires_grad()) {
                         auto gb = beta.grad_mut();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < n; ++j) gb[j] += gc[r * n + j];
                         }
                       }
                       if (!x.requires_grad()) return;
                       auto gx = x.grad_mut();
                       for (std::size_t r = 0; r < rows; ++r) {
                         T mean_d = T(0), mean_dh = T(0);
                         for (std::size_t j = 0; j < n; ++j) {
                           const T d = gc[r * n + j] * gv[j];
                           mean_d += d;
                           mean_dh += d * xhat[r * n + j];
                         }
                         mean_d /= static_cast<T>(n);
                         mean_dh /= static_cast<T>(n);
                         for (std::size_t j = 0; j < n; ++j) {
                           const T d = gc[r * n + j] * gv[j];
                           gx[r * n + j] += rstd[r] * (d - mean_d - xhat[r * n + j] * mean_dh);
                         }
                       }
                     };
                   });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids) {
  require_rank("embedding", table, 2);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  std::vector<TokenId> idv(ids.begin(), ids.end());
  std::vector<T> out(idv.size() * d);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(idv[i]) + " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idv[i]) * d, d, out.data() + i * d);
  }
  const std::size_t n = idv.size();
  return finish<T>("embedding", Tensor<T>::from_data({n, d}, std::move(out)), {table},
                   [table, idv = std::move(idv), d](Tensor<T> c) {
                     return [table, c, idv, d]() mutable {
                       auto gc = c.grad();
                       auto g = table.grad_mut();
                       for (std::size_t i = 0; i < idv.size(); ++i) {
                         T* dst = g.data() + static_cast<std::size_t>(idv[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) dst[j] += gc[i * d + j];
                       }
                     };
                   });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_rank("gather_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (rows.empty()) throw ShapeError("gather_rows: no rows requested");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw IndexError("gather_rows: row " + std::to_string(idx[i]) + " outside " + std::to_string(n));
    std::copy_n(x.data().data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t k = idx.size();
  return finish<T>("gather_rows", Tensor<T>::from_data({k, d}, std::move(out)), {x},
                   [x, idx = std::move(idx), d](Tensor<T> c) {
                     return [x, c, idx, d]() mutable {
                       auto gc = c.grad();
                       auto g = x.grad_mut();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += gc[i * d + j];
                       }
                     };
                   });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform_unit(rng) < rate ? T(0) : keep_scale;
    out[i] = x.data()[i] * mask[i];
  }
  return finish<T>("dropout", Tensor<T>::from_data(x.shape(), std::move(out)), {x}, [x, mask = std::move(mask)](Tensor<T> c) {
    return [x, c, mask]() mutable {
      auto gc = c.grad();
      auto g = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * mask[i];
    };
  });
}

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& qkv, const BatchLayout& layout, std::size_t n_heads) {
  require_rank("causal_attention", qkv, 2);
  const std::size_t B = layout.batch, L = layout.seq_len;
  if (B == 0 || L == 0 || layout.lengths.size() != B || qkv.dim(0) != B * L || qkv.dim(1) % 3 != 0) {
    throw ShapeError("causal_attention: packed input " + shape_str(qkv.shape()) + " does not match batch layout");
  }
  const std::size_t d = qkv.dim(1) / 3;
  if (n_heads == 0 || d % n_heads != 0) throw ShapeError("causal_attention: width not divisible by head count");
  std::vector<std::size_t> lengths(layout.lengths.begin(), layout.lengths.end());
  for (std::size_t len : lengths) {
    if (len == 0 || len > L) throw ShapeError("causal_attention: sequence length outside [1, seq_len]");
  }
  const std::size_t hd = d / n_heads;
  const std::size_t stride = 3 * d;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  auto in = qkv.data();
  std::vector<T> out(B * L * d, T(0));
  std::vector<T> probs(B * n_heads * L * L, T(0));

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t limit = std::min(i, lengths[b] - 1);
        const T* q = in.data() + (b * L + i) * stride + h * hd;
        T* p = probs.data() + ((b * n_heads + h) * L + i) * L;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= limit; ++j) {
          const T* k = in.data() + (b * L + j) * stride + d + h * hd;
          T s = T(0);
          for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        T z = T(0);
        for (std::size_t j = 0; j <= limit; ++j) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        T* o = out.data() + (b * L + i) * d + h * hd;
        for (std::size_t j = 0; j <= limit; ++j) {
          p[j] /= z;
          const T* v = in.data() + (b * L + j) * stride + 2 * d + h * hd;
          for (std::size_t e = 0; e < hd; ++e) o[e] += p[j] * v[e];
        }
      }
    }
  }
  return finish<T>(
      "causal_attention", Tensor<T>::from_data({B * L, d}, std::move(out)), {qkv},
      [qkv, probs = std::move(probs), lengths = std::move(lengths), B, L, d, hd, n_heads, stride, inv_sqrt](Tensor<T> c) {
        return [qkv, c, probs, lengths, B, L, d, hd, n_heads, stride, inv_sqrt]() mutable {
          auto gc = c.grad();
          auto in = qkv.data();
          auto g = qkv.grad_mut();
          std::vector<T> dp(L);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t h = 0; h < n_heads; ++h) {
              for (std::size_t i = 0; i < L; ++i) {
                const std::size_t limit = std::min(i, lengths[b] - 1);
                const T* p = probs.data() + ((b * n_heads + h) * L + i) * L;
                const T* go = gc.data() + (b * L + i) * d + h * hd;
                const T* q = in.data() + (b * L + i) * stride + h * hd;
                T* gq = g.data() + (b * L + i) * stride + h * hd;
                T dot = T(0);
                for (std::size_t j = 0; j <= limit; ++j) {
                  const std::size_t row = (b * L + j) * stride;
                  const T* v = in.data() + row + 2 * d + h * hd;
                  T* gv = g.data() + row + 2 * d + h * hd;
                  T acc = T(0);
                  for (std::size_t e = 0; e < hd; ++e) {
                    acc += go[e] * v[e];
                    gv[e] += p[j] * go[e];
                  }
                  dp[j] = acc;
                  dot += p[j] * acc;
                }
                for (std::size_t j = 0; j <= limit; ++j) {
                  const T ds = p[j] * (dp[j] - dot) * inv_sqrt;
                  const std::size_t row = (b * L + j) * stride;
                  const T* k = in.data() + row + d + h * hd;
                  T* gk = g.data() + row + d + h * hd;
                  for (std::size_t e = 0; e < hd; ++e) {
                    gq[e] += ds * k[e];
                    gk[e] += ds * q[e];
                  }
                }
              }
            }
          }
        };
      });
}

#define DUALSIG_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> tanh(const Tensor<T>&);                                                     \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>, std::optional<TokenId>); \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>);                      \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&);                                    \
  template Tensor<T> causal_attention(const Tensor<T>&, const BatchLayout&, std::size_t);

DUALSIG_INSTANTIATE_OPS(float)
DUALSIG_INSTANTIATE_OPS(double)
DUALSIG_INSTANTIATE_OPS(long double)

}  // namespace dualsig
