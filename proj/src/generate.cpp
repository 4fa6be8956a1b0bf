// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/generate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualsig {

DecodeStrategy parse_decode_strategy(std::string_view name) {
  if (name == "greedy") return DecodeStrategy::Greedy;
  if (name == "topk" || name == "top_k") return DecodeStrategy::TopK;
  if (name == "beam") return DecodeStrategy::Beam;
  throw ConfigError("unknown decoding strategy '" + std::string(name) + "' (expected greedy, topk or beam)");
}

namespace {

// Log-probabilities of the next token after `context`, in double precision.
template <typename T>
std::vector<double> next_log_probs(const Model<T>& model, const std::vector<TokenId>& context) {
  const std::size_t window = model.config().max_seq_len;
  const std::size_t start = context.size() > window ? context.size() - window : 0;
  std::span<const TokenId> view(context.data() + start, context.size() - start);
  Tensor<T> logits = model.forward_lm(view);
  const std::size_t V = logits.dim(1);
  const T* row = logits.data().data() + (view.size() - 1) * V;
  std::vector<double> out(V);
  double mx = row[0];
  for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double z = 0.0;
  for (std::size_t j = 0; j < V; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
  const double lse = mx + std::log(z);
  for (std::size_t j = 0; j < V; ++j) out[j] = static_cast<double>(row[j]) - lse;
  return out;
}

// Indices of the k largest entries, ordered by value descending then index ascending.
std::vector<std::size_t> top_indices(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
};

template <typename T>
std::vector<TokenId> beam_search(const Model<T>& model, const std::vector<TokenId>& prompt, const DecodeOptions& o) {
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < o.max_new && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      TokenId token;
      double score;
    };
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      std::vector<TokenId> context = prompt;
      context.insert(context.end(), live[h].tokens.begin(), live[h].tokens.end());
      const auto lp = next_log_probs(model, context);
      for (std::size_t j : top_indices(lp, o.beam_width)) {
        cands.push_back({h, static_cast<TokenId>(j), live[h].score + lp[j]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Hypothesis> next;
    for (const auto& c : cands) {
      if (next.size() >= o.beam_width) break;
      Hypothesis h{live[c.parent].tokens, c.score};
      if (o.eos && c.token == *o.eos) {
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
    // Scores never increase, so a finished hypothesis that beats every live one is final.
    if (!finished.empty() && !live.empty()) {
      double best_done = finished.front().score;
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_live = live.front().score;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_done >= best_live) break;
    }
  }
  std::vector<Hypothesis> pool = std::move(finished);
  pool.insert(pool.end(), live.begin(), live.end());
  const Hypothesis* best = &pool.front();
  for (const auto& h : pool) {
    if (h.score > best->score) best = &h;
  }
  return best->tokens;
}

}  // namespace

template <typename T>
std::vector<TokenId> generate(const Model<T>& model, std::span<const TokenId> prompt, const DecodeOptions& options) {
  if (prompt.empty()) throw ContractError("generate: prompt is empty");
  if (options.k == 0) throw ConfigError("generate: k must be at least 1");
  if (options.beam_width == 0) throw ConfigError("generate: beam width must be at least 1");
  NoGradScope<T> no_grad;
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  if (options.strategy == DecodeStrategy::Beam) return beam_search(model, context, options);

  Rng rng(options.seed);
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < options.max_new; ++step) {
    const auto lp = next_log_probs(model, context);
    TokenId next = 0;
    if (options.strategy == DecodeStrategy::Greedy) {
      next = static_cast<TokenId>(top_indices(lp, 1).front());
    } else {
      const auto top = top_indices(lp, options.k);
      std::vector<double> weights(top.size());
      for (std::size_t i = 0; i < top.size(); ++i) weights[i] = std::exp(lp[top[i]] - lp[top[0]]);
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      double u = uniform_unit(rng) * total;
      std::size_t pick = top.size() - 1;
      for (std::size_t i = 0; i < top.size(); ++i) {
        if (u < weights[i]) {
          pick = i;
          break;
        }
        u -= weights[i];
      }
      next = static_cast<TokenId>(top[pick]);
    }
    if (options.eos && next == *options.eos) break;
    out.push_back(next);
    context.push_back(next);
  }
  return out;
}

template std::vector<TokenId> generate(const Model<float>&, std::span<const TokenId>, const DecodeOptions&);
template std::vector<TokenId> generate(const Model<double>&, std::span<const TokenId>, const DecodeOptions&);

}  // namespace dualsig
