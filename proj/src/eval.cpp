// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/eval.hpp"

#include <algorithm>
#include <cmath>

#include "dualsig/rng.hpp"
#include "dualsig/trainer.hpp"

namespace dualsig {

namespace {

constexpr std::size_t kPerplexityBatch = 16;
constexpr std::size_t kMaxSkipReasons = 8;

struct ScoredWindow {
  std::vector<TokenId> tokens;
  std::size_t first_scored = 1;  // local index of the first scored target
};

template <typename T>
void score_windows(const Model<T>& model, const std::vector<ScoredWindow>& windows, TokenId pad,
                   PerplexityResult& acc) {
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& w : windows) seqs.push_back(w.tokens);
  const TokenBatch batch = TokenBatch::pack(seqs, pad);
  const Tensor<T> logits = model.lm_logits(batch);
  const std::size_t vocab = model.config().vocab_size;
  const auto data = logits.data();
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    for (std::size_t p = w.first_scored; p < w.tokens.size(); ++p) {
      const TokenId target = w.tokens[p];
      if (target == pad) continue;
      const T* row = data.data() + (b * batch.seq_len + p - 1) * vocab;
      double mx = -INFINITY;
      for (std::size_t v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
      double z = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) z += std::exp(static_cast<double>(row[v]) - mx);
      acc.nll_sum += mx + std::log(z) - static_cast<double>(row[target]);
      ++acc.tokens;
    }
  }
}

}  // namespace

template <typename T>
PerplexityResult perplexity(const Model<T>& model, std::span<const TokenId> corpus, std::size_t window,
                            std::size_t stride, TokenId pad) {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  if (window == 0) window = model.config().max_seq_len;
  if (window > model.config().max_seq_len) throw LengthError("perplexity window exceeds max_seq_len");
  if (window < 2) throw ConfigError("perplexity window must hold at least two tokens");
  if (stride == 0) stride = window;
  if (stride > window) throw ConfigError("perplexity stride must not exceed the window");

  NoGradScope<T> no_grad;
  PerplexityResult acc;
  std::vector<ScoredWindow> pending;
  std::size_t scored_until = 1;
  for (std::size_t s = 0; s < corpus.size(); s += stride) {
    const std::size_t e = std::min(corpus.size(), s + window);
    const std::size_t from = std::max(s + 1, scored_until);
    if (from < e) {
      ScoredWindow w;
      w.tokens.assign(corpus.begin() + static_cast<std::ptrdiff_t>(s), corpus.begin() + static_cast<std::ptrdiff_t>(e));
      w.first_scored = from - s;
      pending.push_back(std::move(w));
      if (pending.size() == kPerplexityBatch) {
        score_windows(model, pending, pad, acc);
        pending.clear();
      }
    }
    scored_until = std::max(scored_until, e);
    if (e == corpus.size()) break;
  }
  if (!pending.empty()) score_windows(model, pending, pad, acc);
  if (acc.tokens == 0) throw ContractError("perplexity: corpus has no scorable positions");
  acc.perplexity = std::exp(acc.nll_sum / static_cast<double>(acc.tokens));
  return acc;
}

void Confusion::add(bool predicted, bool gold) {
  if (predicted && gold) ++tp;
  else if (predicted) ++fp;
  else if (gold) ++fn;
  else ++tn;
}

double accuracy(const Confusion& c) {
  return c.total() == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double f1_score(const Confusion& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double matthews(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

TaskMetrics TaskMetrics::from(const Confusion& c) {
  return {c, dualsig::accuracy(c), f1_score(c), dualsig::matthews(c)};
}

double JudgeReport::mean_accuracy() const {
  if (tasks.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [_, m] : tasks) s += m.accuracy;
  return s / static_cast<double>(tasks.size());
}

template <typename T>
std::vector<std::optional<bool>> predict(const Model<T>& model, const Vocab& vocab,
                                         const std::vector<PropositionSample>& samples, const JudgeOptions& options,
                                         std::vector<std::string>* reasons) {
  if (options.batch_size == 0) throw ConfigError("judge batch size must be positive");
  const TokenId cls = vocab.special().cls, pad = vocab.special().pad;
  std::vector<std::optional<bool>> out(samples.size());
  std::vector<std::vector<TokenId>> encoded(samples.size());
  std::vector<std::size_t> ok;
  auto skip = [&](std::size_t i, const std::string& why) {
    if (reasons && reasons->size() < kMaxSkipReasons) reasons->push_back("sample " + std::to_string(i) + ": " + why);
  };
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      parse_proposition(samples[i].text);
    } catch (const ParseError& e) {
      skip(i, e.what());
      continue;
    }
    encoded[i] = vocab.encode(samples[i].text);
    if (encoded[i].size() > model.config().max_seq_len) {
      skip(i, "encodes to " + std::to_string(encoded[i].size()) + " tokens, above max_seq_len");
      continue;
    }
    if (encoded[i].empty() || encoded[i].back() != cls) {
      skip(i, "does not encode to a final [cls]");
      continue;
    }
    ok.push_back(i);
  }

  NoGradScope<T> no_grad;
  for (std::size_t start = 0; start < ok.size(); start += options.batch_size) {
    const std::size_t end = std::min(ok.size(), start + options.batch_size);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t k = start; k < end; ++k) seqs.push_back(encoded[ok[k]]);
    const Tensor<T> logits = model.proposition_logits(TokenBatch::pack(seqs, pad), cls);
    const auto d = logits.data();
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t r = k - start;
      out[ok[k]] = d[r * 2 + kTrueClass] > d[r * 2 + kFalseClass];
    }
  }
  return out;
}

template <typename T>
JudgeReport judge(const Model<T>& model, const Vocab& vocab, const std::vector<PropositionSample>& samples,
                  const JudgeOptions& options) {
  JudgeReport report;
  const auto predictions = predict(model, vocab, samples, options, &report.skip_reasons);
  std::map<std::string, Confusion> per_task;
  Confusion all;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!predictions[i]) {
      ++report.skipped;
      continue;
    }
    per_task[samples[i].task].add(*predictions[i], samples[i].label);
    all.add(*predictions[i], samples[i].label);
    ++report.judged;
  }
  for (const auto& [task, c] : per_task) report.tasks[task] = TaskMetrics::from(c);
  report.overall = TaskMetrics::from(all);
  return report;
}

template <typename T>
std::uint64_t model_hash(const Model<T>& model) {
  std::uint64_t h = fnv1a64(to_json(model.config()).dump());
  for (const auto& nt : model.params().named()) {
    const auto d = nt.tensor.data();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(T)), h);
  }
  return h;
}

nlohmann::json to_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

nlohmann::json to_json(const TaskMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"f1", m.f1},
          {"matthews", m.matthews},
          {"count", m.confusion.total()},
          {"confusion", to_json(m.confusion)}};
}

nlohmann::json to_json(const JudgeReport& r) {
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& [name, m] : r.tasks) tasks[name] = to_json(m);
  return {{"tasks", tasks},
          {"overall", to_json(r.overall)},
          {"mean_accuracy", r.mean_accuracy()},
          {"judged", r.judged},
          {"skipped", r.skipped},
          {"skip_reasons", r.skip_reasons}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json ppl = nlohmann::json::object();
  for (const auto& [name, p] : r.perplexity) {
    ppl[name] = {{"perplexity", p.perplexity}, {"nll_sum", p.nll_sum}, {"tokens", p.tokens}};
  }
  return {{"perplexity", ppl},
          {"judgment", to_json(r.judgment)},
          {"model_hash", hex64(r.model_hash)},
          {"config_hash", hex64(r.config_hash)}};
}

#define DUALSIG_INSTANTIATE(T)                                                                                    \
  template PerplexityResult perplexity(const Model<T>&, std::span<const TokenId>, std::size_t, std::size_t,        \
                                       TokenId);                                                                  \
  template std::vector<std::optional<bool>> predict(const Model<T>&, const Vocab&,                                \
                                                    const std::vector<PropositionSample>&, const JudgeOptions&,   \
                                                    std::vector<std::string>*);                                   \
  template JudgeReport judge(const Model<T>&, const Vocab&, const std::vector<PropositionSample>&,                \
                             const JudgeOptions&);                                                                \
  template std::uint64_t model_hash(const Model<T>&);

DUALSIG_INSTANTIATE(float)
DUALSIG_INSTANTIATE(double)

#undef DUALSIG_INSTANTIATE

}  // namespace dualsig
