// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/experiment.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dualsig/rng.hpp"

namespace dualsig {

using nlohmann::json;

AblationKind parse_ablation_kind(std::string_view name) {
  if (name == "no_language_signal") return AblationKind::NoLanguageSignal;
  if (name == "no_task_prefix") return AblationKind::NoTaskPrefix;
  if (name == "unseen_holdout") return AblationKind::UnseenHoldout;
  throw ConfigError("unknown ablation '" + std::string(name) +
                    "' (expected no_language_signal, no_task_prefix or unseen_holdout)");
}

std::string_view to_string(AblationKind kind) {
  switch (kind) {
    case AblationKind::NoLanguageSignal:
      return "no_language_signal";
    case AblationKind::NoTaskPrefix:
      return "no_task_prefix";
    case AblationKind::UnseenHoldout:
      return "unseen_holdout";
  }
  return "no_language_signal";
}

namespace {

std::string_view strategy_name(DecodeStrategy s) {
  switch (s) {
    case DecodeStrategy::Greedy:
      return "greedy";
    case DecodeStrategy::TopK:
      return "topk";
    case DecodeStrategy::Beam:
      return "beam";
  }
  return "topk";
}

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " section must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown key '" + it.key() + "' in " + section + " section");
    }
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j[key].get<V>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? (base / path).lexically_normal() : path;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

std::string fill_slots(std::string s) {
  for (const char* slot : {"{text}", "{text2}", "{label_desc}"}) {
    for (auto pos = s.find(slot); pos != std::string::npos; pos = s.find(slot)) s.replace(pos, std::strlen(slot), " ");
  }
  return s;
}

}  // namespace

void ExperimentConfig::resolve() {
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = kSpecialCount + 1;
  m.validate();
  train.seed = derive_seed(seed, "train");
  train.validate();
  if (data.cap_per_dataset < 2) throw ConfigError("data.cap_per_dataset must be at least 2");
  if (data.negatives_per_positive == 0) throw ConfigError("data.negatives_per_positive must be positive");
  if (data.window != 0 && (data.window < 2 || data.window > model.max_seq_len)) {
    throw ConfigError("data.window must lie in [2, max_seq_len]");
  }
  if (eval.batch_size == 0) throw ConfigError("eval.batch_size must be positive");
  if (generate.k == 0 || generate.beam_width == 0) throw ConfigError("generate.k and generate.beam_width must be positive");
}

ExperimentConfig synthetic_desk_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.data.registry = "registry.json";
  c.data.corpus = "corpus.txt";
  c.data.heldout_corpus = "heldout.txt";
  c.model.vocab_size = 0;
  c.model.n_layers = 2;
  c.model.d_model = 64;
  c.model.n_heads = 4;
  c.model.d_ff = 256;
  c.model.max_seq_len = 32;
  c.train.learning_rate = 1e-3;
  c.train.language_batch_size = 16;
  c.train.teacher_batch_size = 64;
  c.train.total_steps = 6000;
  c.train.checkpoint_interval = 2000;
  c.ablate.kind = AblationKind::UnseenHoldout;
  c.ablate.holdout = {"topic"};
  c.resolve();
  return c;
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"seed", "data", "model", "train", "eval", "generate", "ablate"}, "root");
  ExperimentConfig c;
  read(j, "seed", c.seed, "root");
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d,
               {"registry", "corpus", "heldout_corpus", "cap_per_dataset", "task_prefix", "negatives_per_positive",
                "holdout", "tokenizer", "vocab_max", "window"},
               "data");
    std::string registry, corpus, heldout, tokenizer = "word";
    read(d, "registry", registry, "data");
    read(d, "corpus", corpus, "data");
    read(d, "heldout_corpus", heldout, "data");
    read(d, "tokenizer", tokenizer, "data");
    c.data.registry = resolve_path(registry, base_dir);
    c.data.corpus = resolve_path(corpus, base_dir);
    c.data.heldout_corpus = resolve_path(heldout, base_dir);
    c.data.tokenizer = parse_tokenizer_mode(tokenizer);
    read(d, "cap_per_dataset", c.data.cap_per_dataset, "data");
    read(d, "task_prefix", c.data.task_prefix, "data");
    read(d, "negatives_per_positive", c.data.negatives_per_positive, "data");
    read(d, "holdout", c.data.holdout, "data");
    read(d, "vocab_max", c.data.vocab_max, "data");
    read(d, "window", c.data.window, "data");
  }
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, {"window", "stride", "batch_size"}, "eval");
    read(e, "window", c.eval.window, "eval");
    read(e, "stride", c.eval.stride, "eval");
    read(e, "batch_size", c.eval.batch_size, "eval");
  }
  if (j.contains("generate")) {
    const json& g = j["generate"];
    check_keys(g, {"strategy", "k", "beam_width", "max_new"}, "generate");
    std::string strategy(strategy_name(c.generate.strategy));
    read(g, "strategy", strategy, "generate");
    c.generate.strategy = parse_decode_strategy(strategy);
    read(g, "k", c.generate.k, "generate");
    read(g, "beam_width", c.generate.beam_width, "generate");
    read(g, "max_new", c.generate.max_new, "generate");
  }
  if (j.contains("ablate")) {
    const json& a = j["ablate"];
    check_keys(a, {"kind", "holdout"}, "ablate");
    std::string kind(to_string(c.ablate.kind));
    read(a, "kind", kind, "ablate");
    c.ablate.kind = parse_ablation_kind(kind);
    read(a, "holdout", c.ablate.holdout, "ablate");
  }
  c.resolve();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"registry", c.data.registry.string()},
               {"corpus", c.data.corpus.string()},
               {"heldout_corpus", c.data.heldout_corpus.string()},
               {"cap_per_dataset", c.data.cap_per_dataset},
               {"task_prefix", c.data.task_prefix},
               {"negatives_per_positive", c.data.negatives_per_positive},
               {"holdout", c.data.holdout},
               {"tokenizer", std::string(to_string(c.data.tokenizer))},
               {"vocab_max", c.data.vocab_max},
               {"window", c.data.window}};
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["eval"] = {{"window", c.eval.window}, {"stride", c.eval.stride}, {"batch_size", c.eval.batch_size}};
  j["generate"] = {{"strategy", std::string(strategy_name(c.generate.strategy))},
                   {"k", c.generate.k},
                   {"beam_width", c.generate.beam_width},
                   {"max_new", c.generate.max_new}};
  j["ablate"] = {{"kind", std::string(to_string(c.ablate.kind))}, {"holdout", c.ablate.holdout}};
  return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

ExperimentInputs load_inputs(const DataConfig& data) {
  if (data.corpus.empty()) throw ConfigError("data.corpus is required");
  if (data.registry.empty()) throw ConfigError("data.registry is required");
  ExperimentInputs in;
  in.corpus = read_lines(data.corpus);
  if (!data.heldout_corpus.empty()) in.heldout_corpus = read_lines(data.heldout_corpus);
  for (auto& spec : load_registry(data.registry)) {
    if (spec.source.empty()) throw ConfigError("dataset " + spec.id + " has no source file");
    DatasetInput train{spec, read_raw_jsonl(spec.source, spec)};
    DatasetInput eval{spec, {}};
    if (!spec.eval_source.empty()) eval.examples = read_raw_jsonl(spec.eval_source, spec);
    in.train.push_back(std::move(train));
    in.eval.push_back(std::move(eval));
  }
  return in;
}

ExperimentInputs inputs_from_suite(const SyntheticSuite& suite) {
  return {suite.corpus, suite.heldout_corpus, suite.train, suite.eval};
}

Vocab build_vocab(const ExperimentInputs& inputs, const DataConfig& data) {
  std::vector<std::string> texts = inputs.corpus;
  texts.insert(texts.end(), inputs.heldout_corpus.begin(), inputs.heldout_corpus.end());
  auto add_dataset = [&](const DatasetInput& d) {
    texts.push_back(d.spec.task.task_name);
    for (const auto& t : d.spec.templates) {
      texts.push_back(fill_slots(t.pattern) + " " + fill_slots(t.body.empty() ? "{text} | {text2}" : t.body));
      for (const auto& label : d.spec.task.labels) texts.push_back(t.describe(label));
    }
    for (const auto& ex : d.examples) {
      for (const auto& [_, v] : ex.fields) texts.push_back(v);
      for (const auto& c : ex.choices) texts.push_back(c);
    }
  };
  for (const auto& d : inputs.train) add_dataset(d);
  for (const auto& d : inputs.eval) add_dataset(d);
  return Vocab::build(texts, data.vocab_max, data.tokenizer);
}

std::vector<TokenId> encode_corpus(const Vocab& vocab, const std::vector<std::string>& lines) {
  std::vector<TokenId> out;
  for (const auto& line : lines) {
    const auto ids = vocab.encode(line);
    out.insert(out.end(), ids.begin(), ids.end());
    out.push_back(vocab.special().eos);
  }
  return out;
}

std::vector<TeacherExample> encode_teacher(const Vocab& vocab, const std::vector<PropositionSample>& samples,
                                           std::size_t max_seq_len) {
  std::vector<TeacherExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TeacherExample ex{vocab.encode(s.text), s.label};
    if (ex.tokens.size() > max_seq_len) {
      throw LengthError("proposition " + s.dataset + "/" + s.example_id + " encodes to " +
                        std::to_string(ex.tokens.size()) + " tokens, above max_seq_len " + std::to_string(max_seq_len));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& config, const ExperimentInputs& inputs, const Vocab& vocab) {
  const UnifyOptions options{config.data.task_prefix, config.data.negatives_per_positive};
  std::set<std::string> known;
  for (const auto& d : inputs.train) known.insert(d.spec.id);
  for (const auto& id : config.data.holdout) {
    if (!known.count(id)) throw ConfigError("holdout names unknown dataset '" + id + "'");
  }
  std::vector<DatasetInput> kept;
  for (const auto& d : inputs.train) {
    if (std::find(config.data.holdout.begin(), config.data.holdout.end(), d.spec.id) == config.data.holdout.end()) {
      kept.push_back(d);
    }
  }
  if (kept.empty() && config.train.mode != TrainMode::LanguageOnly) {
    throw ConfigError("holdout removes every dataset from teacher training");
  }

  PreparedData p;
  if (!kept.empty()) p.unified = build_unified(kept, config.data.cap_per_dataset, derive_seed(config.seed, "data"), options);
  std::vector<DatasetInput> eval;
  for (const auto& d : inputs.eval) {
    if (!d.examples.empty()) eval.push_back(d);
  }
  if (!eval.empty()) {
    p.eval_samples = build_unified(eval, std::numeric_limits<std::size_t>::max(), derive_seed(config.seed, "eval-data"),
                                   options)
                         .samples;
  }
  p.language_stream = encode_corpus(vocab, inputs.corpus);
  p.heldout_stream = encode_corpus(vocab, inputs.heldout_corpus);
  const std::size_t window = config.data.window == 0 ? config.model.max_seq_len : config.data.window;
  if (config.train.mode != TrainMode::TeacherOnly) p.training.language = make_language_windows(p.language_stream, window);
  p.training.teacher = encode_teacher(vocab, p.unified.samples, config.model.max_seq_len);
  p.training.pad = vocab.special().pad;
  p.training.cls = vocab.special().cls;
  return p;
}

EvalReport evaluate(const Model<float>& model, const Vocab& vocab, const PreparedData& data, const EvalConfig& eval) {
  EvalReport r;
  if (!data.heldout_stream.empty()) {
    r.perplexity["heldout"] =
        perplexity(model, std::span<const TokenId>(data.heldout_stream), eval.window, eval.stride, vocab.special().pad);
  }
  if (!data.eval_samples.empty()) r.judgment = judge(model, vocab, data.eval_samples, {eval.batch_size});
  r.model_hash = model_hash(model);
  return r;
}

ModelConfig resolved_model_config(const ExperimentConfig& config, const Vocab& vocab) {
  ModelConfig m = config.model;
  if (m.vocab_size == 0) m.vocab_size = vocab.size();
  if (m.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(m.vocab_size) + " does not match the vocabulary size " +
                      std::to_string(vocab.size()));
  }
  return m;
}

RunResult run_experiment(const ExperimentConfig& config, const PreparedData& data, const Vocab& vocab,
                         const RunHooks& hooks, std::optional<Checkpoint<float>> resume) {
  RunResult result;
  const ModelConfig mc = resolved_model_config(config, vocab);
  if (resume) {
    if (resume->model_config != mc) throw ConfigError("checkpoint model config differs from the run config");
    result.model = std::make_shared<Model<float>>(mc, std::move(resume->params));
  } else {
    result.model = std::make_shared<Model<float>>(mc, derive_seed(config.seed, "init"));
  }
  Trainer<float> trainer(*result.model, config.train, data.training);
  if (resume) trainer.restore(resume->counters, std::move(resume->optimizer));
  typename Trainer<float>::Hooks th;
  th.on_step = [&](const StepRecord& r) {
    result.log.push_back(r);
    if (hooks.on_step) hooks.on_step(r);
  };
  if (hooks.on_eval) th.on_eval = [&](std::size_t s) { hooks.on_eval(trainer, s); };
  if (hooks.on_checkpoint) th.on_checkpoint = [&](std::size_t s) { hooks.on_checkpoint(trainer, s); };
  trainer.run(th);
  result.counters = trainer.counters();
  result.optimizer = trainer.optimizer();
  result.report = evaluate(*result.model, vocab, data, config.eval);
  result.report.config_hash = fnv1a64(to_json(config).dump());
  return result;
}

RunResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs, const Vocab& vocab,
                         const RunHooks& hooks) {
  const PreparedData data = prepare_data(config, inputs, vocab);
  return run_experiment(config, data, vocab, hooks);
}

ExperimentConfig ablation_variant(const ExperimentConfig& base, const AblationConfig& ablation,
                                  const ExperimentInputs& inputs) {
  ExperimentConfig v = base;
  switch (ablation.kind) {
    case AblationKind::NoLanguageSignal:
      v.train.mode = TrainMode::TeacherOnly;
      break;
    case AblationKind::NoTaskPrefix:
      v.data.task_prefix = false;
      break;
    case AblationKind::UnseenHoldout: {
      if (ablation.holdout.empty()) throw ConfigError("unseen_holdout needs at least one dataset to hold out");
      std::set<std::string> ids;
      for (const auto& d : inputs.train) ids.insert(d.spec.id);
      std::set<std::string> held(ablation.holdout.begin(), ablation.holdout.end());
      for (const auto& h : held) {
        if (!ids.count(h)) throw ConfigError("holdout names unknown dataset '" + h + "'");
      }
      if (held.size() >= ids.size()) throw ConfigError("holdout removes every dataset from teacher training");
      v.data.holdout = ablation.holdout;
      break;
    }
  }
  return v;
}

ExperimentConfig language_reference(const ExperimentConfig& dual) {
  ExperimentConfig v = dual;
  v.train.mode = TrainMode::LanguageOnly;
  return v;
}

AblationResult run_ablation(const ExperimentConfig& base, const AblationConfig& ablation,
                            const ExperimentInputs& inputs, const Vocab& vocab) {
  AblationResult r;
  r.ablation = ablation;
  const ExperimentConfig variant = ablation_variant(base, ablation, inputs);
  r.baseline = run_experiment(base, inputs, vocab);
  r.variant = run_experiment(variant, inputs, vocab);
  return r;
}

namespace {

struct MetricRow {
  std::string name;
  double baseline;
  double variant;
};

std::vector<MetricRow> metric_rows(const AblationResult& r) {
  std::vector<MetricRow> rows;
  const auto& b = r.baseline.report;
  const auto& v = r.variant.report;
  for (const auto& [name, p] : b.perplexity) {
    if (v.perplexity.count(name)) rows.push_back({"perplexity/" + name, p.perplexity, v.perplexity.at(name).perplexity});
  }
  for (const auto& [task, m] : b.judgment.tasks) {
    if (!v.judgment.tasks.count(task)) continue;
    const auto& w = v.judgment.tasks.at(task);
    rows.push_back({"accuracy/" + task, m.accuracy, w.accuracy});
    rows.push_back({"f1/" + task, m.f1, w.f1});
    rows.push_back({"matthews/" + task, m.matthews, w.matthews});
  }
  rows.push_back({"mean_accuracy", b.judgment.mean_accuracy(), v.judgment.mean_accuracy()});
  return rows;
}

}  // namespace

std::string ablation_csv(const AblationResult& r) {
  std::ostringstream out;
  out.precision(10);
  out << "metric,baseline,variant,delta\n";
  for (const auto& row : metric_rows(r)) {
    out << row.name << ',' << row.baseline << ',' << row.variant << ',' << row.variant - row.baseline << '\n';
  }
  return out.str();
}

json to_json(const AblationResult& r) {
  json deltas = json::object();
  for (const auto& row : metric_rows(r)) deltas[row.name] = row.variant - row.baseline;
  return {{"ablation", std::string(to_string(r.ablation.kind))},
          {"holdout", r.ablation.holdout},
          {"baseline", to_json(r.baseline.report)},
          {"variant", to_json(r.variant.report)},
          {"deltas", deltas}};
}

}  // namespace dualsig
