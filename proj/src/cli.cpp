// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dualsig/error.hpp"
#include "dualsig/rng.hpp"

namespace dualsig {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << bytes;
    if (!out.flush()) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

// Holds <out>/.lock for the lifetime of a run.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

struct Session {
  std::string command;
  std::vector<std::string> args;
  CommonArgs common;
  ExperimentConfig config;
  fs::path out_dir;
  std::vector<fs::path> inputs;
  fs::file_time_type started{};
  bool validated = false;  // errors past this point are runtime failures
};

ExperimentConfig configure(Session& s) {
  const fs::path config_path = fs::absolute(s.common.config);
  if (!fs::exists(config_path)) throw IoError("config file not found: " + config_path.string());
  ExperimentConfig c = load_config_or_manifest(config_path);
  if (s.common.seed_set) {
    c.seed = s.common.seed;
    c.resolve();
  }
  s.inputs.push_back(config_path);
  return c;
}

void note_data_inputs(Session& s) {
  const auto& d = s.config.data;
  for (const auto& p : {d.corpus, d.heldout_corpus, d.registry}) {
    if (!p.empty()) s.inputs.push_back(p);
  }
  if (!d.registry.empty()) {
    for (const auto& spec : load_registry(d.registry)) {
      if (!spec.source.empty()) s.inputs.push_back(spec.source);
      if (!spec.eval_source.empty()) s.inputs.push_back(spec.eval_source);
    }
  }
}

void finish(const Session& s, double seconds) {
  RunManifest m;
  m.command = s.command;
  m.args = s.args;
  m.config = to_json(s.config);
  m.seeds = subsystem_seeds(s.config.seed);
  for (const auto& p : s.inputs) m.inputs[p.string()] = file_hash(p);
  for (const auto& e : fs::recursive_directory_iterator(s.out_dir)) {
    if (!e.is_regular_file() || e.last_write_time() < s.started) continue;  // left by earlier runs
    const std::string rel = fs::relative(e.path(), s.out_dir).generic_string();
    if (rel.starts_with("manifest-") || rel == ".lock" || rel.ends_with(".tmp")) continue;
    m.outputs[rel] = file_hash(e.path());
  }
  m.wall_seconds = seconds;
  write_json(s.out_dir / ("manifest-" + s.command + ".json"), to_json(m));
}

json step_json(const StepRecord& r) {
  json j = to_json(r);
  j.erase("wall_ms");  // timing varies between runs; metrics files stay reproducible
  return j;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

Checkpoint<float> load_float_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const std::string dtype = checkpoint_dtype(path);
  if (dtype != "f32") throw ConfigError("checkpoint " + path.string() + " stores " + dtype + ", expected f32");
  return load_checkpoint<float>(path);
}

// Vocabulary saved next to a checkpoint, or rebuilt from the config's data.
Vocab vocab_for(Session& s, const fs::path& checkpoint_path, std::uint64_t expected_hash,
                const ExperimentInputs* inputs) {
  const fs::path saved = checkpoint_path.parent_path() / "vocab.txt";
  std::optional<Vocab> v;
  if (fs::exists(saved)) {
    v = Vocab::load(saved);
    s.inputs.push_back(saved);
  } else if (inputs) {
    v = build_vocab(*inputs, s.config.data);
  } else {
    v = build_vocab(load_inputs(s.config.data), s.config.data);
    note_data_inputs(s);
  }
  if (v->hash() != expected_hash) {
    throw ConfigError("vocabulary hash " + hex64(v->hash()) + " does not match checkpoint " +
                      checkpoint_path.string() + " (" + hex64(expected_hash) + ")");
  }
  return std::move(*v);
}

int cmd_build_data(Session& s, std::ostream& out) {
  const ExperimentInputs inputs = load_inputs(s.config.data);
  note_data_inputs(s);
  const Vocab vocab = build_vocab(inputs, s.config.data);
  const PreparedData data = prepare_data(s.config, inputs, vocab);
  s.validated = true;
  write_atomic(s.out_dir / "unified.jsonl", unified_to_jsonl(data.unified.samples));
  write_atomic(s.out_dir / "unified_manifest.json", manifest_to_json(data.unified.manifest) + "\n");
  write_atomic(s.out_dir / "eval.jsonl", unified_to_jsonl(data.eval_samples));
  write_atomic(s.out_dir / "vocab.txt", vocab.serialize());
  out << "unified " << data.unified.samples.size() << " samples, eval " << data.eval_samples.size()
      << " samples, vocab " << vocab.size() << "\n";
  return kExitOk;
}

int cmd_train(Session& s, const std::string& resume_path, std::ostream& out) {
  const ExperimentInputs inputs = load_inputs(s.config.data);
  note_data_inputs(s);
  const Vocab vocab = build_vocab(inputs, s.config.data);
  const PreparedData data = prepare_data(s.config, inputs, vocab);
  std::optional<Checkpoint<float>> resume;
  if (!resume_path.empty()) {
    const fs::path p = fs::absolute(resume_path);
    resume = load_float_checkpoint(p);
    s.inputs.push_back(p);
    if (resume->vocab_hash != vocab.hash()) throw ConfigError("checkpoint vocabulary differs from the config's");
    TrainConfig a = resume->train_config, b = s.config.train;
    a.total_steps = b.total_steps = 0;
    if (a != b) throw ConfigError("checkpoint train config differs from the run config (only total_steps may change)");
  }
  s.validated = true;

  write_atomic(s.out_dir / "vocab.txt", vocab.serialize());
  std::vector<json> metrics, evals;
  RunHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { metrics.push_back(step_json(r)); };
  hooks.on_eval = [&](Trainer<float>& t, std::size_t step) {
    json j = to_json(evaluate(t.model(), vocab, data, s.config.eval));
    j["step"] = step;
    evals.push_back(std::move(j));
    write_atomic(s.out_dir / "eval_history.jsonl", jsonl(evals));
  };
  hooks.on_checkpoint = [&](Trainer<float>& t, std::size_t step) {
    std::ostringstream name;
    name << "step-" << std::setw(8) << std::setfill('0') << step << ".ckpt";
    save_checkpoint(s.out_dir / "checkpoints" / name.str(), t.model(), t.optimizer(), t.counters(), s.config.train,
                    vocab.hash());
    write_atomic(s.out_dir / "metrics.jsonl", jsonl(metrics));
  };
  const RunResult r = run_experiment(s.config, data, vocab, hooks, std::move(resume));
  write_atomic(s.out_dir / "metrics.jsonl", jsonl(metrics));
  save_checkpoint(s.out_dir / "model.ckpt", *r.model, r.optimizer, r.counters, s.config.train, vocab.hash());
  write_json(s.out_dir / "eval.json", to_json(r.report));
  out << "trained " << r.counters.step << " steps (" << r.counters.language_steps << " language, "
      << r.counters.teacher_steps << " teacher)";
  for (const auto& [name, p] : r.report.perplexity) out << ", " << name << " ppl " << p.perplexity;
  if (r.report.judgment.judged) out << ", mean accuracy " << r.report.judgment.mean_accuracy();
  out << "\n";
  return kExitOk;
}

int cmd_eval(Session& s, const std::string& checkpoint, std::ostream& out) {
  const fs::path ckpt_path = fs::absolute(checkpoint.empty() ? s.out_dir / "model.ckpt" : fs::path(checkpoint));
  Checkpoint<float> ckpt = load_float_checkpoint(ckpt_path);
  s.inputs.push_back(ckpt_path);
  const ExperimentInputs inputs = load_inputs(s.config.data);
  note_data_inputs(s);
  const Vocab vocab = vocab_for(s, ckpt_path, ckpt.vocab_hash, &inputs);
  ExperimentConfig c = s.config;
  c.train.mode = TrainMode::TeacherOnly;  // language windows are not needed for evaluation
  const PreparedData data = prepare_data(c, inputs, vocab);
  const Model<float> model(ckpt.model_config, std::move(ckpt.params));
  s.validated = true;
  EvalReport report = evaluate(model, vocab, data, s.config.eval);
  report.config_hash = fnv1a64(to_json(s.config).dump());
  write_json(s.out_dir / "eval.json", to_json(report));
  out << to_json(report).dump(2) << "\n";
  return kExitOk;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string prompt;
  std::optional<std::string> strategy;
  std::optional<std::size_t> k, beam_width, max_new;
};

int cmd_generate(Session& s, const GenerateArgs& g, std::ostream& out) {
  const fs::path ckpt_path = fs::absolute(g.checkpoint.empty() ? s.out_dir / "model.ckpt" : fs::path(g.checkpoint));
  Checkpoint<float> ckpt = load_float_checkpoint(ckpt_path);
  s.inputs.push_back(ckpt_path);
  const Vocab vocab = vocab_for(s, ckpt_path, ckpt.vocab_hash, nullptr);
  GenerateConfig gc = s.config.generate;
  if (g.strategy) gc.strategy = parse_decode_strategy(*g.strategy);
  if (g.k) gc.k = *g.k;
  if (g.beam_width) gc.beam_width = *g.beam_width;
  if (g.max_new) gc.max_new = *g.max_new;
  if (gc.k == 0 || gc.beam_width == 0) throw ConfigError("--k and --beam-width must be positive");
  s.config.generate = gc;
  const std::vector<TokenId> prompt = vocab.encode(g.prompt);
  if (prompt.empty()) throw ConfigError("--prompt encodes to no tokens");
  const Model<float> model(ckpt.model_config, std::move(ckpt.params));
  s.validated = true;

  DecodeOptions opt;
  opt.strategy = gc.strategy;
  opt.k = gc.k;
  opt.beam_width = gc.beam_width;
  opt.max_new = gc.max_new;
  opt.seed = derive_seed(s.config.seed, "sampling");
  opt.eos = vocab.special().eos;
  const std::vector<TokenId> ids = generate(model, std::span<const TokenId>(prompt), opt);
  const std::string text = vocab.decode(ids);
  json j = {{"prompt", g.prompt},
            {"strategy", to_json(s.config)["generate"]["strategy"]},
            {"k", gc.k},
            {"beam_width", gc.beam_width},
            {"max_new", gc.max_new},
            {"seed", opt.seed},
            {"tokens", ids},
            {"text", text}};
  write_json(s.out_dir / "generation.json", j);
  out << text << "\n";
  return kExitOk;
}

struct AblateArgs {
  std::optional<std::string> kind;
  std::vector<std::string> holdout;
};

int cmd_ablate(Session& s, const AblateArgs& a, std::ostream& out) {
  if (a.kind) s.config.ablate.kind = parse_ablation_kind(*a.kind);
  if (!a.holdout.empty()) s.config.ablate.holdout = a.holdout;
  const ExperimentInputs inputs = load_inputs(s.config.data);
  note_data_inputs(s);
  const Vocab vocab = build_vocab(inputs, s.config.data);
  const ExperimentConfig variant = ablation_variant(s.config, s.config.ablate, inputs);
  prepare_data(variant, inputs, vocab);
  s.validated = true;
  const AblationResult r = run_ablation(s.config, s.config.ablate, inputs, vocab);
  const std::string csv = ablation_csv(r);
  write_atomic(s.out_dir / "ablation.csv", csv);
  write_json(s.out_dir / "ablation.json", to_json(r));
  out << csv;
  return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config, "experiment config JSON, or a run manifest to replay")->required();
  sub->add_option("--seed", c.seed, "root seed; overrides the config");
  sub->add_option("--out", c.out, "output directory")->required();
}

}  // namespace

json to_json(const RunManifest& m) {
  return {{"command", m.command},       {"args", m.args},       {"config", m.config},
          {"seeds", m.seeds},           {"inputs", m.inputs},   {"outputs", m.outputs},
          {"wall_seconds", m.wall_seconds}, {"artifact_version", m.artifact_version}};
}

RunManifest run_manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.artifact_version = j.at("artifact_version").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::map<std::string, std::uint64_t> subsystem_seeds(std::uint64_t root) {
  return {{"root", root},
          {"data", derive_seed(root, "data")},
          {"eval-data", derive_seed(root, "eval-data")},
          {"init", derive_seed(root, "init")},
          {"train", derive_seed(root, "train")},
          {"sampling", derive_seed(root, "sampling")}};
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

ExperimentConfig load_config_or_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("artifact_version") && j.contains("config")) {
    const RunManifest m = run_manifest_from_json(j);
    if (m.artifact_version != kArtifactVersion) {
      throw VersionError("manifest " + path.string() + " has artifact version " + m.artifact_version + ", expected " +
                         kArtifactVersion);
    }
    return experiment_config_from_json(m.config, path.parent_path());
  }
  return experiment_config_from_json(j, path.parent_path());
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dualsig: train and evaluate a language model with a proposition-judgment head", "dualsig"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonArgs common;
  std::string resume, checkpoint;
  GenerateArgs gen;
  AblateArgs abl;

  auto* build = app.add_subcommand("build-data", "unify the datasets into propositions and write the vocabulary");
  add_common(build, common);
  auto* train = app.add_subcommand("train", "train with interleaved language and teacher steps");
  add_common(train, common);
  train->add_option("--resume", resume, "checkpoint to continue from");
  auto* eval = app.add_subcommand("eval", "perplexity and judgment metrics of a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/model.ckpt)");
  auto* gene = app.add_subcommand("generate", "continue a prompt");
  add_common(gene, common);
  gene->add_option("--checkpoint", gen.checkpoint, "checkpoint (default <out>/model.ckpt)");
  gene->add_option("--prompt", gen.prompt, "text to continue")->required();
  gene->add_option("--strategy", gen.strategy, "greedy, topk or beam")
      ->check(CLI::IsMember({"greedy", "topk", "beam"}));
  gene->add_option("--k", gen.k, "top-k sample size (default 50)");
  gene->add_option("--beam-width", gen.beam_width, "beam width (default 5)");
  gene->add_option("--max-new", gen.max_new, "maximum new tokens (default 256)");
  auto* abla = app.add_subcommand("ablate", "train a baseline and an ablated variant under identical seeds");
  add_common(abla, common);
  abla->add_option("--kind", abl.kind, "no_language_signal, no_task_prefix or unseen_holdout")
      ->check(CLI::IsMember({"no_language_signal", "no_task_prefix", "unseen_holdout"}));
  abla->add_option("--holdout", abl.holdout, "dataset ids held out for unseen_holdout")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  Session s;
  s.command = app.get_subcommands().front()->get_name();
  s.args = args;
  s.common = common;
  if (auto* sub = app.get_subcommands().front(); sub->count("--seed")) s.common.seed_set = true;
  const auto start = std::chrono::steady_clock::now();
  try {
    s.config = configure(s);
    s.out_dir = fs::absolute(s.common.out);
    OutputLock lock(s.out_dir);
    s.started = fs::last_write_time(s.out_dir / ".lock");
    int code = kExitOk;
    if (s.command == "build-data") code = cmd_build_data(s, out);
    else if (s.command == "train") code = cmd_train(s, resume, out);
    else if (s.command == "eval") code = cmd_eval(s, checkpoint, out);
    else if (s.command == "generate") code = cmd_generate(s, gen, out);
    else code = cmd_ablate(s, abl, out);
    finish(s, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return s.validated ? kExitRuntime : kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace dualsig
