// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/unify.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dualsig/error.hpp"
#include "dualsig/rng.hpp"
#include "dualsig/tokenizer.hpp"
#include "json.hpp"

namespace dualsig {

using ojson = nlohmann::ordered_json;

bool is_task_name(std::string_view name) {
  return std::find(kTaskNames.begin(), kTaskNames.end(), name) != kTaskNames.end();
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "single" || name == "single_text") return TaskKind::SingleText;
  if (name == "pair" || name == "text_pair") return TaskKind::TextPair;
  if (name == "multi_choice" || name == "multichoice") return TaskKind::MultiChoice;
  throw ConfigError("unknown task kind '" + std::string(name) + "' (expected single, pair or multi_choice)");
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::SingleText:
      return "single";
    case TaskKind::TextPair:
      return "pair";
    case TaskKind::MultiChoice:
      return "multi_choice";
  }
  return "single";
}

void TaskSpec::validate() const {
  if (!is_task_name(task_name)) throw ConfigError("task name '" + task_name + "' is not in the task prefix set");
  if (kind != TaskKind::MultiChoice) {
    if (labels.empty()) throw ConfigError("task '" + task_name + "' needs a nonempty label set");
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size()) throw ConfigError("task '" + task_name + "' has duplicate labels");
  }
}

namespace {

std::size_t count_of(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t at = haystack.find(needle); at != std::string_view::npos; at = haystack.find(needle, at + 1)) ++n;
  return n;
}

const std::string& default_body(TaskKind kind) {
  static const std::string single = "{text}";
  static const std::string pair = "{text} | {text2}";
  return kind == TaskKind::TextPair ? pair : single;
}

bool has_reserved_token(std::string_view text) {
  for (auto tok : {kPadToken, kTskToken, kSepToken, kClsToken, kEosToken}) {
    if (text.find(tok) != std::string_view::npos) return true;
  }
  return false;
}

// Replaces every {slot}; `lookup` returns nullptr for unknown slots.
template <typename Lookup>
std::string fill(std::string_view pattern, Lookup&& lookup, const std::string& where) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      const std::size_t close = pattern.find('}', i);
      if (close == std::string_view::npos) throw ConfigError(where + ": unterminated slot in '" + std::string(pattern) + "'");
      const std::string slot(pattern.substr(i + 1, close - i - 1));
      const std::string* value = lookup(slot);
      if (value == nullptr) throw FieldError(where + ": slot {" + slot + "} has no value");
      out += *value;
      i = close + 1;
    } else {
      out.push_back(pattern[i++]);
    }
  }
  return out;
}

std::string assemble(const DatasetSpec& dataset, const std::string& body, const std::string& prompt,
                     const UnifyOptions& options) {
  std::string text;
  if (options.task_prefix) text = std::string(kTskToken) + " " + dataset.task.task_name + " " + std::string(kTskToken) + " ";
  text += body;
  text += " ";
  text += kSepToken;
  text += " ";
  text += prompt;
  text += " ";
  text += kClsToken;
  return text;
}

PropositionSample build_with_desc(const DatasetSpec& dataset, const RawExample& example, const Template& tmpl,
                                  const std::string& desc, bool truth, const UnifyOptions& options) {
  const std::string where = "dataset " + dataset.id + " example " + example.id;
  std::map<std::string, std::string> slots;
  for (const auto& [k, v] : example.fields) slots[k] = normalize_whitespace(v);
  for (const auto& [k, v] : slots) {
    if (has_reserved_token(v)) throw FieldError(where + ": field '" + k + "' contains a reserved token");
  }
  const std::string label_desc = normalize_whitespace(desc);
  if (label_desc.empty()) throw FieldError(where + ": empty label description");
  if (has_reserved_token(label_desc)) throw FieldError(where + ": label description contains a reserved token");
  auto lookup = [&](const std::string& slot) -> const std::string* {
    if (slot == "label_desc") return &label_desc;
    auto it = slots.find(slot);
    return it == slots.end() ? nullptr : &it->second;
  };
  const std::string& body_pattern = tmpl.body.empty() ? default_body(dataset.task.kind) : tmpl.body;
  const std::string body = normalize_whitespace(fill(body_pattern, lookup, where));
  const std::string prompt = normalize_whitespace(fill(tmpl.pattern, lookup, where));
  if (body.empty()) throw FieldError(where + ": empty instance text");

  PropositionSample s;
  s.text = assemble(dataset, body, prompt, options);
  s.label = truth;
  s.task = dataset.task.task_name;
  s.dataset = dataset.id;
  s.template_id = tmpl.id;
  s.example_id = example.id;
  return s;
}

void require_template_of(const DatasetSpec& dataset, const Template& tmpl) {
  for (const auto& t : dataset.templates) {
    if (t.id == tmpl.id) return;
  }
  throw ContractError("template '" + tmpl.id + "' does not belong to dataset " + dataset.id);
}

}  // namespace

std::string Template::describe(const std::string& label) const {
  auto it = label_desc.find(label);
  return it == label_desc.end() ? label : it->second;
}

void DatasetSpec::validate() const {
  if (id.empty()) throw ConfigError("dataset id must be nonempty");
  task.validate();
  if (templates.empty()) throw ConfigError("dataset " + id + " has no templates");
  if (templates.size() > kMaxTemplatesPerDataset) {
    throw ConfigError("dataset " + id + " has " + std::to_string(templates.size()) + " templates; at most " +
                      std::to_string(kMaxTemplatesPerDataset) + " are allowed");
  }
  std::set<std::string> ids;
  for (const auto& t : templates) {
    if (!ids.insert(t.id).second) throw ConfigError("dataset " + id + " repeats template id '" + t.id + "'");
    if (count_of(t.pattern, "{label_desc}") != 1) {
      throw ConfigError("template " + t.id + " of dataset " + id + " must contain {label_desc} exactly once");
    }
    if (t.body.find("{label_desc}") != std::string::npos) {
      throw ConfigError("template " + t.id + " of dataset " + id + " uses {label_desc} in its body");
    }
    for (const auto& [label, desc] : t.label_desc) {
      if (task.kind == TaskKind::MultiChoice) {
        throw ConfigError("template " + t.id + ": multi-choice prompts describe the candidate itself");
      }
      if (std::find(task.labels.begin(), task.labels.end(), label) == task.labels.end()) {
        throw ConfigError("template " + t.id + " describes unknown label '" + label + "'");
      }
      if (has_reserved_token(desc)) throw ConfigError("template " + t.id + " label description contains a reserved token");
    }
    if (has_reserved_token(t.pattern) || has_reserved_token(t.body)) {
      throw ConfigError("template " + t.id + " contains a reserved token");
    }
  }
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

PropositionSample build_proposition(const DatasetSpec& dataset, const RawExample& example, const Template& tmpl,
                                    const std::string& label, const UnifyOptions& options) {
  if (dataset.task.kind == TaskKind::MultiChoice) {
    throw ContractError("dataset " + dataset.id + " is multi-choice; build propositions from a choice index");
  }
  require_template_of(dataset, tmpl);
  const auto& labels = dataset.task.labels;
  if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
    throw LabelError("label '" + label + "' is not in the label set of dataset " + dataset.id);
  }
  if (!example.gold_label) throw FieldError("example " + example.id + " of dataset " + dataset.id + " has no gold label");
  if (std::find(labels.begin(), labels.end(), *example.gold_label) == labels.end()) {
    throw LabelError("gold label '" + *example.gold_label + "' of example " + example.id + " is not in the label set");
  }
  return build_with_desc(dataset, example, tmpl, tmpl.describe(label), label == *example.gold_label, options);
}

PropositionSample build_proposition(const DatasetSpec& dataset, const RawExample& example, const Template& tmpl,
                                    std::size_t choice, const UnifyOptions& options) {
  if (dataset.task.kind != TaskKind::MultiChoice) {
    throw ContractError("dataset " + dataset.id + " is not multi-choice; build propositions from a label");
  }
  require_template_of(dataset, tmpl);
  if (choice >= example.choices.size()) {
    throw LabelError("choice " + std::to_string(choice) + " outside the " + std::to_string(example.choices.size()) +
                     " candidates of example " + example.id);
  }
  if (!example.gold_choice || *example.gold_choice >= example.choices.size()) {
    throw FieldError("example " + example.id + " of dataset " + dataset.id + " has no valid gold choice");
  }
  return build_with_desc(dataset, example, tmpl, example.choices[choice], choice == *example.gold_choice, options);
}

std::uint64_t example_seed(std::uint64_t seed, std::string_view dataset, std::string_view example_id) {
  std::string label(dataset);
  label.push_back('\x1f');
  label += example_id;
  return derive_seed(seed, label);
}

std::optional<PropositionPair> make_pair(const DatasetSpec& dataset, const RawExample& example, std::uint64_t seed,
                                         const UnifyOptions& options, std::vector<std::string>* warnings) {
  if (options.negatives_per_positive == 0) throw ConfigError("negatives_per_positive must be at least 1");
  if (dataset.templates.empty()) throw ConfigError("dataset " + dataset.id + " has no templates");
  const bool multi = dataset.task.kind == TaskKind::MultiChoice;
  const std::size_t n_labels = multi ? example.choices.size() : dataset.task.labels.size();
  if (n_labels < 2) {
    if (warnings) {
      warnings->push_back("dataset " + dataset.id + " example " + example.id +
                          ": fewer than two labels, no negative possible; skipped");
    }
    return std::nullopt;
  }

  Rng rng(example_seed(seed, dataset.id, example.id));
  const Template& tmpl = dataset.templates[uniform_index(rng, dataset.templates.size())];

  std::size_t gold = 0;
  if (multi) {
    if (!example.gold_choice || *example.gold_choice >= n_labels) {
      throw FieldError("example " + example.id + " of dataset " + dataset.id + " has no valid gold choice");
    }
    gold = *example.gold_choice;
  } else {
    if (!example.gold_label) throw FieldError("example " + example.id + " of dataset " + dataset.id + " has no gold label");
    const auto& labels = dataset.task.labels;
    auto it = std::find(labels.begin(), labels.end(), *example.gold_label);
    if (it == labels.end()) {
      throw LabelError("gold label '" + *example.gold_label + "' of example " + example.id + " is not in the label set");
    }
    gold = static_cast<std::size_t>(it - labels.begin());
  }

  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n_labels; ++i) {
    if (i != gold) others.push_back(i);
  }
  const std::size_t k = std::min(options.negatives_per_positive, others.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(others[i], others[i + uniform_index(rng, others.size() - i)]);
  }

  auto build = [&](std::size_t index) {
    return multi ? build_proposition(dataset, example, tmpl, index, options)
                 : build_proposition(dataset, example, tmpl, dataset.task.labels[index], options);
  };
  PropositionPair pair{build(gold), {}};
  for (std::size_t i = 0; i < k; ++i) pair.negatives.push_back(build(others[i]));
  return pair;
}

UnifiedData build_unified(const std::vector<DatasetInput>& datasets, std::size_t cap_per_dataset, std::uint64_t seed,
                          const UnifyOptions& options) {
  if (cap_per_dataset < 2) throw ConfigError("cap_per_dataset must allow at least one pair");
  UnifiedData out;
  out.manifest.seed = seed;
  out.manifest.cap_per_dataset = cap_per_dataset;
  out.manifest.options = options;
  std::set<std::string> seen_ids;
  for (const auto& input : datasets) {
    const DatasetSpec& spec = input.spec;
    spec.validate();
    if (!seen_ids.insert(spec.id).second) throw ConfigError("dataset " + spec.id + " is listed twice");
    if (input.examples.empty()) {
      out.manifest.warnings.push_back("dataset " + spec.id + " is empty; excluded");
      continue;
    }
    DatasetManifest dm;
    dm.dataset = spec.id;
    dm.task = spec.task.task_name;
    dm.examples = input.examples.size();

    std::vector<PropositionPair> pairs;
    for (const auto& ex : input.examples) {
      auto p = make_pair(spec, ex, seed, options, &out.manifest.warnings);
      if (p) {
        pairs.push_back(std::move(*p));
      } else {
        ++dm.skipped;
      }
    }

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng cap_rng(derive_seed(seed, "cap:" + spec.id));
    shuffle_in_place(std::span<std::size_t>(order), cap_rng);
    std::size_t used = 0;
    for (std::size_t idx : order) {
      const auto& p = pairs[idx];
      const std::size_t size = 1 + p.negatives.size();
      if (used + size > cap_per_dataset) continue;
      used += size;
      ++dm.pairs;
      ++dm.positives;
      dm.negatives += p.negatives.size();
      out.samples.push_back(p.positive);
      for (const auto& n : p.negatives) out.samples.push_back(n);
      dm.template_usage[p.positive.template_id] += size;
    }
    if (dm.pairs < pairs.size()) {
      out.manifest.warnings.push_back("dataset " + spec.id + ": cap " + std::to_string(cap_per_dataset) + " kept " +
                                      std::to_string(dm.pairs) + " of " + std::to_string(pairs.size()) + " pairs");
    }
    out.manifest.datasets.push_back(std::move(dm));
  }
  Rng shuffle_rng(derive_seed(seed, "unified-shuffle"));
  shuffle_in_place(std::span<PropositionSample>(out.samples), shuffle_rng);
  out.manifest.total = out.samples.size();
  return out;
}

ParsedProposition parse_proposition(std::string_view text) {
  auto find_all = [&](std::string_view tok) {
    std::vector<std::size_t> at;
    for (std::size_t p = text.find(tok); p != std::string_view::npos; p = text.find(tok, p + 1)) at.push_back(p);
    return at;
  };
  auto trim = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return std::string(s);
  };

  for (auto tok : {kPadToken, kEosToken}) {
    auto at = find_all(tok);
    if (!at.empty()) throw ParseError("unexpected " + std::string(tok) + " in proposition", at.front());
  }
  const auto cls = find_all(kClsToken);
  if (cls.empty()) throw ParseError("proposition is missing its trailing [cls]", text.size());
  if (cls.size() > 1) throw ParseError("proposition has more than one [cls]", cls[1]);
  if (cls.front() + kClsToken.size() != text.size()) throw ParseError("[cls] must end the proposition", cls.front());

  ParsedProposition out;
  std::size_t body_start = 0;
  const auto tsk = find_all(kTskToken);
  if (!tsk.empty()) {
    if (tsk.front() != 0) throw ParseError("task prefix must open the proposition", tsk.front());
    if (tsk.size() < 2) throw ParseError("task prefix is not closed by a second [tsk]", text.size());
    if (tsk.size() > 2) throw ParseError("proposition has more than two [tsk]", tsk[2]);
    std::string name = trim(text.substr(kTskToken.size(), tsk[1] - kTskToken.size()));
    if (!is_task_name(name)) throw ParseError("unknown task name '" + name + "'", kTskToken.size());
    out.task_name = std::move(name);
    body_start = tsk[1] + kTskToken.size();
  }
  const auto sep = find_all(kSepToken);
  if (sep.empty()) throw ParseError("proposition is missing [sep]", cls.front());
  if (sep.size() > 1) throw ParseError("proposition has more than one [sep]", sep[1]);
  if (sep.front() < body_start) throw ParseError("[sep] inside the task prefix", sep.front());
  out.body = trim(text.substr(body_start, sep.front() - body_start));
  if (out.body.empty()) throw ParseError("empty instance text", body_start);
  const std::size_t prompt_start = sep.front() + kSepToken.size();
  out.prompt = trim(text.substr(prompt_start, cls.front() - prompt_start));
  if (out.prompt.empty()) throw ParseError("empty dynamic prompt", prompt_start);
  return out;
}

std::vector<PropositionSample> strip_task_prefix(std::vector<PropositionSample> samples) {
  for (auto& s : samples) {
    const auto parsed = parse_proposition(s.text);
    s.text = parsed.body + " " + std::string(kSepToken) + " " + parsed.prompt + " " + std::string(kClsToken);
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << bytes;
    if (!out) throw IoError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t start = 0, line = 1;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string_view view(text.data() + start, nl - start);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.find_first_not_of(" \t") != std::string_view::npos) fn(view, line);
    start = nl + 1;
    ++line;
  }
}

ojson template_json(const Template& t) {
  ojson j;
  j["id"] = t.id;
  j["pattern"] = t.pattern;
  if (!t.body.empty()) j["body"] = t.body;
  if (!t.label_desc.empty()) {
    ojson d = ojson::object();
    for (const auto& [k, v] : t.label_desc) d[k] = v;
    j["label_desc"] = d;
  }
  return j;
}

}  // namespace

std::vector<DatasetSpec> load_registry(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("registry " + path.string() + ": " + e.what());
  }
  if (!root.contains("datasets") || !root["datasets"].is_array()) {
    throw FormatError("registry " + path.string() + " needs a \"datasets\" array");
  }
  std::vector<DatasetSpec> out;
  try {
    for (const auto& d : root["datasets"]) {
      DatasetSpec spec;
      spec.id = d.at("id").get<std::string>();
      spec.task.task_name = d.at("task").get<std::string>();
      spec.task.kind = parse_task_kind(d.value("kind", std::string("single")));
      if (d.contains("labels")) spec.task.labels = d["labels"].get<std::vector<std::string>>();
      auto resolve = [&](const char* key) -> std::string {
        if (!d.contains(key)) return {};
        std::filesystem::path src = d[key].get<std::string>();
        return src.is_relative() ? (path.parent_path() / src).lexically_normal().string() : src.string();
      };
      spec.source = resolve("source");
      spec.eval_source = resolve("eval_source");
      for (const auto& t : d.at("templates")) {
        Template tmpl;
        tmpl.id = t.at("id").get<std::string>();
        tmpl.pattern = t.at("pattern").get<std::string>();
        tmpl.body = t.value("body", std::string());
        if (t.contains("label_desc")) tmpl.label_desc = t["label_desc"].get<std::map<std::string, std::string>>();
        spec.templates.push_back(std::move(tmpl));
      }
      spec.validate();
      out.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("registry " + path.string() + ": " + e.what());
  }
  return out;
}

void save_registry(const std::vector<DatasetSpec>& datasets, const std::filesystem::path& path) {
  ojson root;
  root["datasets"] = ojson::array();
  for (const auto& d : datasets) {
    ojson j;
    j["id"] = d.id;
    j["task"] = d.task.task_name;
    j["kind"] = std::string(to_string(d.task.kind));
    if (d.task.kind != TaskKind::MultiChoice) j["labels"] = d.task.labels;
    if (!d.source.empty()) j["source"] = d.source;
    if (!d.eval_source.empty()) j["eval_source"] = d.eval_source;
    j["templates"] = ojson::array();
    for (const auto& t : d.templates) j["templates"].push_back(template_json(t));
    root["datasets"].push_back(std::move(j));
  }
  write_file(path, root.dump(2) + "\n");
}

std::vector<RawExample> read_raw_jsonl(const std::filesystem::path& path, const DatasetSpec& dataset) {
  const std::string text = read_file(path);
  std::vector<RawExample> out;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(where + ": expected a JSON object");
    RawExample ex;
    if (j.contains("id")) {
      ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    } else {
      ex.id = "line" + std::to_string(lineno);
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "id" || it.key() == "label" || it.key() == "choices" || it.key() == "answer") continue;
      if (it->is_string()) ex.fields[it.key()] = it->get<std::string>();
    }
    if (!ex.fields.count("text")) throw FieldError(where + ": missing \"text\"");
    if (dataset.task.kind == TaskKind::TextPair && !ex.fields.count("text2")) {
      throw FieldError(where + ": pair task needs \"text2\"");
    }
    if (dataset.task.kind == TaskKind::MultiChoice) {
      if (!j.contains("choices") || !j["choices"].is_array()) throw FieldError(where + ": missing \"choices\" array");
      if (!j.contains("answer") || !j["answer"].is_number_integer()) throw FieldError(where + ": missing integer \"answer\"");
      for (const auto& c : j["choices"]) {
        if (!c.is_string()) throw FieldError(where + ": choices must be strings");
        ex.choices.push_back(c.get<std::string>());
      }
      const auto answer = j["answer"].get<long long>();
      if (answer < 0 || static_cast<std::size_t>(answer) >= ex.choices.size()) {
        throw FieldError(where + ": answer index out of range");
      }
      ex.gold_choice = static_cast<std::size_t>(answer);
    } else {
      if (!j.contains("label")) throw FieldError(where + ": missing \"label\"");
      ex.gold_label = j["label"].is_string() ? j["label"].get<std::string>() : j["label"].dump();
    }
    out.push_back(std::move(ex));
  });
  return out;
}

void write_raw_jsonl(const std::vector<RawExample>& examples, const std::filesystem::path& path) {
  std::string out;
  for (const auto& ex : examples) {
    ojson j;
    j["id"] = ex.id;
    for (const auto& [k, v] : ex.fields) j[k] = v;
    if (ex.gold_label) j["label"] = *ex.gold_label;
    if (ex.gold_choice) {
      j["choices"] = ex.choices;
      j["answer"] = *ex.gold_choice;
    }
    out += j.dump();
    out.push_back('\n');
  }
  write_file(path, out);
}

std::string unified_to_jsonl(const std::vector<PropositionSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    ojson j;
    j["text"] = s.text;
    j["label"] = s.label;
    j["task"] = s.task;
    j["dataset"] = s.dataset;
    j["template_id"] = s.template_id;
    j["example_id"] = s.example_id;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

void write_unified_jsonl(const std::vector<PropositionSample>& samples, const std::filesystem::path& path) {
  write_file(path, unified_to_jsonl(samples));
}

std::vector<PropositionSample> read_unified_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<PropositionSample> out;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      PropositionSample s;
      s.text = j.at("text").get<std::string>();
      s.label = j.at("label").get<bool>();
      s.task = j.value("task", std::string());
      s.dataset = j.value("dataset", std::string());
      s.template_id = j.value("template_id", std::string());
      s.example_id = j.value("example_id", std::string());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  });
  return out;
}

std::string manifest_to_json(const UnifiedManifest& m) {
  ojson j;
  j["seed"] = m.seed;
  j["cap_per_dataset"] = m.cap_per_dataset;
  j["task_prefix"] = m.options.task_prefix;
  j["negatives_per_positive"] = m.options.negatives_per_positive;
  j["total"] = m.total;
  j["datasets"] = ojson::array();
  for (const auto& d : m.datasets) {
    ojson e;
    e["dataset"] = d.dataset;
    e["task"] = d.task;
    e["examples"] = d.examples;
    e["skipped"] = d.skipped;
    e["pairs"] = d.pairs;
    e["samples"] = d.positives + d.negatives;
    e["positives"] = d.positives;
    e["negatives"] = d.negatives;
    ojson hist = ojson::object();
    for (const auto& [k, v] : d.template_usage) hist[k] = v;
    e["template_usage"] = hist;
    j["datasets"].push_back(std::move(e));
  }
  j["warnings"] = m.warnings;
  return j.dump(2) + "\n";
}

}  // namespace dualsig
