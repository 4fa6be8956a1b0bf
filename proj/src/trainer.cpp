// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dualsig/rng.hpp"

namespace dualsig {

using nlohmann::json;

TrainMode parse_train_mode(std::string_view name) {
  if (name == "dual") return TrainMode::Dual;
  if (name == "language_only") return TrainMode::LanguageOnly;
  if (name == "teacher_only") return TrainMode::TeacherOnly;
  throw ConfigError("unknown train mode '" + std::string(name) + "' (expected dual, language_only or teacher_only)");
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Dual:
      return "dual";
    case TrainMode::LanguageOnly:
      return "language_only";
    case TrainMode::TeacherOnly:
      return "teacher_only";
  }
  return "dual";
}

std::string_view to_string(StepType type) { return type == StepType::Language ? "language" : "teacher"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (mix.language == 0 || mix.teacher == 0) throw ConfigError("mix ratio components must be positive integers");
  if (language_batch_size == 0 || teacher_batch_size == 0) throw ConfigError("batch sizes must be positive");
}

namespace {

template <typename V>
V get_as(const json& j, const char* key) {
  try {
    return j.get<V>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok |= it.key() == k;
    if (!ok) throw ConfigError(std::string("unknown ") + section + " config key '" + it.key() + "'");
  }
}

}  // namespace

json to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["weight_decay"] = c.weight_decay;
  j["grad_clip"] = c.grad_clip;
  j["language_batch_size"] = c.language_batch_size;
  j["teacher_batch_size"] = c.teacher_batch_size;
  j["mix_ratio"] = {c.mix.language, c.mix.teacher};
  j["total_steps"] = c.total_steps;
  j["seed"] = c.seed;
  j["eval_interval"] = c.eval_interval;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["mode"] = std::string(to_string(c.mode));
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "grad_clip", "language_batch_size",
                  "teacher_batch_size", "mix_ratio", "total_steps", "seed", "eval_interval", "checkpoint_interval",
                  "mode"},
                 "train");
  TrainConfig c;
#define DUALSIG_READ(field)                                                  \
  if (j.contains(#field)) c.field = get_as<decltype(c.field)>(j[#field], #field)
  DUALSIG_READ(learning_rate);
  DUALSIG_READ(beta1);
  DUALSIG_READ(beta2);
  DUALSIG_READ(epsilon);
  DUALSIG_READ(weight_decay);
  DUALSIG_READ(grad_clip);
  DUALSIG_READ(language_batch_size);
  DUALSIG_READ(teacher_batch_size);
  DUALSIG_READ(total_steps);
  DUALSIG_READ(seed);
  DUALSIG_READ(eval_interval);
  DUALSIG_READ(checkpoint_interval);
#undef DUALSIG_READ
  if (j.contains("mix_ratio")) {
    const auto& r = j["mix_ratio"];
    if (r.is_string()) {
      const auto s = r.get<std::string>();
      const auto colon = s.find(':');
      if (colon == std::string::npos) throw ConfigError("mix_ratio must look like \"2:1\"");
      try {
        c.mix = {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
      } catch (const std::exception&) {
        throw ConfigError("mix_ratio must look like \"2:1\"");
      }
    } else if (r.is_array() && r.size() == 2 && r[0].is_number_unsigned() && r[1].is_number_unsigned()) {
      c.mix = {r[0].get<std::size_t>(), r[1].get<std::size_t>()};
    } else {
      throw ConfigError("mix_ratio must be [a, b] or \"a:b\" with positive integers");
    }
  }
  if (j.contains("mode")) c.mode = parse_train_mode(get_as<std::string>(j["mode"], "mode"));
  c.validate();
  return c;
}

json to_json(const ModelConfig& c) {
  json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["dropout"] = c.dropout;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"n_layers", "d_model", "n_heads", "d_ff", "vocab_size", "max_seq_len", "dropout"}, "model");
  ModelConfig c;
#define DUALSIG_READ(field)                                                  \
  if (j.contains(#field)) c.field = get_as<decltype(c.field)>(j[#field], #field)
  DUALSIG_READ(n_layers);
  DUALSIG_READ(d_model);
  DUALSIG_READ(n_heads);
  DUALSIG_READ(d_ff);
  DUALSIG_READ(vocab_size);
  DUALSIG_READ(max_seq_len);
  DUALSIG_READ(dropout);
#undef DUALSIG_READ
  return c;
}

Schedule::Schedule(MixRatio ratio, TrainMode mode) : ratio_(ratio), mode_(mode) {
  if (ratio.language == 0 || ratio.teacher == 0) throw ConfigError("mix ratio components must be positive integers");
}

StepType Schedule::at(std::size_t step) const {
  return step % (ratio_.language + ratio_.teacher) < ratio_.language ? StepType::Language : StepType::Teacher;
}

bool Schedule::runs(std::size_t step) const {
  switch (mode_) {
    case TrainMode::LanguageOnly:
      return at(step) == StepType::Language;
    case TrainMode::TeacherOnly:
      return at(step) == StepType::Teacher;
    case TrainMode::Dual:
      break;
  }
  return true;
}

std::size_t Schedule::count(StepType type, std::size_t steps) const {
  if ((mode_ == TrainMode::LanguageOnly && type == StepType::Teacher) ||
      (mode_ == TrainMode::TeacherOnly && type == StepType::Language)) {
    return 0;
  }
  const std::size_t period = ratio_.language + ratio_.teacher;
  const std::size_t full = steps / period, rest = steps % period;
  const std::size_t lang = full * ratio_.language + std::min(rest, ratio_.language);
  return type == StepType::Language ? lang : steps - lang;
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(const std::vector<NamedTensor<T>>& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), T(0));
    s.v.emplace_back(p.tensor.numel(), T(0));
  }
  return s;
}

template <typename T>
void adamw_update(const std::vector<NamedTensor<T>>& params, OptimizerState<T>& state, const TrainConfig& c) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("optimizer state does not mirror the parameter list");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T lr = static_cast<T>(c.learning_rate), wd = static_cast<T>(c.weight_decay), eps = static_cast<T>(c.epsilon);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<T>& tensor = params[p].tensor;
    if (!tensor.has_grad()) continue;
    auto g = tensor.grad();
    auto theta = const_cast<Tensor<T>&>(tensor).mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != theta.size() || v.size() != theta.size()) throw ShapeError("optimizer moment shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] * inv_bc1;
      const T v_hat = v[i] * inv_bc2;
      theta[i] = theta[i] - lr * m_hat / (std::sqrt(v_hat) + eps) - lr * wd * theta[i];
    }
  }
}

template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-12));
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (T& g : p.tensor.grad_mut()) g *= scale;
    }
  }
  return norm;
}

std::vector<std::vector<TokenId>> make_language_windows(std::span<const TokenId> stream, std::size_t window) {
  if (window < 2) throw ConfigError("language windows need at least two tokens");
  std::vector<std::vector<TokenId>> out;
  for (std::size_t s = 0; s < stream.size(); s += window) {
    const std::size_t e = std::min(stream.size(), s + window);
    if (e - s < 2) break;
    out.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(s), stream.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

json to_json(const StepRecord& r) {
  json j;
  j["step"] = r.step;
  j["type"] = std::string(to_string(r.type));
  j["loss"] = r.loss;
  j["lr"] = r.learning_rate;
  j["grad_norm"] = r.grad_norm;
  j["wall_ms"] = r.wall_ms;
  return j;
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model, TrainConfig config, const TrainingData& data)
    : model_(model),
      config_(config),
      data_(data),
      schedule_(config.mix, config.mode),
      params_(model.params().named()),
      opt_(OptimizerState<T>::zeros_like(params_)) {
  config_.validate();
  if (config_.mode != TrainMode::TeacherOnly && data_.language.empty()) {
    throw ContractError("training mode " + std::string(to_string(config_.mode)) + " needs a nonempty language stream");
  }
  if (config_.mode != TrainMode::LanguageOnly && data_.teacher.empty()) {
    throw ContractError("training mode " + std::string(to_string(config_.mode)) + " needs nonempty unified data");
  }
  for (const auto& w : data_.language) {
    if (w.size() > model_.config().max_seq_len) throw LengthError("language window exceeds max_seq_len");
  }
  for (const auto& t : data_.teacher) {
    if (t.tokens.size() > model_.config().max_seq_len) {
      throw LengthError("proposition of " + std::to_string(t.tokens.size()) + " tokens exceeds max_seq_len");
    }
  }
}

template <typename T>
const std::vector<std::size_t>& Trainer<T>::epoch_order(const char* stream, std::size_t n, std::size_t epoch) const {
  auto key = std::make_pair(std::string(stream), epoch);
  auto it = orders_.find(key);
  if (it != orders_.end()) return it->second;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config_.seed, std::string("epoch:") + stream, epoch));
  shuffle_in_place(std::span<std::size_t>(order), rng);
  return orders_.emplace(std::move(key), std::move(order)).first->second;
}

template <typename T>
std::vector<std::vector<TokenId>> Trainer<T>::language_batch(std::size_t k) const {
  const std::size_t n = data_.language.size();
  const std::size_t b = config_.language_batch_size;
  std::vector<std::vector<TokenId>> out;
  for (std::size_t i = k * b; i < (k + 1) * b; ++i) out.push_back(data_.language[epoch_order("language", n, i / n)[i % n]]);
  return out;
}

template <typename T>
std::vector<TeacherExample> Trainer<T>::teacher_batch(std::size_t k) const {
  const std::size_t n = data_.teacher.size();
  const std::size_t b = config_.teacher_batch_size;
  std::vector<TeacherExample> out;
  for (std::size_t i = k * b; i < (k + 1) * b; ++i) out.push_back(data_.teacher[epoch_order("teacher", n, i / n)[i % n]]);
  return out;
}

template <typename T>
double Trainer<T>::apply(Tensor<T> loss, StepType type) {
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw NumericError(std::string(to_string(type)) + " loss is not finite at step " + std::to_string(counters_.step));
  }
  last_grad_norm_ = clip_grad_norm(params_, config_.grad_clip);
  adamw_update(params_, opt_, config_);
  return value;
}

template <typename T>
double Trainer<T>::language_step(const std::vector<std::vector<TokenId>>& batch) {
  for (const auto& p : params_) p.tensor.clear_grad();
  const TokenBatch tb = TokenBatch::pack(batch, data_.pad);
  Rng dropout_rng(derive_seed(config_.seed, "dropout", counters_.step));
  Tape<T> tape;
  Tensor<T> loss;
  {
    TapeScope<T> scope(tape);
    try {
      loss = model_.lm_loss(tb, data_.pad, &dropout_rng);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (language step " + std::to_string(counters_.step) + ")");
    }
    tape.backward(loss);
  }
  return apply(loss, StepType::Language);
}

template <typename T>
double Trainer<T>::teacher_step(const std::vector<TeacherExample>& batch) {
  for (const auto& p : params_) p.tensor.clear_grad();
  std::vector<std::vector<TokenId>> seqs;
  std::vector<std::uint8_t> labels;
  for (const auto& ex : batch) {
    seqs.push_back(ex.tokens);
    labels.push_back(ex.label ? 1 : 0);
  }
  const TokenBatch tb = TokenBatch::pack(seqs, data_.pad);
  Rng dropout_rng(derive_seed(config_.seed, "dropout", counters_.step));
  Tape<T> tape;
  Tensor<T> loss;
  {
    TapeScope<T> scope(tape);
    try {
      loss = model_.proposition_loss(tb, labels, data_.cls, &dropout_rng);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (teacher step " + std::to_string(counters_.step) + ")");
    }
    tape.backward(loss);
  }
  return apply(loss, StepType::Teacher);
}

template <typename T>
StepRecord Trainer<T>::step() {
  const auto start = std::chrono::steady_clock::now();
  while (!schedule_.runs(counters_.step)) ++counters_.step;
  StepRecord r;
  r.step = counters_.step;
  r.type = schedule_.at(counters_.step);
  r.learning_rate = config_.learning_rate;
  if (r.type == StepType::Language) {
    r.loss = language_step(language_batch(counters_.language_steps));
    ++counters_.language_steps;
  } else {
    r.loss = teacher_step(teacher_batch(counters_.teacher_steps));
    ++counters_.teacher_steps;
  }
  r.grad_norm = last_grad_norm_;
  ++counters_.step;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

template <typename T>
void Trainer<T>::run(const Hooks& hooks) {
  while (counters_.step < config_.total_steps) {
    if (schedule_.runs(counters_.step)) {
      const StepRecord r = step();
      if (hooks.on_step) hooks.on_step(r);
    } else {
      ++counters_.step;
    }
    const std::size_t done = counters_.step;
    if (hooks.on_eval && config_.eval_interval > 0 && done % config_.eval_interval == 0) hooks.on_eval(done);
    if (hooks.on_checkpoint && config_.checkpoint_interval > 0 && done % config_.checkpoint_interval == 0) {
      hooks.on_checkpoint(done);
    }
  }
}

template <typename T>
void Trainer<T>::restore(const TrainCounters& counters, OptimizerState<T> state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ShapeError("optimizer state does not mirror the parameter list");
  }
  if (schedule_.count(StepType::Language, counters.step) != counters.language_steps ||
      schedule_.count(StepType::Teacher, counters.step) != counters.teacher_steps) {
    throw ContractError("checkpoint counters do not match the schedule of this configuration");
  }
  counters_ = counters;
  opt_ = std::move(state);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'S', 'I', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename V>
void put(std::string& out, V value) {
  char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  out.append(buf, sizeof(V));
}

template <typename V>
V take(const std::string& in, std::size_t& at) {
  if (at + sizeof(V) > in.size()) throw FormatError("checkpoint truncated");
  V value;
  std::memcpy(&value, in.data() + at, sizeof(V));
  at += sizeof(V);
  return value;
}

template <typename T>
void put_values(std::string& out, std::span<const T> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(T));
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ParsedHeader {
  json header;
  std::size_t data_offset = 0;
};

ParsedHeader parse_container(const std::string& bytes, const std::filesystem::path& path) {
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(where + ": not a checkpoint file");
  }
  std::size_t at = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, at);
  if (version != kCheckpointVersion) {
    throw VersionError(where + ": format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto header_len = take<std::uint64_t>(bytes, at);
  if (header_len > bytes.size() - at - 8) throw FormatError(where + ": corrupt header length");
  const std::size_t body_end = bytes.size() - 8;
  std::size_t trailer_at = body_end;
  const auto stored = take<std::uint64_t>(bytes, trailer_at);
  if (fnv1a64(std::string_view(bytes.data(), body_end)) != stored) throw FormatError(where + ": checksum mismatch");
  ParsedHeader out;
  try {
    out.header = json::parse(bytes.substr(at, header_len));
  } catch (const json::exception& e) {
    throw FormatError(where + ": corrupt header: " + e.what());
  }
  out.data_offset = at + header_len;
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const OptimizerState<T>& optimizer,
                     const TrainCounters& counters, const TrainConfig& train_config, std::uint64_t vocab_hash) {
  const auto named = model.params().named();
  if (optimizer.m.size() != named.size() || optimizer.v.size() != named.size()) {
    throw ShapeError("optimizer state does not mirror the parameter list");
  }
  json header;
  header["format"] = "dualsig-checkpoint";
  header["dtype"] = dtype_name<T>();
  header["model"] = to_json(model.config());
  header["train"] = to_json(train_config);
  header["vocab_hash"] = hex64(vocab_hash);
  header["counters"] = {{"step", counters.step},
                        {"language_steps", counters.language_steps},
                        {"teacher_steps", counters.teacher_steps}};
  header["optimizer_t"] = optimizer.t;
  header["tensors"] = json::array();
  for (const auto& nt : named) header["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  for (const auto& nt : named) put_values<T>(out, nt.tensor.data());
  for (const auto& m : optimizer.m) put_values<T>(out, m);
  for (const auto& v : optimizer.v) put_values<T>(out, v);
  put<std::uint64_t>(out, fnv1a64(out));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string checkpoint_dtype(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  return parse_container(bytes, path).header.value("dtype", std::string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto parsed = parse_container(bytes, path);
  const json& h = parsed.header;
  const std::string where = "checkpoint " + path.string();
  Checkpoint<T> ck;
  try {
    if (h.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw FormatError(where + " stores " + h.at("dtype").get<std::string>() + " values, requested " + dtype_name<T>());
    }
    ck.model_config = model_config_from_json(h.at("model"));
    ck.train_config = train_config_from_json(h.at("train"));
    ck.vocab_hash = std::stoull(h.at("vocab_hash").get<std::string>(), nullptr, 16);
    ck.counters.step = h.at("counters").at("step").get<std::size_t>();
    ck.counters.language_steps = h.at("counters").at("language_steps").get<std::size_t>();
    ck.counters.teacher_steps = h.at("counters").at("teacher_steps").get<std::size_t>();
    ck.optimizer.t = h.at("optimizer_t").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  }
  ck.params = Parameters<T>::init(ck.model_config, 0);
  const auto named = ck.params.named();
  const auto& list = h.at("tensors");
  if (list.size() != named.size()) throw FormatError(where + ": tensor list does not match the model config");
  std::size_t total = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (list[i].at("name").get<std::string>() != named[i].name ||
        list[i].at("shape").get<Shape>() != named[i].tensor.shape()) {
      throw FormatError(where + ": tensor " + std::to_string(i) + " does not match " + named[i].name);
    }
    total += named[i].tensor.numel();
  }
  if (parsed.data_offset + 3 * total * sizeof(T) + 8 != bytes.size()) throw FormatError(where + ": data size mismatch");
  const char* cursor = bytes.data() + parsed.data_offset;
  for (const auto& nt : named) {
    auto dst = const_cast<Tensor<T>&>(nt.tensor).mutable_data();
    std::memcpy(dst.data(), cursor, dst.size() * sizeof(T));
    cursor += dst.size() * sizeof(T);
  }
  for (auto* moments : {&ck.optimizer.m, &ck.optimizer.v}) {
    for (const auto& nt : named) {
      std::vector<T> values(nt.tensor.numel());
      std::memcpy(values.data(), cursor, values.size() * sizeof(T));
      cursor += values.size() * sizeof(T);
      moments->push_back(std::move(values));
    }
  }
  for (const auto& nt : named) {
    for (T v : nt.tensor.data()) {
      if (!std::isfinite(v)) throw FormatError(where + ": non-finite parameter in " + nt.name);
    }
  }
  return ck;
}

#define DUALSIG_INSTANTIATE(T)                                                                                 \
  template struct OptimizerState<T>;                                                                           \
  template void adamw_update(const std::vector<NamedTensor<T>>&, OptimizerState<T>&, const TrainConfig&);      \
  template double clip_grad_norm(const std::vector<NamedTensor<T>>&, double);                                 \
  template class Trainer<T>;                                                                                   \
  template void save_checkpoint(const std::filesystem::path&, const Model<T>&, const OptimizerState<T>&,       \
                                const TrainCounters&, const TrainConfig&, std::uint64_t);                      \
  template Checkpoint<T> load_checkpoint(const std::filesystem::path&);

DUALSIG_INSTANTIATE(float)
DUALSIG_INSTANTIATE(double)

#undef DUALSIG_INSTANTIATE

}  // namespace dualsig
