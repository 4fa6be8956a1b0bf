// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dualsig/trainer.hpp"

using namespace dualsig;

namespace {

constexpr TokenId kPad = 0;
constexpr TokenId kCls = 3;

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.vocab_size = 24;
  c.max_seq_len = 12;
  return c;
}

TrainingData toy_data(std::uint64_t seed) {
  Rng rng(seed);
  TrainingData d;
  std::vector<TokenId> stream(200);
  for (auto& t : stream) t = static_cast<TokenId>(5 + rng() % 19);
  d.language = make_language_windows(stream, 10);
  for (int i = 0; i < 12; ++i) {
    TeacherExample ex;
    const std::size_t n = 3 + rng() % 6;
    for (std::size_t k = 0; k < n; ++k) ex.tokens.push_back(static_cast<TokenId>(5 + rng() % 19));
    ex.tokens.push_back(kCls);
    ex.label = i % 2 == 0;
    d.teacher.push_back(ex);
  }
  return d;
}

TrainConfig fast_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.language_batch_size = 4;
  c.teacher_batch_size = 4;
  c.total_steps = 9;
  c.seed = 11;
  return c;
}

std::vector<float> flat_params(const Model<float>& m) {
  std::vector<float> out;
  for (const auto& nt : m.params().named()) out.insert(out.end(), nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dualsig_trainer_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

NamedTensor<double> scalar_param(double value) {
  return {"w", Tensor<double>::from_data({1}, {value}, true)};
}

}  // namespace

TEST_CASE("schedule follows the a:b window rule") {
  Schedule s({2, 1}, TrainMode::Dual);
  const StepType L = StepType::Language, T = StepType::Teacher;
  const std::vector<StepType> first = {L, L, T, L, L, T};
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(s.at(i) == first[i]);

  for (MixRatio r : {MixRatio{2, 1}, MixRatio{1, 1}, MixRatio{3, 2}}) {
    Schedule sched(r, TrainMode::Dual);
    const std::size_t period = r.language + r.teacher;
    std::size_t lang = 0;
    for (std::size_t start = 0; start + period <= 1000; start += period) {
      std::size_t window = 0;
      for (std::size_t i = start; i < start + period; ++i) window += sched.at(i) == L;
      CHECK(window == r.language);
    }
    for (std::size_t i = 0; i < 1000; ++i) {
      lang += sched.at(i) == L;
      CHECK(sched.count(L, i + 1) == lang);
      CHECK(sched.count(T, i + 1) == i + 1 - lang);
    }
    CHECK(std::abs(static_cast<double>(lang) - 1000.0 * r.language / period) <= r.language);
  }
}

TEST_CASE("single-signal schedules") {
  Schedule dual({2, 1}, TrainMode::Dual), lang({2, 1}, TrainMode::LanguageOnly), teach({2, 1}, TrainMode::TeacherOnly);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(lang.at(i) == dual.at(i));
    CHECK(teach.at(i) == dual.at(i));
    CHECK(dual.runs(i));
    CHECK(lang.runs(i) == (dual.at(i) == StepType::Language));
    CHECK(teach.runs(i) == (dual.at(i) == StepType::Teacher));
  }
  CHECK(teach.count(StepType::Language, 50) == 0);
  CHECK(teach.count(StepType::Teacher, 50) == dual.count(StepType::Teacher, 50));
  CHECK(lang.count(StepType::Language, 50) == dual.count(StepType::Language, 50));
  CHECK(lang.count(StepType::Teacher, 50) == 0);
  CHECK_THROWS_AS(Schedule({0, 1}, TrainMode::Dual), ConfigError);
}

TEST_CASE("adamw worked examples") {
  TrainConfig c;
  c.learning_rate = 0.1;
  c.weight_decay = 0.0;
  {
    std::vector<NamedTensor<double>> params = {scalar_param(1.0)};
    params[0].tensor.grad_mut()[0] = 1.0;
    auto st = OptimizerState<double>::zeros_like(params);
    adamw_update(params, st, c);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(st.t == 1);
  }
  {
    std::vector<NamedTensor<double>> params = {scalar_param(1.0)};
    params[0].tensor.grad_mut()[0] = 0.0;
    auto st = OptimizerState<double>::zeros_like(params);
    adamw_update(params, st, c);
    CHECK(params[0].tensor.data()[0] == 1.0);
  }
  {
    // Decay shrinks theta by lr * wd * theta on top of the Adam step.
    c.weight_decay = 0.01;
    std::vector<NamedTensor<double>> params = {scalar_param(2.0)};
    params[0].tensor.grad_mut()[0] = 0.0;
    auto st = OptimizerState<double>::zeros_like(params);
    adamw_update(params, st, c);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
  }
  {
    // A parameter without a gradient is left alone, decay included.
    std::vector<NamedTensor<double>> params = {scalar_param(2.0)};
    auto st = OptimizerState<double>::zeros_like(params);
    adamw_update(params, st, c);
    CHECK(params[0].tensor.data()[0] == 2.0);
  }
}

TEST_CASE("adamw matches a scalar reference over many steps") {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.weight_decay = 0.05;
  c.beta1 = 0.8;
  c.beta2 = 0.95;
  std::vector<NamedTensor<double>> params = {scalar_param(0.3)};
  auto st = OptimizerState<double>::zeros_like(params);
  long double theta = 0.3L, m = 0, v = 0;
  Rng rng(4);
  for (int t = 1; t <= 40; ++t) {
    const double g = uniform_unit(rng) * 2.0 - 1.0;
    params[0].tensor.clear_grad();
    params[0].tensor.grad_mut()[0] = g;
    adamw_update(params, st, c);
    m = 0.8L * m + 0.2L * g;
    v = 0.95L * v + 0.05L * g * g;
    const long double mh = m / (1 - std::pow(0.8L, t)), vh = v / (1 - std::pow(0.95L, t));
    theta = theta - 0.01L * mh / (std::sqrt(vh) + 1e-8L) - 0.01L * 0.05L * theta;
  }
  CHECK(params[0].tensor.data()[0] == doctest::Approx(static_cast<double>(theta)).epsilon(1e-10));
}

TEST_CASE("gradient clipping") {
  std::vector<NamedTensor<double>> params = {scalar_param(0.0), scalar_param(0.0)};
  params[0].tensor.grad_mut()[0] = 3.0;
  params[1].tensor.grad_mut()[0] = 4.0;
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].tensor.grad()[0] == doctest::Approx(0.6));
  CHECK(params[1].tensor.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(params[0].tensor.grad()[0] == doctest::Approx(0.6));
}

TEST_CASE("language windows") {
  std::vector<TokenId> s(10);
  CHECK(make_language_windows(s, 4).size() == 3);
  CHECK(make_language_windows(s, 4).back().size() == 2);
  s.resize(9);
  CHECK(make_language_windows(s, 4).size() == 2);
  CHECK_THROWS_AS(make_language_windows(s, 1), ConfigError);
}

TEST_CASE("closed-form losses at zeroed heads") {
  const TrainingData data = toy_data(1);
  Model<float> model(tiny_config(), 2);
  for (auto& w : model.params().lm_head.mutable_data()) w = 0;
  for (auto& w : model.params().prop_w.mutable_data()) w = 0;
  for (auto& w : model.params().prop_b.mutable_data()) w = 0;
  Trainer<float> trainer(model, fast_config(), data);
  CHECK(trainer.language_step(trainer.language_batch(0)) == doctest::Approx(std::log(24.0)).epsilon(1e-6));
  CHECK(trainer.teacher_step(trainer.teacher_batch(0)) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK_THROWS_AS(trainer.language_step({{7}}), ContractError);
}

TEST_CASE("each step type moves only its own head") {
  const TrainingData data = toy_data(1);
  Model<float> model(tiny_config(), 2);
  Trainer<float> trainer(model, fast_config(), data);
  const std::vector<float> lm0(model.params().lm_head.data().begin(), model.params().lm_head.data().end());
  const std::vector<float> emb0(model.params().tok_emb.data().begin(), model.params().tok_emb.data().end());
  trainer.teacher_step(trainer.teacher_batch(0));
  CHECK(std::equal(lm0.begin(), lm0.end(), model.params().lm_head.data().begin()));
  CHECK_FALSE(std::equal(emb0.begin(), emb0.end(), model.params().tok_emb.data().begin()));

  const std::vector<float> pw0(model.params().prop_w.data().begin(), model.params().prop_w.data().end());
  trainer.language_step(trainer.language_batch(0));
  CHECK(std::equal(pw0.begin(), pw0.end(), model.params().prop_w.data().begin()));
  CHECK_FALSE(std::equal(lm0.begin(), lm0.end(), model.params().lm_head.data().begin()));
}

TEST_CASE("batches cover each epoch exactly once") {
  const TrainingData data = toy_data(1);
  Model<float> model(tiny_config(), 2);
  TrainConfig cfg = fast_config();
  cfg.teacher_batch_size = 3;
  Trainer<float> trainer(model, cfg, data);
  std::multiset<std::vector<TokenId>> seen, all;
  for (std::size_t k = 0; k < 4; ++k) {
    for (auto& ex : trainer.teacher_batch(k)) seen.insert(ex.tokens);
  }
  for (auto& ex : data.teacher) all.insert(ex.tokens);
  CHECK(seen == all);
  CHECK(trainer.teacher_batch(4).size() == 3);
  CHECK(trainer.language_batch(2) == trainer.language_batch(2));
}

TEST_CASE("training is deterministic given the seed") {
  const TrainingData data = toy_data(1);
  ModelConfig mc = tiny_config();
  mc.dropout = 0.1;
  auto trace = [&](std::uint64_t seed, std::vector<float>* params) {
    Model<float> model(mc, 2);
    TrainConfig cfg = fast_config();
    cfg.seed = seed;
    cfg.total_steps = 10;
    Trainer<float> trainer(model, cfg, data);
    std::vector<double> losses;
    trainer.run({.on_step = [&](const StepRecord& r) { losses.push_back(r.loss); }});
    *params = flat_params(model);
    return losses;
  };
  std::vector<float> pa, pb, pc;
  const auto a = trace(5, &pa), b = trace(5, &pb), c = trace(6, &pc);
  CHECK(a.size() == 10);
  CHECK(a == b);
  CHECK(pa == pb);
  CHECK(a != c);
}

TEST_CASE("teacher-only mode takes no language steps") {
  TrainingData data = toy_data(1);
  data.language.clear();
  Model<float> model(tiny_config(), 2);
  TrainConfig cfg = fast_config();
  cfg.mode = TrainMode::TeacherOnly;
  Trainer<float> trainer(model, cfg, data);
  std::size_t lang = 0;
  std::vector<std::size_t> steps;
  trainer.run({.on_step = [&](const StepRecord& r) {
    lang += r.type == StepType::Language;
    steps.push_back(r.step);
  }});
  CHECK(lang == 0);
  CHECK(trainer.counters().step == cfg.total_steps);
  CHECK(trainer.counters().teacher_steps == Schedule(cfg.mix, TrainMode::Dual).count(StepType::Teacher, cfg.total_steps));
  CHECK(steps.size() == trainer.counters().teacher_steps);
  for (std::size_t s : steps) CHECK(s % 3 == 2);

  cfg.mode = TrainMode::Dual;
  CHECK_THROWS_AS(Trainer<float>(model, cfg, data), ContractError);
}

TEST_CASE("hooks fire on their intervals") {
  const TrainingData data = toy_data(1);
  Model<float> model(tiny_config(), 2);
  TrainConfig cfg = fast_config();
  cfg.eval_interval = 3;
  cfg.checkpoint_interval = 4;
  Trainer<float> trainer(model, cfg, data);
  std::vector<std::size_t> evals, ckpts;
  trainer.run({.on_eval = [&](std::size_t s) { evals.push_back(s); },
               .on_checkpoint = [&](std::size_t s) { ckpts.push_back(s); }});
  CHECK(evals == std::vector<std::size_t>{3, 6, 9});
  CHECK(ckpts == std::vector<std::size_t>{4, 8});
}

TEST_CASE("a non-finite parameter stops training") {
  const TrainingData data = toy_data(1);
  Model<float> model(tiny_config(), 2);
  model.params().lm_head.mutable_data()[0] = std::nanf("");
  Trainer<float> trainer(model, fast_config(), data);
  CHECK_THROWS_AS(trainer.step(), NumericError);
}

TEST_CASE("config json round trip") {
  TrainConfig c = fast_config();
  c.mix = {3, 2};
  c.mode = TrainMode::LanguageOnly;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK(train_config_from_json(nlohmann::json{{"mix_ratio", "5:4"}}).mix == MixRatio{5, 4});
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"learning_rat", 1.0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"mix_ratio", "5-4"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"mode", "both"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"total_steps", "ten"}}), ConfigError);
  CHECK(model_config_from_json(to_json(tiny_config())) == tiny_config());
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"layers", 2}}), ConfigError);
}

TEST_CASE("checkpoint round trip and resume") {
  const TrainingData data = toy_data(1);
  ModelConfig mc = tiny_config();
  mc.dropout = 0.1;
  TrainConfig cfg = fast_config();
  cfg.total_steps = 8;
  const auto path = temp_path("resume.ckpt");

  Model<float> straight(mc, 2);
  Trainer<float> t1(straight, cfg, data);
  std::vector<double> losses_straight;
  t1.run({.on_step = [&](const StepRecord& r) { losses_straight.push_back(r.loss); }});

  Model<float> first(mc, 2);
  Trainer<float> t2(first, cfg, data);
  std::vector<double> losses_resumed;
  for (int i = 0; i < 5; ++i) losses_resumed.push_back(t2.step().loss);
  save_checkpoint(path, first, t2.optimizer(), t2.counters(), cfg, 0xabcdefULL);

  auto ck = load_checkpoint<float>(path);
  CHECK(ck.model_config == mc);
  CHECK(ck.train_config == cfg);
  CHECK(ck.vocab_hash == 0xabcdefULL);
  CHECK(ck.counters == t2.counters());
  CHECK(ck.optimizer.t == t2.optimizer().t);
  CHECK(ck.optimizer.m == t2.optimizer().m);
  CHECK(ck.optimizer.v == t2.optimizer().v);
  CHECK(checkpoint_dtype(path) == "f32");

  Model<float> resumed(ck.model_config, std::move(ck.params));
  CHECK(flat_params(resumed) == flat_params(first));
  Trainer<float> t3(resumed, ck.train_config, data);
  t3.restore(ck.counters, std::move(ck.optimizer));
  t3.run({.on_step = [&](const StepRecord& r) { losses_resumed.push_back(r.loss); }});
  CHECK(losses_resumed == losses_straight);
  CHECK(flat_params(resumed) == flat_params(straight));

  TrainCounters bad = t3.counters();
  bad.language_steps += 1;
  bad.step += 1;
  CHECK_THROWS_AS(t3.restore(bad, t3.optimizer()), ContractError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Model<float> model(tiny_config(), 2);
  auto params = model.params().named();
  auto opt = OptimizerState<float>::zeros_like(params);
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(path, model, opt, {}, fast_config(), 1);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  write(flipped);
  CHECK_THROWS_AS(load_checkpoint<float>(path), FormatError);

  write(bytes.substr(0, bytes.size() - 100));
  CHECK_THROWS_AS(load_checkpoint<float>(path), FormatError);

  std::string versioned = bytes;
  versioned[8] = 9;
  write(versioned);
  CHECK_THROWS_AS(load_checkpoint<float>(path), VersionError);

  write("not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint<float>(path), FormatError);

  write(bytes);
  CHECK_NOTHROW(load_checkpoint<float>(path));
  CHECK_THROWS_AS(load_checkpoint<double>(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint<float>(temp_path("missing.ckpt")), IoError);
}

TEST_CASE("both heads can overfit a small batch") {
  const TrainingData data = toy_data(3);
  Model<float> model(tiny_config(), 2);
  TrainConfig cfg = fast_config();
  cfg.learning_rate = 1e-2;
  Trainer<float> trainer(model, cfg, data);
  const auto lb = trainer.language_batch(0);
  const auto tb = trainer.teacher_batch(0);
  double l = 0, t = 0;
  for (int i = 0; i < 150; ++i) {
    l = trainer.language_step(lb);
    t = trainer.teacher_step(tb);
  }
  CHECK(l < 0.5);
  CHECK(t < 0.05);
}
