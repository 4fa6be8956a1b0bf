// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "dualsig/error.hpp"
#include "dualsig/unify.hpp"

using namespace dualsig;

namespace {

DatasetSpec topic_dataset() {
  DatasetSpec d;
  d.id = "news";
  d.task = {"Topic Classification", TaskKind::SingleText, {"Business", "Sports", "World", "Science"}};
  d.templates = {{"t0", "This text is about {label_desc}.", "", {}},
                 {"t1", "Topic: {label_desc}", "", {{"Science", "science and technology"}}}};
  return d;
}

DatasetSpec story_dataset() {
  DatasetSpec d;
  d.id = "stories";
  d.task = {"Story Cloze", TaskKind::MultiChoice, {}};
  d.templates = {{"s0", "The story ends with: {label_desc}", "", {}}};
  return d;
}

DatasetSpec pair_dataset() {
  DatasetSpec d;
  d.id = "para";
  d.task = {"Paraphrase", TaskKind::TextPair, {"yes", "no"}};
  d.templates = {{"p0", "the two sentences {label_desc}", "", {{"yes", "mean the same"}, {"no", "differ"}}},
                 {"p1", "{text2} restates it: {label_desc}", "{text}", {}}};
  return d;
}

RawExample topic_example(std::string id, std::string text, std::string gold) {
  RawExample e;
  e.id = std::move(id);
  e.fields["text"] = std::move(text);
  e.gold_label = std::move(gold);
  return e;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dualsig_unify_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("topic proposition instantiates the grammar") {
  auto d = topic_dataset();
  auto ex = topic_example("e1", "Stocks rallied on Monday.", "Business");
  auto pos = build_proposition(d, ex, d.templates[0], std::string("Business"));
  CHECK(pos.text == "[tsk] Topic Classification [tsk] Stocks rallied on Monday. [sep] This text is about Business. [cls]");
  CHECK(pos.label);
  CHECK(pos.task == "Topic Classification");
  CHECK(pos.dataset == "news");
  CHECK(pos.template_id == "t0");
  CHECK(pos.example_id == "e1");

  auto neg = build_proposition(d, ex, d.templates[0], std::string("Sports"));
  CHECK(neg.text == "[tsk] Topic Classification [tsk] Stocks rallied on Monday. [sep] This text is about Sports. [cls]");
  CHECK_FALSE(neg.label);

  auto described = build_proposition(d, ex, d.templates[1], std::string("Science"));
  CHECK(described.text.ends_with("[sep] Topic: science and technology [cls]"));
}

TEST_CASE("whitespace is normalized before slot filling") {
  CHECK(normalize_whitespace("  a \t b\n\nc  ") == "a b c");
  CHECK(normalize_whitespace("") == "");
  auto d = topic_dataset();
  auto ex = topic_example("e", "  Stocks \n rallied  ", "Business");
  CHECK(build_proposition(d, ex, d.templates[0], std::string("World")).text ==
        "[tsk] Topic Classification [tsk] Stocks rallied [sep] This text is about World. [cls]");
}

TEST_CASE("multi-choice propositions use the candidate as prompt") {
  auto d = story_dataset();
  RawExample ex;
  ex.id = "s1";
  ex.fields["text"] = "Tom dropped his glass.";
  ex.choices = {"It shattered.", "It flew away."};
  ex.gold_choice = 0;
  auto right = build_proposition(d, ex, d.templates[0], std::size_t{0});
  auto wrong = build_proposition(d, ex, d.templates[0], std::size_t{1});
  CHECK(right.label);
  CHECK_FALSE(wrong.label);
  CHECK(wrong.text == "[tsk] Story Cloze [tsk] Tom dropped his glass. [sep] The story ends with: It flew away. [cls]");
  CHECK_THROWS_AS(build_proposition(d, ex, d.templates[0], std::size_t{2}), LabelError);
  CHECK_THROWS_AS(build_proposition(d, ex, d.templates[0], std::string("x")), ContractError);
}

TEST_CASE("pair bodies and template slots") {
  auto d = pair_dataset();
  RawExample ex;
  ex.id = "p";
  ex.fields = {{"text", "a cat sat"}, {"text2", "the cat sat"}};
  ex.gold_label = "yes";
  CHECK(build_proposition(d, ex, d.templates[0], std::string("no")).text ==
        "[tsk] Paraphrase [tsk] a cat sat | the cat sat [sep] the two sentences differ [cls]");
  CHECK(build_proposition(d, ex, d.templates[1], std::string("yes")).text ==
        "[tsk] Paraphrase [tsk] a cat sat [sep] the cat sat restates it: yes [cls]");
}

TEST_CASE("label and field errors") {
  auto d = topic_dataset();
  auto ex = topic_example("e", "text", "Business");
  CHECK_THROWS_AS(build_proposition(d, ex, d.templates[0], std::string("Cooking")), LabelError);
  RawExample no_text;
  no_text.id = "n";
  no_text.gold_label = "Business";
  CHECK_THROWS_AS(build_proposition(d, no_text, d.templates[0], std::string("Sports")), FieldError);
  auto pd = pair_dataset();
  auto half = topic_example("h", "only one", "yes");
  CHECK_THROWS_AS(build_proposition(pd, half, pd.templates[0], std::string("yes")), FieldError);
  auto sneaky = topic_example("s", "hello [sep] world", "Business");
  CHECK_THROWS_AS(build_proposition(d, sneaky, d.templates[0], std::string("Sports")), FieldError);
  Template foreign{"zz", "{label_desc}", "", {}};
  CHECK_THROWS_AS(build_proposition(d, ex, foreign, std::string("Sports")), ContractError);
}

TEST_CASE("registry validation") {
  auto d = topic_dataset();
  d.task.task_name = "Cooking";
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = topic_dataset();
  d.templates[0].pattern = "no slot";
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.templates[0].pattern = "{label_desc} {label_desc}";
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = topic_dataset();
  d.templates.clear();
  for (int i = 0; i < 11; ++i) d.templates.push_back({"t" + std::to_string(i), "{label_desc}", "", {}});
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.templates.resize(10);
  CHECK_NOTHROW(d.validate());
  d = topic_dataset();
  d.task.labels.clear();
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("make_pair shares template and example id") {
  auto d = topic_dataset();
  for (int i = 0; i < 50; ++i) {
    auto ex = topic_example("x" + std::to_string(i), "some words here", "World");
    auto p = make_pair(d, ex, 7);
    REQUIRE(p);
    REQUIRE(p->negatives.size() == 1);
    const auto& n = p->negatives[0];
    CHECK(p->positive.label);
    CHECK_FALSE(n.label);
    CHECK(p->positive.template_id == n.template_id);
    CHECK(p->positive.example_id == n.example_id);
    CHECK(n.text != p->positive.text);
  }
}

TEST_CASE("binary task negative is the complement") {
  auto d = pair_dataset();
  RawExample ex;
  ex.id = "b";
  ex.fields = {{"text", "a"}, {"text2", "b"}};
  ex.gold_label = "yes";
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = make_pair(d, ex, seed);
    REQUIRE(p);
    auto expect = build_proposition(d, ex, *std::find_if(d.templates.begin(), d.templates.end(),
                                                         [&](const Template& t) { return t.id == p->positive.template_id; }),
                                    std::string("no"));
    CHECK(p->negatives[0] == expect);
  }
}

TEST_CASE("negative labels are uniform over non-gold labels") {
  // 4 classes, gold fixed: each of the 3 other labels should appear with
  // frequency 1/3. Chi-square with 2 degrees of freedom, 0.999 quantile 13.82.
  auto d = topic_dataset();
  std::map<std::string, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto ex = topic_example("id" + std::to_string(i), "txt", "Sports");
    auto p = make_pair(d, ex, 2024);
    REQUIRE(p);
    auto pr = parse_proposition(p->negatives[0].text);
    for (const auto& lbl : d.task.labels) {
      const auto& t = p->negatives[0].template_id == "t0" ? d.templates[0] : d.templates[1];
      const std::string desc = t.describe(lbl);
      if (pr.prompt == "This text is about " + desc + "." || pr.prompt == "Topic: " + desc) counts[lbl]++;
    }
  }
  CHECK(counts.count("Sports") == 0);
  double chi2 = 0;
  for (const auto& lbl : {"Business", "World", "Science"}) {
    const double f = counts[lbl] / double(n);
    CHECK(std::abs(f - 1.0 / 3.0) < 0.02);
    const double e = n / 3.0;
    chi2 += (counts[lbl] - e) * (counts[lbl] - e) / e;
  }
  CHECK(chi2 < 13.82);
}

TEST_CASE("template draw is uniform and order independent") {
  auto d = topic_dataset();
  std::map<std::string, int> usage;
  for (int i = 0; i < 4000; ++i) {
    auto ex = topic_example("id" + std::to_string(i), "txt", "World");
    usage[make_pair(d, ex, 1)->positive.template_id]++;
  }
  CHECK(std::abs(usage["t0"] / 4000.0 - 0.5) < 0.03);
  auto ex = topic_example("stable", "txt", "World");
  auto a = make_pair(d, ex, 99);
  for (int i = 0; i < 10; ++i) make_pair(d, topic_example("noise" + std::to_string(i), "t", "World"), 99);
  CHECK(make_pair(d, ex, 99)->negatives[0] == a->negatives[0]);
  CHECK(example_seed(1, "a", "bc") != example_seed(1, "ab", "c"));
}

TEST_CASE("multi-negative option draws distinct labels") {
  auto d = topic_dataset();
  UnifyOptions o;
  o.negatives_per_positive = 3;
  auto p = make_pair(d, topic_example("m", "words", "World"), 5, o);
  REQUIRE(p);
  std::set<std::string> texts;
  for (const auto& n : p->negatives) texts.insert(n.text);
  CHECK(texts.size() == 3);
  o.negatives_per_positive = 0;
  CHECK_THROWS_AS(make_pair(d, topic_example("m", "words", "World"), 5, o), ConfigError);
}

TEST_CASE("singleton label sets are skipped with a warning") {
  auto d = topic_dataset();
  d.task.labels = {"Business"};
  std::vector<std::string> warnings;
  CHECK_FALSE(make_pair(d, topic_example("s", "t", "Business"), 1, {}, &warnings));
  CHECK(warnings.size() == 1);
  auto story = story_dataset();
  RawExample one;
  one.id = "o";
  one.fields["text"] = "x";
  one.choices = {"only"};
  one.gold_choice = 0;
  CHECK_FALSE(make_pair(story, one, 1, {}, &warnings));
}

TEST_CASE("story cloze negative is the other ending") {
  auto d = story_dataset();
  RawExample ex;
  ex.id = "s";
  ex.fields["text"] = "He fell.";
  ex.choices = {"He got up.", "He flew."};
  ex.gold_choice = 1;
  auto p = make_pair(d, ex, 3);
  REQUIRE(p);
  CHECK(p->positive.text.find("He flew.") != std::string::npos);
  CHECK(p->negatives[0].text.find("He got up.") != std::string::npos);
  CHECK_FALSE(p->negatives[0].label);
}

TEST_CASE("parse inverts build") {
  auto d = topic_dataset();
  for (int i = 0; i < 200; ++i) {
    auto ex = topic_example("r" + std::to_string(i), "word" + std::to_string(i) + " and more", "Science");
    auto p = make_pair(d, ex, 13);
    for (const auto* s : {&p->positive, &p->negatives[0]}) {
      auto parsed = parse_proposition(s->text);
      REQUIRE(parsed.task_name);
      CHECK(*parsed.task_name == "Topic Classification");
      CHECK(parsed.body == "word" + std::to_string(i) + " and more");
      const auto& t = s->template_id == "t0" ? d.templates[0] : d.templates[1];
      bool matched = false;
      for (const auto& lbl : d.task.labels) {
        const std::string desc = t.describe(lbl);
        std::string prompt = t.pattern;
        prompt.replace(prompt.find("{label_desc}"), 12, desc);
        matched |= parsed.prompt == prompt;
      }
      CHECK(matched);
    }
  }
  auto unprefixed = build_proposition(d, topic_example("u", "x y", "World"), d.templates[0], std::string("World"),
                                      UnifyOptions{false, 1});
  CHECK(unprefixed.text == "x y [sep] This text is about World. [cls]");
  auto parsed = parse_proposition(unprefixed.text);
  CHECK_FALSE(parsed.task_name);
  CHECK(parsed.body == "x y");
}

TEST_CASE("parse errors carry positions") {
  auto expect_error = [](std::string_view text, std::size_t pos) {
    try {
      parse_proposition(text);
      FAIL("expected a parse error for " << text);
    } catch (const ParseError& e) {
      CHECK(e.position() == pos);
    }
  };
  expect_error("[tsk] Paraphrase [tsk] a [sep] b", 32);
  expect_error("a [sep] b [sep] c [cls]", 10);
  expect_error("a [sep] b [cls] c", 10);
  expect_error("a b [cls]", 4);
  expect_error("[tsk] Cooking [tsk] a [sep] b [cls]", 5);
  expect_error("a [tsk] b [sep] c [cls]", 2);
  expect_error("[tsk] Paraphrase a [sep] b [cls]", 32);
  expect_error(" [sep] b [cls]", 0);
  expect_error("a [sep] [cls]", 7);
  expect_error("a [sep] b [pad] [cls]", 10);
}

namespace {

DatasetInput synthetic(const std::string& id, std::size_t n, const std::string& task = "Topic Classification") {
  DatasetInput in;
  in.spec.id = id;
  in.spec.task = {task, TaskKind::SingleText, {"a", "b", "c"}};
  in.spec.templates = {{"t0", "it is {label_desc}", "", {}}, {"t1", "label {label_desc}", "", {}}};
  for (std::size_t i = 0; i < n; ++i) {
    in.examples.push_back(topic_example(std::to_string(i), "text " + std::to_string(i), i % 2 ? "a" : "c"));
  }
  return in;
}

}  // namespace

TEST_CASE("build_unified enforces cap, balance and grammar") {
  std::vector<DatasetInput> inputs{synthetic("small", 300), synthetic("large", 2000), synthetic("empty", 0)};
  auto u = build_unified(inputs, 1000, 42);
  std::map<std::string, std::pair<int, int>> per;  // dataset -> (pos, neg)
  for (const auto& s : u.samples) {
    auto p = parse_proposition(s.text);
    CHECK(p.task_name == s.task);
    (s.label ? per[s.dataset].first : per[s.dataset].second)++;
  }
  CHECK(per["small"] == std::pair<int, int>{300, 300});
  CHECK(per["large"] == std::pair<int, int>{500, 500});
  CHECK(per.count("empty") == 0);
  REQUIRE(u.manifest.datasets.size() == 2);
  CHECK(u.manifest.datasets[1].pairs == 500);
  CHECK(u.manifest.datasets[1].positives == u.manifest.datasets[1].negatives);
  std::size_t hist = 0;
  for (const auto& [k, v] : u.manifest.datasets[1].template_usage) hist += v;
  CHECK(hist == 1000);
  CHECK(u.manifest.total == 1600);
  CHECK(std::any_of(u.manifest.warnings.begin(), u.manifest.warnings.end(),
                    [](const std::string& w) { return w.find("empty") != std::string::npos; }));
}

TEST_CASE("cap arithmetic at full scale") {
  std::vector<DatasetInput> inputs{synthetic("d1", 60000), synthetic("d2", 60000, "Sentiment Classification")};
  auto u = build_unified(inputs, 100000, 1);
  REQUIRE(u.manifest.datasets.size() == 2);
  for (const auto& d : u.manifest.datasets) {
    CHECK(d.pairs == 50000);
    CHECK(d.positives + d.negatives == 100000);
  }
}

TEST_CASE("build_unified is deterministic and seed sensitive") {
  std::vector<DatasetInput> inputs{synthetic("x", 200), synthetic("y", 100)};
  auto a = build_unified(inputs, 1000, 9);
  auto b = build_unified(inputs, 1000, 9);
  auto c = build_unified(inputs, 1000, 10);
  CHECK(unified_to_jsonl(a.samples) == unified_to_jsonl(b.samples));
  CHECK(manifest_to_json(a.manifest) == manifest_to_json(b.manifest));
  CHECK(unified_to_jsonl(a.samples) != unified_to_jsonl(c.samples));

  std::vector<DatasetInput> reversed{inputs[0], inputs[1]};
  std::reverse(reversed[0].examples.begin(), reversed[0].examples.end());
  auto r = build_unified(reversed, 1000, 9);
  std::multiset<std::string> sa, sr;
  for (const auto& s : a.samples) sa.insert(unified_to_jsonl({s}));
  for (const auto& s : r.samples) sr.insert(unified_to_jsonl({s}));
  CHECK(sa == sr);  // per-example draws do not depend on input order
}

TEST_CASE("prefix-free build has no task token anywhere") {
  std::vector<DatasetInput> inputs{synthetic("x", 50)};
  auto u = build_unified(inputs, 1000, 3, UnifyOptions{false, 1});
  for (const auto& s : u.samples) CHECK(s.text.find("[tsk]") == std::string::npos);
  auto prefixed = build_unified(inputs, 1000, 3);
  auto stripped = strip_task_prefix(prefixed.samples);
  CHECK(unified_to_jsonl(stripped) == unified_to_jsonl(u.samples));
}

TEST_CASE("jsonl and registry round trips") {
  auto dir = temp_dir("io");
  auto ds = pair_dataset();
  ds.source = (dir / "para.jsonl").string();
  auto story = story_dataset();
  story.source = "stories.jsonl";
  save_registry({ds, story}, dir / "registry.json");
  auto loaded = load_registry(dir / "registry.json");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].templates[0].label_desc.at("yes") == "mean the same");
  CHECK(loaded[0].task.kind == TaskKind::TextPair);
  CHECK(loaded[1].task.kind == TaskKind::MultiChoice);
  CHECK(std::filesystem::path(loaded[1].source) == (dir / "stories.jsonl").lexically_normal());

  RawExample ex;
  ex.id = "1";
  ex.fields = {{"text", "x"}, {"text2", "y"}};
  ex.gold_label = "no";
  write_raw_jsonl({ex}, ds.source);
  auto back = read_raw_jsonl(ds.source, ds);
  REQUIRE(back.size() == 1);
  CHECK(back[0].fields == ex.fields);
  CHECK(back[0].gold_label == ex.gold_label);

  {
    std::ofstream f(dir / "stories.jsonl");
    f << R"({"id": 5, "text": "t", "choices": ["a", "b"], "answer": 1})" << "\n\n";
    f << R"({"text": "u", "choices": ["a", "b", "c"], "answer": 0})" << "\n";
  }
  auto stories = read_raw_jsonl(dir / "stories.jsonl", story);
  REQUIRE(stories.size() == 2);
  CHECK(stories[0].id == "5");
  CHECK(stories[0].gold_choice == 1u);
  CHECK(stories[1].id == "line3");

  {
    std::ofstream f(dir / "bad.jsonl");
    f << R"({"id": 1, "text": "t", "choices": ["a"], "answer": 4})" << "\n";
  }
  CHECK_THROWS_AS(read_raw_jsonl(dir / "bad.jsonl", story), FieldError);
  {
    std::ofstream f(dir / "bad.jsonl");
    f << "{not json\n";
  }
  CHECK_THROWS_AS(read_raw_jsonl(dir / "bad.jsonl", story), FormatError);
  CHECK_THROWS_AS(read_raw_jsonl(dir / "missing.jsonl", story), IoError);

  auto u = build_unified({DatasetInput{ds, back}}, 10, 1);
  write_unified_jsonl(u.samples, dir / "unified.jsonl");
  CHECK(read_unified_jsonl(dir / "unified.jsonl") == u.samples);
  std::filesystem::remove_all(dir);
}
