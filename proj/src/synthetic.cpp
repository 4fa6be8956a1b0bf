// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/synthetic.hpp"

#include <fstream>

#include "dualsig/error.hpp"
#include "dualsig/rng.hpp"

namespace dualsig {

namespace {

struct Category {
  const char* name;
  std::vector<std::string> members;
};

const std::vector<Category>& categories() {
  static const std::vector<Category> kCategories = {
      {"sports", {"team", "goal", "match", "player", "coach", "score", "ball", "race", "league", "stadium", "referee", "medal"}},
      {"music", {"song", "guitar", "band", "drum", "melody", "concert", "singer", "piano", "album", "rhythm", "chorus", "lyric"}},
      {"food", {"bread", "cheese", "soup", "apple", "rice", "pasta", "salad", "cake", "spice", "oven", "recipe", "dinner"}},
      {"science", {"atom", "cell", "energy", "theory", "laboratory", "experiment", "physics", "chemistry", "molecule", "gene", "data", "telescope"}},
      {"travel", {"train", "flight", "hotel", "passport", "beach", "luggage", "map", "tourist", "airport", "journey", "island", "ticket"}},
      {"money", {"bank", "coin", "price", "market", "loan", "tax", "profit", "budget", "stock", "salary", "invest", "cash"}},
      {"weather", {"rain", "storm", "cloud", "wind", "snow", "sunny", "thunder", "fog", "temperature", "forecast", "humid", "frost"}},
      {"health", {"doctor", "nurse", "hospital", "medicine", "fever", "vaccine", "diet", "clinic", "patient", "therapy", "pill", "injury"}},
  };
  return kCategories;
}

const std::vector<std::string> kPositive = {"happy",  "great", "love",     "wonderful", "nice",   "joy",
                                            "excellent", "pleasant", "delight", "fantastic", "brilliant",
                                            "cheerful", "superb", "lovely", "enjoy"};
const std::vector<std::string> kNegative = {"sad",   "awful",   "hate",   "terrible", "poor",   "misery",
                                            "horrible", "unpleasant", "angry", "dreadful", "boring",
                                            "gloomy", "nasty", "upset", "regret"};
const std::vector<std::string> kFillers = {"the", "a", "and", "very", "really", "quite", "some", "of", "with", "in"};

const Category& pick_category(Rng& rng, std::size_t* index = nullptr) {
  const std::size_t i = uniform_index(rng, categories().size());
  if (index) *index = i;
  return categories()[i];
}

template <typename C>
const std::string& pick(const C& words, Rng& rng) {
  return words[uniform_index(rng, words.size())];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// `n` distinct members of a category, possibly with fillers mixed in.
std::vector<std::string> member_words(const Category& c, std::size_t n, std::size_t fillers, Rng& rng) {
  std::vector<std::string> pool = c.members;
  shuffle_in_place(std::span<std::string>(pool), rng);
  std::vector<std::string> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < fillers; ++i) out.push_back(pick(kFillers, rng));
  shuffle_in_place(std::span<std::string>(out), rng);
  return out;
}

std::vector<std::string> polar_words(bool positive, std::size_t n, std::size_t context, Rng& rng) {
  const auto& lexicon = positive ? kPositive : kNegative;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pick(lexicon, rng));
  for (std::size_t i = 0; i < context; ++i) {
    out.push_back(pick(kFillers, rng));
  }
  shuffle_in_place(std::span<std::string>(out), rng);
  return out;
}

std::string corpus_line(Rng& rng) {
  switch (uniform_index(rng, 9)) {
    case 0: {
      const auto& c = pick_category(rng);
      return join(member_words(c, 3 + uniform_index(rng, 3), uniform_index(rng, 2), rng)) +
             (rng() % 2 == 0 ? " this is " : " it was ") + c.name + " .";
    }
    case 1: {
      const auto& c = pick_category(rng);
      return std::string("the topic is ") + c.name + " : " + join(member_words(c, 3 + uniform_index(rng, 3), 0, rng)) +
             " .";
    }
    case 2: {
      const auto& c = pick_category(rng);
      return "we talked about " + join(member_words(c, 2 + uniform_index(rng, 3), 1, rng)) + " and " + c.name + " .";
    }
    case 3: {
      const bool pos = rng() % 2 == 0;
      return join(polar_words(pos, 2 + uniform_index(rng, 2), 1 + uniform_index(rng, 2), rng)) + " this is " +
             (pos ? "good" : "bad") + " .";
    }
    case 4: {
      const bool pos = rng() % 2 == 0;
      return std::string("it was ") + (pos ? "good" : "bad") + " , " +
             join(polar_words(pos, 2 + uniform_index(rng, 2), uniform_index(rng, 2), rng)) + " .";
    }
    case 5: {
      const bool pos = rng() % 2 == 0;
      return join(polar_words(pos, 1 + uniform_index(rng, 3), 1, rng)) + " the mood is " + (pos ? "good" : "bad") +
             " .";
    }
    case 6: {
      std::size_t a = 0, b = 0;
      const auto& c = pick_category(rng, &a);
      const bool same = rng() % 2 == 0;
      const Category* d = &c;
      if (!same) {
        do d = &pick_category(rng, &b);
        while (b == a);
      }
      return join(member_words(c, 3, 0, rng)) + " | " + join(member_words(*d, 3, 0, rng)) + " they are " +
             (same ? "the same" : "different") + " .";
    }
    case 7: {
      const auto& c = pick_category(rng);
      return "a " + pick(c.members, rng) + " and a " + pick(c.members, rng) + " go with " + c.name + " .";
    }
    default: {
      const bool pos = rng() % 2 == 0;
      const auto& c = pick_category(rng);
      return "the " + pick(c.members, rng) + " was " + pick(pos ? kPositive : kNegative, rng) + " so it was " +
             (pos ? "good" : "bad") + " .";
    }
  }
}

DatasetSpec topic_spec() {
  DatasetSpec d;
  d.id = "topic";
  d.task.task_name = "Topic Classification";
  d.task.kind = TaskKind::SingleText;
  for (const auto& c : categories()) d.task.labels.push_back(c.name);
  d.templates = {{"this", "this is {label_desc}", "", {}},
                 {"was", "it was {label_desc}", "", {}},
                 {"topic", "the topic is {label_desc}", "", {}}};
  return d;
}

DatasetSpec sentiment_spec() {
  DatasetSpec d;
  d.id = "sentiment";
  d.task.task_name = "Sentiment Classification";
  d.task.kind = TaskKind::SingleText;
  d.task.labels = {"positive", "negative"};
  const std::map<std::string, std::string> desc = {{"positive", "good"}, {"negative", "bad"}};
  d.templates = {{"this", "this is {label_desc}", "", desc},
                 {"was", "it was {label_desc}", "", desc},
                 {"mood", "the mood is {label_desc}", "", desc}};
  return d;
}

DatasetSpec pair_spec() {
  DatasetSpec d;
  d.id = "pair";
  d.task.task_name = "Paraphrase";
  d.task.kind = TaskKind::TextPair;
  d.task.labels = {"match", "differ"};
  const std::map<std::string, std::string> desc = {{"match", "the same"}, {"differ", "different"}};
  d.templates = {{"they", "they are {label_desc}", "", desc},
                 {"two", "the two are {label_desc}", "", desc},
                 {"lists", "these lists are {label_desc}", "", desc}};
  return d;
}

RawExample topic_example(const std::string& id, Rng& rng) {
  RawExample ex;
  ex.id = id;
  const auto& c = pick_category(rng);
  ex.fields["text"] = join(member_words(c, 3 + uniform_index(rng, 3), uniform_index(rng, 3), rng));
  ex.gold_label = c.name;
  return ex;
}

RawExample sentiment_example(const std::string& id, Rng& rng) {
  RawExample ex;
  ex.id = id;
  const bool pos = rng() % 2 == 0;
  ex.fields["text"] = join(polar_words(pos, 2 + uniform_index(rng, 3), 1 + uniform_index(rng, 3), rng));
  ex.gold_label = pos ? "positive" : "negative";
  return ex;
}

RawExample pair_example(const std::string& id, Rng& rng) {
  RawExample ex;
  ex.id = id;
  std::size_t a = 0, b = 0;
  const auto& c = pick_category(rng, &a);
  const bool same = rng() % 2 == 0;
  const Category* d = &c;
  if (!same) {
    do d = &pick_category(rng, &b);
    while (b == a);
  }
  ex.fields["text"] = join(member_words(c, 2 + uniform_index(rng, 3), 0, rng));
  ex.fields["text2"] = join(member_words(*d, 2 + uniform_index(rng, 3), 0, rng));
  ex.gold_label = same ? "match" : "differ";
  return ex;
}

DatasetInput make_dataset(DatasetSpec spec, std::size_t n, std::uint64_t seed, const char* split) {
  DatasetInput in;
  Rng rng(derive_seed(seed, "synthetic:" + spec.id + ":" + split));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = spec.id + "-" + split + "-" + std::to_string(i);
    if (spec.id == "topic") in.examples.push_back(topic_example(id, rng));
    else if (spec.id == "sentiment") in.examples.push_back(sentiment_example(id, rng));
    else in.examples.push_back(pair_example(id, rng));
  }
  in.spec = std::move(spec);
  return in;
}

void write_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

std::vector<std::string> synthetic_dataset_ids() { return {"topic", "sentiment", "pair"}; }

SyntheticSuite make_synthetic_suite(const SyntheticOptions& o) {
  SyntheticSuite s;
  Rng corpus_rng(derive_seed(o.seed, "synthetic:corpus"));
  for (std::size_t i = 0; i < o.corpus_lines; ++i) s.corpus.push_back(corpus_line(corpus_rng));
  Rng heldout_rng(derive_seed(o.seed, "synthetic:heldout"));
  for (std::size_t i = 0; i < o.heldout_lines; ++i) s.heldout_corpus.push_back(corpus_line(heldout_rng));
  for (auto spec : {topic_spec(), sentiment_spec(), pair_spec()}) {
    spec.validate();
    s.train.push_back(make_dataset(spec, o.train_examples, o.seed, "train"));
    s.eval.push_back(make_dataset(spec, o.eval_examples, o.seed, "eval"));
  }
  return s;
}

void write_synthetic_suite(const SyntheticSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_lines(suite.corpus, dir / "corpus.txt");
  write_lines(suite.heldout_corpus, dir / "heldout.txt");
  std::vector<DatasetSpec> specs;
  for (std::size_t i = 0; i < suite.train.size(); ++i) {
    DatasetSpec spec = suite.train[i].spec;
    spec.source = spec.id + ".train.jsonl";
    spec.eval_source = spec.id + ".eval.jsonl";
    write_raw_jsonl(suite.train[i].examples, dir / spec.source);
    write_raw_jsonl(suite.eval[i].examples, dir / spec.eval_source);
    specs.push_back(std::move(spec));
  }
  save_registry(specs, dir / "registry.json");
}

}  // namespace dualsig
