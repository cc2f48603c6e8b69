#pragma once

// Deterministic synthetic corpora.
//
// The packaged twitter2015/twitter2017 benchmarks reproduce the published
// per-split class statistics exactly while carrying generated tweet text,
// captions, scene graphs and region features. The tiny "demo" corpus is a
// 20-sample set built to be separable only when the classifier can see the
// target: it contains one sentence shared by two targets with opposite
// labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"
#include "seqcsg/nn.hpp"

namespace seqcsg {

struct SplitCounts {
  int positive = 0;
  int neutral = 0;
  int negative = 0;
  int total() const { return positive + neutral + negative; }
};

struct DatasetStats {
  SplitCounts train, dev, test;
};

inline const std::map<std::string, DatasetStats>& benchmark_stats() {
  static const std::map<std::string, DatasetStats> stats = {
      {"twitter2015",
       {{928, 1883, 368}, {303, 670, 149}, {317, 607, 113}}},
      {"twitter2017",
       {{1508, 1638, 416}, {515, 517, 144}, {493, 573, 168}}},
  };
  return stats;
}

struct CorpusBundle {
  DatasetSplit train, dev, test;
  std::vector<CaptionRecord> captions;
  SceneGraphFile graphs;
};

namespace synth_detail {

inline const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {
      "sara",   "devon",  "marcus", "lena",  "theo",   "ines",
      "ravi",   "paula",  "owen",   "mira",  "caleb",  "nora",
      "felix",  "dana",   "jonas",  "edith", "victor", "zola"};
  return v;
}
inline const std::vector<std::string>& last_names() {
  static const std::vector<std::string> v = {
      "holt",   "price",  "navarro", "okafor", "lindt",  "mercer",
      "bauer",  "quint",  "aldana",  "ferris", "monroe", "tate"};
  return v;
}
inline const std::vector<std::string>& places() {
  static const std::vector<std::string> v = {
      "riverton",  "eastfield", "port arden", "maplewood",
      "kestrel bay", "norwick",  "salt flats", "gran villa"};
  return v;
}

inline const std::vector<std::string>& positive_templates() {
  static const std::vector<std::string> v = {
      "huge congrats to $T$ on the big win !",
      "so proud of $T$ today , what a great performance",
      "love this shot of $T$ , absolutely brilliant",
      "$T$ just made my day , fantastic news",
      "what an amazing crowd for $T$ tonight",
      "cheers to $T$ for the best show of the year"};
  return v;
}
inline const std::vector<std::string>& neutral_templates() {
  static const std::vector<std::string> v = {
      "$T$ is holding a press briefing this afternoon",
      "photo of $T$ near the central station",
      "$T$ announced the schedule for next week",
      "spotted $T$ at the airport this morning",
      "$T$ appears in the latest city report",
      "the panel will include $T$ on friday"};
  return v;
}
inline const std::vector<std::string>& negative_templates() {
  static const std::vector<std::string> v = {
      "really disappointed with $T$ after that awful game",
      "$T$ cancelled again , this is terrible",
      "worst part of the trip was $T$ , never again",
      "$T$ keeps letting everyone down , so frustrating",
      "cannot believe how bad $T$ looked today",
      "that was a sad outing for $T$ honestly"};
  return v;
}

inline const std::vector<std::string>& objects() {
  static const std::vector<std::string> v = {
      "man",    "woman",  "trophy", "stage", "crowd",  "street",
      "car",    "banner", "field",  "table", "camera", "building",
      "player", "sign",   "tree",   "dog"};
  return v;
}
inline const std::vector<std::string>& relations() {
  static const std::vector<std::string> v = {
      "holding", "near", "behind", "on", "watching", "wearing",
      "in front of", "next to"};
  return v;
}
inline const std::vector<std::string>& caption_templates() {
  static const std::vector<std::string> v = {
      "a %s %s a %s", "a %s and a %s near a %s", "a %s %s a %s outside"};
  return v;
}

inline double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

inline std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[rng.index(pool.size())];
}

inline std::string make_caption(Rng& rng) {
  std::string a = pick(objects(), rng);
  std::string r = pick(relations(), rng);
  std::string b = pick(objects(), rng);
  return "a " + a + " " + r + " a " + b;
}

inline SceneGraphRecord make_graph(const std::string& image_id, int fdim,
                                   Rng& rng) {
  SceneGraphRecord g;
  g.image_id = image_id;
  g.feature_dim = fdim;
  const int n_oo = 5 + static_cast<int>(rng.index(4));  // 5..8
  for (int i = 0; i < n_oo; ++i) {
    ObjectTriple t;
    t.subject = pick(objects(), rng);
    t.predicate = pick(relations(), rng);
    t.object = pick(objects(), rng);
    t.score = round4(rng.uniform());
    g.object_object.push_back(std::move(t));
  }
  const int n_io = 5 + static_cast<int>(rng.index(4));
  for (int i = 0; i < n_io; ++i) {
    ImageTriple t;
    t.region_id = image_id + "_r" + std::to_string(i);
    t.object = pick(objects(), rng);
    t.score = round4(rng.uniform());
    std::vector<double> feat(fdim);
    for (auto& x : feat) x = round4(rng.normal());
    g.region_features[t.region_id] = std::move(feat);
    g.image_object.push_back(std::move(t));
  }
  return g;
}

inline std::string make_target(Rng& rng) {
  switch (rng.index(3)) {
    case 0: return pick(first_names(), rng) + " " + pick(last_names(), rng);
    case 1: return pick(first_names(), rng);
    default: return pick(places(), rng);
  }
}

inline const std::vector<std::string>& templates_for(Label l) {
  switch (l) {
    case Label::Positive: return positive_templates();
    case Label::Negative: return negative_templates();
    default: return neutral_templates();
  }
}

}  // namespace synth_detail

// Builds one benchmark split with exact class counts. Samples are grouped
// onto shared images (one or two targets per image) so the multi-target
// scenario occurs naturally.
inline void make_split(const std::string& dataset, const std::string& split_name,
                       const SplitCounts& counts, int feature_dim,
                       CorpusBundle& bundle, DatasetSplit& split) {
  split.name = split_name;
  std::uint64_t seed = 0x5eedc5 ^ std::hash<std::string>{}(dataset + "/" + split_name);
  Rng rng(seed);

  std::vector<Label> labels;
  labels.insert(labels.end(), counts.positive, Label::Positive);
  labels.insert(labels.end(), counts.neutral, Label::Neutral);
  labels.insert(labels.end(), counts.negative, Label::Negative);
  std::shuffle(labels.begin(), labels.end(), rng.gen);

  int image_seq = 0;
  std::size_t i = 0;
  while (i < labels.size()) {
    const std::string image_id =
        dataset + "_" + split_name + "_img" + std::to_string(image_seq++);
    bundle.captions.push_back({image_id, synth_detail::make_caption(rng)});
    // Roughly 3 in 10 images carry two targets.
    bool has_graph = rng.index(50) != 0;  // a few images lack a scene graph
    if (has_graph)
      bundle.graphs.records.push_back(
          synth_detail::make_graph(image_id, feature_dim, rng));
    std::size_t group = (rng.index(10) < 3 && i + 1 < labels.size()) ? 2 : 1;
    for (std::size_t k = 0; k < group; ++k, ++i) {
      Sample s;
      s.sample_id = dataset + "_" + split_name + "_" + std::to_string(i);
      s.label = labels[i];
      s.target = synth_detail::make_target(rng);
      const auto& tmpl = synth_detail::templates_for(s.label);
      s.tweet = tmpl[rng.index(tmpl.size())];
      s.image_id = image_id;
      split.samples.push_back(std::move(s));
    }
  }
}

inline CorpusBundle make_benchmark(const std::string& dataset,
                                   int feature_dim = 8) {
  auto it = benchmark_stats().find(dataset);
  if (it == benchmark_stats().end())
    throw ConfigError("unknown benchmark '" + dataset +
                      "' (expected twitter2015 or twitter2017)");
  CorpusBundle bundle;
  bundle.graphs.feature_dim = feature_dim;
  make_split(dataset, "train", it->second.train, feature_dim, bundle, bundle.train);
  make_split(dataset, "dev", it->second.dev, feature_dim, bundle, bundle.dev);
  make_split(dataset, "test", it->second.test, feature_dim, bundle, bundle.test);
  return bundle;
}

// The 20-sample corpus: 18 samples with distinctive sentiment wording, plus
// one sentence carrying two targets with opposite labels ("alice" positive,
// "bob" negative). Only the target tells those two apart.
inline CorpusBundle make_overfit_corpus(int feature_dim = 4) {
  CorpusBundle bundle;
  bundle.graphs.feature_dim = feature_dim;
  bundle.train.name = "train";
  Rng rng(0xdecaf);

  auto add_image = [&](const std::string& image_id) {
    bundle.captions.push_back({image_id, synth_detail::make_caption(rng)});
    bundle.graphs.records.push_back(
        synth_detail::make_graph(image_id, feature_dim, rng));
  };

  // The target-dependent pair: one sentence, two targets, opposite labels.
  // Both mentions arrive pre-marked, so the cleaned tweet (and with it the
  // whole encoder input) is identical for the two samples; only the prompt
  // can tell them apart.
  add_image("demo_img_pair");
  Sample a;
  a.sample_id = "demo_0";
  a.label = Label::Positive;
  a.target = "alice";
  a.tweet =
      "big day for [target] alice [/target] and [target] bob [/target] at the plaza";
  a.image_id = "demo_img_pair";
  bundle.train.samples.push_back(a);
  Sample b = a;
  b.sample_id = "demo_1";
  b.label = Label::Negative;
  b.target = "bob";
  bundle.train.samples.push_back(b);

  const Label cycle[3] = {Label::Positive, Label::Neutral, Label::Negative};
  for (int i = 0; i < 18; ++i) {
    const Label label = cycle[i % 3];
    const std::string image_id = "demo_img" + std::to_string(i);
    add_image(image_id);
    Sample s;
    s.sample_id = "demo_" + std::to_string(i + 2);
    s.label = label;
    s.target = synth_detail::pick(synth_detail::places(), rng) + " " +
               std::to_string(i);
    const auto& tmpl = synth_detail::templates_for(label);
    s.tweet = tmpl[i % tmpl.size()];
    s.image_id = image_id;
    bundle.train.samples.push_back(std::move(s));
  }
  // The demo corpus doubles as its own dev/test split.
  bundle.dev = bundle.train;
  bundle.dev.name = "dev";
  bundle.test = bundle.train;
  bundle.test.name = "test";
  return bundle;
}

// Region features depend on the image-encoder tag, everything else is
// shared. Regenerates feature values with a tag-specific stream.
inline SceneGraphFile with_encoder_features(const SceneGraphFile& base,
                                            const std::string& encoder_tag) {
  SceneGraphFile out = base;
  Rng rng(0xfea7 ^ std::hash<std::string>{}(encoder_tag));
  for (auto& rec : out.records)
    for (auto& [region, feat] : rec.region_features)
      for (auto& v : feat) v = synth_detail::round4(rng.normal());
  return out;
}

// Writes a bundle using the on-disk layout the CLI expects:
//   <dir>/{train,dev,test}.tsv, captions.tsv, scene_graphs.<tag>.sgf
inline void write_bundle(const CorpusBundle& bundle, const std::string& dir,
                         const std::vector<std::string>& encoder_tags) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_split(bundle.train, dir + "/train.tsv");
  save_split(bundle.dev, dir + "/dev.tsv");
  save_split(bundle.test, dir + "/test.tsv");
  save_captions(bundle.captions, dir + "/captions.tsv");
  for (const auto& tag : encoder_tags)
    save_scene_graphs(with_encoder_features(bundle.graphs, tag),
                      dir + "/scene_graphs." + tag + ".sgf");
}

inline CorpusBundle make_named_corpus(const std::string& dataset,
                                      int feature_dim) {
  if (dataset == "demo") return make_overfit_corpus(feature_dim);
  return make_benchmark(dataset, feature_dim);
}

}  // namespace seqcsg
