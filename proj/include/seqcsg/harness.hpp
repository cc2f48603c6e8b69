#pragma once

// Training loop, evaluation, ablation matrix, and the triple-count sweep.
// Runs are deterministic for a fixed seed: single-threaded kernels, seeded
// shuffles, and a seeded dropout stream.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"
#include "seqcsg/metrics.hpp"
#include "seqcsg/model.hpp"
#include "seqcsg/semgraph.hpp"

namespace seqcsg {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  int max_epochs = 30;
  int batch_size = 16;
  double learning_rate = 2e-5;  // published choice for twitter2015; 1e-5 for twitter2017
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
  std::uint64_t seed = 42;
  int k_object_object = 5;
  int k_image_object = 5;
  std::string image_encoder = "resnet50";

  void validate() const {
    if (max_epochs <= 0 || batch_size <= 0)
      throw ConfigError("epoch and batch counts must be positive");
    // learning_rate 0 is allowed: it must leave parameters unchanged.
    if (learning_rate < 0) throw ConfigError("learning rate must be >= 0");
    if (warmup_fraction < 0 || warmup_fraction > 1)
      throw ConfigError("warmup fraction must lie in [0, 1]");
    if (k_object_object < 0 || k_image_object < 0)
      throw ConfigError("triple budgets must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Sample preparation
// ---------------------------------------------------------------------------

struct PreparedSample {
  std::string sample_id;
  std::string target;
  int gold = 0;
  SemanticSequence seq;  // assembled and truncated encoder sequence
  EncoderInput enc;
  DecoderInput dec;
  std::vector<int> img_positions;
};

struct PreparedCorpus {
  Vocabulary vocab;
  std::vector<PreparedSample> train, dev, test;
};

struct JoinedData {
  std::vector<JoinedSample> train, dev, test;
};

// Builds the encoder sequence for one joined sample under the active flags.
inline SemanticSequence build_sequence(const JoinedSample& joined,
                                       const ModelConfig& mc, int k_oo,
                                       int k_io) {
  const std::string cleaned = clean_tweet(joined.sample);
  const std::string caption = mc.flags.use_caption ? joined.caption : "";
  std::vector<SeqToken> triple_tokens;
  if (mc.flags.use_scene_graph) {
    SelectedTriples selected = select_triples(joined.graph, k_oo, k_io);
    triple_tokens = serialize_triples(selected);
  }
  SemanticSequence seq = assemble_input(triple_tokens, caption, cleaned,
                                        mc.input_template);
  return truncate(seq, mc.n_max);
}

inline PreparedSample prepare_sample(const JoinedSample& joined,
                                     const ModelConfig& mc,
                                     const Vocabulary& vocab, int k_oo,
                                     int k_io) {
  PreparedSample out;
  out.sample_id = joined.sample.sample_id;
  out.target = joined.sample.target;
  out.gold = static_cast<int>(joined.sample.label);
  out.seq = build_sequence(joined, mc, k_oo, k_io);
  out.enc = make_encoder_input(out.seq, joined.graph, vocab, mc.feature_dim);
  out.dec = make_decoder_input(
      build_prompt_tokens(joined.sample.target, mc.flags.use_prompt), vocab);
  out.img_positions = out.seq.subimage_positions();
  return out;
}

// Vocabulary comes from the training split only; dev/test words not seen
// there resolve to [unk].
inline Vocabulary build_vocabulary(const std::vector<JoinedSample>& train,
                                   const ModelConfig& mc, int k_oo, int k_io) {
  Vocabulary vocab = Vocabulary::with_specials();
  for (const auto& joined : train) {
    SemanticSequence seq = build_sequence(joined, mc, k_oo, k_io);
    for (const auto& t : seq.tokens) vocab.add(t.surface);
    for (const auto& w :
         build_prompt_tokens(joined.sample.target, /*use_prompt=*/true))
      vocab.add(w);
  }
  return vocab;
}

inline PreparedCorpus prepare_corpus_with_vocab(const JoinedData& data,
                                                const ModelConfig& mc,
                                                Vocabulary vocab, int k_oo,
                                                int k_io) {
  PreparedCorpus out;
  out.vocab = std::move(vocab);
  auto prep = [&](const std::vector<JoinedSample>& in,
                  std::vector<PreparedSample>& dst) {
    dst.reserve(in.size());
    for (const auto& j : in)
      dst.push_back(prepare_sample(j, mc, out.vocab, k_oo, k_io));
  };
  prep(data.train, out.train);
  prep(data.dev, out.dev);
  prep(data.test, out.test);
  return out;
}

inline PreparedCorpus prepare_corpus(const JoinedData& data,
                                     const ModelConfig& mc, int k_oo,
                                     int k_io) {
  return prepare_corpus_with_vocab(
      data, mc, build_vocabulary(data.train, mc, k_oo, k_io), k_oo, k_io);
}

// Loads the on-disk dataset layout and joins all three splits.
inline JoinedData load_joined_data(const std::string& dir,
                                   const std::string& image_encoder,
                                   bool require_caption) {
  namespace fs = std::filesystem;
  DatasetSplit train = load_split(dir + "/train.tsv", "train");
  DatasetSplit dev = load_split(dir + "/dev.tsv", "dev");
  DatasetSplit test = load_split(dir + "/test.tsv", "test");
  auto captions = load_captions(dir + "/captions.tsv");
  std::string graph_path = dir + "/scene_graphs." + image_encoder + ".sgf";
  if (!fs::exists(graph_path)) {
    std::string fallback = dir + "/scene_graphs.sgf";
    if (fs::exists(fallback))
      graph_path = fallback;
    else
      throw IoError("no scene-graph file for image encoder '" + image_encoder +
                    "' under " + dir);
  }
  auto graphs = load_scene_graphs(graph_path);
  JoinedData out;
  out.train = join_sources(train, captions, graphs.records, require_caption);
  out.dev = join_sources(dev, captions, graphs.records, require_caption);
  out.test = join_sources(test, captions, graphs.records, require_caption);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Prediction {
  std::string sample_id;
  int gold = 0;
  int predicted = 0;
  std::array<double, kLabelCount> probabilities{};
};

struct EvalResult {
  MetricsReport report;
  std::vector<Prediction> predictions;
  double mean_loss = 0.0;
};

inline int argmax3(const Eigen::Vector3d& p) {
  int best = 0;
  for (int c = 1; c < kLabelCount; ++c)
    if (p(c) > p(best)) best = c;
  return best;
}

inline EvalResult evaluate(const Model& model,
                           const std::vector<PreparedSample>& samples) {
  EvalResult out;
  out.predictions.reserve(samples.size());
  double loss_sum = 0.0;
  for (const auto& s : samples) {
    Model::Output o = model.forward(s.enc, s.dec);
    Prediction p;
    p.sample_id = s.sample_id;
    p.gold = s.gold;
    p.predicted = argmax3(o.probs);
    for (int c = 0; c < kLabelCount; ++c) p.probabilities[c] = o.probs(c);
    loss_sum += Model::loss(o.probs, s.gold);
    out.report.add(p.gold, p.predicted);
    out.predictions.push_back(std::move(p));
  }
  if (!samples.empty()) out.mean_loss = loss_sum / static_cast<double>(samples.size());
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  std::string split;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Model best_model;
  int best_epoch = -1;
  double best_dev_macro_f1 = -1.0;
  std::vector<EpochRecord> log;
  std::int64_t steps = 0;
};

// Epoch loop with linear warmup/decay and decoupled weight decay; keeps the
// checkpoint with the best dev macro-F1.
inline TrainResult train(Model& model,
                         const std::vector<PreparedSample>& train_samples,
                         const std::vector<PreparedSample>& dev_samples,
                         const TrainConfig& tc) {
  tc.validate();
  if (train_samples.empty() || dev_samples.empty())
    throw ValidationError("train and dev splits must be non-empty");

  auto params = model.parameters();
  AdamW opt;
  opt.weight_decay = tc.weight_decay;
  opt.reset(params);

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_samples.size()) + tc.batch_size - 1) /
      tc.batch_size;
  const std::int64_t total_steps = steps_per_epoch * tc.max_epochs;

  Rng shuffle_rng(tc.seed);
  Rng dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.gen);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      const double batch_n = static_cast<double>(end - start);
      zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const PreparedSample& s = train_samples[order[i]];
        Model::Trace trace;
        Model::ForwardOptions opts;
        opts.training = true;
        opts.dropout_rng = &dropout_rng;
        model.forward(s.enc, s.dec, opts, &trace);
        batch_loss += model.backward(trace, s.gold, 1.0 / batch_n);
      }
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("non-finite loss at epoch " +
                               std::to_string(epoch) + ", step " +
                               std::to_string(step));
      clip_global_norm(params, tc.grad_clip);
      const double lr = warmup_linear_lr(tc.learning_rate, step, total_steps,
                                         tc.warmup_fraction);
      opt.step(params, lr);
      ++step;
    }

    EvalResult train_eval = evaluate(model, train_samples);
    EvalResult dev_eval = evaluate(model, dev_samples);
    result.log.push_back({epoch, "train", train_eval.report.accuracy(),
                          train_eval.report.macro_f1(), train_eval.mean_loss});
    result.log.push_back({epoch, "dev", dev_eval.report.accuracy(),
                          dev_eval.report.macro_f1(), dev_eval.mean_loss});
    if (dev_eval.report.macro_f1() > result.best_dev_macro_f1) {
      result.best_dev_macro_f1 = dev_eval.report.macro_f1();
      result.best_epoch = epoch;
      result.best_model = model;
    }
  }
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

// Canonical ablation switches; display names follow the reporting table.
inline const std::vector<std::pair<std::string, std::string>>&
ablation_catalog() {
  static const std::vector<std::pair<std::string, std::string>> v = {
      {"full", "SeqCSG"},
      {"caption", "w/o {caption}"},
      {"adjacency-matrix", "w/o {adjacency matrix}"},
      {"adjacency-matrix-scene-graph", "w/o {adjacency matrix & scene graph}"},
      {"prompt", "w/o {prompt}"},
      {"freeze", "w/o {freeze}"},
  };
  return v;
}

inline std::string ablation_display_name(const std::string& flag) {
  for (const auto& [name, display] : ablation_catalog())
    if (name == flag) return display;
  throw ValidationError("unknown ablation flag '" + flag + "'");
}

inline ModelConfig apply_ablation(ModelConfig cfg, const std::string& flag) {
  if (flag == "full") return cfg;
  if (flag == "caption") {
    cfg.flags.use_caption = false;
  } else if (flag == "adjacency-matrix") {
    cfg.flags.use_visibility_matrix = false;
  } else if (flag == "adjacency-matrix-scene-graph") {
    cfg.flags.use_visibility_matrix = false;
    cfg.flags.use_scene_graph = false;
  } else if (flag == "prompt") {
    cfg.flags.use_prompt = false;
  } else if (flag == "freeze") {
    cfg.flags.freeze_image_encoder = false;
  } else {
    throw ValidationError("unknown ablation flag '" + flag + "'");
  }
  return cfg;
}

struct AblationRow {
  std::string flag;
  std::string display;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct SweepRow {
  int k = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

// One train+evaluate per requested configuration; metrics come from the
// test split under the best-dev checkpoint.
inline std::vector<AblationRow> run_ablation(const ModelConfig& base,
                                             const TrainConfig& tc,
                                             const JoinedData& data,
                                             const std::vector<std::string>& flags) {
  std::vector<AblationRow> rows;
  for (const auto& flag : flags) {
    AblationRow row;
    row.flag = flag;
    row.display = ablation_display_name(flag);
    ModelConfig mc = apply_ablation(base, flag);
    PreparedCorpus corpus =
        prepare_corpus(data, mc, tc.k_object_object, tc.k_image_object);
    Model model(mc, corpus.vocab, tc.seed);
    TrainResult tr = train(model, corpus.train, corpus.dev, tc);
    EvalResult ev = evaluate(tr.best_model, corpus.test);
    row.accuracy = ev.report.accuracy();
    row.macro_f1 = ev.report.macro_f1();
    rows.push_back(std::move(row));
  }
  return rows;
}

// Metrics per triple budget k, with both budgets set to k.
inline std::vector<SweepRow> run_triple_sweep(const ModelConfig& base,
                                              const TrainConfig& tc,
                                              const JoinedData& data,
                                              const std::vector<int>& ks) {
  std::vector<SweepRow> rows;
  for (int k : ks) {
    if (k < 0 || k > 10)
      throw ValidationError("sweep k values must lie in 0..10");
    TrainConfig tck = tc;
    tck.k_object_object = k;
    tck.k_image_object = k;
    PreparedCorpus corpus = prepare_corpus(data, base, k, k);
    Model model(base, corpus.vocab, tck.seed);
    TrainResult tr = train(model, corpus.train, corpus.dev, tck);
    EvalResult ev = evaluate(tr.best_model, corpus.test);
    rows.push_back({k, ev.report.accuracy(), ev.report.macro_f1()});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Persistence of run artifacts
// ---------------------------------------------------------------------------

inline void write_metrics_log(const std::vector<EpochRecord>& log,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : log) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"split", r.split},
                        {"accuracy", r.accuracy},
                        {"macro_f1", r.macro_f1},
                        {"loss", r.loss}};
    out << j.dump() << '\n';
  }
}

inline void write_predictions(const std::vector<Prediction>& preds,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& p : preds) {
    nlohmann::json j = {
        {"sample_id", p.sample_id},
        {"gold", label_name(static_cast<Label>(p.gold))},
        {"predicted", label_name(static_cast<Label>(p.predicted))},
        {"probabilities", p.probabilities}};
    out << j.dump() << '\n';
  }
}

inline void write_ablation_table(const std::vector<AblationRow>& rows,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "method\taccuracy\tmacro_f1\n";
  for (const auto& r : rows)
    out << r.display << '\t' << r.accuracy << '\t' << r.macro_f1 << '\n';
}

inline void write_sweep_table(const std::vector<SweepRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "k\taccuracy\tmacro_f1\n";
  for (const auto& r : rows)
    out << r.k << '\t' << r.accuracy << '\t' << r.macro_f1 << '\n';
}

}  // namespace seqcsg
