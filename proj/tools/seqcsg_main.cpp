// seqcsg command-line tool: data validation and generation, training,
// evaluation, ablations, triple sweeps, and attention visualization.
//
// Exit codes: 0 success, 2 data/validation failure, 3 configuration or
// usage failure, 4 runtime failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"
#include "seqcsg/harness.hpp"
#include "seqcsg/heatmap.hpp"
#include "seqcsg/manifest.hpp"
#include "seqcsg/model.hpp"
#include "seqcsg/semgraph.hpp"
#include "seqcsg/synth.hpp"

#ifndef SEQCSG_VERSION
#define SEQCSG_VERSION "dev"
#endif

namespace {

using namespace seqcsg;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitData = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct DataArgs {
  std::string data_root;
  std::string dataset;
  std::string data_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data-root", data_root,
                    "Root directory holding one subdirectory per dataset")
        ->envname("SEQCSG_DATA_ROOT");
    cmd->add_option("--dataset", dataset,
                    "Dataset name under the data root (e.g. twitter2015)");
    cmd->add_option("--data-dir", data_dir,
                    "Explicit dataset directory (overrides root/dataset)");
  }

  std::string resolve() const {
    if (!data_dir.empty()) return data_dir;
    if (data_root.empty() || dataset.empty())
      throw ConfigError(
          "need --data-dir, or --dataset with --data-root (or SEQCSG_DATA_ROOT)");
    return data_root + "/" + dataset;
  }
};

struct ModelArgs {
  int hidden_size = 64;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int n_max = 160;
  double dropout = 0.1;
  double delta = -1e9;
  std::string tmpl = "plain";

  void attach(CLI::App* cmd) {
    cmd->add_option("--hidden-size", hidden_size, "Model hidden size d");
    cmd->add_option("--heads", n_heads, "Attention head count");
    cmd->add_option("--enc-layers", enc_layers, "Encoder layer count");
    cmd->add_option("--dec-layers", dec_layers, "Decoder layer count");
    cmd->add_option("--n-max", n_max, "Encoder length budget");
    cmd->add_option("--dropout", dropout, "Classifier-head dropout rate");
    cmd->add_option("--delta", delta, "Masked-logit constant");
    cmd->add_option("--template", tmpl, "Input template")
        ->check(CLI::IsMember({"plain", "tagged"}));
  }

  ModelConfig to_config(int feature_dim) const {
    ModelConfig mc;
    mc.d = hidden_size;
    mc.n_heads = n_heads;
    mc.n_layers_enc = enc_layers;
    mc.n_layers_dec = dec_layers;
    mc.n_max = n_max;
    mc.dropout_p = dropout;
    mc.delta = delta;
    mc.feature_dim = feature_dim;
    auto t = parse_template(tmpl);
    if (!t) throw ConfigError("unknown template " + tmpl);
    mc.input_template = *t;
    mc.validate();
    return mc;
  }
};

struct TrainArgs {
  TrainConfig tc;
  std::vector<std::string> ablate;

  void attach(CLI::App* cmd, bool with_ablate = true) {
    cmd->add_option("--epochs", tc.max_epochs, "Training epochs");
    cmd->add_option("--batch-size", tc.batch_size, "Batch size");
    cmd->add_option("--lr", tc.learning_rate, "Peak learning rate");
    cmd->add_option("--warmup-frac", tc.warmup_fraction,
                    "Linear warmup fraction of total steps");
    cmd->add_option("--weight-decay", tc.weight_decay, "AdamW weight decay");
    cmd->add_option("--grad-clip", tc.grad_clip,
                    "Global-norm gradient clip (<=0 disables)");
    cmd->add_option("--seed", tc.seed, "Random seed");
    cmd->add_option("--k-object-object", tc.k_object_object,
                    "Object-object triple budget");
    cmd->add_option("--k-image-object", tc.k_image_object,
                    "Image-object triple budget");
    cmd->add_option("--image-encoder", tc.image_encoder,
                    "Region-feature file variant")
        ->check(CLI::IsMember({"resnet18", "resnet34", "resnet50", "resnet101"}));
    if (with_ablate)
      cmd->add_option("--ablate", ablate,
                      "Ablation switch (repeatable): caption, adjacency-matrix, "
                      "adjacency-matrix-scene-graph, prompt, freeze");
  }
};

int feature_dim_of(const std::string& data_dir, const std::string& encoder) {
  std::string path = data_dir + "/scene_graphs." + encoder + ".sgf";
  if (!fs::exists(path)) {
    std::string fallback = data_dir + "/scene_graphs.sgf";
    if (!fs::exists(fallback))
      throw IoError("no scene-graph file for image encoder '" + encoder +
                    "' under " + data_dir);
    path = fallback;
  }
  return load_scene_graphs(path).feature_dim;
}

nlohmann::json train_config_json(const TrainConfig& tc) {
  return {{"max_epochs", tc.max_epochs},
          {"batch_size", tc.batch_size},
          {"learning_rate", tc.learning_rate},
          {"warmup_fraction", tc.warmup_fraction},
          {"weight_decay", tc.weight_decay},
          {"grad_clip", tc.grad_clip},
          {"seed", tc.seed},
          {"k_object_object", tc.k_object_object},
          {"k_image_object", tc.k_image_object},
          {"image_encoder", tc.image_encoder}};
}

std::map<std::string, std::string> digest_dataset_dir(const std::string& dir) {
  std::map<std::string, std::string> digests;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.ends_with(".tsv") || name.ends_with(".sgf"))
      digests[entry.path().string()] = sha256_file(entry.path().string());
  }
  return digests;
}

RunManifest base_manifest(const std::string& command, std::uint64_t seed,
                          nlohmann::json config) {
  RunManifest m;
  m.command = command;
  m.code_version = SEQCSG_VERSION;
  m.seed = seed;
  m.config = std::move(config);
  return m;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const DataArgs& data) {
  const std::string dir = data.resolve();
  std::vector<Finding> findings;
  auto absorb = [&](std::vector<Finding> f) {
    findings.insert(findings.end(), f.begin(), f.end());
  };

  std::set<std::string> image_ids_with_caption;
  for (const char* split : {"train", "dev", "test"}) {
    std::string path = dir + "/" + split + ".tsv";
    if (fs::exists(path))
      absorb(validate_split_file(path));
    else
      findings.push_back({path, 0, "missing split file"});
  }
  std::string caption_path = dir + "/captions.tsv";
  if (fs::exists(caption_path)) {
    absorb(validate_caption_file(caption_path));
    try {
      for (const auto& c : load_captions(caption_path))
        image_ids_with_caption.insert(c.image_id);
    } catch (const Error&) {
      // already reported by the validator
    }
  } else {
    findings.push_back({caption_path, 0, "missing caption file"});
  }
  bool saw_graph_file = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("scene_graphs", 0) == 0 && name.ends_with(".sgf")) {
      saw_graph_file = true;
      absorb(validate_scene_graph_file(entry.path().string()));
    }
  }
  if (!saw_graph_file)
    findings.push_back({dir, 0, "no scene_graphs.*.sgf file"});

  // Cross-file rule: every referenced image needs a caption.
  for (const char* split : {"train", "dev", "test"}) {
    std::string path = dir + "/" + split + ".tsv";
    if (!fs::exists(path)) continue;
    try {
      for (const auto& s : load_split(path, split).samples)
        if (!image_ids_with_caption.count(s.image_id))
          findings.push_back(
              {path, 0, "image " + s.image_id + " has no caption"});
    } catch (const Error&) {
      // parse findings already recorded
    }
  }

  for (const auto& f : findings) {
    std::cout << f.file;
    if (f.line) std::cout << ':' << f.line;
    std::cout << ": " << f.message << '\n';
  }
  std::cout << (findings.empty() ? "OK" : "FAILED") << ": " << findings.size()
            << " finding(s) in " << dir << '\n';
  return findings.empty() ? kExitOk : kExitData;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& dataset, const std::string& out_dir,
                 int fdim, const std::vector<std::string>& encoders,
                 bool force) {
  if (fs::exists(out_dir + "/train.tsv") && !force)
    throw IoError(out_dir + " already holds a dataset; use --force to regenerate");
  CorpusBundle bundle = make_named_corpus(dataset, fdim);
  write_bundle(bundle, out_dir, encoders);
  std::cout << "wrote " << dataset << " to " << out_dir << " ("
            << bundle.train.samples.size() << "/" << bundle.dev.samples.size()
            << "/" << bundle.test.samples.size() << " train/dev/test samples, fdim="
            << fdim << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

int cmd_train(const DataArgs& data, const ModelArgs& margs, TrainArgs targs,
              const std::string& out_dir, const std::string& init_checkpoint,
              bool force) {
  const std::string dir = data.resolve();
  targs.tc.validate();

  // Warm starts reuse the checkpoint's architecture and vocabulary; the
  // model-shape flags only apply to fresh models.
  std::optional<Model> warm;
  ModelConfig mc;
  if (init_checkpoint.empty()) {
    mc = margs.to_config(feature_dim_of(dir, targs.tc.image_encoder));
    for (const auto& flag : targs.ablate) mc = apply_ablation(mc, flag);
  } else {
    warm = Model::load(init_checkpoint);
    mc = warm->cfg;
    for (const auto& flag : targs.ablate) mc = apply_ablation(mc, flag);
    warm->cfg = mc;
    warm->set_adapter_trainable(!mc.flags.freeze_image_encoder);
  }

  DirLock lock(out_dir);
  nlohmann::json config = {{"model", mc}, {"train", train_config_json(targs.tc)},
                           {"ablate", targs.ablate}};
  if (!init_checkpoint.empty()) config["init_checkpoint"] = init_checkpoint;
  RunManifest manifest = base_manifest("train", targs.tc.seed, config);
  manifest.input_digests = digest_dataset_dir(dir);
  if (!init_checkpoint.empty())
    manifest.input_digests[init_checkpoint] = sha256_file(init_checkpoint);
  manifest.outputs = {{"checkpoint", "checkpoint.bin"},
                      {"metrics", "metrics.jsonl"},
                      {"dev_predictions", "dev_predictions.jsonl"}};
  write_manifest(manifest, out_dir, force);

  JoinedData joined =
      load_joined_data(dir, targs.tc.image_encoder, mc.flags.use_caption);
  PreparedCorpus corpus =
      warm ? prepare_corpus_with_vocab(joined, mc, warm->vocab,
                                       targs.tc.k_object_object,
                                       targs.tc.k_image_object)
           : prepare_corpus(joined, mc, targs.tc.k_object_object,
                            targs.tc.k_image_object);
  Model model = warm ? std::move(*warm) : Model(mc, corpus.vocab, targs.tc.seed);

  auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(model, corpus.train, corpus.dev, targs.tc);
  auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);

  result.best_model.save(out_dir + "/checkpoint.bin");
  write_metrics_log(result.log, out_dir + "/metrics.jsonl");
  EvalResult dev_eval = evaluate(result.best_model, corpus.dev);
  write_predictions(dev_eval.predictions, out_dir + "/dev_predictions.jsonl");

  std::cout << "trained " << result.steps << " steps in " << dt.count()
            << " s; best dev macro-F1 " << result.best_dev_macro_f1
            << " at epoch " << result.best_epoch << "; artifacts in "
            << out_dir << '\n';
  return kExitOk;
}

int cmd_eval(const DataArgs& data, const std::string& checkpoint,
             const std::string& split, const TrainConfig& tc,
             const std::string& out_dir, bool force) {
  const std::string dir = data.resolve();
  Model model = Model::load(checkpoint);

  DirLock lock(out_dir);
  nlohmann::json config = {{"model", model.cfg},
                           {"train", train_config_json(tc)},
                           {"split", split},
                           {"checkpoint", checkpoint}};
  RunManifest manifest = base_manifest("eval", tc.seed, config);
  manifest.input_digests = digest_dataset_dir(dir);
  manifest.input_digests[checkpoint] = sha256_file(checkpoint);
  manifest.outputs = {{"metrics", "metrics.json"},
                      {"predictions", "predictions.jsonl"}};
  write_manifest(manifest, out_dir, force);

  JoinedData joined =
      load_joined_data(dir, tc.image_encoder, model.cfg.flags.use_caption);
  const std::vector<JoinedSample>* samples = nullptr;
  if (split == "train") samples = &joined.train;
  else if (split == "dev") samples = &joined.dev;
  else if (split == "test") samples = &joined.test;
  else throw ConfigError("unknown split '" + split + "'");
  if (samples->empty()) throw ValidationError("split '" + split + "' is empty");

  std::vector<PreparedSample> prepared;
  prepared.reserve(samples->size());
  for (const auto& j : *samples)
    prepared.push_back(prepare_sample(j, model.cfg, model.vocab,
                                      tc.k_object_object, tc.k_image_object));
  EvalResult ev = evaluate(model, prepared);
  write_predictions(ev.predictions, out_dir + "/predictions.jsonl");

  nlohmann::json metrics = {
      {"split", split},
      {"accuracy", ev.report.accuracy()},
      {"macro_f1", ev.report.macro_f1()},
      {"mean_loss", ev.mean_loss},
      {"confusion", ev.report.confusion}};
  for (int c = 0; c < kLabelCount; ++c) {
    auto name = label_name(static_cast<Label>(c));
    metrics["per_class"][name] = {{"precision", ev.report.precision(c)},
                                  {"recall", ev.report.recall(c)},
                                  {"f1", ev.report.f1(c)}};
  }
  std::ofstream mout(out_dir + "/metrics.json", std::ios::binary);
  mout << metrics.dump(2) << '\n';

  std::cout << split << ": accuracy " << ev.report.accuracy() << ", macro-F1 "
            << ev.report.macro_f1() << " over " << prepared.size()
            << " samples; artifacts in " << out_dir << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate / sweep
// ---------------------------------------------------------------------------

int cmd_ablate(const DataArgs& data, const ModelArgs& margs,
               const TrainArgs& targs, std::vector<std::string> flags,
               const std::string& out_dir, bool force) {
  const std::string dir = data.resolve();
  if (flags.empty())
    for (const auto& [name, display] : ablation_catalog())
      if (name != "full") flags.push_back(name);
  for (const auto& f : flags) ablation_display_name(f);  // validate early

  ModelConfig mc = margs.to_config(feature_dim_of(dir, targs.tc.image_encoder));

  DirLock lock(out_dir);
  nlohmann::json config = {{"model", mc},
                           {"train", train_config_json(targs.tc)},
                           {"flags", flags}};
  RunManifest manifest = base_manifest("ablate", targs.tc.seed, config);
  manifest.input_digests = digest_dataset_dir(dir);
  manifest.outputs = {{"table", "ablation.tsv"}};
  write_manifest(manifest, out_dir, force);

  JoinedData joined = load_joined_data(dir, targs.tc.image_encoder,
                                       /*require_caption=*/false);
  auto rows = run_ablation(mc, targs.tc, joined, flags);
  write_ablation_table(rows, out_dir + "/ablation.tsv");
  std::cout << "method\taccuracy\tmacro_f1\n";
  for (const auto& r : rows)
    std::cout << r.display << '\t' << r.accuracy << '\t' << r.macro_f1 << '\n';
  return kExitOk;
}

int cmd_sweep(const DataArgs& data, const ModelArgs& margs,
              const TrainArgs& targs, std::vector<int> ks,
              const std::string& out_dir, bool force) {
  const std::string dir = data.resolve();
  if (ks.empty())
    for (int k = 0; k <= 10; ++k) ks.push_back(k);

  ModelConfig mc = margs.to_config(feature_dim_of(dir, targs.tc.image_encoder));

  DirLock lock(out_dir);
  nlohmann::json config = {{"model", mc},
                           {"train", train_config_json(targs.tc)},
                           {"k_values", ks}};
  RunManifest manifest = base_manifest("sweep", targs.tc.seed, config);
  manifest.input_digests = digest_dataset_dir(dir);
  manifest.outputs = {{"table", "sweep.tsv"}};
  write_manifest(manifest, out_dir, force);

  JoinedData joined = load_joined_data(dir, targs.tc.image_encoder,
                                       mc.flags.use_caption);
  auto rows = run_triple_sweep(mc, targs.tc, joined, ks);
  write_sweep_table(rows, out_dir + "/sweep.tsv");
  std::cout << "k\taccuracy\tmacro_f1\n";
  for (const auto& r : rows)
    std::cout << r.k << '\t' << r.accuracy << '\t' << r.macro_f1 << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// visualize / matrix / plot
// ---------------------------------------------------------------------------

const JoinedSample* find_sample(const std::vector<JoinedSample>& samples,
                                const std::string& sample_id) {
  for (const auto& s : samples)
    if (s.sample.sample_id == sample_id) return &s;
  return nullptr;
}

void write_weights_file(const CrossAttentionExtract& ex,
                        const std::vector<std::string>& region_ids,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "layer\thead\trow_sum";
  for (const auto& r : region_ids) out << '\t' << r;
  out << '\n';
  out.precision(17);
  for (std::size_t l = 0; l < ex.weights.size(); ++l)
    for (std::size_t h = 0; h < ex.weights[l].size(); ++h) {
      out << l << '\t' << h << '\t' << ex.row_sums[l][h];
      for (double w : ex.weights[l][h]) out << '\t' << w;
      out << '\n';
    }
  out << "mean\tmean\t1";
  for (double w : ex.mean) out << '\t' << w;
  out << '\n';
}

std::vector<std::vector<double>> weight_rows(const CrossAttentionExtract& ex) {
  std::vector<std::vector<double>> rows;
  for (const auto& layer : ex.weights)
    for (const auto& head : layer) rows.push_back(head);
  rows.push_back(ex.mean);
  return rows;
}

int cmd_visualize(const DataArgs& data, const std::string& checkpoint,
                  const std::string& split, const std::string& sample_id,
                  const TrainConfig& tc, const std::string& out_dir,
                  bool force) {
  const std::string dir = data.resolve();
  Model model = Model::load(checkpoint);
  JoinedData joined =
      load_joined_data(dir, tc.image_encoder, model.cfg.flags.use_caption);
  const std::vector<JoinedSample>* samples = nullptr;
  if (split == "train") samples = &joined.train;
  else if (split == "dev") samples = &joined.dev;
  else if (split == "test") samples = &joined.test;
  else throw ConfigError("unknown split '" + split + "'");
  const JoinedSample* j = find_sample(*samples, sample_id);
  if (!j) throw ValidationError("sample " + sample_id + " not in " + split);

  PreparedSample ps = prepare_sample(*j, model.cfg, model.vocab,
                                     tc.k_object_object, tc.k_image_object);
  if (ps.img_positions.empty()) {
    std::cout << "nothing to visualize: sample " << sample_id
              << " has no sub-image tokens\n";
    return kExitOk;
  }

  ForwardOptions opts;
  opts.keep_attention = true;
  Model::Output out = model.forward(ps.enc, ps.dec, opts);
  CrossAttentionExtract ex = extract_cross_attention(out, ps.img_positions);

  DirLock lock(out_dir);
  nlohmann::json config = {{"model", model.cfg},
                           {"sample_id", sample_id},
                           {"split", split},
                           {"checkpoint", checkpoint}};
  RunManifest manifest = base_manifest("visualize", tc.seed, config);
  manifest.input_digests[checkpoint] = sha256_file(checkpoint);
  manifest.outputs = {{"weights", "attention_weights.tsv"},
                      {"figure", "attention_heatmap.ppm"}};
  write_manifest(manifest, out_dir, force);

  std::vector<std::string> region_ids;
  for (int pos : ps.img_positions)
    region_ids.push_back(ps.seq.tokens[pos].region_id);
  write_weights_file(ex, region_ids, out_dir + "/attention_weights.tsv");
  render_heatmap(weight_rows(ex)).save(out_dir + "/attention_heatmap.ppm");

  std::cout << "wrote attention over " << ps.img_positions.size()
            << " sub-image tokens to " << out_dir << '\n';
  return kExitOk;
}

int cmd_matrix(const DataArgs& data, const std::string& split,
               const std::string& sample_id, const ModelArgs& margs,
               const TrainConfig& tc, const std::string& out_prefix) {
  const std::string dir = data.resolve();
  ModelConfig mc = margs.to_config(feature_dim_of(dir, tc.image_encoder));
  JoinedData joined = load_joined_data(dir, tc.image_encoder,
                                       mc.flags.use_caption);
  const std::vector<JoinedSample>* samples = nullptr;
  if (split == "train") samples = &joined.train;
  else if (split == "dev") samples = &joined.dev;
  else if (split == "test") samples = &joined.test;
  else throw ConfigError("unknown split '" + split + "'");
  const JoinedSample* j = find_sample(*samples, sample_id);
  if (!j) throw ValidationError("sample " + sample_id + " not in " + split);

  SemanticSequence seq =
      build_sequence(*j, mc, tc.k_object_object, tc.k_image_object);
  VisibilityMatrix m = build_visibility_matrix(seq);

  std::ofstream txt(out_prefix + ".txt", std::ios::binary);
  if (!txt) throw IoError("cannot write " + out_prefix + ".txt");
  txt << m.text_grid();
  std::ofstream bin(out_prefix + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + out_prefix + ".bin");
  bin.write(reinterpret_cast<const char*>(m.binary_blob().data()),
            static_cast<std::streamsize>(m.binary_blob().size()));

  std::cout << "sequence of " << seq.size() << " tokens; matrix written to "
            << out_prefix << ".txt and " << out_prefix << ".bin\n";
  return kExitOk;
}

int cmd_plot(const std::string& table, const std::string& weights,
             const std::string& out_path) {
  if (table.empty() == weights.empty())
    throw ConfigError("pass exactly one of --table or --weights");
  if (!weights.empty()) {
    // Re-render a numeric attention file; identical input bytes give an
    // identical figure.
    auto lines = detail::file_lines(detail::read_file(weights));
    if (lines.size() < 2) throw ValidationError(weights + ": no data rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto fields = str::split(lines[i], '\t');
      if (fields.size() < 4) throw ValidationError(weights + ": short row");
      std::vector<double> row;
      for (std::size_t c = 3; c < fields.size(); ++c)
        row.push_back(detail::parse_score(fields[c], weights, i + 1));
      rows.push_back(std::move(row));
    }
    render_heatmap(rows).save(out_path);
  } else {
    auto lines = detail::file_lines(detail::read_file(table));
    if (lines.size() < 3) throw ValidationError(table + ": need >= 2 data rows");
    auto header = str::split(lines[0], '\t');
    std::vector<double> xs;
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (std::size_t c = 1; c < header.size(); ++c)
      series.push_back({header[c], {}});
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto fields = str::split(lines[i], '\t');
      if (fields.size() != header.size())
        throw ValidationError(table + ": ragged row " + std::to_string(i + 1));
      char* end = nullptr;
      double x = std::strtod(fields[0].c_str(), &end);
      xs.push_back(*end == '\0' ? x : static_cast<double>(i - 1));
      for (std::size_t c = 1; c < fields.size(); ++c)
        series[c - 1].second.push_back(
            detail::parse_score(fields[c], table, i + 1));
    }
    render_line_chart(xs, series).save(out_path);
  }
  std::cout << "wrote " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqcsg: target-oriented multi-modal sentiment classification "
               "over sequential cross-modal semantic graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SEQCSG_VERSION);
  // Flag values beat config-file values, which beat the built-in defaults.
  // Subcommand options live in sections, e.g. [train] epochs=30.
  app.set_config("--config", "",
                 "Read options from an INI/TOML file (one section per "
                 "subcommand); command-line flags take precedence");

  int rc = kExitOk;
  std::function<int()> action;

  // validate
  {
    auto* cmd = app.add_subcommand("validate", "Check dataset files");
    auto data = std::make_shared<DataArgs>();
    data->attach(cmd);
    cmd->callback([&action, data] {
      action = [data] { return cmd_validate(*data); };
    });
  }

  // gen-data
  {
    auto* cmd = app.add_subcommand(
        "gen-data", "Generate a packaged synthetic dataset");
    auto dataset = std::make_shared<std::string>("demo");
    auto out = std::make_shared<std::string>();
    auto fdim = std::make_shared<int>(8);
    auto encoders = std::make_shared<std::vector<std::string>>(
        std::vector<std::string>{"resnet50"});
    auto force = std::make_shared<bool>(false);
    cmd->add_option("--dataset", *dataset, "twitter2015, twitter2017, or demo")
        ->check(CLI::IsMember({"twitter2015", "twitter2017", "demo"}));
    cmd->add_option("--out", *out, "Output directory")->required();
    cmd->add_option("--fdim", *fdim, "Region feature dimensionality");
    cmd->add_option("--image-encoder", *encoders,
                    "Feature-file variants to emit");
    cmd->add_flag("--force", *force, "Regenerate over an existing dataset");
    cmd->callback([&action, dataset, out, fdim, encoders, force] {
      action = [=] { return cmd_gen_data(*dataset, *out, *fdim, *encoders, *force); };
    });
  }

  // train
  {
    auto* cmd = app.add_subcommand("train", "Train a model");
    auto data = std::make_shared<DataArgs>();
    auto margs = std::make_shared<ModelArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto out = std::make_shared<std::string>();
    auto init = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    data->attach(cmd);
    margs->attach(cmd);
    targs->attach(cmd);
    cmd->add_option("--out", *out, "Run output directory")->required();
    cmd->add_option("--init-checkpoint", *init,
                    "Warm-start from an existing checkpoint");
    cmd->add_flag("--force", *force, "Overwrite an existing run directory");
    cmd->callback([&action, data, margs, targs, out, init, force] {
      action = [=] {
        return cmd_train(*data, *margs, *targs, *out, *init, *force);
      };
    });
  }

  // eval
  {
    auto* cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    auto data = std::make_shared<DataArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto checkpoint = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto out = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    data->attach(cmd);
    targs->attach(cmd, /*with_ablate=*/false);
    cmd->add_option("--checkpoint", *checkpoint, "Checkpoint file")->required();
    cmd->add_option("--split", *split, "Split name")
        ->check(CLI::IsMember({"train", "dev", "test"}));
    cmd->add_option("--out", *out, "Run output directory")->required();
    cmd->add_flag("--force", *force, "Overwrite an existing run directory");
    cmd->callback([&action, data, targs, checkpoint, split, out, force] {
      action = [=] {
        return cmd_eval(*data, *checkpoint, *split, targs->tc, *out, *force);
      };
    });
  }

  // ablate
  {
    auto* cmd = app.add_subcommand("ablate", "Run the ablation matrix");
    auto data = std::make_shared<DataArgs>();
    auto margs = std::make_shared<ModelArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto flags = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    data->attach(cmd);
    margs->attach(cmd);
    targs->attach(cmd, /*with_ablate=*/false);
    cmd->add_option("--flags", *flags,
                    "Ablation switches to run (default: all five)");
    cmd->add_option("--out", *out, "Run output directory")->required();
    cmd->add_flag("--force", *force, "Overwrite an existing run directory");
    cmd->callback([&action, data, margs, targs, flags, out, force] {
      action = [=] {
        return cmd_ablate(*data, *margs, *targs, *flags, *out, *force);
      };
    });
  }

  // sweep
  {
    auto* cmd = app.add_subcommand("sweep", "Triple-count sweep");
    auto data = std::make_shared<DataArgs>();
    auto margs = std::make_shared<ModelArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto ks = std::make_shared<std::vector<int>>();
    auto out = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    data->attach(cmd);
    margs->attach(cmd);
    targs->attach(cmd, /*with_ablate=*/false);
    cmd->add_option("--k", *ks, "Triple budgets to sweep (default 0..10)")
        ->check(CLI::Range(0, 10));
    cmd->add_option("--out", *out, "Run output directory")->required();
    cmd->add_flag("--force", *force, "Overwrite an existing run directory");
    cmd->callback([&action, data, margs, targs, ks, out, force] {
      action = [=] {
        return cmd_sweep(*data, *margs, *targs, *ks, *out, *force);
      };
    });
  }

  // visualize
  {
    auto* cmd = app.add_subcommand(
        "visualize", "Cross-attention heatmap for one sample");
    auto data = std::make_shared<DataArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto checkpoint = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto sample_id = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    data->attach(cmd);
    targs->attach(cmd, /*with_ablate=*/false);
    cmd->add_option("--checkpoint", *checkpoint, "Checkpoint file")->required();
    cmd->add_option("--split", *split, "Split name")
        ->check(CLI::IsMember({"train", "dev", "test"}));
    cmd->add_option("--sample-id", *sample_id, "Sample to visualize")->required();
    cmd->add_option("--out", *out, "Run output directory")->required();
    cmd->add_flag("--force", *force, "Overwrite an existing run directory");
    cmd->callback([&action, data, targs, checkpoint, split, sample_id, out, force] {
      action = [=] {
        return cmd_visualize(*data, *checkpoint, *split, *sample_id, targs->tc,
                             *out, *force);
      };
    });
  }

  // matrix
  {
    auto* cmd = app.add_subcommand(
        "matrix", "Dump a sample's visibility matrix (debug)");
    auto data = std::make_shared<DataArgs>();
    auto margs = std::make_shared<ModelArgs>();
    auto targs = std::make_shared<TrainArgs>();
    auto split = std::make_shared<std::string>("train");
    auto sample_id = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    data->attach(cmd);
    margs->attach(cmd);
    targs->attach(cmd, /*with_ablate=*/false);
    cmd->add_option("--split", *split, "Split name")
        ->check(CLI::IsMember({"train", "dev", "test"}));
    cmd->add_option("--sample-id", *sample_id, "Sample to dump")->required();
    cmd->add_option("--out", *out, "Output path prefix")->required();
    cmd->callback([&action, data, margs, targs, split, sample_id, out] {
      action = [=] {
        return cmd_matrix(*data, *split, *sample_id, *margs, targs->tc, *out);
      };
    });
  }

  // plot
  {
    auto* cmd = app.add_subcommand(
        "plot", "Render a sweep/ablation table or attention weights file");
    auto table = std::make_shared<std::string>();
    auto weights = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--table", *table, "Delimiter-separated metrics table");
    cmd->add_option("--weights", *weights, "Attention weights file");
    cmd->add_option("--out", *out, "Output image (.ppm)")->required();
    cmd->callback([&action, table, weights, out] {
      action = [=] { return cmd_plot(*table, *weights, *out); };
    });
  }

  try {
    app.parse(argc, argv);
    if (action) rc = action();
  } catch (const CLI::ParseError& e) {
    int cli_rc = app.exit(e);
    return cli_rc == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitData;
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << '\n';
    return kExitData;
  } catch (const MissingTargetError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FeatureLookupError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CapacityError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return rc;
}
