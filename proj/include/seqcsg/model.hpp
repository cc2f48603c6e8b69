#pragma once

// The classifier network: mixed text/sub-image embeddings, a
// visibility-masked encoder, a target-prompt decoder, and a 3-way
// classification head read from the decoder's [mask] position.

#include <array>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"
#include "seqcsg/nn.hpp"
#include "seqcsg/semgraph.hpp"

namespace seqcsg {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

// Word-level vocabulary: a fixed block of special tokens followed by words
// collected from the training corpus. Unknown words map to [unk].
struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static const std::vector<std::string>& specials() {
    static const std::vector<std::string> s = {
        "[pad]",     "[unk]",     "[s]",     "[/s]",      "[ts]",
        "[img]",     "[mask]",    "[target]", "[/target]", "[triple]",
        "[/triple]", "[caption]", "[/caption]", "[tweet]", "[/tweet]"};
    return s;
  }

  static Vocabulary with_specials() {
    Vocabulary v;
    for (const auto& s : specials()) v.add(s);
    return v;
  }

  int add(const std::string& token) {
    auto it = index.find(token);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(tokens.size());
    tokens.push_back(token);
    index.emplace(token, id);
    return id;
  }

  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? unk_id() : it->second;
  }

  int size() const { return static_cast<int>(tokens.size()); }
  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int mask_id() const { return 6; }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct AblationFlags {
  bool use_caption = true;
  bool use_scene_graph = true;
  bool use_visibility_matrix = true;
  bool use_prompt = true;
  bool freeze_image_encoder = true;
};

struct ModelConfig {
  int d = 64;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  double delta = -1e9;      // masked-logit constant
  double dropout_p = 0.1;   // classifier-head dropout
  int feature_dim = 8;      // dimensionality of region feature vectors
  int n_max = 160;          // encoder length budget
  int max_prompt_len = 64;  // decoder length budget
  int label_count = kLabelCount;
  AblationFlags flags;
  InputTemplate input_template = InputTemplate::Plain;

  void validate() const {
    if (d <= 0 || n_heads <= 0 || d % n_heads != 0)
      throw ConfigError("hidden size must be a positive multiple of n_heads");
    if (n_layers_enc <= 0 || n_layers_dec <= 0)
      throw ConfigError("layer counts must be positive");
    if (delta > -1e4) throw ConfigError("delta must be <= -1e4");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigError("dropout_p must lie in [0, 1)");
    if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
    if (n_max <= 0 || max_prompt_len <= 0)
      throw ConfigError("length budgets must be positive");
    if (label_count != kLabelCount)
      throw ConfigError("the classifier is 3-way");
  }
};

inline void to_json(nlohmann::json& j, const AblationFlags& f) {
  j = {{"use_caption", f.use_caption},
       {"use_scene_graph", f.use_scene_graph},
       {"use_visibility_matrix", f.use_visibility_matrix},
       {"use_prompt", f.use_prompt},
       {"freeze_image_encoder", f.freeze_image_encoder}};
}
inline void from_json(const nlohmann::json& j, AblationFlags& f) {
  j.at("use_caption").get_to(f.use_caption);
  j.at("use_scene_graph").get_to(f.use_scene_graph);
  j.at("use_visibility_matrix").get_to(f.use_visibility_matrix);
  j.at("use_prompt").get_to(f.use_prompt);
  j.at("freeze_image_encoder").get_to(f.freeze_image_encoder);
}
inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d", c.d},
       {"n_layers_enc", c.n_layers_enc},
       {"n_layers_dec", c.n_layers_dec},
       {"n_heads", c.n_heads},
       {"delta", c.delta},
       {"dropout_p", c.dropout_p},
       {"feature_dim", c.feature_dim},
       {"n_max", c.n_max},
       {"max_prompt_len", c.max_prompt_len},
       {"label_count", c.label_count},
       {"flags", c.flags},
       {"template", template_name(c.input_template)}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d").get_to(c.d);
  j.at("n_layers_enc").get_to(c.n_layers_enc);
  j.at("n_layers_dec").get_to(c.n_layers_dec);
  j.at("n_heads").get_to(c.n_heads);
  j.at("delta").get_to(c.delta);
  j.at("dropout_p").get_to(c.dropout_p);
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("n_max").get_to(c.n_max);
  j.at("max_prompt_len").get_to(c.max_prompt_len);
  j.at("label_count").get_to(c.label_count);
  j.at("flags").get_to(c.flags);
  auto tmpl = parse_template(j.at("template").get<std::string>());
  if (!tmpl) throw ConfigError("unknown template in checkpoint");
  c.input_template = *tmpl;
}

// ---------------------------------------------------------------------------
// Model inputs
// ---------------------------------------------------------------------------

struct EncoderInput {
  std::vector<int> ids;          // vocabulary ids per position
  std::vector<int> feature_row;  // -1 for text tokens, else a row of `feats`
  Mat feats;                     // one row per sub-image token
  VisibilityMatrix vis;

  int length() const { return static_cast<int>(ids.size()); }
};

struct DecoderInput {
  std::vector<int> ids;
  int mask_pos = -1;

  int length() const { return static_cast<int>(ids.size()); }
};

// Prompt template: "<target> is [mask] .", or bare "[mask]" when the
// prompt is ablated away.
inline std::vector<std::string> build_prompt_tokens(const std::string& target,
                                                    bool use_prompt = true) {
  if (str::trim(target).empty())
    throw ValidationError("prompt target must be non-empty");
  std::vector<std::string> out;
  if (use_prompt) {
    for (auto& w : str::words(str::normalize_whitespace(target)))
      out.push_back(std::move(w));
    out.push_back("is");
    out.push_back(std::string(kMaskToken));
    out.push_back(".");
  } else {
    out.push_back(std::string(kMaskToken));
  }
  return out;
}

inline DecoderInput make_decoder_input(const std::vector<std::string>& tokens,
                                       const Vocabulary& vocab) {
  DecoderInput in;
  in.ids.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    in.ids.push_back(vocab.id(tokens[i]));
    if (tokens[i] == kMaskToken) {
      if (in.mask_pos >= 0)
        throw ContractViolation("prompt contains more than one [mask]");
      in.mask_pos = static_cast<int>(i);
    }
  }
  if (in.mask_pos < 0) throw ContractViolation("prompt contains no [mask]");
  return in;
}

// Resolves a semantic sequence against the vocabulary and region features.
inline EncoderInput make_encoder_input(const SemanticSequence& seq,
                                       const SceneGraphRecord& graph,
                                       const Vocabulary& vocab,
                                       int feature_dim) {
  EncoderInput in;
  const int n = seq.size();
  in.ids.reserve(n);
  in.feature_row.assign(n, -1);
  std::vector<const std::vector<double>*> feat_rows;
  for (int i = 0; i < n; ++i) {
    const auto& t = seq.tokens[i];
    in.ids.push_back(vocab.id(t.surface));
    if (t.role == TokenRole::SubImage) {
      auto it = graph.region_features.find(t.region_id);
      if (it == graph.region_features.end())
        throw FeatureLookupError("no feature vector for region " + t.region_id +
                                 " of image " + graph.image_id);
      if (static_cast<int>(it->second.size()) != feature_dim)
        throw FeatureLookupError("feature vector for region " + t.region_id +
                                 " has dimension " +
                                 std::to_string(it->second.size()) +
                                 ", expected " + std::to_string(feature_dim));
      in.feature_row[i] = static_cast<int>(feat_rows.size());
      feat_rows.push_back(&it->second);
    }
  }
  in.feats.resize(static_cast<Eigen::Index>(feat_rows.size()), feature_dim);
  for (std::size_t r = 0; r < feat_rows.size(); ++r)
    for (int c = 0; c < feature_dim; ++c) in.feats(r, c) = (*feat_rows[r])[c];
  in.vis = build_visibility_matrix(seq);
  return in;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;
  bool keep_attention = false;  // retain decoder cross-attention maps
};

// Everything a backward pass needs from the corresponding forward pass.
struct ForwardTrace {
  EncoderInput enc_in;
  DecoderInput dec_in;
  Mat adapter_out;  // rows aligned with enc_in.feats
  std::vector<EncoderLayer::Cache> enc_caches;
  std::vector<DecoderLayer::Cache> dec_caches;
  Mat enc_out;
  Mat head_input;    // 1 x d, pre-dropout
  Mat dropout_mask;  // 1 x d
  Mat dropped;       // 1 x d
  Eigen::Vector3d probs;
};

struct ForwardOutput {
  Eigen::Vector3d probs = Eigen::Vector3d::Zero();
  // cross_attention[layer][head]: n_dec x n_enc softmax rows.
  std::vector<std::vector<Mat>> cross_attention;
  int mask_pos = -1;
};

class Model {
 public:
  ModelConfig cfg;
  Vocabulary vocab;

  Param tok_emb;   // V x d
  Param type_emb;  // 2 x d (text row 0, image row 1)
  Param pos_enc;   // n_max x d
  Param pos_dec;   // max_prompt_len x d
  Linear img_adapter;  // f -> f stand-in for an unfrozen image encoder
  Linear img_proj;     // f -> d
  std::vector<EncoderLayer> enc_layers;
  std::vector<DecoderLayer> dec_layers;
  Linear head;  // d -> 3
  Dropout head_dropout;

  Model() = default;

  Model(ModelConfig config, Vocabulary vocabulary, std::uint64_t seed)
      : cfg(std::move(config)), vocab(std::move(vocabulary)) {
    cfg.validate();
    Rng rng(seed);
    const double stddev = 0.02;
    tok_emb.init_normal(vocab.size(), cfg.d, rng, stddev);
    type_emb.init_normal(2, cfg.d, rng, stddev);
    pos_enc.init_normal(cfg.n_max, cfg.d, rng, stddev);
    pos_dec.init_normal(cfg.max_prompt_len, cfg.d, rng, stddev);
    img_adapter.init_identity(cfg.feature_dim);
    set_adapter_trainable(!cfg.flags.freeze_image_encoder);
    img_proj.init(cfg.feature_dim, cfg.d, rng, stddev);
    enc_layers.resize(cfg.n_layers_enc);
    for (auto& l : enc_layers) l.init(cfg.d, cfg.n_heads, cfg.delta, rng);
    dec_layers.resize(cfg.n_layers_dec);
    for (auto& l : dec_layers) l.init(cfg.d, cfg.n_heads, cfg.delta, rng);
    head.init(cfg.d, cfg.label_count, rng, stddev);
    head_dropout.p = cfg.dropout_p;
  }

  void set_adapter_trainable(bool trainable) {
    img_adapter.w.trainable = trainable;
    img_adapter.b.trainable = trainable;
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    out.push_back({"tok_emb", &tok_emb});
    out.push_back({"type_emb", &type_emb});
    out.push_back({"pos_enc", &pos_enc});
    out.push_back({"pos_dec", &pos_dec});
    img_adapter.collect("img_adapter", out);
    img_proj.collect("img_proj", out);
    for (std::size_t i = 0; i < enc_layers.size(); ++i)
      enc_layers[i].collect("enc." + std::to_string(i), out);
    for (std::size_t i = 0; i < dec_layers.size(); ++i)
      dec_layers[i].collect("dec." + std::to_string(i), out);
    head.collect("head", out);
    return out;
  }

  // -------------------------------------------------------------------------
  // Forward
  // -------------------------------------------------------------------------

  using Trace = ForwardTrace;
  using Output = ForwardOutput;
  using ForwardOptions = seqcsg::ForwardOptions;

  // Embeds the encoder sequence: element + type + position.
  Mat embed_encoder(const EncoderInput& in, Mat* adapter_out) const {
    const int n = in.length();
    if (n > cfg.n_max)
      throw ContractViolation("encoder input longer than n_max");
    Mat adapted, projected;
    if (in.feats.rows() > 0) {
      adapted = img_adapter.forward(in.feats);
      projected = img_proj.forward(adapted);
    }
    Mat x(n, cfg.d);
    for (int i = 0; i < n; ++i) {
      const int fr = in.feature_row[i];
      if (fr >= 0) {
        x.row(i) = projected.row(fr) + type_emb.v.row(1);
      } else {
        x.row(i) = tok_emb.v.row(in.ids[i]) + type_emb.v.row(0);
      }
      x.row(i) += pos_enc.v.row(i);
    }
    if (adapter_out) *adapter_out = std::move(adapted);
    return x;
  }

  Mat embed_decoder(const DecoderInput& in) const {
    const int n = in.length();
    if (n > cfg.max_prompt_len)
      throw ContractViolation("prompt longer than max_prompt_len");
    Mat x(n, cfg.d);
    for (int i = 0; i < n; ++i)
      x.row(i) = tok_emb.v.row(in.ids[i]) + pos_dec.v.row(i);
    return x;
  }

  // Dense attention mask for the encoder. With the visibility matrix
  // ablated, every element sees every other.
  Mat encoder_mask(const EncoderInput& in) const {
    const int n = in.length();
    if (!cfg.flags.use_visibility_matrix) return full_mask(n, n);
    if (in.vis.n != n) throw ContractViolation("visibility matrix size mismatch");
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = in.vis.at(i, j) ? 1.0 : 0.0;
    return m;
  }

  // Encoder-only pass; exposed separately so ablation wiring can be checked
  // against an explicit all-ones matrix.
  Mat encode(const EncoderInput& in, Trace* trace = nullptr) const {
    Mat mask = encoder_mask(in);
    return encode_with_mask(in, mask, trace);
  }

  Mat encode_with_mask(const EncoderInput& in, const Mat& mask,
                       Trace* trace) const {
    Mat x = embed_encoder(in, trace ? &trace->adapter_out : nullptr);
    if (trace) trace->enc_caches.resize(enc_layers.size());
    for (std::size_t l = 0; l < enc_layers.size(); ++l)
      x = enc_layers[l].forward(x, mask,
                                trace ? &trace->enc_caches[l] : nullptr);
    return x;
  }

  // 3-way head: softmax(linear(dropout(h))).
  Eigen::Vector3d classify(const Mat& h_mask, const ForwardOptions& opts,
                           Trace* trace) const {
    Mat dropped = head_dropout.forward(h_mask, opts.training, opts.dropout_rng,
                                       trace ? &trace->dropout_mask : nullptr);
    Mat logits = head.forward(dropped);
    Mat probs = row_softmax(logits);
    if (trace) {
      trace->head_input = h_mask;
      trace->dropped = std::move(dropped);
    }
    return probs.row(0).transpose();
  }

  Eigen::Vector3d classify(const Vec& h_mask) const {
    return classify(Mat(h_mask.transpose()), ForwardOptions{}, nullptr);
  }

  Output forward(const EncoderInput& enc_in, const DecoderInput& dec_in,
                 const ForwardOptions& opts = ForwardOptions(),
                 Trace* trace = nullptr) const {
    if (dec_in.mask_pos < 0 || dec_in.mask_pos >= dec_in.length())
      throw ContractViolation("decoder input needs a valid [mask] position");
    const int n_dec = dec_in.length();
    Mat self_mask = causal_mask(n_dec);
    Mat cross_mask = full_mask(n_dec, enc_in.length());
    return forward_with_masks(enc_in, dec_in, encoder_mask(enc_in), self_mask,
                              cross_mask, opts, trace);
  }

  // Fully explicit variant used by the padded-batch path: all three
  // attention masks are supplied by the caller.
  Output forward_with_masks(const EncoderInput& enc_in,
                            const DecoderInput& dec_in, const Mat& enc_mask,
                            const Mat& self_mask, const Mat& cross_mask,
                            const ForwardOptions& opts,
                            Trace* trace = nullptr) const {
    Output out;
    out.mask_pos = dec_in.mask_pos;
    if (trace) {
      trace->enc_in = enc_in;
      trace->dec_in = dec_in;
    }
    Mat enc_out = encode_with_mask(enc_in, enc_mask, trace);

    Mat x = embed_decoder(dec_in);
    std::vector<DecoderLayer::Cache> local_caches;
    std::vector<DecoderLayer::Cache>* caches = nullptr;
    if (trace) {
      trace->dec_caches.resize(dec_layers.size());
      caches = &trace->dec_caches;
    } else if (opts.keep_attention) {
      local_caches.resize(dec_layers.size());
      caches = &local_caches;
    }
    for (std::size_t l = 0; l < dec_layers.size(); ++l)
      x = dec_layers[l].forward(x, enc_out, self_mask, cross_mask,
                                caches ? &(*caches)[l] : nullptr);

    Mat h_mask = x.row(dec_in.mask_pos);
    out.probs = classify(h_mask, opts, trace);
    if (trace) {
      trace->enc_out = std::move(enc_out);
      trace->probs = out.probs;
    }
    if (opts.keep_attention && caches) {
      out.cross_attention.resize(dec_layers.size());
      for (std::size_t l = 0; l < dec_layers.size(); ++l)
        out.cross_attention[l] = (*caches)[l].cross_attn.probs;
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // Loss and backward
  // -------------------------------------------------------------------------

  static double loss(const Eigen::Vector3d& probs, int gold) {
    if (gold < 0 || gold >= kLabelCount)
      throw ContractViolation("gold label out of range");
    return -std::log(probs(gold));
  }

  // Backpropagates cross-entropy at the traced forward pass. Gradients
  // accumulate; scale them by weighting `loss_scale`.
  double backward(const Trace& trace, int gold, double loss_scale = 1.0) {
    const double l = loss(trace.probs, gold);

    Mat dlogits(1, kLabelCount);
    for (int c = 0; c < kLabelCount; ++c)
      dlogits(0, c) = loss_scale * (trace.probs(c) - (c == gold ? 1.0 : 0.0));
    Mat ddropped = head.backward(trace.dropped, dlogits);
    Mat dh_mask = Dropout::backward(trace.dropout_mask, ddropped);

    const int n_dec = trace.dec_in.length();
    Mat d_dec = Mat::Zero(n_dec, cfg.d);
    d_dec.row(trace.dec_in.mask_pos) = dh_mask;

    Mat d_enc_out = Mat::Zero(trace.enc_out.rows(), cfg.d);
    for (int l = static_cast<int>(dec_layers.size()) - 1; l >= 0; --l)
      d_dec = dec_layers[l].backward(trace.dec_caches[l], d_dec, d_enc_out);

    // Decoder embedding gradients.
    for (int i = 0; i < n_dec; ++i) {
      tok_emb.g.row(trace.dec_in.ids[i]) += d_dec.row(i);
      pos_dec.g.row(i) += d_dec.row(i);
    }

    Mat d_enc = d_enc_out;
    for (int l = static_cast<int>(enc_layers.size()) - 1; l >= 0; --l)
      d_enc = enc_layers[l].backward(trace.enc_caches[l], d_enc);

    // Encoder embedding gradients: split text rows from projected image rows.
    const int n_enc = trace.enc_in.length();
    Mat d_proj = Mat::Zero(trace.enc_in.feats.rows(), cfg.d);
    for (int i = 0; i < n_enc; ++i) {
      const int fr = trace.enc_in.feature_row[i];
      if (fr >= 0) {
        d_proj.row(fr) += d_enc.row(i);
        type_emb.g.row(1) += d_enc.row(i);
      } else {
        tok_emb.g.row(trace.enc_in.ids[i]) += d_enc.row(i);
        type_emb.g.row(0) += d_enc.row(i);
      }
      pos_enc.g.row(i) += d_enc.row(i);
    }
    if (d_proj.rows() > 0) {
      Mat d_adapter_out = img_proj.backward(trace.adapter_out, d_proj);
      if (img_adapter.w.trainable)
        img_adapter.backward(trace.enc_in.feats, d_adapter_out);
      // Region features themselves are inputs: their gradient is dropped.
    }
    return l;
  }

  // -------------------------------------------------------------------------
  // Padded batch forward (inference): outputs must match the per-sample
  // path because padded columns are excluded from every softmax.
  // -------------------------------------------------------------------------

  std::vector<Eigen::Vector3d> forward_padded_batch(
      const std::vector<const EncoderInput*>& enc_ins,
      const std::vector<const DecoderInput*>& dec_ins) const {
    if (enc_ins.size() != dec_ins.size())
      throw ContractViolation("batch size mismatch");
    int n_enc = 0, n_dec = 0;
    for (std::size_t b = 0; b < enc_ins.size(); ++b) {
      n_enc = std::max(n_enc, enc_ins[b]->length());
      n_dec = std::max(n_dec, dec_ins[b]->length());
    }
    std::vector<Eigen::Vector3d> out;
    out.reserve(enc_ins.size());
    for (std::size_t b = 0; b < enc_ins.size(); ++b) {
      const EncoderInput& e = *enc_ins[b];
      const DecoderInput& d = *dec_ins[b];
      EncoderInput padded = e;
      padded.ids.resize(n_enc, vocab.pad_id());
      padded.feature_row.resize(n_enc, -1);
      const int real_e = e.length();
      // Padding rows/columns are invisible except to themselves.
      Mat enc_mask = Mat::Zero(n_enc, n_enc);
      Mat base = encoder_mask(e);
      enc_mask.topLeftCorner(real_e, real_e) = base;
      for (int i = real_e; i < n_enc; ++i) enc_mask(i, i) = 1.0;
      padded.vis = VisibilityMatrix(0);  // mask passed explicitly below

      DecoderInput dpad = d;
      dpad.ids.resize(n_dec, vocab.pad_id());
      const int real_d = d.length();
      Mat self_mask = Mat::Zero(n_dec, n_dec);
      self_mask.topLeftCorner(real_d, real_d) = causal_mask(real_d);
      for (int i = real_d; i < n_dec; ++i) self_mask(i, i) = 1.0;
      Mat cross_mask = Mat::Zero(n_dec, n_enc);
      cross_mask.topLeftCorner(real_d, real_e).setOnes();
      for (int i = real_d; i < n_dec; ++i) cross_mask(i, 0) = 1.0;

      Output o = forward_with_masks(padded, dpad, enc_mask, self_mask,
                                    cross_mask, ForwardOptions{});
      out.push_back(o.probs);
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // Checkpoints
  // -------------------------------------------------------------------------

  static constexpr char kCheckpointMagic[9] = "SCSGCKP1";

  void save(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    auto params = parameters();
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["config"] = cfg;
    meta["vocab"] = vocab.tokens;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& ref : params)
      tensors.push_back({{"name", ref.name},
                         {"rows", ref.p->v.rows()},
                         {"cols", ref.p->v.cols()}});
    meta["tensors"] = tensors;
    const std::string header = meta.dump();
    out.write(kCheckpointMagic, 8);
    std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& ref : params) {
      // Row-major dump, independent of Eigen's internal layout.
      const Mat& m = ref.p->v;
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          double v = m(i, j);
          out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
    if (!out) throw IoError("failed writing checkpoint " + path);
  }

  static Model load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw ValidationError(path + " is not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw ValidationError(path + ": truncated checkpoint header");
    nlohmann::json meta = nlohmann::json::parse(header);
    if (meta.at("format_version").get<int>() != 1)
      throw ValidationError(path + ": unsupported checkpoint version");

    ModelConfig cfg = meta.at("config").get<ModelConfig>();
    Vocabulary vocab;
    for (const auto& t : meta.at("vocab")) vocab.add(t.get<std::string>());
    Model model(cfg, std::move(vocab), /*seed=*/0);
    auto params = model.parameters();
    const auto& tensors = meta.at("tensors");
    if (tensors.size() != params.size())
      throw ValidationError(path + ": tensor manifest mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != params[i].name)
        throw ValidationError(path + ": unexpected tensor order");
      Eigen::Index rows = t.at("rows").get<Eigen::Index>();
      Eigen::Index cols = t.at("cols").get<Eigen::Index>();
      if (rows != params[i].p->v.rows() || cols != params[i].p->v.cols())
        throw ValidationError(path + ": tensor shape mismatch for " +
                              params[i].name);
      Mat& m = params[i].p->v;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          double v = 0;
          in.read(reinterpret_cast<char*>(&v), sizeof(v));
          m(r, c) = v;
        }
    }
    if (!in) throw ValidationError(path + ": truncated checkpoint payload");
    return model;
  }
};

// ---------------------------------------------------------------------------
// Cross-attention extraction
// ---------------------------------------------------------------------------

// Attention read-out from the decoder's [mask] position to the encoder's
// sub-image positions, per (layer, head) plus their mean.
struct CrossAttentionExtract {
  std::vector<int> img_positions;
  // weights[layer][head][k]: weight on the k-th sub-image token; in [0,1].
  std::vector<std::vector<std::vector<double>>> weights;
  // row_sums[layer][head]: the [mask] row's total mass over all encoder
  // positions (softmax check).
  std::vector<std::vector<double>> row_sums;
  std::vector<double> mean;  // per sub-image token, over layers and heads

  bool empty() const { return img_positions.empty(); }
};

inline CrossAttentionExtract extract_cross_attention(
    const Model::Output& out, const std::vector<int>& img_positions) {
  if (out.cross_attention.empty())
    throw ContractViolation(
        "forward must run with keep_attention to extract cross-attention");
  CrossAttentionExtract ex;
  ex.img_positions = img_positions;
  if (img_positions.empty()) return ex;

  const std::size_t n_layers = out.cross_attention.size();
  ex.weights.resize(n_layers);
  ex.row_sums.resize(n_layers);
  ex.mean.assign(img_positions.size(), 0.0);
  std::size_t cells = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& heads = out.cross_attention[l];
    ex.weights[l].resize(heads.size());
    ex.row_sums[l].resize(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const Mat& p = heads[h];
      ex.row_sums[l][h] = p.row(out.mask_pos).sum();
      auto& w = ex.weights[l][h];
      w.resize(img_positions.size());
      for (std::size_t k = 0; k < img_positions.size(); ++k) {
        w[k] = p(out.mask_pos, img_positions[k]);
        ex.mean[k] += w[k];
      }
      ++cells;
    }
  }
  for (auto& m : ex.mean) m /= static_cast<double>(cells);
  return ex;
}

}  // namespace seqcsg
