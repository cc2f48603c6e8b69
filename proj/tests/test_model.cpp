#include <catch_amalgamated.hpp>

#include <filesystem>

#include "seqcsg/harness.hpp"
#include "seqcsg/model.hpp"
#include "seqcsg/synth.hpp"
#include "support/oracles.hpp"

using namespace seqcsg;

namespace {

struct Fixture {
  ModelConfig mc;
  PreparedCorpus corpus;
  Model model;

  static Fixture make(bool freeze = true) {
    auto bundle = make_overfit_corpus(4);
    JoinedData data;
    data.train = join_sources(bundle.train, bundle.captions,
                              bundle.graphs.records, true);
    data.dev = data.train;
    data.test = data.train;
    ModelConfig mc;
    mc.d = 16;
    mc.n_heads = 2;
    mc.n_layers_enc = 2;
    mc.n_layers_dec = 2;
    mc.feature_dim = 4;
    mc.n_max = 96;
    mc.flags.freeze_image_encoder = freeze;
    PreparedCorpus corpus = prepare_corpus(data, mc, 2, 2);
    Model model(mc, corpus.vocab, 17);
    return Fixture{mc, std::move(corpus), std::move(model)};
  }

  const PreparedSample& sample_with_image() const {
    for (const auto& s : corpus.train)
      if (!s.img_positions.empty()) return s;
    throw std::runtime_error("fixture has no image sample");
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

TEST_CASE("embedding sums element, type, and position vectors") {
  auto f = Fixture::make();
  const auto& s = f.sample_with_image();
  Mat adapter_out;
  Mat x = f.model.embed_encoder(s.enc, &adapter_out);
  REQUIRE(x.rows() == s.enc.length());

  // a text token: lookup + type 0 + position
  int text_pos = -1;
  for (int i = 0; i < s.enc.length(); ++i)
    if (s.enc.feature_row[i] < 0) {
      text_pos = i;
      break;
    }
  Mat expected_text = f.model.tok_emb.v.row(s.enc.ids[text_pos]) +
                      f.model.type_emb.v.row(0) +
                      f.model.pos_enc.v.row(text_pos);
  CHECK((x.row(text_pos) - expected_text.row(0)).cwiseAbs().maxCoeff() == 0.0);

  // a sub-image token: projected feature + type 1 + position
  int img_pos = s.img_positions.front();
  int fr = s.enc.feature_row[img_pos];
  REQUIRE(fr >= 0);
  Mat projected =
      f.model.img_proj.forward(f.model.img_adapter.forward(s.enc.feats));
  Mat expected_img = projected.row(fr) + f.model.type_emb.v.row(1) +
                     f.model.pos_enc.v.row(img_pos);
  CHECK((x.row(img_pos) - expected_img.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("equal tokens at different positions differ by position vectors") {
  auto f = Fixture::make();
  EncoderInput in;
  const int id = f.model.vocab.id("day");
  in.ids = {id, id, id, id, id, id, id, id};
  in.feature_row.assign(8, -1);
  in.vis = VisibilityMatrix::all_ones(8);
  Mat x = f.model.embed_encoder(in, nullptr);
  Mat diff = x.row(2) - x.row(7);
  Mat pos_diff = f.model.pos_enc.v.row(2) - f.model.pos_enc.v.row(7);
  CHECK((diff - pos_diff).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unresolvable region ids are a lookup error") {
  auto f = Fixture::make();
  SemanticSequence seq;
  SeqToken img;
  img.surface = "[img]";
  img.role = TokenRole::SubImage;
  img.triple_id = 0;
  img.region_id = "missing_region";
  seq.tokens.push_back(img);
  SceneGraphRecord graph;
  CHECK_THROWS_AS(make_encoder_input(seq, graph, f.model.vocab, 4),
                  FeatureLookupError);
}

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

TEST_CASE("prompt template renders the target, copula, mask, period") {
  CHECK(build_prompt_tokens("Jackson Swisher") ==
        std::vector<std::string>{"Jackson", "Swisher", "is", "[mask]", "."});
  CHECK(build_prompt_tokens("Danville") ==
        std::vector<std::string>{"Danville", "is", "[mask]", "."});
  CHECK_THROWS_AS(build_prompt_tokens(""), ValidationError);
  CHECK_THROWS_AS(build_prompt_tokens("   "), ValidationError);
}

TEST_CASE("prompt ablation degenerates to the bare mask") {
  CHECK(build_prompt_tokens("Danville", false) ==
        std::vector<std::string>{"[mask]"});
}

TEST_CASE("different targets always yield different decoder inputs") {
  auto f = Fixture::make();
  auto a = make_decoder_input(build_prompt_tokens("alice"), f.model.vocab);
  auto b = make_decoder_input(build_prompt_tokens("bob"), f.model.vocab);
  CHECK(a.ids != b.ids);
  CHECK(a.mask_pos == 2);  // <target> is [mask] .
  CHECK(b.mask_pos == 2);
}

TEST_CASE("decoder input needs exactly one mask token") {
  auto f = Fixture::make();
  CHECK_THROWS_AS(make_decoder_input({"no", "mask", "here"}, f.model.vocab),
                  ContractViolation);
  CHECK_THROWS_AS(make_decoder_input({"[mask]", "[mask]"}, f.model.vocab),
                  ContractViolation);
}

// ---------------------------------------------------------------------------
// Classifier head and loss
// ---------------------------------------------------------------------------

TEST_CASE("zero head weights give the uniform distribution") {
  auto f = Fixture::make();
  f.model.head.w.v.setZero();
  f.model.head.b.v.setZero();
  Vec h = Vec::Ones(f.mc.d);
  Eigen::Vector3d p = f.model.classify(h);
  for (int c = 0; c < 3; ++c)
    CHECK_THAT(p(c), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("head logits map through softmax") {
  auto f = Fixture::make();
  f.model.head.w.v.setZero();
  f.model.head.b.v << 2.0, 0.0, 0.0;
  Eigen::Vector3d p = f.model.classify(Vec::Zero(f.mc.d));
  CHECK(argmax3(p) == 0);
  CHECK_THAT(p.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));

  f.model.head.b.v << 1.0, 2.0, 3.0;
  p = f.model.classify(Vec::Zero(f.mc.d));
  CHECK_THAT(p(0), Catch::Matchers::WithinAbs(0.0900, 1e-4));
  CHECK_THAT(p(1), Catch::Matchers::WithinAbs(0.2447, 1e-4));
  CHECK_THAT(p(2), Catch::Matchers::WithinAbs(0.6652, 1e-4));

  // cross-entropy of that distribution at class 1
  CHECK_THAT(Model::loss(p, 1), Catch::Matchers::WithinAbs(1.4076, 1e-4));
}

TEST_CASE("loss is zero at certainty and ln 3 at uniform") {
  CHECK(Model::loss(Eigen::Vector3d(0.0, 1.0, 0.0), 1) == 0.0);
  Eigen::Vector3d uniform(1.0 / 3, 1.0 / 3, 1.0 / 3);
  CHECK_THAT(Model::loss(uniform, 2),
             Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

TEST_CASE("encoding a single token gives a 1 x d state") {
  auto f = Fixture::make();
  EncoderInput in;
  in.ids = {f.model.vocab.id("day")};
  in.feature_row = {-1};
  in.vis = VisibilityMatrix::all_ones(1);
  Mat h = f.model.encode(in);
  CHECK(h.rows() == 1);
  CHECK(h.cols() == f.mc.d);
  CHECK(h.allFinite());
}

TEST_CASE("model configuration is validated") {
  Vocabulary v = Vocabulary::with_specials();
  ModelConfig bad_heads;
  bad_heads.d = 10;
  bad_heads.n_heads = 3;
  CHECK_THROWS_AS(Model(bad_heads, v, 1), ConfigError);
  ModelConfig weak_delta;
  weak_delta.delta = -1.0;
  CHECK_THROWS_AS(Model(weak_delta, v, 1), ConfigError);
  ModelConfig bad_dropout;
  bad_dropout.dropout_p = 1.0;
  CHECK_THROWS_AS(Model(bad_dropout, v, 1), ConfigError);
}

TEST_CASE("forward probabilities sum to one") {
  auto f = Fixture::make();
  for (const auto& s : f.corpus.train) {
    auto out = f.model.forward(s.enc, s.dec);
    CHECK_THAT(out.probs.sum(), Catch::Matchers::WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("ablating the visibility matrix equals an explicit all-ones mask") {
  auto f = Fixture::make();
  const auto& s = f.sample_with_image();
  Model ablated = f.model;
  ablated.cfg.flags.use_visibility_matrix = false;
  Mat h_ablated = ablated.encode(s.enc);
  Mat h_explicit = f.model.encode_with_mask(
      s.enc, full_mask(s.enc.length(), s.enc.length()), nullptr);
  CHECK(oracles::bitwise_equal(h_ablated, h_explicit));
  // and it differs from the masked encoding (the mask does something)
  Mat h_masked = f.model.encode(s.enc);
  CHECK_FALSE(oracles::bitwise_equal(h_ablated, h_masked));
}

TEST_CASE("a single sample matches itself inside a padded batch") {
  auto f = Fixture::make();
  std::vector<const EncoderInput*> encs;
  std::vector<const DecoderInput*> decs;
  for (int i = 0; i < 4; ++i) {
    encs.push_back(&f.corpus.train[i].enc);
    decs.push_back(&f.corpus.train[i].dec);
  }
  auto batched = f.model.forward_padded_batch(encs, decs);
  REQUIRE(batched.size() == 4);
  for (int i = 0; i < 4; ++i) {
    auto single = f.model.forward(f.corpus.train[i].enc, f.corpus.train[i].dec);
    CHECK((batched[i] - single.probs).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("model gradients match finite differences end to end") {
  auto f = Fixture::make(/*freeze=*/false);
  const auto& s = f.sample_with_image();
  auto params = f.model.parameters();
  zero_grads(params);
  Model::Trace trace;
  f.model.forward(s.enc, s.dec, {}, &trace);
  f.model.backward(trace, s.gold);

  auto loss_fn = [&] {
    auto out = f.model.forward(s.enc, s.dec);
    return Model::loss(out.probs, s.gold);
  };
  Rng pick(55);
  const double h = 1e-5;
  for (const auto& ref : params) {
    if (!ref.p->trainable) continue;
    for (int t = 0; t < 3; ++t) {
      int i = static_cast<int>(pick.index(static_cast<std::size_t>(ref.p->v.rows())));
      int j = static_cast<int>(pick.index(static_cast<std::size_t>(ref.p->v.cols())));
      double orig = ref.p->v(i, j);
      ref.p->v(i, j) = orig + h;
      double up = loss_fn();
      ref.p->v(i, j) = orig - h;
      double down = loss_fn();
      ref.p->v(i, j) = orig;
      double fd = (up - down) / (2 * h);
      double an = ref.p->g(i, j);
      INFO(ref.name << "(" << i << "," << j << ")");
      CHECK(std::abs(an - fd) <=
            1e-8 + 1e-4 * std::max(std::abs(an), std::abs(fd)));
    }
  }
}

// ---------------------------------------------------------------------------
// Freeze contract
// ---------------------------------------------------------------------------

TEST_CASE("frozen image encoder trains only the projection") {
  auto f = Fixture::make(/*freeze=*/true);
  CHECK_FALSE(f.model.img_adapter.w.trainable);
  const auto& s = f.sample_with_image();
  auto params = f.model.parameters();
  zero_grads(params);
  Model::Trace trace;
  f.model.forward(s.enc, s.dec, {}, &trace);
  f.model.backward(trace, s.gold);
  CHECK(f.model.img_adapter.w.g.cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.model.img_proj.w.g.cwiseAbs().maxCoeff() > 0.0);

  // the frozen pass-through is exactly the identity on features
  Mat adapted = f.model.img_adapter.forward(s.enc.feats);
  CHECK(oracles::bitwise_equal(adapted, s.enc.feats));
}

TEST_CASE("unfrozen image encoder receives gradient") {
  auto f = Fixture::make(/*freeze=*/false);
  CHECK(f.model.img_adapter.w.trainable);
  const auto& s = f.sample_with_image();
  auto params = f.model.parameters();
  zero_grads(params);
  Model::Trace trace;
  f.model.forward(s.enc, s.dec, {}, &trace);
  f.model.backward(trace, s.gold);
  CHECK(f.model.img_adapter.w.g.cwiseAbs().maxCoeff() > 0.0);
}

// ---------------------------------------------------------------------------
// Cross-attention extraction
// ---------------------------------------------------------------------------

TEST_CASE("cross-attention extraction returns one weight per image token") {
  auto f = Fixture::make();
  const auto& s = f.sample_with_image();
  ForwardOptions opts;
  opts.keep_attention = true;
  auto out = f.model.forward(s.enc, s.dec, opts);
  auto ex = extract_cross_attention(out, s.img_positions);
  REQUIRE(ex.weights.size() == static_cast<std::size_t>(f.mc.n_layers_dec));
  for (const auto& layer : ex.weights) {
    REQUIRE(layer.size() == static_cast<std::size_t>(f.mc.n_heads));
    for (const auto& head : layer) {
      CHECK(head.size() == s.img_positions.size());
      for (double w : head) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
      }
    }
  }
  for (const auto& layer : ex.row_sums)
    for (double sum : layer)
      CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
  CHECK(ex.mean.size() == s.img_positions.size());
}

TEST_CASE("extraction with no image tokens is empty, not an error") {
  auto f = Fixture::make();
  const PreparedSample* no_img = nullptr;
  // build one without a scene graph
  JoinedSample j;
  j.sample.sample_id = "x";
  j.sample.label = Label::Neutral;
  j.sample.target = "alice";
  j.sample.tweet = "hello $T$ there";
  j.sample.image_id = "none";
  j.caption = "a man near a tree";
  j.graph.image_id = "none";
  auto ps = prepare_sample(j, f.mc, f.corpus.vocab, 2, 2);
  no_img = &ps;
  REQUIRE(no_img->img_positions.empty());
  ForwardOptions opts;
  opts.keep_attention = true;
  auto out = f.model.forward(no_img->enc, no_img->dec, opts);
  auto ex = extract_cross_attention(out, no_img->img_positions);
  CHECK(ex.empty());
  CHECK(ex.mean.empty());
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round-trip is bitwise on parameters") {
  namespace fs = std::filesystem;
  auto f = Fixture::make();
  fs::path dir = fs::temp_directory_path() / "seqcsg_model_tests";
  fs::create_directories(dir);
  std::string path = (dir / "model.ckpt").string();
  f.model.save(path);
  Model loaded = Model::load(path);

  auto a = f.model.parameters();
  auto b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(oracles::bitwise_equal(a[i].p->v, b[i].p->v));
  }
  CHECK(loaded.vocab.tokens == f.model.vocab.tokens);
  CHECK(loaded.cfg.d == f.mc.d);

  // identical outputs, bitwise
  const auto& s = f.corpus.train[0];
  auto p1 = f.model.forward(s.enc, s.dec).probs;
  auto p2 = loaded.forward(s.enc, s.dec).probs;
  CHECK((p1.array() == p2.array()).all());
}

TEST_CASE("checkpoint loader rejects foreign files") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "seqcsg_model_tests";
  fs::create_directories(dir);
  std::string path = (dir / "not_a_ckpt").string();
  std::ofstream(path) << "junk";
  CHECK_THROWS_AS(Model::load(path), ValidationError);
}
