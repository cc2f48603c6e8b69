#include <catch_amalgamated.hpp>

#include "seqcsg/nn.hpp"
#include "support/oracles.hpp"

using namespace seqcsg;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Random symmetric binary mask with a unit diagonal.
Mat random_mask(int n, Rng& rng) {
  Mat m = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double v = rng.uniform() < 0.5 ? 1.0 : 0.0;
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

VisibilityMatrix to_visibility(const Mat& m) {
  VisibilityMatrix v(static_cast<int>(m.rows()));
  for (int i = 0; i < v.n; ++i)
    for (int j = 0; j < v.n; ++j) v.set(i, j, m(i, j) != 0.0 ? 1 : 0);
  return v;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Central finite differences against the analytic gradient of a scalar
// functional of a block's output.
template <typename Forward, typename Backward>
void check_param_gradient(Param& p, Forward forward, Backward backward) {
  p.zero_grad();
  backward();
  const double h = 1e-6;
  Rng pick(1234);
  int checks = std::min<int>(10, static_cast<int>(p.count()));
  for (int t = 0; t < checks; ++t) {
    int i = static_cast<int>(pick.index(static_cast<std::size_t>(p.v.rows())));
    int j = static_cast<int>(pick.index(static_cast<std::size_t>(p.v.cols())));
    double orig = p.v(i, j);
    p.v(i, j) = orig + h;
    double up = forward();
    p.v(i, j) = orig - h;
    double down = forward();
    p.v(i, j) = orig;
    double fd = (up - down) / (2 * h);
    double an = p.g(i, j);
    CHECK_THAT(an, Catch::Matchers::WithinAbs(fd, 1e-6 + 1e-4 * std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("row softmax rows sum to one and keep order") {
  Rng rng(1);
  Mat a = random_mat(4, 7, rng);
  Mat p = row_softmax(a);
  for (int i = 0; i < 4; ++i) {
    CHECK_THAT(p.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    Eigen::Index amax_a, amax_p;
    a.row(i).maxCoeff(&amax_a);
    p.row(i).maxCoeff(&amax_p);
    CHECK(amax_a == amax_p);
  }
}

TEST_CASE("linear layer gradients match finite differences") {
  Rng rng(2);
  Linear lin;
  lin.init(5, 3, rng, 0.5);
  Mat x = random_mat(4, 5, rng);
  Mat target = random_mat(4, 3, rng);
  auto loss = [&] { return 0.5 * (lin.forward(x) - target).squaredNorm(); };
  auto grad = [&] {
    Mat dy = lin.forward(x) - target;
    lin.backward(x, dy);
  };
  check_param_gradient(lin.w, loss, grad);
  check_param_gradient(lin.b, loss, grad);
}

TEST_CASE("layer norm gradients match finite differences") {
  Rng rng(3);
  LayerNorm ln;
  ln.init(6);
  ln.gamma.v = random_mat(1, 6, rng);
  Mat x = random_mat(5, 6, rng);
  Mat target = random_mat(5, 6, rng);
  LayerNorm::Cache cache;
  auto loss = [&] { return 0.5 * (ln.forward(x, nullptr) - target).squaredNorm(); };
  auto grad = [&] {
    Mat y = ln.forward(x, &cache);
    ln.backward(cache, y - target);
  };
  check_param_gradient(ln.gamma, loss, grad);
  check_param_gradient(ln.beta, loss, grad);

  // input gradient too
  ln.gamma.zero_grad();
  ln.beta.zero_grad();
  Mat y = ln.forward(x, &cache);
  Mat dx = ln.backward(cache, y - target);
  const double h = 1e-6;
  for (int t = 0; t < 8; ++t) {
    int i = static_cast<int>(rng.index(5)), j = static_cast<int>(rng.index(6));
    double orig = x(i, j);
    x(i, j) = orig + h;
    double up = loss();
    x(i, j) = orig - h;
    double down = loss();
    x(i, j) = orig;
    double fd = (up - down) / (2 * h);
    CHECK_THAT(dx(i, j), Catch::Matchers::WithinAbs(fd, 1e-6 + 1e-4 * std::abs(fd)));
  }
}

TEST_CASE("gelu derivative matches finite differences") {
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    double fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2 * h);
    CHECK_THAT(gelu_grad_scalar(x), Catch::Matchers::WithinAbs(fd, 1e-8));
  }
}

TEST_CASE("masked attention with all-ones mask equals plain attention") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    MultiHeadAttention mha;
    mha.init(16, 4, -1e9, rng, 0.3);
    Mat x = random_mat(10, 16, rng);
    Mat out = mha.forward(x, x, full_mask(10, 10), nullptr);
    Mat ref = oracles::reference_attention(mha, x);
    CHECK(max_abs_diff(out, ref) < 1e-6);
  }
}

TEST_CASE("masked attention matches the visible-set oracle") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    MultiHeadAttention mha;
    mha.init(8, 2, -1e9, rng, 0.4);
    Mat x = random_mat(6, 8, rng);
    Mat mask = random_mask(6, rng);
    Mat out = mha.forward(x, x, mask, nullptr);
    Mat ref = oracles::visible_set_attention(mha, x, to_visibility(mask));
    CHECK(max_abs_diff(out, ref) < 1e-6);
  }
}

TEST_CASE("masked positions carry negligible attention weight") {
  Rng rng(6);
  MultiHeadAttention mha;
  mha.init(8, 2, -1e9, rng, 0.4);
  Mat x = random_mat(7, 8, rng);
  Mat mask = random_mask(7, rng);
  MultiHeadAttention::Cache cache;
  mha.forward(x, x, mask, &cache);
  for (const auto& probs : cache.probs)
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        if (mask(i, j) == 0.0) CHECK(probs(i, j) <= 1e-8);
}

TEST_CASE("a row with only itself visible copies its value vector") {
  Rng rng(16);
  MultiHeadAttention mha;
  mha.init(8, 2, -1e9, rng, 0.4);
  const int n = 5, isolated = 2;
  Mat x = random_mat(n, 8, rng);
  Mat mask = full_mask(n, n);
  for (int j = 0; j < n; ++j)
    if (j != isolated) {
      mask(isolated, j) = 0.0;
      mask(j, isolated) = 0.0;
    }
  MultiHeadAttention::Cache cache;
  Mat out = mha.forward(x, x, mask, &cache);
  for (const auto& probs : cache.probs) {
    CHECK(probs(isolated, isolated) == 1.0);
    for (int j = 0; j < n; ++j)
      if (j != isolated) CHECK(probs(isolated, j) == 0.0);
  }
  // output row is exactly the row's own value vector, output-projected
  Mat v = mha.wv.forward(x);
  Mat expected = mha.wo.forward(v.row(isolated));
  CHECK(max_abs_diff(out.row(isolated), expected.row(0)) < 1e-12);
}

TEST_CASE("rows invisible to each other do not interact") {
  // permuting two mutually invisible positions leaves every other row's
  // attention output unchanged
  Rng rng(17);
  MultiHeadAttention mha;
  mha.init(8, 2, -1e9, rng, 0.4);
  const int n = 6, a = 1, b = 4;
  Mat x = random_mat(n, 8, rng);
  Mat mask = full_mask(n, n);
  // a and b form two "triples" invisible to everyone but themselves
  for (int j = 0; j < n; ++j) {
    if (j != a) { mask(a, j) = mask(j, a) = 0.0; }
  }
  for (int j = 0; j < n; ++j) {
    if (j != b) { mask(b, j) = mask(j, b) = 0.0; }
  }
  Mat out1 = mha.forward(x, x, mask, nullptr);
  Mat x_swapped = x;
  x_swapped.row(a).swap(x_swapped.row(b));
  Mat out2 = mha.forward(x_swapped, x_swapped, mask, nullptr);
  for (int i = 0; i < n; ++i) {
    if (i == a || i == b) continue;
    CHECK(max_abs_diff(out1.row(i), out2.row(i)) < 1e-12);
  }
  // and the swapped rows' outputs swap with them
  CHECK(max_abs_diff(out1.row(a), out2.row(b)) < 1e-12);
  CHECK(max_abs_diff(out1.row(b), out2.row(a)) < 1e-12);
}

TEST_CASE("attention rejects a non-binary mask") {
  Rng rng(7);
  MultiHeadAttention mha;
  mha.init(8, 2, -1e9, rng);
  Mat x = random_mat(3, 8, rng);
  Mat mask = full_mask(3, 3);
  mask(1, 2) = 0.5;
  CHECK_THROWS_AS(mha.forward(x, x, mask, nullptr), ContractViolation);
}

TEST_CASE("attention backward matches finite differences through the mask") {
  Rng rng(8);
  MultiHeadAttention mha;
  mha.init(8, 2, -1e9, rng, 0.4);
  Mat x = random_mat(5, 8, rng);
  Mat mask = random_mask(5, rng);
  Mat target = random_mat(5, 8, rng);
  auto loss = [&] {
    return 0.5 * (mha.forward(x, x, mask, nullptr) - target).squaredNorm();
  };
  auto grad = [&] {
    MultiHeadAttention::Cache cache;
    Mat y = mha.forward(x, x, mask, &cache);
    auto [dq, dkv] = mha.backward(cache, y - target);
    (void)dq;
    (void)dkv;
  };
  check_param_gradient(mha.wq.w, loss, grad);
  check_param_gradient(mha.wk.w, loss, grad);
  check_param_gradient(mha.wv.w, loss, grad);
  check_param_gradient(mha.wo.w, loss, grad);
}

TEST_CASE("causal mask is lower-triangular") {
  Mat m = causal_mask(4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(m(i, j) == (j <= i ? 1.0 : 0.0));
}

TEST_CASE("dropout is identity at evaluation and rescales at training") {
  Rng rng(9);
  Dropout drop{0.5};
  Mat x = random_mat(3, 4, rng);
  Mat mask;
  CHECK(oracles::bitwise_equal(drop.forward(x, false, nullptr, &mask), x));
  CHECK(oracles::bitwise_equal(mask, Mat::Ones(3, 4)));
  Mat y = drop.forward(x, true, &rng, &mask);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      bool kept = mask(i, j) != 0.0;
      CHECK(y(i, j) == (kept ? x(i, j) * 2.0 : 0.0));
    }
  // backward uses the cached mask
  Mat dy = random_mat(3, 4, rng);
  CHECK(oracles::bitwise_equal(Dropout::backward(mask, dy),
                               dy.cwiseProduct(mask)));
}

TEST_CASE("adamw with zero learning rate leaves parameters unchanged") {
  Rng rng(10);
  Linear lin;
  lin.init(3, 3, rng, 0.5);
  Mat before = lin.w.v;
  std::vector<ParamRef> params;
  lin.collect("lin", params);
  lin.w.g.setConstant(1.0);
  lin.b.g.setConstant(-2.0);
  AdamW opt;
  opt.step(params, 0.0);
  CHECK(oracles::bitwise_equal(lin.w.v, before));
}

TEST_CASE("global norm clipping caps the gradient norm") {
  Rng rng(11);
  Linear lin;
  lin.init(4, 4, rng, 0.5);
  std::vector<ParamRef> params;
  lin.collect("lin", params);
  lin.w.g = random_mat(4, 4, rng) * 10.0;
  lin.b.g = random_mat(1, 4, rng) * 10.0;
  double pre = clip_global_norm(params, 1.0);
  CHECK(pre > 1.0);
  double post = std::sqrt(lin.w.g.squaredNorm() + lin.b.g.squaredNorm());
  CHECK_THAT(post, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("warmup schedule rises linearly then decays to zero") {
  const double base = 1.0;
  CHECK(warmup_linear_lr(base, 0, 100, 0.1) == Catch::Approx(0.1));
  CHECK(warmup_linear_lr(base, 9, 100, 0.1) == Catch::Approx(1.0));
  CHECK(warmup_linear_lr(base, 10, 100, 0.1) == Catch::Approx(1.0));
  CHECK(warmup_linear_lr(base, 55, 100, 0.1) == Catch::Approx(0.5));
  CHECK(warmup_linear_lr(base, 99, 100, 0.1) < 0.02);
}
