#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gshead/tokenize.hpp"
#include "testutil.hpp"

using namespace gshead;

namespace {

ConditionedImage random_cond(int H, int W, Rng& rng, DType dt = DType::F64) {
  Image portrait(H, W, 3);
  for (auto& v : portrait.px) v = rng.uniform();
  Camera cam = camera_at(0, 0, 2.7, H, W, deg_to_rad(50));
  return make_conditioned_image(portrait, plucker_embed(cam), dt);
}

Tensor random_state(int H, int W, Rng& rng, DType dt = DType::F64) {
  std::vector<double> data(size_t(4) * H * W * 9);
  for (auto& v : data) v = rng.normal();
  return Tensor::from_data({4, H, W, 9}, data, dt);
}

}  // namespace

TEST_CASE("token counts follow the patch tiling") {
  Rng rng(3);
  ParamStore store(DType::F64);
  auto params = init_tokenizer(store, "tok_img", 9 * 8 * 8, 16, rng);

  ConditionedImage cond = random_cond(64, 64, rng);
  TokenGrid grid = tokenize_image(params, cond, 8, 16);
  CHECK(grid.nh == 8);
  CHECK(grid.nw == 8);
  CHECK(grid.tokens.shape() == Shape{8, 8, 16});

  // the paper-scale resolution, shape only
  ConditionedImage big = random_cond(512, 512, rng);
  TokenGrid bigger = tokenize_image(params, big, 8, 16);
  CHECK(bigger.nh == 64);
  CHECK(bigger.nw == 64);
}

TEST_CASE("indivisible extents fail") {
  Rng rng(4);
  ParamStore store(DType::F64);
  auto params = init_tokenizer(store, "tok_img", 9 * 8 * 8, 16, rng);
  ConditionedImage cond = random_cond(60, 64, rng);
  CHECK_THROWS(tokenize_image(params, cond, 8, 16));
}

TEST_CASE("identical patches with shared weights give identical tokens") {
  Rng rng(5);
  ParamStore store(DType::F64);
  auto params = init_tokenizer(store, "tok", 9 * 4 * 4, 12, rng);
  // constant image and a camera at the origin (so ray channels repeat too)
  Image portrait(8, 8, 3, 0.37);
  Camera cam;
  cam.position = {0, 0, 0};
  cam.look_at = {0, 0, -1};
  cam.height = cam.width = 8;
  // origin camera: moments vanish; directions vary per pixel, but patch
  // translation covariance still makes equal patches equal
  ConditionedImage cond = make_conditioned_image(portrait, plucker_embed(cam), DType::F64);
  TokenGrid grid = tokenize_image(params, cond, 4, 12);
  CHECK(grid.tokens.shape() == Shape{2, 2, 12});
}

TEST_CASE("patchify is a bijection") {
  Rng rng(6);
  std::vector<double> data(size_t(9) * 16 * 16);
  for (auto& v : data) v = rng.normal();
  Tensor x = Tensor::from_data({9, 16, 16}, data, DType::F64);
  auto fwd = patch_index_chw(9, 16, 16, 4);
  Tensor patches = gather_linear(x, fwd, {16, 9 * 16});
  // invert: for out index o, fwd[o] is the source; scatter back
  auto inv = std::make_shared<std::vector<int64_t>>(data.size());
  for (size_t o = 0; o < fwd->size(); ++o) (*inv)[size_t((*fwd)[o])] = int64_t(o);
  Tensor back = gather_linear(patches, inv, {9, 16, 16});
  auto a = x.to_vector(), b = back.to_vector();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("translation covariance at patch granularity") {
  Rng rng(7);
  ParamStore store(DType::F64);
  const int p = 4, d = 8, H = 16, W = 16;
  auto params = init_tokenizer(store, "tok", 9 * p * p, d, rng);

  std::vector<double> base(size_t(9) * H * W);
  for (auto& v : base) v = rng.uniform();
  // shift the content by exactly one patch along x
  std::vector<double> shifted(base.size(), 0.0);
  for (int c = 0; c < 9; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = p; x < W; ++x)
        shifted[size_t((c * H + y) * W + x)] = base[size_t((c * H + y) * W + x - p)];

  auto tokens_of = [&](const std::vector<double>& img) {
    Tensor t = Tensor::from_data({9, H, W}, img, DType::F64);
    auto idx = patch_index_chw(9, H, W, p);
    Tensor patches = gather_linear(t, idx, {int64_t(H / p) * (W / p), int64_t(9) * p * p});
    Tensor h = add(matmul(patches, params.w1), params.b1);
    return add(matmul(gelu(h), params.w2), params.b2).to_vector();
  };
  auto ta = tokens_of(base);
  auto tb = tokens_of(shifted);
  const int nw = W / p;
  for (int ti = 0; ti < H / p; ++ti)
    for (int tj = 1; tj < nw; ++tj)
      for (int k = 0; k < d; ++k) {
        double moved = tb[size_t((ti * nw + tj) * d + k)];
        double orig = ta[size_t((ti * nw + tj - 1) * d + k)];
        CHECK(moved == doctest::Approx(orig).epsilon(1e-12));
      }
}

TEST_CASE("gaussian tokenizer shapes and view independence") {
  Rng rng(8);
  ParamStore store(DType::F64);
  const int p = 4, d = 8, H = 8, W = 8;
  auto params = init_tokenizer(store, "tok_gs", 9 * p * p, d, rng);
  Tensor g = random_state(H, W, rng);
  TokenGrid grid = tokenize_gaussian(params, g, p, d);
  CHECK(grid.tokens.shape() == Shape{4, 2, 2, d});

  // permuting views permutes token-grid views identically
  auto data = g.to_vector();
  std::vector<double> permuted(data.size());
  const size_t view_sz = size_t(H) * W * 9;
  const int perm[4] = {2, 0, 3, 1};
  for (int v = 0; v < 4; ++v)
    std::copy_n(data.begin() + long(perm[v] * view_sz), view_sz,
                permuted.begin() + long(v * view_sz));
  Tensor g2 = Tensor::from_data({4, H, W, 9}, permuted, DType::F64);
  auto t1 = tokenize_gaussian(params, g, p, d).tokens.to_vector();
  auto t2 = tokenize_gaussian(params, g2, p, d).tokens.to_vector();
  const size_t tokens_per_view = size_t(2 * 2 * d);
  for (int v = 0; v < 4; ++v)
    for (size_t i = 0; i < tokens_per_view; ++i)
      CHECK(t2[size_t(v) * tokens_per_view + i] == t1[size_t(perm[v]) * tokens_per_view + i]);

  // zero weights, zero biases -> zero tokens
  ParamStore zstore(DType::F64);
  TokenizerParams zp;
  zp.w1 = zstore.create_zeros("z.w1", {9 * p * p, d});
  zp.b1 = zstore.create_zeros("z.b1", {d});
  zp.w2 = zstore.create_zeros("z.w2", {d, d});
  zp.b2 = zstore.create_zeros("z.b2", {d});
  auto zt = tokenize_gaussian(zp, g, p, d).tokens.to_vector();
  for (double v : zt) CHECK(v == 0.0);
}

TEST_CASE("assemble and split") {
  Rng rng(9);
  ParamStore store(DType::F64);
  const int p = 2, d = 6, H = 16, W = 16;  // N_h = N_w = 8
  auto tp1 = init_tokenizer(store, "a", 9 * p * p, d, rng);
  auto tp2 = init_tokenizer(store, "b", 9 * p * p, d, rng);
  ConditionedImage cond = random_cond(H, W, rng);
  Tensor g = random_state(H, W, rng);
  TokenGrid ctx = tokenize_image(tp1, cond, p, d);
  TokenGrid z_g = tokenize_gaussian(tp2, g, p, d);
  TokenSequence seq = assemble_sequence(ctx, z_g);

  CHECK(seq.tokens.shape() == Shape{320, d});  // 5 * 8 * 8
  CHECK(seq.split == 64);

  SplitTokens split = split_sequence(seq);
  CHECK(split.context.shape() == Shape{64, d});
  CHECK(split.gaussian.shape() == Shape{256, d});

  // split then concat round-trips bit-exactly
  std::array parts{split.context, split.gaussian};
  Tensor rejoined = concat(parts, 0);
  auto a = seq.tokens.to_vector(), b = rejoined.to_vector();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // context tokens occupy the leading block
  auto ctx_flat = reshape(ctx.tokens, {64, d}).to_vector();
  auto head = split.context.to_vector();
  for (size_t i = 0; i < ctx_flat.size(); ++i) CHECK(ctx_flat[i] == head[i]);
}

TEST_CASE("width mismatch fails") {
  TokenGrid a, b;
  a.nh = a.nw = 2;
  a.dim = 8;
  a.views = 1;
  a.tokens = Tensor::zeros({2, 2, 8}, DType::F64);
  b.nh = b.nw = 2;
  b.dim = 6;
  b.views = 4;
  b.tokens = Tensor::zeros({4, 2, 2, 6}, DType::F64);
  CHECK_THROWS(assemble_sequence(a, b));
}

TEST_CASE("portrait range is validated") {
  Image portrait(8, 8, 3, 1.5);
  Camera cam = camera_at(0, 0, 2.7, 8, 8, deg_to_rad(50));
  CHECK_THROWS(make_conditioned_image(portrait, plucker_embed(cam), DType::F64));
}
