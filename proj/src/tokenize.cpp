#include "gshead/tokenize.hpp"

#include <array>
#include <stdexcept>

namespace gshead {

ConditionedImage make_conditioned_image(const Image& portrait, const PluckerMap& rays,
                                        DType dtype) {
  if (portrait.channels != 3)
    throw std::runtime_error("conditioned image: portrait must have 3 channels");
  if (portrait.height != rays.height || portrait.width != rays.width)
    throw std::runtime_error("conditioned image: portrait and ray map extents differ");
  const int H = portrait.height, W = portrait.width;
  std::vector<double> data(size_t(9) * H * W);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double v = portrait.at(i, j, c);
        if (v < 0.0 || v > 1.0)
          throw std::runtime_error("conditioned image: portrait values must lie in [0,1]");
        data[size_t((c * H + i) * W + j)] = v;
      }
  std::copy(rays.data.begin(), rays.data.end(), data.begin() + size_t(3) * H * W);
  ConditionedImage out;
  out.height = H;
  out.width = W;
  out.tensor = Tensor::from_data({9, H, W}, data, dtype);
  return out;
}

static void check_divisible(int height, int width, int patch, const char* who) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0)
    throw std::runtime_error(std::string(who) + ": extents " + std::to_string(height) + "x" +
                             std::to_string(width) + " not divisible by patch size " +
                             std::to_string(patch));
}

std::shared_ptr<std::vector<int64_t>> patch_index_chw(int channels, int height, int width,
                                                      int patch) {
  check_divisible(height, width, patch, "patch_index_chw");
  const int nh = height / patch, nw = width / patch;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(size_t(channels) * height * width);
  for (int ti = 0; ti < nh; ++ti)
    for (int tj = 0; tj < nw; ++tj)
      for (int c = 0; c < channels; ++c)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px) {
            int y = ti * patch + py, x = tj * patch + px;
            idx->push_back(int64_t((c * height + y) * width + x));
          }
  return idx;
}

std::shared_ptr<std::vector<int64_t>> patch_index_vhwc(int views, int height, int width,
                                                       int channels, int patch) {
  check_divisible(height, width, patch, "patch_index_vhwc");
  const int nh = height / patch, nw = width / patch;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(size_t(views) * channels * height * width);
  for (int v = 0; v < views; ++v)
    for (int ti = 0; ti < nh; ++ti)
      for (int tj = 0; tj < nw; ++tj)
        for (int c = 0; c < channels; ++c)
          for (int py = 0; py < patch; ++py)
            for (int px = 0; px < patch; ++px) {
              int y = ti * patch + py, x = tj * patch + px;
              idx->push_back(int64_t(((v * height + y) * width + x) * channels + c));
            }
  return idx;
}

std::shared_ptr<std::vector<int64_t>> point_to_image_index(int views, int height, int width,
                                                           int channels, int patch) {
  check_divisible(height, width, patch, "point_to_image_index");
  const int nh = height / patch, nw = width / patch;
  const int64_t per_view = int64_t(nh) * nw * patch * patch;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(size_t(views) * height * width * channels);
  for (int v = 0; v < views; ++v)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        int ti = y / patch, py = y % patch;
        int tj = x / patch, px = x % patch;
        int64_t point = v * per_view + (int64_t(ti) * nw + tj) * patch * patch + py * patch + px;
        for (int c = 0; c < channels; ++c) idx->push_back(point * channels + c);
      }
  return idx;
}

TokenizerParams init_tokenizer(ParamStore& store, const std::string& prefix, int in_dim,
                               int hidden, Rng& rng) {
  TokenizerParams p;
  p.w1 = store.create_randn(prefix + ".w1", {in_dim, hidden}, rng, 0.02);
  p.b1 = store.create_zeros(prefix + ".b1", {hidden});
  p.w2 = store.create_randn(prefix + ".w2", {hidden, hidden}, rng, 0.02);
  p.b2 = store.create_zeros(prefix + ".b2", {hidden});
  return p;
}

TokenizerParams tokenizer_params(const ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".w1"), store.get(prefix + ".b1"), store.get(prefix + ".w2"),
          store.get(prefix + ".b2")};
}

static Tensor patch_mlp(const TokenizerParams& p, const Tensor& patches) {
  Tensor h = add(matmul(patches, p.w1), p.b1);
  h = gelu(h);
  return add(matmul(h, p.w2), p.b2);
}

TokenGrid tokenize_image(const TokenizerParams& params, const ConditionedImage& cond, int patch,
                         int hidden) {
  check_divisible(cond.height, cond.width, patch, "tokenize_image");
  const int nh = cond.height / patch, nw = cond.width / patch;
  const int64_t tokens = int64_t(nh) * nw;
  const int64_t in_dim = int64_t(9) * patch * patch;
  auto idx = patch_index_chw(9, cond.height, cond.width, patch);
  Tensor patches = gather_linear(cond.tensor, idx, {tokens, in_dim});
  Tensor tok = patch_mlp(params, patches);
  TokenGrid grid;
  grid.views = 1;
  grid.nh = nh;
  grid.nw = nw;
  grid.dim = hidden;
  grid.tokens = reshape(tok, {nh, nw, hidden});
  return grid;
}

TokenGrid tokenize_gaussian(const TokenizerParams& params, const Tensor& g_state, int patch,
                            int hidden) {
  const Shape& s = g_state.shape();
  if (s.size() != 4 || s[3] != 9)
    throw std::runtime_error("tokenize_gaussian: expected {V,H,W,9}, got " + shape_str(s));
  const int V = int(s[0]), H = int(s[1]), W = int(s[2]);
  check_divisible(H, W, patch, "tokenize_gaussian");
  const int nh = H / patch, nw = W / patch;
  const int64_t tokens = int64_t(nh) * nw;
  const int64_t in_dim = int64_t(9) * patch * patch;
  auto idx = patch_index_vhwc(V, H, W, 9, patch);
  Tensor patches = gather_linear(g_state, idx, {V, tokens, in_dim});
  Tensor tok = patch_mlp(params, patches);  // view-shared weights
  TokenGrid grid;
  grid.views = V;
  grid.nh = nh;
  grid.nw = nw;
  grid.dim = hidden;
  grid.tokens = reshape(tok, {V, nh, nw, hidden});
  return grid;
}

TokenSequence assemble_sequence(const TokenGrid& ctx, const TokenGrid& z_g) {
  if (ctx.dim != z_g.dim)
    throw std::runtime_error("assemble_sequence: token widths differ, " +
                             std::to_string(ctx.dim) + " vs " + std::to_string(z_g.dim));
  if (ctx.nh != z_g.nh || ctx.nw != z_g.nw)
    throw std::runtime_error("assemble_sequence: token grids differ");
  const int64_t t = int64_t(ctx.nh) * ctx.nw;
  Tensor c = reshape(ctx.tokens, {t, ctx.dim});
  Tensor g = reshape(z_g.tokens, {int64_t(z_g.views) * t, z_g.dim});
  std::array parts{c, g};
  TokenSequence seq;
  seq.nh = ctx.nh;
  seq.nw = ctx.nw;
  seq.dim = ctx.dim;
  seq.split = t;
  seq.tokens = concat(parts, 0);
  return seq;
}

SplitTokens split_sequence(const TokenSequence& seq) {
  const int64_t total = seq.tokens.shape()[0];
  if (seq.split <= 0 || seq.split >= total)
    throw std::runtime_error("split_sequence: invalid split index");
  SplitTokens out;
  out.context = slice(seq.tokens, 0, 0, seq.split);
  out.gaussian = slice(seq.tokens, 0, seq.split, total - seq.split);
  return out;
}

}  // namespace gshead
