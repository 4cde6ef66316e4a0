#pragma once

#include <memory>

#include "gshead/camera.hpp"
#include "gshead/image.hpp"
#include "gshead/tensor.hpp"

namespace gshead {

// Portrait stacked with its per-pixel rays, channel-major {9, H, W}:
// channels 0-2 rgb in [0,1], channels 3-8 the Plucker embedding.
struct ConditionedImage {
  int height = 0, width = 0;
  Tensor tensor;
};

ConditionedImage make_conditioned_image(const Image& portrait, const PluckerMap& rays, DType dtype);

// Latent token grid. views == 1 for the context branch, otherwise the
// per-view Gaussian branch ({views, nh, nw, dim}).
struct TokenGrid {
  int views = 1;
  int nh = 0, nw = 0, dim = 0;
  Tensor tokens;
};

// Joint sequence {5*nh*nw, dim}; context tokens occupy [0, split).
struct TokenSequence {
  int nh = 0, nw = 0, dim = 0;
  int64_t split = 0;
  Tensor tokens;
};

// Gather indices for the patch layout moves. Patch vectors are ordered
// (channel, py, px); token t = ti*nw + tj scans rows first.
std::shared_ptr<std::vector<int64_t>> patch_index_chw(int channels, int height, int width,
                                                      int patch);
// {V,H,W,C} -> {V, T, C*p*p}
std::shared_ptr<std::vector<int64_t>> patch_index_vhwc(int views, int height, int width,
                                                       int channels, int patch);
// {V*T*p*p, C} point-major features -> {V, H, W, C} images
std::shared_ptr<std::vector<int64_t>> point_to_image_index(int views, int height, int width,
                                                           int channels, int patch);

// Two-layer patch-projection MLP shared by both tokenizers.
struct TokenizerParams {
  Tensor w1, b1, w2, b2;
};
TokenizerParams init_tokenizer(ParamStore& store, const std::string& prefix, int in_dim,
                               int hidden, Rng& rng);
TokenizerParams tokenizer_params(const ParamStore& store, const std::string& prefix);

TokenGrid tokenize_image(const TokenizerParams& params, const ConditionedImage& cond, int patch,
                         int hidden);
// g_state: {4, H, W, 9}
TokenGrid tokenize_gaussian(const TokenizerParams& params, const Tensor& g_state, int patch,
                            int hidden);

TokenSequence assemble_sequence(const TokenGrid& ctx, const TokenGrid& z_g);

struct SplitTokens {
  Tensor context;   // {nh*nw, dim}
  Tensor gaussian;  // {4*nh*nw, dim}
};
SplitTokens split_sequence(const TokenSequence& seq);

}  // namespace gshead
