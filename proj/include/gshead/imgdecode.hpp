#pragma once

#include "gshead/tensor.hpp"

namespace gshead {

// Training-only image head: decodes the denoised Gaussian tokens back into
// the four view images ({4, H, W, 3}, sigmoid range). Removed at inference.
struct ImgDecodeConfig {
  int patch = 8;
  int hidden = 64;
};

void init_image_decoder(ParamStore& store, const std::string& prefix, const ImgDecodeConfig& cfg,
                        Rng& rng);

Tensor decode_views(const ParamStore& store, const std::string& prefix, const ImgDecodeConfig& cfg,
                    const Tensor& gaussian_tokens, int height, int width);

}  // namespace gshead
