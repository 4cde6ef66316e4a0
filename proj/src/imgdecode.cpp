#include "gshead/imgdecode.hpp"

#include <stdexcept>

#include "gshead/tokenize.hpp"

namespace gshead {

void init_image_decoder(ParamStore& store, const std::string& prefix, const ImgDecodeConfig& cfg,
                        Rng& rng) {
  const int p2 = cfg.patch * cfg.patch;
  store.create_randn(prefix + ".w1", {cfg.hidden, cfg.hidden}, rng, 0.02);
  store.create_zeros(prefix + ".b1", {cfg.hidden});
  store.create_randn(prefix + ".w2", {cfg.hidden, int64_t(p2) * 3}, rng, 0.02);
  store.create_zeros(prefix + ".b2", {int64_t(p2) * 3});
}

Tensor decode_views(const ParamStore& store, const std::string& prefix, const ImgDecodeConfig& cfg,
                    const Tensor& gaussian_tokens, int height, int width) {
  const int p = cfg.patch;
  const int64_t tokens_per_view = int64_t(height / p) * (width / p);
  const Shape& ts = gaussian_tokens.shape();
  if (ts.size() != 2 || ts[0] != 4 * tokens_per_view || ts[1] != cfg.hidden)
    throw std::runtime_error("decode_views: token shape " + shape_str(ts) + " does not match 4x" +
                             std::to_string(tokens_per_view) + "x" + std::to_string(cfg.hidden));

  Tensor h = gelu(add(matmul(gaussian_tokens, store.get(prefix + ".w1")),
                      store.get(prefix + ".b1")));
  Tensor patches = add(matmul(h, store.get(prefix + ".w2")), store.get(prefix + ".b2"));
  Tensor pixels = sigmoid(reshape(patches, {int64_t(4) * height * width, 3}));
  auto idx = point_to_image_index(4, height, width, 3, p);
  return gather_linear(pixels, idx, {4, height, width, 3});
}

}  // namespace gshead
