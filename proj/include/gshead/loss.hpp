#pragma once

#include <functional>
#include <span>

#include "gshead/tensor.hpp"

namespace gshead {

struct LossWeights {
  double lambda2 = 1.0;   // pixel term
  double lambda_p = 0.5;  // perceptual term
};

// Perceptual-loss plugin: scalar graph tensor from a prediction/truth pair.
// Must be zero on identical inputs and nonnegative. The default stand-in is
// a multi-scale image-gradient difference; a neural metric can be mounted
// here without touching the training loop.
using PerceptualPlugin = std::function<Tensor(const Tensor& pred, const Tensor& truth)>;

// L1 on horizontal/vertical image gradients over a 3-level average pyramid.
// Expects {H, W, 3} (or any {H, W, C}) inputs.
Tensor gradient_pyramid_loss(const Tensor& pred, const Tensor& truth, int levels = 3);

PerceptualPlugin default_perceptual_plugin();

// lambda2 * (mean MSE over render views + mean MSE over decoded views) +
// lambda_p * (same pooling of the plugin term). The decoded spans may be
// empty (supervision without the image branch).
Tensor total_loss(std::span<const Tensor> render_preds, std::span<const Tensor> render_truths,
                  std::span<const Tensor> decoded_preds, std::span<const Tensor> decoded_truths,
                  const LossWeights& weights, const PerceptualPlugin& plugin);

Tensor mse_loss(const Tensor& pred, const Tensor& truth);

}  // namespace gshead
