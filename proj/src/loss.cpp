#include "gshead/loss.hpp"

#include <stdexcept>

namespace gshead {

Tensor mse_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw std::runtime_error("mse: shape mismatch " + shape_str(pred.shape()) + " vs " +
                             shape_str(truth.shape()));
  Tensor d = sub(pred, truth);
  return mean_all(mul(d, d));
}

static Tensor image_grad_l1(const Tensor& a, const Tensor& b) {
  const Shape& s = a.shape();
  const int64_t H = s[0], W = s[1];
  Tensor dax = sub(slice(a, 1, 1, W - 1), slice(a, 1, 0, W - 1));
  Tensor dbx = sub(slice(b, 1, 1, W - 1), slice(b, 1, 0, W - 1));
  Tensor day = sub(slice(a, 0, 1, H - 1), slice(a, 0, 0, H - 1));
  Tensor dby = sub(slice(b, 0, 1, H - 1), slice(b, 0, 0, H - 1));
  return add(mean_all(abs(sub(dax, dbx))), mean_all(abs(sub(day, dby))));
}

Tensor gradient_pyramid_loss(const Tensor& pred, const Tensor& truth, int levels) {
  if (pred.shape() != truth.shape())
    throw std::runtime_error("perceptual: shape mismatch " + shape_str(pred.shape()) + " vs " +
                             shape_str(truth.shape()));
  if (pred.shape().size() != 3)
    throw std::runtime_error("perceptual: expected {H,W,C}, got " + shape_str(pred.shape()));
  Tensor a = pred, b = truth;
  Tensor acc;
  int used = 0;
  for (int level = 0; level < levels; ++level) {
    const Shape& s = a.shape();
    if (s[0] < 2 || s[1] < 2) break;
    Tensor term = image_grad_l1(a, b);
    acc = used == 0 ? term : add(acc, term);
    ++used;
    if (s[0] < 4 || s[1] < 4 || s[0] % 2 != 0 || s[1] % 2 != 0) break;
    a = avg_pool2(a);
    b = avg_pool2(b);
  }
  if (used == 0) throw std::runtime_error("perceptual: image too small");
  return mul_scalar(acc, 1.0 / double(used));
}

PerceptualPlugin default_perceptual_plugin() {
  return [](const Tensor& pred, const Tensor& truth) {
    return gradient_pyramid_loss(pred, truth, 3);
  };
}

static Tensor pooled_terms(std::span<const Tensor> preds, std::span<const Tensor> truths,
                           const LossWeights& w, const PerceptualPlugin& plugin,
                           const char* group) {
  if (preds.size() != truths.size())
    throw std::runtime_error(std::string("total_loss: unpaired ") + group + " views (" +
                             std::to_string(preds.size()) + " predictions, " +
                             std::to_string(truths.size()) + " truths)");
  Tensor acc;
  for (size_t i = 0; i < preds.size(); ++i) {
    Tensor term = mul_scalar(mse_loss(preds[i], truths[i]), w.lambda2);
    if (w.lambda_p != 0.0 && plugin)
      term = add(term, mul_scalar(plugin(preds[i], truths[i]), w.lambda_p));
    acc = i == 0 ? term : add(acc, term);
  }
  if (!acc.defined()) return acc;
  return mul_scalar(acc, 1.0 / double(preds.size()));
}

Tensor total_loss(std::span<const Tensor> render_preds, std::span<const Tensor> render_truths,
                  std::span<const Tensor> decoded_preds, std::span<const Tensor> decoded_truths,
                  const LossWeights& weights, const PerceptualPlugin& plugin) {
  Tensor render_term = pooled_terms(render_preds, render_truths, weights, plugin, "render");
  Tensor decoded_term = pooled_terms(decoded_preds, decoded_truths, weights, plugin, "decoded");
  if (!render_term.defined() && !decoded_term.defined())
    throw std::runtime_error("total_loss: no supervised views");
  if (!render_term.defined()) return decoded_term;
  if (!decoded_term.defined()) return render_term;
  return add(render_term, decoded_term);
}

}  // namespace gshead
