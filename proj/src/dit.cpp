#include "gshead/dit.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace gshead {

void DiTConfig::validate() const {
  if (depth < 1) throw std::runtime_error("dit: depth must be >= 1");
  if (heads < 1 || hidden % heads != 0)
    throw std::runtime_error("dit: hidden width " + std::to_string(hidden) +
                             " not divisible by heads " + std::to_string(heads));
  if (t_embed_dim < 2 || t_embed_dim % 2 != 0)
    throw std::runtime_error("dit: t_embed_dim must be even and >= 2");
}

Tensor timestep_embedding(double t, int dim, DType dtype) {
  const int half = dim / 2;
  std::vector<double> v(static_cast<size_t>(dim));
  // frequencies span ~3 decades over the unit interval
  const double scaled = t * 1000.0;
  for (int k = 0; k < half; ++k) {
    double freq = std::pow(10000.0, -double(k) / double(half));
    v[size_t(k)] = std::cos(scaled * freq);
    v[size_t(half + k)] = std::sin(scaled * freq);
  }
  return Tensor::from_data({1, dim}, v, dtype);
}

static std::string blk(const std::string& prefix, int i, const char* name) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return prefix + ".blk" + buf + "." + name;
}

void init_dit(ParamStore& store, const std::string& prefix, const DiTConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.hidden;
  store.create_randn(prefix + ".temb.w1", {cfg.t_embed_dim, d}, rng, 0.02);
  store.create_zeros(prefix + ".temb.b1", {d});
  store.create_randn(prefix + ".temb.w2", {d, d}, rng, 0.02);
  store.create_zeros(prefix + ".temb.b2", {d});
  for (int i = 0; i < cfg.depth; ++i) {
    store.create_randn(blk(prefix, i, "qkv_w"), {d, 3 * d}, rng, 0.02);
    store.create_zeros(blk(prefix, i, "qkv_b"), {3 * d});
    store.create_randn(blk(prefix, i, "proj_w"), {d, d}, rng, 0.02);
    store.create_zeros(blk(prefix, i, "proj_b"), {d});
    store.create_randn(blk(prefix, i, "mlp_w1"), {d, cfg.mlp_ratio * d}, rng, 0.02);
    store.create_zeros(blk(prefix, i, "mlp_b1"), {cfg.mlp_ratio * d});
    store.create_randn(blk(prefix, i, "mlp_w2"), {cfg.mlp_ratio * d, d}, rng, 0.02);
    store.create_zeros(blk(prefix, i, "mlp_b2"), {d});
    // adaLN-zero: shift/scale/gate for attention and mlp, all starting at zero
    store.create_zeros(blk(prefix, i, "ada_w"), {d, 6 * d});
    store.create_zeros(blk(prefix, i, "ada_b"), {6 * d});
  }
}

static Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale) {
  return add(mul(x, add_scalar(scale, 1.0)), shift);
}

static Tensor attention(const ParamStore& store, const std::string& prefix, int block,
                        const DiTConfig& cfg, const Tensor& x) {
  const int64_t L = x.shape()[0];
  const int d = cfg.hidden;
  const int h = cfg.heads;
  const int64_t dh = d / h;

  Tensor qkv = add(matmul(x, store.get(blk(prefix, block, "qkv_w"))),
                   store.get(blk(prefix, block, "qkv_b")));
  auto heads_of = [&](int part) {
    Tensor s = slice(qkv, 1, part * d, d);            // {L, d}
    s = reshape(s, {L, h, dh});
    return transpose(s, 0, 1);                        // {h, L, dh}
  };
  Tensor q = heads_of(0);
  Tensor k = heads_of(1);
  Tensor v = heads_of(2);

  Tensor scores = mul_scalar(matmul(q, transpose(k, 1, 2)), 1.0 / std::sqrt(double(dh)));
  Tensor attn = softmax(scores);                      // rows sum to 1
  Tensor ctx = matmul(attn, v);                       // {h, L, dh}
  ctx = reshape(transpose(ctx, 0, 1), {L, d});
  return add(matmul(ctx, store.get(blk(prefix, block, "proj_w"))),
             store.get(blk(prefix, block, "proj_b")));
}

Tensor dit_forward(const ParamStore& store, const std::string& prefix, const DiTConfig& cfg,
                   const Tensor& sequence, double t) {
  cfg.validate();
  if (t < 0.0 || t > 1.0)
    throw std::runtime_error("dit_forward: t=" + std::to_string(t) + " outside [0,1]");
  const Shape& s = sequence.shape();
  if (s.size() != 2 || s[1] != cfg.hidden)
    throw std::runtime_error("dit_forward: sequence " + shape_str(s) + " does not match hidden " +
                             std::to_string(cfg.hidden));

  Tensor temb = timestep_embedding(t, cfg.t_embed_dim, sequence.dtype());
  Tensor cond = add(matmul(temb, store.get(prefix + ".temb.w1")), store.get(prefix + ".temb.b1"));
  cond = silu(cond);
  cond = add(matmul(cond, store.get(prefix + ".temb.w2")), store.get(prefix + ".temb.b2"));

  const int d = cfg.hidden;
  Tensor x = sequence;
  for (int i = 0; i < cfg.depth; ++i) {
    Tensor mod = add(matmul(cond, store.get(blk(prefix, i, "ada_w"))),
                     store.get(blk(prefix, i, "ada_b")));  // {1, 6d}
    auto part = [&](int j) { return reshape(slice(mod, 1, j * d, d), {d}); };
    Tensor shift_a = part(0), scale_a = part(1), gate_a = part(2);
    Tensor shift_m = part(3), scale_m = part(4), gate_m = part(5);

    Tensor h = modulate(layer_norm(x), shift_a, scale_a);
    x = add(x, mul(attention(store, prefix, i, cfg, h), gate_a));

    Tensor m = modulate(layer_norm(x), shift_m, scale_m);
    m = add(matmul(m, store.get(blk(prefix, i, "mlp_w1"))), store.get(blk(prefix, i, "mlp_b1")));
    m = gelu(m);
    m = add(matmul(m, store.get(blk(prefix, i, "mlp_w2"))), store.get(blk(prefix, i, "mlp_b2")));
    x = add(x, mul(m, gate_m));
  }
  return x;
}

}  // namespace gshead
