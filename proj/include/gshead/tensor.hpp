#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gshead/rng.hpp"

namespace gshead {

enum class DType { F32, F64 };

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

// Runs BODY with `scalar_t` bound to the element type of DT.
#define GSHEAD_DISPATCH(DT, ...)                  \
  do {                                            \
    if ((DT) == ::gshead::DType::F32) {           \
      using scalar_t = float;                     \
      __VA_ARGS__                                 \
    } else {                                      \
      using scalar_t = double;                    \
      __VA_ARGS__                                 \
    }                                             \
  } while (0)

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the recorded computation. Value and gradient are dense,
// contiguous, row-major. Exactly one of the value vectors is in use,
// selected by dtype.
struct Node {
  Shape shape;
  DType dtype = DType::F32;
  bool requires_grad = false;
  const char* op = "leaf";

  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<float> vf;
  std::vector<double> vd;
  std::vector<float> gf;
  std::vector<double> gd;
  bool grad_ready = false;

  int64_t numel() const { return shape_numel(shape); }

  template <typename T> std::vector<T>& val();
  template <typename T> const std::vector<T>& val() const;
  template <typename T> std::vector<T>& grd();
  template <typename T> const std::vector<T>& grd() const;

  void ensure_grad();
  void zero_grad();
};

template <> inline std::vector<float>& Node::val<float>() { return vf; }
template <> inline std::vector<double>& Node::val<double>() { return vd; }
template <> inline const std::vector<float>& Node::val<float>() const { return vf; }
template <> inline const std::vector<double>& Node::val<double>() const { return vd; }
template <> inline std::vector<float>& Node::grd<float>() { return gf; }
template <> inline std::vector<double>& Node::grd<double>() { return gd; }
template <> inline const std::vector<float>& Node::grd<float>() const { return gf; }
template <> inline const std::vector<double>& Node::grd<double>() const { return gd; }

// Value-semantic handle onto a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node(std::move(n)) {}

  static Tensor zeros(Shape shape, DType dtype, bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype);
  static Tensor from_data(Shape shape, std::span<const double> values, DType dtype);
  static Tensor randn(Shape shape, Rng& rng, DType dtype, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  int64_t numel() const { return node->numel(); }
  DType dtype() const { return node->dtype; }
  bool requires_grad() const { return node->requires_grad; }
  void set_requires_grad(bool rg);

  double item() const;
  double at(int64_t linear_index) const;
  std::vector<double> to_vector() const;
  void copy_from(std::span<const double> values);

  template <typename T> std::span<T> data() { return {node->val<T>().data(), node->val<T>().size()}; }
  template <typename T> std::span<const T> data() const {
    return {node->val<T>().data(), node->val<T>().size()};
  }

  bool has_grad() const { return node->grad_ready; }
  std::vector<double> grad_to_vector() const;
  void zero_grad() { node->zero_grad(); }

  // Leaf copy of the value, disconnected from the graph.
  Tensor detached() const;

  std::shared_ptr<Node> node;
};

// Fills gradient slots of everything reachable from `loss` (a scalar).
void backward(const Tensor& loss);

// ---- forward ops -----------------------------------------------------------
// Binary ops accept b with the same shape as a, a shape matching a's trailing
// dims (broadcast over leading), or a's shape with last extent 1 (broadcast
// along the last axis). No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// [B..., M, K] x [B..., K, N] with identical leading dims, or rhs rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);

// out[i] = a[index[i]]; backward scatter-adds, so duplicate indices are fine.
Tensor gather_linear(const Tensor& a, std::shared_ptr<const std::vector<int64_t>> index,
                     Shape out_shape);

Tensor layer_norm(const Tensor& a, double eps = 1e-5);  // last axis, no affine
Tensor softmax(const Tensor& a);                        // last axis

Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor rsqrt(const Tensor& a, double eps = 0.0);
Tensor softplus(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim);

// {H, W, C} -> {H/2, W/2, C}, 2x2 average pooling.
Tensor avg_pool2(const Tensor& a);

// Generic multi-input op with externally supplied forward value and backward.
// The renderer plugs in through this.
Tensor custom_op(const char* name, std::span<const Tensor> inputs, Shape out_shape,
                 std::function<void(Node&)> forward_fill, std::function<void(Node&)> backward_fn);

// ---- parameters & optimizer ------------------------------------------------

struct AdamWConfig;

class ParamStore {
 public:
  explicit ParamStore(DType dtype = DType::F32) : dtype_(dtype) {}

  DType dtype() const { return dtype_; }

  Tensor create_randn(const std::string& name, Shape shape, Rng& rng, double stddev);
  Tensor create_zeros(const std::string& name, Shape shape);
  Tensor create_const(const std::string& name, Shape shape, double value);
  void adopt(const std::string& name, Tensor t);  // registers an existing leaf

  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  size_t size() const { return params_.size(); }
  int64_t total_elements() const;

  const std::map<std::string, Tensor>& all() const { return params_; }
  std::vector<std::string> names(const std::string& prefix = "") const;
  void remove_group(const std::string& prefix);

  void zero_grad();

 private:
  DType dtype_;
  std::map<std::string, Tensor> params_;  // lexicographic by construction

  friend void adamw_step(ParamStore&, const AdamWConfig&);
  struct Moments {
    std::vector<double> m, v;
    int64_t steps = 0;
  };
  std::map<std::string, Moments> moments_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay Adam step over every parameter in the store.
// Throws if a parameter has no populated gradient, naming it.
void adamw_step(ParamStore& store, const AdamWConfig& cfg);

}  // namespace gshead
