#include "gshead/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gshead {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void Node::ensure_grad() {
  if (grad_ready) return;
  if (dtype == DType::F32)
    gf.assign(size_t(numel()), 0.0f);
  else
    gd.assign(size_t(numel()), 0.0);
  grad_ready = true;
}

void Node::zero_grad() {
  grad_ready = false;
  gf.clear();
  gd.clear();
  ensure_grad();
}

// ---- Tensor basics ----------------------------------------------------------

static std::shared_ptr<Node> make_leaf(Shape shape, DType dtype) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->dtype = dtype;
  n->op = "leaf";
  GSHEAD_DISPATCH(dtype, { n->val<scalar_t>().assign(size_t(n->numel()), scalar_t(0)); });
  return n;
}

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  for (int64_t e : shape) check(e > 0, "tensor: non-positive extent in " + shape_str(shape));
  Tensor t(make_leaf(std::move(shape), dtype));
  t.node->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  GSHEAD_DISPATCH(dtype, {
    for (auto& v : t.node->val<scalar_t>()) v = scalar_t(value);
  });
  return t;
}

Tensor Tensor::from_data(Shape shape, std::span<const double> values, DType dtype) {
  check(int64_t(values.size()) == shape_numel(shape),
        "tensor: data size " + std::to_string(values.size()) + " does not match shape " +
            shape_str(shape));
  Tensor t = zeros(std::move(shape), dtype);
  t.copy_from(values);
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, DType dtype, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  GSHEAD_DISPATCH(dtype, {
    for (auto& v : t.node->val<scalar_t>()) v = scalar_t(rng.normal() * stddev);
  });
  return t;
}

void Tensor::set_requires_grad(bool rg) {
  check(node->parents.empty(), "set_requires_grad: only valid on leaf tensors");
  node->requires_grad = rg;
}

double Tensor::item() const {
  check(numel() == 1, "item: tensor has shape " + shape_str(shape()));
  return at(0);
}

double Tensor::at(int64_t i) const {
  double out = 0;
  GSHEAD_DISPATCH(dtype(), { out = double(node->val<scalar_t>()[size_t(i)]); });
  return out;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel()));
  GSHEAD_DISPATCH(dtype(), {
    const auto& v = node->val<scalar_t>();
    for (size_t i = 0; i < v.size(); ++i) out[i] = double(v[i]);
  });
  return out;
}

void Tensor::copy_from(std::span<const double> values) {
  check(int64_t(values.size()) == numel(), "copy_from: size mismatch");
  GSHEAD_DISPATCH(dtype(), {
    auto& v = node->val<scalar_t>();
    for (size_t i = 0; i < v.size(); ++i) v[i] = scalar_t(values[i]);
  });
}

std::vector<double> Tensor::grad_to_vector() const {
  check(node->grad_ready, "grad_to_vector: gradient not populated");
  std::vector<double> out(static_cast<size_t>(numel()));
  GSHEAD_DISPATCH(dtype(), {
    const auto& g = node->grd<scalar_t>();
    for (size_t i = 0; i < g.size(); ++i) out[i] = double(g[i]);
  });
  return out;
}

Tensor Tensor::detached() const {
  Tensor t = zeros(shape(), dtype());
  GSHEAD_DISPATCH(dtype(), { t.node->val<scalar_t>() = node->val<scalar_t>(); });
  return t;
}

// ---- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  check(loss.defined(), "backward: undefined tensor");
  check(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
  check(loss.node->requires_grad,
        "backward: tensor is detached from the graph (no differentiable inputs)");

  // Post-order over parents, iterative to keep stack depth bounded.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node.get(), 0);
  visited.insert(loss.node.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node->ensure_grad();
  GSHEAD_DISPATCH(loss.dtype(), { loss.node->grd<scalar_t>()[0] = scalar_t(1); });

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad_ready && n->backward_fn) n->backward_fn(*n);
  }
}

// ---- op plumbing ---------------------------------------------------------------

static Tensor make_op(const char* op, Shape out_shape, DType dtype,
                      std::span<const Tensor> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(out_shape);
  n->dtype = dtype;
  n->op = op;
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in.node->requires_grad;
  n->requires_grad = rg;
  if (rg)
    for (const auto& in : inputs) n->parents.push_back(in.node);
  GSHEAD_DISPATCH(dtype, { n->val<scalar_t>().assign(size_t(n->numel()), scalar_t(0)); });
  return Tensor(std::move(n));
}

static void check_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
  check(a.dtype() == b.dtype(), std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                                    " vs " + dtype_name(b.dtype()) + ")");
}

enum class BMode { Same, TrailingVec, LastOne };

static BMode broadcast_mode(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return BMode::Same;
  if (b.size() < a.size()) {
    bool trail = true;
    for (size_t i = 0; i < b.size(); ++i)
      trail = trail && (b[b.size() - 1 - i] == a[a.size() - 1 - i]);
    if (trail) return BMode::TrailingVec;
  }
  if (b.size() == a.size() && b.back() == 1) {
    bool lead = true;
    for (size_t i = 0; i + 1 < a.size(); ++i) lead = lead && (a[i] == b[i]);
    if (lead) return BMode::LastOne;
  }
  fail(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
static void binary_forward(BMode mode, const std::vector<T>& a, const std::vector<T>& b,
                           std::vector<T>& out, int64_t last, bool is_mul, bool negate_b) {
  const int64_t n = int64_t(a.size());
  const int64_t bn = int64_t(b.size());
  for (int64_t i = 0; i < n; ++i) {
    int64_t bi = mode == BMode::Same ? i : (mode == BMode::TrailingVec ? i % bn : i / last);
    T bv = negate_b ? -b[size_t(bi)] : b[size_t(bi)];
    out[size_t(i)] = is_mul ? a[size_t(i)] * bv : a[size_t(i)] + bv;
  }
}

static Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, bool is_mul,
                        bool negate_b) {
  check_same_dtype(op, a, b);
  BMode mode = broadcast_mode(op, a.shape(), b.shape());
  const int64_t last = a.shape().empty() ? 1 : a.shape().back();
  Tensor out = make_op(op, a.shape(), a.dtype(), std::array{a, b});
  GSHEAD_DISPATCH(a.dtype(), {
    binary_forward<scalar_t>(mode, a.node->val<scalar_t>(), b.node->val<scalar_t>(),
                             out.node->val<scalar_t>(), last, is_mul, negate_b);
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [mode, last, is_mul, negate_b](Node& n) {
      Node& pa = *n.parents[0];
      Node& pb = *n.parents[1];
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        const auto& av = pa.val<scalar_t>();
        const auto& bv = pb.val<scalar_t>();
        const int64_t total = int64_t(g.size());
        const int64_t bn = int64_t(bv.size());
        if (pa.requires_grad) {
          pa.ensure_grad();
          auto& ga = pa.grd<scalar_t>();
          for (int64_t i = 0; i < total; ++i) {
            if (is_mul) {
              int64_t bi = mode == BMode::Same ? i : (mode == BMode::TrailingVec ? i % bn : i / last);
              ga[size_t(i)] += g[size_t(i)] * bv[size_t(bi)];
            } else {
              ga[size_t(i)] += g[size_t(i)];
            }
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          auto& gb = pb.grd<scalar_t>();
          for (int64_t i = 0; i < total; ++i) {
            int64_t bi = mode == BMode::Same ? i : (mode == BMode::TrailingVec ? i % bn : i / last);
            scalar_t contrib = is_mul ? g[size_t(i)] * av[size_t(i)] : g[size_t(i)];
            gb[size_t(bi)] += negate_b ? -contrib : contrib;
          }
        }
      });
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", a, b, false, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", a, b, false, true); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", a, b, true, false); }

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = make_op("add_scalar", a.shape(), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& av = a.node->val<scalar_t>();
    auto& ov = out.node->val<scalar_t>();
    for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + scalar_t(c);
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      });
    };
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = make_op("mul_scalar", a.shape(), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& av = a.node->val<scalar_t>();
    auto& ov = out.node->val<scalar_t>();
    for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * scalar_t(c);
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [c](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * scalar_t(c);
      });
    };
  }
  return out;
}

// ---- matmul --------------------------------------------------------------------

template <typename T>
static void mm_forward(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for if (M * K * N > (1 << 16))
  for (int64_t m = 0; m < M; ++m) {
    T* crow = C + m * N;
    for (int64_t k = 0; k < K; ++k) {
      T a = A[m * K + k];
      const T* brow = B + k * N;
      for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

template <typename T>
static void mm_grad_a(const T* G, const T* B, T* dA, int64_t M, int64_t K, int64_t N) {
  // dA = G @ B^T
#pragma omp parallel for if (M * K * N > (1 << 16))
  for (int64_t m = 0; m < M; ++m) {
    const T* grow = G + m * N;
    for (int64_t k = 0; k < K; ++k) {
      const T* brow = B + k * N;
      T acc = 0;
      for (int64_t n = 0; n < N; ++n) acc += grow[n] * brow[n];
      dA[m * K + k] += acc;
    }
  }
}

template <typename T>
static void mm_grad_b(const T* A, const T* G, T* dB, int64_t M, int64_t K, int64_t N) {
  // dB = A^T @ G
#pragma omp parallel for if (M * K * N > (1 << 16))
  for (int64_t k = 0; k < K; ++k) {
    T* drow = dB + k * N;
    for (int64_t m = 0; m < M; ++m) {
      T a = A[m * K + k];
      const T* grow = G + m * N;
      for (int64_t n = 0; n < N; ++n) drow[n] += a * grow[n];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_dtype("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.size() >= 2 && sb.size() >= 2,
        "matmul: operands must be at least rank 2, got " + shape_str(sa) + " and " + shape_str(sb));
  const bool b_shared = sb.size() == 2 && sa.size() > 2;
  if (!b_shared)
    check(sa.size() == sb.size() &&
              std::equal(sa.begin(), sa.end() - 2, sb.begin()),
          "matmul: leading dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
  const int64_t M = sa[sa.size() - 2], K = sa[sa.size() - 1];
  const int64_t Kb = sb[sb.size() - 2], N = sb[sb.size() - 1];
  check(K == Kb, "matmul: inner dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
  int64_t batch = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor out = make_op("matmul", std::move(out_shape), a.dtype(), std::array{a, b});

  GSHEAD_DISPATCH(a.dtype(), {
    const scalar_t* A = a.node->val<scalar_t>().data();
    const scalar_t* B = b.node->val<scalar_t>().data();
    scalar_t* C = out.node->val<scalar_t>().data();
    for (int64_t bi = 0; bi < batch; ++bi)
      mm_forward(A + bi * M * K, b_shared ? B : B + bi * K * N, C + bi * M * N, M, K, N);
  });

  if (out.requires_grad()) {
    out.node->backward_fn = [M, K, N, batch, b_shared](Node& n) {
      Node& pa = *n.parents[0];
      Node& pb = *n.parents[1];
      GSHEAD_DISPATCH(n.dtype, {
        const scalar_t* G = n.grd<scalar_t>().data();
        const scalar_t* A = pa.val<scalar_t>().data();
        const scalar_t* B = pb.val<scalar_t>().data();
        if (pa.requires_grad) {
          pa.ensure_grad();
          scalar_t* dA = pa.grd<scalar_t>().data();
          for (int64_t bi = 0; bi < batch; ++bi)
            mm_grad_a(G + bi * M * N, b_shared ? B : B + bi * K * N, dA + bi * M * K, M, K, N);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          scalar_t* dB = pb.grd<scalar_t>().data();
          for (int64_t bi = 0; bi < batch; ++bi)
            mm_grad_b(A + bi * M * K, G + bi * M * N, b_shared ? dB : dB + bi * K * N, M, K, N);
        }
      });
    };
  }
  return out;
}

// ---- layout ops -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), "reshape: element count mismatch, " +
                                             shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor out = make_op("reshape", std::move(shape), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), { out.node->val<scalar_t>() = a.node->val<scalar_t>(); });
  if (out.requires_grad()) {
    out.node->backward_fn = [](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      });
    };
  }
  return out;
}

static std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = int(s.size()) - 2; i >= 0; --i) st[size_t(i)] = st[size_t(i) + 1] * s[size_t(i) + 1];
  return st;
}

template <typename T>
static void transpose_copy(const std::vector<T>& in, std::vector<T>& out, const Shape& out_shape,
                           const std::vector<int64_t>& in_strides_permuted) {
  const int rank = int(out_shape.size());
  const int64_t n = int64_t(out.size());
  for (int64_t i = 0; i < n; ++i) {
    int64_t rem = i, src = 0;
    for (int d = rank - 1; d >= 0; --d) {
      int64_t c = rem % out_shape[size_t(d)];
      rem /= out_shape[size_t(d)];
      src += c * in_strides_permuted[size_t(d)];
    }
    out[size_t(i)] = in[size_t(src)];
  }
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
  const Shape& s = a.shape();
  const int rank = int(s.size());
  check(axis0 >= 0 && axis0 < rank && axis1 >= 0 && axis1 < rank,
        "transpose: axis out of range for " + shape_str(s));
  Shape out_shape = s;
  std::swap(out_shape[size_t(axis0)], out_shape[size_t(axis1)]);
  auto strides = row_major_strides(s);
  std::swap(strides[size_t(axis0)], strides[size_t(axis1)]);

  Tensor out = make_op("transpose", out_shape, a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    transpose_copy(a.node->val<scalar_t>(), out.node->val<scalar_t>(), out_shape, strides);
  });
  if (out.requires_grad()) {
    Shape oshape = out.shape();
    out.node->backward_fn = [axis0, axis1, oshape](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      // gradient flows back through the inverse permutation
      auto gstrides = row_major_strides(oshape);
      std::swap(gstrides[size_t(axis0)], gstrides[size_t(axis1)]);
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        const Shape& pshape = p.shape;
        const int rank = int(pshape.size());
        const int64_t total = int64_t(gp.size());
        for (int64_t i = 0; i < total; ++i) {
          int64_t rem = i, src = 0;
          for (int d = rank - 1; d >= 0; --d) {
            int64_t c = rem % pshape[size_t(d)];
            rem /= pshape[size_t(d)];
            src += c * gstrides[size_t(d)];
          }
          gp[size_t(i)] += g[size_t(src)];
        }
      });
    };
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const int rank = int(s0.size());
  check(axis >= 0 && axis < rank, "concat: axis out of range for " + shape_str(s0));
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    check(p.dtype() == parts[0].dtype(), "concat: dtype mismatch");
    const Shape& s = p.shape();
    check(int(s.size()) == rank, "concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
    for (int d = 0; d < rank; ++d)
      if (d != axis)
        check(s[size_t(d)] == s0[size_t(d)],
              "concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
    axis_total += s[size_t(axis)];
  }
  Shape out_shape = s0;
  out_shape[size_t(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= s0[size_t(d)];

  Tensor out = make_op("concat", out_shape, parts[0].dtype(), parts);
  std::vector<int64_t> extents;
  for (const auto& p : parts) extents.push_back(p.shape()[size_t(axis)]);

  GSHEAD_DISPATCH(out.dtype(), {
    auto& ov = out.node->val<scalar_t>();
    int64_t offset = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const auto& pv = parts[pi].node->val<scalar_t>();
      const int64_t run = extents[pi] * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(pv.data() + o * run, run, ov.data() + o * axis_total * inner + offset);
      offset += run;
    }
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [extents, outer, inner, axis_total](Node& n) {
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        int64_t offset = 0;
        for (size_t pi = 0; pi < n.parents.size(); ++pi) {
          Node& p = *n.parents[pi];
          const int64_t run = extents[pi] * inner;
          if (p.requires_grad) {
            p.ensure_grad();
            auto& gp = p.grd<scalar_t>();
            for (int64_t o = 0; o < outer; ++o) {
              const scalar_t* src = g.data() + o * axis_total * inner + offset;
              scalar_t* dst = gp.data() + o * run;
              for (int64_t i = 0; i < run; ++i) dst[i] += src[i];
            }
          }
          offset += run;
        }
      });
    };
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  const int rank = int(s.size());
  check(axis >= 0 && axis < rank, "slice: axis out of range for " + shape_str(s));
  check(start >= 0 && len > 0 && start + len <= s[size_t(axis)],
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for " + shape_str(s));
  Shape out_shape = s;
  out_shape[size_t(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= s[size_t(d)];
  const int64_t in_run = s[size_t(axis)] * inner;
  const int64_t out_run = len * inner;

  Tensor out = make_op("slice", std::move(out_shape), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& av = a.node->val<scalar_t>();
    auto& ov = out.node->val<scalar_t>();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(av.data() + o * in_run + start * inner, out_run, ov.data() + o * out_run);
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [outer, inner, in_run, out_run, start](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (int64_t o = 0; o < outer; ++o) {
          const scalar_t* src = g.data() + o * out_run;
          scalar_t* dst = gp.data() + o * in_run + start * inner;
          for (int64_t i = 0; i < out_run; ++i) dst[i] += src[i];
        }
      });
    };
  }
  return out;
}

Tensor gather_linear(const Tensor& a, std::shared_ptr<const std::vector<int64_t>> index,
                     Shape out_shape) {
  check(index != nullptr, "gather: null index");
  check(int64_t(index->size()) == shape_numel(out_shape),
        "gather: index size does not match output shape " + shape_str(out_shape));
  const int64_t an = a.numel();
  for (int64_t i : *index)
    check(i >= 0 && i < an, "gather: index out of range for input " + shape_str(a.shape()));

  Tensor out = make_op("gather", std::move(out_shape), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& av = a.node->val<scalar_t>();
    auto& ov = out.node->val<scalar_t>();
    const auto& idx = *index;
    for (size_t i = 0; i < idx.size(); ++i) ov[i] = av[size_t(idx[i])];
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [index](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        const auto& idx = *index;
        for (size_t i = 0; i < idx.size(); ++i) gp[size_t(idx[i])] += g[i];
      });
    };
  }
  return out;
}

// ---- normalization & softmax -----------------------------------------------------

Tensor layer_norm(const Tensor& a, double eps) {
  const Shape& s = a.shape();
  check(!s.empty(), "layer_norm: rank-0 input");
  const int64_t D = s.back();
  const int64_t R = a.numel() / D;
  Tensor out = make_op("layer_norm", s, a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    auto& y = out.node->val<scalar_t>();
    for (int64_t r = 0; r < R; ++r) {
      const scalar_t* xr = x.data() + r * D;
      scalar_t* yr = y.data() + r * D;
      double mu = 0;
      for (int64_t i = 0; i < D; ++i) mu += double(xr[i]);
      mu /= double(D);
      double var = 0;
      for (int64_t i = 0; i < D; ++i) {
        double d = double(xr[i]) - mu;
        var += d * d;
      }
      var /= double(D);
      double inv = 1.0 / std::sqrt(var + eps);
      for (int64_t i = 0; i < D; ++i) yr[i] = scalar_t((double(xr[i]) - mu) * inv);
    }
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [D, R, eps](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        const auto& y = n.val<scalar_t>();  // normalized values
        const auto& x = p.val<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (int64_t r = 0; r < R; ++r) {
          const scalar_t* xr = x.data() + r * D;
          const scalar_t* yr = y.data() + r * D;
          const scalar_t* gr = g.data() + r * D;
          scalar_t* dr = gp.data() + r * D;
          double mu = 0;
          for (int64_t i = 0; i < D; ++i) mu += double(xr[i]);
          mu /= double(D);
          double var = 0;
          for (int64_t i = 0; i < D; ++i) {
            double d = double(xr[i]) - mu;
            var += d * d;
          }
          var /= double(D);
          double inv = 1.0 / std::sqrt(var + eps);
          double gmean = 0, gymean = 0;
          for (int64_t i = 0; i < D; ++i) {
            gmean += double(gr[i]);
            gymean += double(gr[i]) * double(yr[i]);
          }
          gmean /= double(D);
          gymean /= double(D);
          for (int64_t i = 0; i < D; ++i)
            dr[i] += scalar_t(inv * (double(gr[i]) - gmean - double(yr[i]) * gymean));
        }
      });
    };
  }
  return out;
}

Tensor softmax(const Tensor& a) {
  const Shape& s = a.shape();
  check(!s.empty(), "softmax: rank-0 input");
  const int64_t D = s.back();
  const int64_t R = a.numel() / D;
  Tensor out = make_op("softmax", s, a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    auto& y = out.node->val<scalar_t>();
    for (int64_t r = 0; r < R; ++r) {
      const scalar_t* xr = x.data() + r * D;
      scalar_t* yr = y.data() + r * D;
      double mx = double(xr[0]);
      for (int64_t i = 1; i < D; ++i) mx = std::max(mx, double(xr[i]));
      double sum = 0;
      for (int64_t i = 0; i < D; ++i) {
        double e = std::exp(double(xr[i]) - mx);
        yr[i] = scalar_t(e);
        sum += e;
      }
      double inv = 1.0 / sum;
      for (int64_t i = 0; i < D; ++i) yr[i] = scalar_t(double(yr[i]) * inv);
    }
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [D, R](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        const auto& y = n.val<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (int64_t r = 0; r < R; ++r) {
          const scalar_t* yr = y.data() + r * D;
          const scalar_t* gr = g.data() + r * D;
          scalar_t* dr = gp.data() + r * D;
          double dot = 0;
          for (int64_t i = 0; i < D; ++i) dot += double(gr[i]) * double(yr[i]);
          for (int64_t i = 0; i < D; ++i)
            dr[i] += scalar_t(double(yr[i]) * (double(gr[i]) - dot));
        }
      });
    };
  }
  return out;
}

// ---- unary ops ---------------------------------------------------------------------

// fwd(x) and dfdx(x, y) where y = fwd(x)
template <typename Fwd, typename Dfdx>
static Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Dfdx dfdx) {
  Tensor out = make_op(name, a.shape(), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    auto& y = out.node->val<scalar_t>();
    for (size_t i = 0; i < x.size(); ++i) y[i] = scalar_t(fwd(double(x[i])));
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [dfdx](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        const auto& x = p.val<scalar_t>();
        const auto& y = n.val<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (size_t i = 0; i < g.size(); ++i)
          gp[i] += scalar_t(double(g[i]) * dfdx(double(x[i]), double(y[i])));
      });
    };
  }
  return out;
}

static double sigmoid_d(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor silu(const Tensor& a) {
  return unary_op(
      "silu", a, [](double x) { return x * sigmoid_d(x); },
      [](double x, double) {
        double s = sigmoid_d(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a, [](double x) { return sigmoid_d(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor rsqrt(const Tensor& a, double eps) {
  return unary_op(
      "rsqrt", a, [eps](double x) { return 1.0 / std::sqrt(x + eps); },
      [](double, double y) { return -0.5 * y * y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) {
        if (x > 30.0) return x;
        if (x < -30.0) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](double x, double) { return sigmoid_d(x); });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  check(lo < hi, "clamp: empty range");
  return unary_op(
      "clamp", a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- reductions ---------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  Tensor out = make_op("sum", Shape{1}, a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    double acc = 0;
    for (size_t i = 0; i < x.size(); ++i) acc += double(x[i]);
    out.node->val<scalar_t>()[0] = scalar_t(acc);
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const scalar_t g = n.grd<scalar_t>()[0];
        auto& gp = p.grd<scalar_t>();
        for (auto& v : gp) v += g;
      });
    };
  }
  return out;
}

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / double(a.numel())); }

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  const Shape& s = a.shape();
  const int rank = int(s.size());
  check(axis >= 0 && axis < rank, "sum_axis: axis out of range for " + shape_str(s));
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= s[size_t(d)];
  const int64_t extent = s[size_t(axis)];
  Shape out_shape;
  for (int d = 0; d < rank; ++d) {
    if (d == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(s[size_t(d)]);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out = make_op("sum_axis", std::move(out_shape), a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    auto& y = out.node->val<scalar_t>();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        double acc = 0;
        for (int64_t e = 0; e < extent; ++e) acc += double(x[size_t((o * extent + e) * inner + i)]);
        y[size_t(o * inner + i)] = scalar_t(acc);
      }
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [outer, inner, extent](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t e = 0; e < extent; ++e)
            for (int64_t i = 0; i < inner; ++i)
              gp[size_t((o * extent + e) * inner + i)] += g[size_t(o * inner + i)];
      });
    };
  }
  return out;
}

Tensor avg_pool2(const Tensor& a) {
  const Shape& s = a.shape();
  check(s.size() == 3, "avg_pool2: expected {H,W,C}, got " + shape_str(s));
  check(s[0] % 2 == 0 && s[1] % 2 == 0, "avg_pool2: odd extents in " + shape_str(s));
  const int64_t H = s[0], W = s[1], C = s[2];
  Tensor out = make_op("avg_pool2", Shape{H / 2, W / 2, C}, a.dtype(), std::array{a});
  GSHEAD_DISPATCH(a.dtype(), {
    const auto& x = a.node->val<scalar_t>();
    auto& y = out.node->val<scalar_t>();
    for (int64_t i = 0; i < H / 2; ++i)
      for (int64_t j = 0; j < W / 2; ++j)
        for (int64_t c = 0; c < C; ++c) {
          double acc = double(x[size_t(((2 * i) * W + 2 * j) * C + c)]) +
                       double(x[size_t(((2 * i) * W + 2 * j + 1) * C + c)]) +
                       double(x[size_t(((2 * i + 1) * W + 2 * j) * C + c)]) +
                       double(x[size_t(((2 * i + 1) * W + 2 * j + 1) * C + c)]);
          y[size_t((i * (W / 2) + j) * C + c)] = scalar_t(0.25 * acc);
        }
  });
  if (out.requires_grad()) {
    out.node->backward_fn = [H, W, C](Node& n) {
      Node& p = *n.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      GSHEAD_DISPATCH(n.dtype, {
        const auto& g = n.grd<scalar_t>();
        auto& gp = p.grd<scalar_t>();
        for (int64_t i = 0; i < H / 2; ++i)
          for (int64_t j = 0; j < W / 2; ++j)
            for (int64_t c = 0; c < C; ++c) {
              scalar_t q = scalar_t(0.25) * g[size_t((i * (W / 2) + j) * C + c)];
              gp[size_t(((2 * i) * W + 2 * j) * C + c)] += q;
              gp[size_t(((2 * i) * W + 2 * j + 1) * C + c)] += q;
              gp[size_t(((2 * i + 1) * W + 2 * j) * C + c)] += q;
              gp[size_t(((2 * i + 1) * W + 2 * j + 1) * C + c)] += q;
            }
      });
    };
  }
  return out;
}

Tensor custom_op(const char* name, std::span<const Tensor> inputs, Shape out_shape,
                 std::function<void(Node&)> forward_fill, std::function<void(Node&)> backward_fn) {
  check(!inputs.empty(), "custom_op: no inputs");
  Tensor out = make_op(name, std::move(out_shape), inputs[0].dtype(), inputs);
  // forward needs the inputs even when gradients are off
  if (out.node->parents.empty())
    for (const auto& in : inputs) out.node->parents.push_back(in.node);
  forward_fill(*out.node);
  if (out.requires_grad()) {
    out.node->backward_fn = std::move(backward_fn);
  } else {
    out.node->parents.clear();
  }
  return out;
}

// ---- ParamStore / AdamW ------------------------------------------------------------

Tensor ParamStore::create_randn(const std::string& name, Shape shape, Rng& rng, double stddev) {
  check(!has(name), "param '" + name + "' already exists");
  Tensor t = Tensor::randn(std::move(shape), rng, dtype_, stddev, true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
  return create_const(name, std::move(shape), 0.0);
}

Tensor ParamStore::create_const(const std::string& name, Shape shape, double value) {
  check(!has(name), "param '" + name + "' already exists");
  Tensor t = Tensor::full(std::move(shape), value, dtype_);
  t.set_requires_grad(true);
  params_.emplace(name, t);
  return t;
}

void ParamStore::adopt(const std::string& name, Tensor t) {
  check(!has(name), "param '" + name + "' already exists");
  check(t.dtype() == dtype_, "param '" + name + "': dtype mismatch");
  t.set_requires_grad(true);
  params_.emplace(name, std::move(t));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  check(it != params_.end(), "param '" + name + "' not found");
  return it->second;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

std::vector<std::string> ParamStore::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : params_)
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  return out;
}

void ParamStore::remove_group(const std::string& prefix) {
  for (auto it = params_.begin(); it != params_.end();) {
    if (it->first.rfind(prefix, 0) == 0) {
      moments_.erase(it->first);
      it = params_.erase(it);
    } else {
      ++it;
    }
  }
}

void ParamStore::zero_grad() {
  for (auto& [k, v] : params_) v.zero_grad();
}

void adamw_step(ParamStore& store, const AdamWConfig& cfg) {
  for (auto& [name, param] : store.params_) {
    if (!param.node->grad_ready) fail("adamw_step: parameter '" + name + "' has no gradient");
    auto& mom = store.moments_[name];
    const size_t n = size_t(param.numel());
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    mom.steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(mom.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(mom.steps));
    GSHEAD_DISPATCH(param.dtype(), {
      auto& p = param.node->val<scalar_t>();
      const auto& g = param.node->grd<scalar_t>();
      for (size_t i = 0; i < n; ++i) {
        const double gi = double(g[i]);
        mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * gi;
        mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = mom.m[i] / bc1;
        const double vhat = mom.v[i] / bc2;
        double pv = double(p[i]);
        pv -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * pv);
        p[i] = scalar_t(pv);
      }
    });
  }
}

}  // namespace gshead
