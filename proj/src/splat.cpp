#include "gshead/splat.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace gshead {

namespace {

struct CamMats {
  double R[9];  // world->camera rotation, rows (right, up, forward)
  double pos[3];
  double f;  // focal, square pixels
  double cx, cy;
  int H = 0, W = 0;
};

CamMats make_cam(const Camera& cam) {
  cam.validate();
  Mat3 rot = world_to_camera_rotation(cam);
  CamMats m;
  std::copy(rot.m.begin(), rot.m.end(), m.R);
  m.pos[0] = cam.position.x;
  m.pos[1] = cam.position.y;
  m.pos[2] = cam.position.z;
  m.f = cam.focal();
  m.H = cam.height;
  m.W = cam.width;
  m.cx = 0.5 * double(cam.width);
  m.cy = 0.5 * double(cam.height);
  return m;
}

template <typename T>
struct Proj {
  T mx, my;
  T ca, cb, cc;  // 2D covariance
  T ia, ib, ic;  // conic (inverse covariance)
  T depth;
  T opac;
  T col[3];
  T radius;
  int32_t index;
};

// rotation matrix entries from a quaternion, as literal polynomials so the
// backward pass can differentiate them without a unit-norm assumption
template <typename T>
void quat_mat(const T* q, T R[9]) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  R[0] = T(1) - T(2) * (y * y + z * z);
  R[1] = T(2) * (x * y - w * z);
  R[2] = T(2) * (x * z + w * y);
  R[3] = T(2) * (x * y + w * z);
  R[4] = T(1) - T(2) * (x * x + z * z);
  R[5] = T(2) * (y * z - w * x);
  R[6] = T(2) * (x * z - w * y);
  R[7] = T(2) * (y * z + w * x);
  R[8] = T(1) - T(2) * (x * x + y * y);
}

template <typename T>
bool project_one(const T* pos, const T* scale, const T* quat, const T opac, const T* col,
                 int32_t index, const CamMats& cm, const RenderSettings& s, Proj<T>& out) {
  const T rel[3] = {pos[0] - T(cm.pos[0]), pos[1] - T(cm.pos[1]), pos[2] - T(cm.pos[2])};
  T pc[3];
  for (int i = 0; i < 3; ++i)
    pc[i] = T(cm.R[i * 3 + 0]) * rel[0] + T(cm.R[i * 3 + 1]) * rel[1] + T(cm.R[i * 3 + 2]) * rel[2];
  if (!(pc[2] > T(s.z_near))) return false;

  const T f = T(cm.f);
  const T inv_z = T(1) / pc[2];
  out.mx = f * pc[0] * inv_z + T(cm.cx);
  out.my = T(cm.cy) - f * pc[1] * inv_z;
  out.depth = pc[2];

  T Rw[9];
  quat_mat(quat, Rw);
  // M = Rw * diag(scale); Sigma_w = M M^T
  T M[9];
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) M[i * 3 + k] = Rw[i * 3 + k] * scale[k];
  T Sw[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc = 0;
      for (int k = 0; k < 3; ++k) acc += M[i * 3 + k] * M[j * 3 + k];
      Sw[i * 3 + j] = acc;
    }
  // Sigma_c = R Sw R^T
  T RS[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc = 0;
      for (int k = 0; k < 3; ++k) acc += T(cm.R[i * 3 + k]) * Sw[k * 3 + j];
      RS[i * 3 + j] = acc;
    }
  T Sc[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc = 0;
      for (int k = 0; k < 3; ++k) acc += RS[i * 3 + k] * T(cm.R[j * 3 + k]);
      Sc[i * 3 + j] = acc;
    }
  // J = d(mx,my)/d pc
  const T j00 = f * inv_z;
  const T j02 = -f * pc[0] * inv_z * inv_z;
  const T j11 = -f * inv_z;
  const T j12 = f * pc[1] * inv_z * inv_z;
  // cov2d = J Sc J^T + eps I
  const T a0 = j00 * Sc[0] + j02 * Sc[6];
  const T a1 = j00 * Sc[1] + j02 * Sc[7];
  const T a2 = j00 * Sc[2] + j02 * Sc[8];
  const T b0 = j11 * Sc[3] + j12 * Sc[6];
  const T b1 = j11 * Sc[4] + j12 * Sc[7];
  const T b2 = j11 * Sc[5] + j12 * Sc[8];
  out.ca = a0 * j00 + a2 * j02 + T(s.eps2d);
  out.cb = b0 * j00 + b2 * j02;
  out.cc = b1 * j11 + b2 * j12 + T(s.eps2d);

  const T det = out.ca * out.cc - out.cb * out.cb;
  if (!(det > T(0))) return false;
  const T inv_det = T(1) / det;
  out.ia = out.cc * inv_det;
  out.ib = -out.cb * inv_det;
  out.ic = out.ca * inv_det;

  const T mid = T(0.5) * (out.ca + out.cc);
  const T disc = std::sqrt(std::max(T(0), mid * mid - det));
  out.radius = T(s.cutoff) * std::sqrt(std::max(T(1e-12), mid + disc));
  out.opac = opac;
  out.col[0] = col[0];
  out.col[1] = col[1];
  out.col[2] = col[2];
  out.index = index;
  return true;
}

template <typename T>
std::vector<Proj<T>> project_points(const T* pos, const T* scale, const T* quat, const T* opac,
                                    const T* col, int64_t count, const CamMats& cm,
                                    const RenderSettings& s) {
  std::vector<Proj<T>> out;
  out.reserve(size_t(count));
  for (int64_t k = 0; k < count; ++k) {
    Proj<T> p;
    if (project_one(pos + k * 3, scale + k * 3, quat + k * 4, opac[k], col + k * 3, int32_t(k), cm,
                    s, p))
      out.push_back(p);
  }
  return out;
}

struct Bins {
  int tile = 16;
  int tiles_x = 1, tiles_y = 1;
  std::vector<std::vector<int32_t>> lists;  // sorted by (depth, index)
};

template <typename T>
Bins build_bins(const std::vector<Proj<T>>& g, int H, int W, const RenderSettings& s, bool tiled) {
  Bins bins;
  bins.tile = tiled ? std::max(1, s.tile) : std::max(H, W);
  bins.tiles_x = (W + bins.tile - 1) / bins.tile;
  bins.tiles_y = (H + bins.tile - 1) / bins.tile;
  bins.lists.assign(size_t(bins.tiles_x) * bins.tiles_y, {});
  auto cmp = [&g](int32_t a, int32_t b) {
    if (g[size_t(a)].depth != g[size_t(b)].depth) return g[size_t(a)].depth < g[size_t(b)].depth;
    return g[size_t(a)].index < g[size_t(b)].index;
  };
  if (!tiled) {
    auto& all = bins.lists[0];
    all.resize(g.size());
    for (size_t i = 0; i < g.size(); ++i) all[i] = int32_t(i);
    std::sort(all.begin(), all.end(), cmp);
    return bins;
  }
  for (size_t i = 0; i < g.size(); ++i) {
    const auto& p = g[i];
    const double r = double(p.radius);
    int x0 = std::max(0, int(std::floor((double(p.mx) - r) / bins.tile)));
    int x1 = std::min(bins.tiles_x - 1, int(std::floor((double(p.mx) + r) / bins.tile)));
    int y0 = std::max(0, int(std::floor((double(p.my) - r) / bins.tile)));
    int y1 = std::min(bins.tiles_y - 1, int(std::floor((double(p.my) + r) / bins.tile)));
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx)
        bins.lists[size_t(ty * bins.tiles_x + tx)].push_back(int32_t(i));
  }
  for (auto& list : bins.lists) std::sort(list.begin(), list.end(), cmp);
  return bins;
}

template <typename T>
inline void composite_pixel(const std::vector<Proj<T>>& g, const std::vector<int32_t>& ids, T px,
                            T py, const RenderSettings& s, const T bg[3], T out[3]) {
  const T cutoff2 = T(s.cutoff * s.cutoff);
  T trans = T(1);
  T acc[3] = {T(0), T(0), T(0)};
  for (int32_t id : ids) {
    const Proj<T>& p = g[size_t(id)];
    const T dx = px - p.mx;
    const T dy = py - p.my;
    const T m2 = p.ia * dx * dx + T(2) * p.ib * dx * dy + p.ic * dy * dy;
    if (!(m2 <= cutoff2)) continue;
    const T gexp = std::exp(T(-0.5) * m2);
    T alpha = p.opac * gexp;
    if (alpha > T(s.alpha_max)) alpha = T(s.alpha_max);
    if (alpha < T(s.alpha_min)) continue;
    const T w = alpha * trans;
    acc[0] += w * p.col[0];
    acc[1] += w * p.col[1];
    acc[2] += w * p.col[2];
    trans *= T(1) - alpha;
    if (trans < T(s.t_min)) break;
  }
  out[0] = acc[0] + trans * bg[0];
  out[1] = acc[1] + trans * bg[1];
  out[2] = acc[2] + trans * bg[2];
}

template <typename T>
void render_forward(const std::vector<Proj<T>>& g, const Bins& bins, int H, int W,
                    const RenderSettings& s, T* out) {
  const T bg[3] = {T(s.background.x), T(s.background.y), T(s.background.z)};
  const int n_tiles = bins.tiles_x * bins.tiles_y;
#pragma omp parallel for schedule(dynamic)
  for (int ti = 0; ti < n_tiles; ++ti) {
    const int ty = ti / bins.tiles_x, tx = ti % bins.tiles_x;
    const auto& list = bins.lists[size_t(ti)];
    const int y0 = ty * bins.tile, y1 = std::min(H, y0 + bins.tile);
    const int x0 = tx * bins.tile, x1 = std::min(W, x0 + bins.tile);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        composite_pixel(g, list, T(x) + T(0.5), T(y) + T(0.5), s, bg,
                        out + (int64_t(y) * W + x) * 3);
  }
}

// per-Gaussian screen-space gradient slots:
// 0 d_mx, 1 d_my, 2 d_ia, 3 d_ib, 4 d_ic, 5 d_opac, 6..8 d_col
template <typename T>
using PixGrad = std::array<T, 9>;

template <typename T>
struct Contrib {
  int32_t id;
  T alpha, trans, gexp, dx, dy;
  bool clamped;
};

template <typename T>
void backward_pixels(const std::vector<Proj<T>>& g, const Bins& bins, int H, int W,
                     const RenderSettings& s, const T* gout, std::vector<PixGrad<T>>& grads) {
  grads.assign(g.size(), PixGrad<T>{});
  const T bg[3] = {T(s.background.x), T(s.background.y), T(s.background.z)};
  const T cutoff2 = T(s.cutoff * s.cutoff);
  const int n_tiles = bins.tiles_x * bins.tiles_y;

  // fixed number of accumulation bands keeps the merge order independent of
  // the thread count
  constexpr int kBands = 8;
  const int bands = std::min(kBands, n_tiles);
  std::vector<std::vector<PixGrad<T>>> band_grads(static_cast<size_t>(bands));

#pragma omp parallel for schedule(dynamic)
  for (int band = 0; band < bands; ++band) {
    auto& acc = band_grads[size_t(band)];
    acc.assign(g.size(), PixGrad<T>{});
    const int t0 = band * n_tiles / bands;
    const int t1 = (band + 1) * n_tiles / bands;
    std::vector<Contrib<T>> contribs;
    contribs.reserve(128);
    for (int ti = t0; ti < t1; ++ti) {
      const int ty = ti / bins.tiles_x, tx = ti % bins.tiles_x;
      const auto& list = bins.lists[size_t(ti)];
      const int y0 = ty * bins.tile, y1 = std::min(H, y0 + bins.tile);
      const int x0 = tx * bins.tile, x1 = std::min(W, x0 + bins.tile);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const T* gpix = gout + (int64_t(y) * W + x) * 3;
          if (gpix[0] == T(0) && gpix[1] == T(0) && gpix[2] == T(0)) continue;
          const T px = T(x) + T(0.5), py = T(y) + T(0.5);

          contribs.clear();
          T trans = T(1);
          for (int32_t id : list) {
            const Proj<T>& p = g[size_t(id)];
            const T dx = px - p.mx;
            const T dy = py - p.my;
            const T m2 = p.ia * dx * dx + T(2) * p.ib * dx * dy + p.ic * dy * dy;
            if (!(m2 <= cutoff2)) continue;
            const T gexp = std::exp(T(-0.5) * m2);
            T alpha = p.opac * gexp;
            bool clamped = false;
            if (alpha > T(s.alpha_max)) {
              alpha = T(s.alpha_max);
              clamped = true;
            }
            if (alpha < T(s.alpha_min)) continue;
            contribs.push_back({id, alpha, trans, gexp, dx, dy, clamped});
            trans *= T(1) - alpha;
            if (trans < T(s.t_min)) break;
          }

          // suffix color sum, walked back to front
          T rear[3] = {bg[0] * trans, bg[1] * trans, bg[2] * trans};
          for (size_t ci = contribs.size(); ci-- > 0;) {
            const Contrib<T>& c = contribs[ci];
            const Proj<T>& p = g[size_t(c.id)];
            PixGrad<T>& slot = acc[size_t(c.id)];
            const T w = c.alpha * c.trans;
            T dalpha = T(0);
            for (int ch = 0; ch < 3; ++ch) {
              slot[size_t(6 + ch)] += gpix[ch] * w;
              dalpha += gpix[ch] * (p.col[ch] * c.trans - rear[ch] / (T(1) - c.alpha));
              rear[ch] += w * p.col[ch];
            }
            if (c.clamped) continue;
            slot[5] += dalpha * c.gexp;
            const T dG = dalpha * p.opac;
            const T dm2 = dG * T(-0.5) * c.gexp;
            const T ddx = dm2 * T(2) * (p.ia * c.dx + p.ib * c.dy);
            const T ddy = dm2 * T(2) * (p.ib * c.dx + p.ic * c.dy);
            slot[0] -= ddx;
            slot[1] -= ddy;
            slot[2] += dm2 * c.dx * c.dx;
            slot[3] += dm2 * T(2) * c.dx * c.dy;
            slot[4] += dm2 * c.dy * c.dy;
          }
        }
    }
  }

  for (int band = 0; band < bands; ++band) {
    const auto& acc = band_grads[size_t(band)];
    for (size_t i = 0; i < grads.size(); ++i)
      for (int k = 0; k < 9; ++k) grads[i][size_t(k)] += acc[i][size_t(k)];
  }
}

// chains screen-space gradients through projection into the 3D attributes
template <typename T>
void chain_to_inputs(const std::vector<Proj<T>>& g, const std::vector<PixGrad<T>>& pg,
                     const T* pos, const T* scale, const T* quat, const CamMats& cm,
                     T* dpos, T* dscale, T* dquat, T* dopac, T* dcol) {
  const T f = T(cm.f);
#pragma omp parallel for schedule(static)
  for (int64_t gi = 0; gi < int64_t(g.size()); ++gi) {
    const Proj<T>& p = g[size_t(gi)];
    const PixGrad<T>& grad = pg[size_t(gi)];
    bool any = false;
    for (int k = 0; k < 9; ++k) any = any || grad[size_t(k)] != T(0);
    if (!any) continue;
    const int32_t k = p.index;

    if (dopac) dopac[k] += grad[5];
    if (dcol)
      for (int ch = 0; ch < 3; ++ch) dcol[k * 3 + ch] += grad[size_t(6 + ch)];

    // recompute forward intermediates
    const T rel[3] = {pos[k * 3 + 0] - T(cm.pos[0]), pos[k * 3 + 1] - T(cm.pos[1]),
                      pos[k * 3 + 2] - T(cm.pos[2])};
    T pc[3];
    for (int i = 0; i < 3; ++i)
      pc[i] =
          T(cm.R[i * 3 + 0]) * rel[0] + T(cm.R[i * 3 + 1]) * rel[1] + T(cm.R[i * 3 + 2]) * rel[2];
    const T inv_z = T(1) / pc[2];
    T Rw[9];
    quat_mat(quat + k * 4, Rw);
    T M[9];
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c) M[i * 3 + c] = Rw[i * 3 + c] * scale[k * 3 + c];
    T Sw[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s2 = 0;
        for (int c = 0; c < 3; ++c) s2 += M[i * 3 + c] * M[j * 3 + c];
        Sw[i * 3 + j] = s2;
      }
    T RS[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s2 = 0;
        for (int c = 0; c < 3; ++c) s2 += T(cm.R[i * 3 + c]) * Sw[c * 3 + j];
        RS[i * 3 + j] = s2;
      }
    T Sc[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s2 = 0;
        for (int c = 0; c < 3; ++c) s2 += RS[i * 3 + c] * T(cm.R[j * 3 + c]);
        Sc[i * 3 + j] = s2;
      }
    const T j00 = f * inv_z;
    const T j02 = -f * pc[0] * inv_z * inv_z;
    const T j11 = -f * inv_z;
    const T j12 = f * pc[1] * inv_z * inv_z;

    // conic gradient -> covariance gradient: G_cov = -Conic G_m Conic
    const T gm00 = grad[2], gm01 = T(0.5) * grad[3], gm11 = grad[4];
    const T q00 = p.ia * gm00 + p.ib * gm01;
    const T q01 = p.ia * gm01 + p.ib * gm11;
    const T q10 = p.ib * gm00 + p.ic * gm01;
    const T q11 = p.ib * gm01 + p.ic * gm11;
    T gc00 = -(q00 * p.ia + q01 * p.ib);
    T gc01 = -(q00 * p.ib + q01 * p.ic);
    T gc10 = -(q10 * p.ia + q11 * p.ib);
    T gc11 = -(q10 * p.ib + q11 * p.ic);
    // symmetrize (cov is symmetric by construction)
    const T go01 = T(0.5) * (gc01 + gc10);
    gc01 = go01;
    gc10 = go01;

    // dpc from the 2D mean
    T dpc[3] = {T(0), T(0), T(0)};
    const T dmx = grad[0], dmy = grad[1];
    dpc[0] += dmx * j00;
    dpc[2] += dmx * j02;  // d mx / d z = -f x / z^2 = j02
    dpc[1] += dmy * j11;
    dpc[2] += dmy * j12;  // d my / d z = f y / z^2 = j12

    // G_J = 2 G_cov J Sc  (2x3), using J's sparsity
    const T JS0[3] = {j00 * Sc[0] + j02 * Sc[6], j00 * Sc[1] + j02 * Sc[7],
                      j00 * Sc[2] + j02 * Sc[8]};
    const T JS1[3] = {j11 * Sc[3] + j12 * Sc[6], j11 * Sc[4] + j12 * Sc[7],
                      j11 * Sc[5] + j12 * Sc[8]};
    const T gJ00 = T(2) * (gc00 * JS0[0] + gc01 * JS1[0]);
    const T gJ02 = T(2) * (gc00 * JS0[2] + gc01 * JS1[2]);
    const T gJ11 = T(2) * (gc10 * JS0[1] + gc11 * JS1[1]);
    const T gJ12 = T(2) * (gc10 * JS0[2] + gc11 * JS1[2]);
    // J entries depend on pc
    dpc[2] += gJ00 * (-f * inv_z * inv_z);
    dpc[0] += gJ02 * (-f * inv_z * inv_z);
    dpc[2] += gJ02 * (T(2) * f * pc[0] * inv_z * inv_z * inv_z);
    dpc[2] += gJ11 * (f * inv_z * inv_z);
    dpc[1] += gJ12 * (f * inv_z * inv_z);
    dpc[2] += gJ12 * (T(-2) * f * pc[1] * inv_z * inv_z * inv_z);

    // G_Sc = J^T G_cov J
    T gSc[9] = {};
    gSc[0] = j00 * gc00 * j00;
    gSc[1] = j00 * gc01 * j11;
    gSc[2] = j00 * (gc00 * j02 + gc01 * j12);
    gSc[3] = j11 * gc10 * j00;
    gSc[4] = j11 * gc11 * j11;
    gSc[5] = j11 * (gc10 * j02 + gc11 * j12);
    gSc[6] = j02 * gc00 * j00 + j12 * gc10 * j00;
    gSc[7] = j02 * gc01 * j11 + j12 * gc11 * j11;
    gSc[8] = j02 * (gc00 * j02 + gc01 * j12) + j12 * (gc10 * j02 + gc11 * j12);

    // G_Sw = R^T G_Sc R
    T tmp[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s2 = 0;
        for (int c = 0; c < 3; ++c) s2 += T(cm.R[c * 3 + i]) * gSc[c * 3 + j];
        tmp[i * 3 + j] = s2;
      }
    T gSw[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s2 = 0;
        for (int c = 0; c < 3; ++c) s2 += tmp[i * 3 + c] * T(cm.R[c * 3 + j]);
        gSw[i * 3 + j] = s2;
      }
    // G_M = (G_Sw + G_Sw^T) M
    T gM[9];
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c) {
        T s2 = 0;
        for (int j = 0; j < 3; ++j) s2 += (gSw[i * 3 + j] + gSw[j * 3 + i]) * M[j * 3 + c];
        gM[i * 3 + c] = s2;
      }
    T gRw[9];
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c) {
        if (dscale) dscale[k * 3 + c] += gM[i * 3 + c] * Rw[i * 3 + c];
        gRw[i * 3 + c] = gM[i * 3 + c] * scale[k * 3 + c];
      }
    // quaternion partials of the rotation matrix polynomials
    const T w = quat[k * 4 + 0], x = quat[k * 4 + 1], y = quat[k * 4 + 2], z = quat[k * 4 + 3];
    const T dRw_[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
    const T dRx_[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
    const T dRy_[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
    const T dRz_[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
    if (dquat) {
      T dq[4] = {T(0), T(0), T(0), T(0)};
      for (int i = 0; i < 9; ++i) {
        dq[0] += gRw[i] * dRw_[i];
        dq[1] += gRw[i] * dRx_[i];
        dq[2] += gRw[i] * dRy_[i];
        dq[3] += gRw[i] * dRz_[i];
      }
      for (int i = 0; i < 4; ++i) dquat[k * 4 + i] += dq[i];
    }
    // dp_world = R^T dpc
    if (dpos)
      for (int i = 0; i < 3; ++i)
        dpos[k * 3 + i] +=
            T(cm.R[0 * 3 + i]) * dpc[0] + T(cm.R[1 * 3 + i]) * dpc[1] + T(cm.R[2 * 3 + i]) * dpc[2];
  }
}

template <typename T>
std::vector<Proj<T>> from_public(const std::vector<ProjectedGaussian>& in,
                                 const RenderSettings& s) {
  std::vector<Proj<T>> out;
  out.reserve(in.size());
  for (const auto& g : in) {
    Proj<T> p;
    p.mx = T(g.mean_x);
    p.my = T(g.mean_y);
    p.ca = T(g.cov_a);
    p.cb = T(g.cov_b);
    p.cc = T(g.cov_c);
    const T det = p.ca * p.cc - p.cb * p.cb;
    if (!(det > T(0))) continue;
    const T inv_det = T(1) / det;
    p.ia = p.cc * inv_det;
    p.ib = -p.cb * inv_det;
    p.ic = p.ca * inv_det;
    const T mid = T(0.5) * (p.ca + p.cc);
    const T disc = std::sqrt(std::max(T(0), mid * mid - det));
    p.radius = T(s.cutoff) * std::sqrt(std::max(T(1e-12), mid + disc));
    p.depth = T(g.depth);
    p.opac = T(g.opacity);
    p.col[0] = T(g.red);
    p.col[1] = T(g.green);
    p.col[2] = T(g.blue);
    p.index = g.index;
    out.push_back(p);
  }
  return out;
}

Image image_from_buffer(const std::vector<double>& buf, int H, int W) {
  Image img(H, W, 3);
  img.px = buf;
  return img;
}

}  // namespace

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& cam,
                                       const RenderSettings& settings) {
  CamMats cm = make_cam(cam);
  auto internal = project_points<double>(cloud.position.data(), cloud.scale.data(),
                                         cloud.rotation.data(), cloud.opacity.data(),
                                         cloud.color.data(), cloud.count(), cm, settings);
  std::vector<ProjectedGaussian> out;
  out.reserve(internal.size());
  for (const auto& p : internal) {
    ProjectedGaussian g;
    g.mean_x = p.mx;
    g.mean_y = p.my;
    g.cov_a = p.ca;
    g.cov_b = p.cb;
    g.cov_c = p.cc;
    g.depth = p.depth;
    g.opacity = p.opac;
    g.red = p.col[0];
    g.green = p.col[1];
    g.blue = p.col[2];
    g.index = p.index;
    out.push_back(g);
  }
  return out;
}

static Image render_common(const std::vector<ProjectedGaussian>& projected, int height, int width,
                           const RenderSettings& settings, bool tiled) {
  if (height <= 0 || width <= 0) throw std::runtime_error("render: non-positive extents");
  auto internal = from_public<double>(projected, settings);
  Bins bins = build_bins(internal, height, width, settings, tiled);
  std::vector<double> buf(size_t(height) * width * 3, 0.0);
  render_forward(internal, bins, height, width, settings, buf.data());
  return image_from_buffer(buf, height, width);
}

Image render_oracle(const std::vector<ProjectedGaussian>& projected, int height, int width,
                    const RenderSettings& settings) {
  return render_common(projected, height, width, settings, false);
}

Image render_tiled(const std::vector<ProjectedGaussian>& projected, int height, int width,
                   const RenderSettings& settings) {
  return render_common(projected, height, width, settings, true);
}

Image render_image(const GaussianCloud& cloud, const Camera& cam, const RenderSettings& settings) {
  return render_tiled(project(cloud, cam, settings), cam.height, cam.width, settings);
}

Tensor render_cloud(const CloudTensors& cloud, const Camera& cam, const RenderSettings& settings,
                    bool tiled) {
  const int64_t K = cloud.count();
  auto expect = [&](const Tensor& t, Shape shape, const char* what) {
    if (t.shape() != shape)
      throw std::runtime_error(std::string("render_cloud: ") + what + " has shape " +
                               shape_str(t.shape()) + ", expected " + shape_str(shape));
  };
  expect(cloud.position, {K, 3}, "position");
  expect(cloud.scale, {K, 3}, "scale");
  expect(cloud.rotation, {K, 4}, "rotation");
  expect(cloud.opacity, {K, 1}, "opacity");
  expect(cloud.color, {K, 3}, "color");

  const CamMats cm = make_cam(cam);
  const RenderSettings s = settings;
  const int H = cam.height, W = cam.width;

  auto forward_fill = [cm, s, tiled, K, H, W](Node& n) {
    GSHEAD_DISPATCH(n.dtype, {
      const scalar_t* pos = n.parents[0]->val<scalar_t>().data();
      const scalar_t* scl = n.parents[1]->val<scalar_t>().data();
      const scalar_t* rot = n.parents[2]->val<scalar_t>().data();
      const scalar_t* opc = n.parents[3]->val<scalar_t>().data();
      const scalar_t* col = n.parents[4]->val<scalar_t>().data();
      auto proj = project_points<scalar_t>(pos, scl, rot, opc, col, K, cm, s);
      Bins bins = build_bins(proj, H, W, s, tiled);
      render_forward(proj, bins, H, W, s, n.val<scalar_t>().data());
    });
  };
  auto backward_fn = [cm, s, tiled, K, H, W](Node& n) {
    GSHEAD_DISPATCH(n.dtype, {
      Node& npos = *n.parents[0];
      Node& nscl = *n.parents[1];
      Node& nrot = *n.parents[2];
      Node& nopc = *n.parents[3];
      Node& ncol = *n.parents[4];
      const scalar_t* pos = npos.val<scalar_t>().data();
      const scalar_t* scl = nscl.val<scalar_t>().data();
      const scalar_t* rot = nrot.val<scalar_t>().data();
      const scalar_t* opc = nopc.val<scalar_t>().data();
      const scalar_t* col = ncol.val<scalar_t>().data();
      auto proj = project_points<scalar_t>(pos, scl, rot, opc, col, K, cm, s);
      Bins bins = build_bins(proj, H, W, s, tiled);
      std::vector<PixGrad<scalar_t>> grads;
      backward_pixels(proj, bins, H, W, s, n.grd<scalar_t>().data(), grads);

      auto slot = [](Node& node) -> scalar_t* {
        if (!node.requires_grad) return nullptr;
        node.ensure_grad();
        return node.grd<scalar_t>().data();
      };
      chain_to_inputs(proj, grads, pos, scl, rot, cm, slot(npos), slot(nscl), slot(nrot),
                      slot(nopc), slot(ncol));
    });
  };
  std::array inputs{cloud.position, cloud.scale, cloud.rotation, cloud.opacity, cloud.color};
  return custom_op("render", inputs, {H, W, 3}, forward_fill, backward_fn);
}

}  // namespace gshead
