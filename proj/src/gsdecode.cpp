#include "gshead/gsdecode.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gshead {

void GaussianCloud::validate() const {
  const int64_t k = count();
  if (int64_t(position.size()) != k * 3 || int64_t(scale.size()) != k * 3 ||
      int64_t(rotation.size()) != k * 4 || int64_t(color.size()) != k * 3)
    throw std::runtime_error("cloud: attribute sizes disagree");
  for (int64_t i = 0; i < k; ++i) {
    const double* q = rotation.data() + i * 4;
    double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (std::fabs(n - 1.0) > 1e-5)
      throw std::runtime_error("cloud: non-unit quaternion at point " + std::to_string(i));
    if (!(opacity[size_t(i)] > 0.0) || !(opacity[size_t(i)] < 1.0))
      throw std::runtime_error("cloud: opacity outside (0,1) at point " + std::to_string(i));
    for (int c = 0; c < 3; ++c)
      if (!(scale[size_t(i * 3 + c)] > 0.0))
        throw std::runtime_error("cloud: non-positive scale at point " + std::to_string(i));
  }
}

GaussianCloud to_cloud(const CloudTensors& t) {
  GaussianCloud c;
  c.position = t.position.to_vector();
  c.scale = t.scale.to_vector();
  c.rotation = t.rotation.to_vector();
  c.opacity = t.opacity.to_vector();
  c.color = t.color.to_vector();
  return c;
}

CloudTensors cloud_to_tensors(const GaussianCloud& cloud, DType dtype, bool requires_grad) {
  const int64_t k = cloud.count();
  CloudTensors t;
  t.position = Tensor::from_data({k, 3}, cloud.position, dtype);
  t.scale = Tensor::from_data({k, 3}, cloud.scale, dtype);
  t.rotation = Tensor::from_data({k, 4}, cloud.rotation, dtype);
  t.opacity = Tensor::from_data({k, 1}, cloud.opacity, dtype);
  t.color = Tensor::from_data({k, 3}, cloud.color, dtype);
  if (requires_grad) {
    t.position.set_requires_grad(true);
    t.scale.set_requires_grad(true);
    t.rotation.set_requires_grad(true);
    t.opacity.set_requires_grad(true);
    t.color.set_requires_grad(true);
  }
  return t;
}

static double softplus_inv(double y) { return y + std::log1p(-std::exp(-y)); }

void init_gs_decoder(ParamStore& store, const std::string& prefix, const GsDecodeConfig& cfg,
                     Rng& rng) {
  const int p2 = cfg.patch * cfg.patch;
  store.create_randn(prefix + ".up_w", {cfg.hidden, int64_t(p2) * cfg.feat}, rng, 0.02);
  store.create_zeros(prefix + ".up_b", {int64_t(p2) * cfg.feat});
  store.create_randn(prefix + ".h1_w", {cfg.feat, cfg.feat}, rng, 0.02);
  store.create_zeros(prefix + ".h1_b", {cfg.feat});
  store.create_randn(prefix + ".h2_w", {cfg.feat, 15}, rng, 0.02);
  // raw head channels: depth, offset(3), scale(3), rotation(4), opacity, color(3)
  std::vector<double> bias(15, 0.0);
  bias[0] = softplus_inv(cfg.init_depth);
  bias[4] = bias[5] = bias[6] = std::log(cfg.init_scale);
  bias[7] = 1.0;  // quaternion w
  Tensor b2 = Tensor::from_data({15}, bias, store.dtype());
  store.adopt(prefix + ".h2_b", b2);
}

PointPixel point_pixel(int64_t point, int height, int width, int patch) {
  const int nh = height / patch, nw = width / patch;
  const int64_t per_view = int64_t(nh) * nw * patch * patch;
  PointPixel pp;
  pp.view = int(point / per_view);
  int64_t rem = point % per_view;
  int64_t token = rem / (patch * patch);
  int64_t inpatch = rem % (patch * patch);
  int ti = int(token / nw), tj = int(token % nw);
  pp.y = ti * patch + int(inpatch / patch);
  pp.x = tj * patch + int(inpatch % patch);
  return pp;
}

CloudTensors decode_gaussians(const ParamStore& store, const std::string& prefix,
                              const GsDecodeConfig& cfg, const Tensor& gaussian_tokens,
                              const CameraRig& rig) {
  if (rig.cameras.size() != 4)
    throw std::runtime_error("decode_gaussians: expected a four-view rig, got " +
                             std::to_string(rig.cameras.size()));
  const int H = rig.cameras[0].height, W = rig.cameras[0].width;
  const int p = cfg.patch;
  const int64_t tokens_per_view = int64_t(H / p) * (W / p);
  const Shape& ts = gaussian_tokens.shape();
  if (ts.size() != 2 || ts[0] != 4 * tokens_per_view || ts[1] != cfg.hidden)
    throw std::runtime_error("decode_gaussians: token shape " + shape_str(ts) +
                             " does not match 4x" + std::to_string(tokens_per_view) + "x" +
                             std::to_string(cfg.hidden));
  const int64_t K = int64_t(4) * H * W;

  Tensor up = add(matmul(gaussian_tokens, store.get(prefix + ".up_w")), store.get(prefix + ".up_b"));
  Tensor feats = reshape(up, {K, cfg.feat});  // channel-to-space: p*p points per token
  Tensor h = gelu(add(matmul(feats, store.get(prefix + ".h1_w")), store.get(prefix + ".h1_b")));
  Tensor raw = add(matmul(h, store.get(prefix + ".h2_w")), store.get(prefix + ".h2_b"));

  Tensor depth_raw = slice(raw, 1, 0, 1);
  Tensor offset_raw = slice(raw, 1, 1, 3);
  Tensor scale_raw = slice(raw, 1, 4, 3);
  Tensor rot_raw = slice(raw, 1, 7, 4);
  Tensor opac_raw = slice(raw, 1, 11, 1);
  Tensor color_raw = slice(raw, 1, 12, 3);

  // pixel rays in point order (view, token, py, px)
  std::vector<double> origins(size_t(K) * 3), dirs(size_t(K) * 3);
  for (int64_t pt = 0; pt < K; ++pt) {
    PointPixel pp = point_pixel(pt, H, W, p);
    Ray ray = pixel_ray(rig.cameras[size_t(pp.view)], pp.y, pp.x);
    origins[size_t(pt * 3 + 0)] = ray.origin.x;
    origins[size_t(pt * 3 + 1)] = ray.origin.y;
    origins[size_t(pt * 3 + 2)] = ray.origin.z;
    dirs[size_t(pt * 3 + 0)] = ray.dir.x;
    dirs[size_t(pt * 3 + 1)] = ray.dir.y;
    dirs[size_t(pt * 3 + 2)] = ray.dir.z;
  }
  const DType dt = gaussian_tokens.dtype();
  Tensor ray_o = Tensor::from_data({K, 3}, origins, dt);
  Tensor ray_d = Tensor::from_data({K, 3}, dirs, dt);

  CloudTensors out;
  Tensor depth = softplus(depth_raw);
  Tensor along = mul(ray_d, depth);  // {K,3} * {K,1}
  Tensor offset = mul_scalar(tanh(offset_raw), cfg.offset_frac * cfg.scene_radius);
  out.position = add(add(ray_o, along), offset);
  out.scale = clamp(exp(scale_raw), cfg.min_scale, cfg.scene_radius);
  Tensor inv_norm = rsqrt(sum_axis(mul(rot_raw, rot_raw), 1, true), 1e-24);
  out.rotation = mul(rot_raw, inv_norm);
  out.opacity = sigmoid(opac_raw);
  out.color = sigmoid(color_raw);
  return out;
}

// ---- PLY ----------------------------------------------------------------------

static const char* kPlyProps[17] = {"x",       "y",       "z",       "nx",      "ny",
                                    "nz",      "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity",
                                    "scale_0", "scale_1", "scale_2", "rot_0",   "rot_1",
                                    "rot_2",   "rot_3"};

void write_ply(const std::string& path, const GaussianCloud& cloud) {
  const int64_t k = cloud.count();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_ply: cannot open " + path);
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "comment decoded attribute values (linear scale, opacity in (0,1), rgb color)\n";
  os << "element vertex " << k << "\n";
  for (const char* p : kPlyProps) os << "property float " << p << "\n";
  os << "end_header\n";
  std::vector<float> row(17);
  for (int64_t i = 0; i < k; ++i) {
    row[0] = float(cloud.position[size_t(i * 3 + 0)]);
    row[1] = float(cloud.position[size_t(i * 3 + 1)]);
    row[2] = float(cloud.position[size_t(i * 3 + 2)]);
    row[3] = row[4] = row[5] = 0.0f;
    row[6] = float(cloud.color[size_t(i * 3 + 0)]);
    row[7] = float(cloud.color[size_t(i * 3 + 1)]);
    row[8] = float(cloud.color[size_t(i * 3 + 2)]);
    row[9] = float(cloud.opacity[size_t(i)]);
    row[10] = float(cloud.scale[size_t(i * 3 + 0)]);
    row[11] = float(cloud.scale[size_t(i * 3 + 1)]);
    row[12] = float(cloud.scale[size_t(i * 3 + 2)]);
    row[13] = float(cloud.rotation[size_t(i * 4 + 0)]);
    row[14] = float(cloud.rotation[size_t(i * 4 + 1)]);
    row[15] = float(cloud.rotation[size_t(i * 4 + 2)]);
    row[16] = float(cloud.rotation[size_t(i * 4 + 3)]);
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * 4));
  }
  if (!os) throw std::runtime_error("write_ply: write failed: " + path);
}

GaussianCloud read_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ply: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw std::runtime_error("read_ply: not a PLY file");
  int64_t count = -1;
  std::vector<std::string> props;
  bool binary_le = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string kind;
      ls >> kind >> count;
      if (kind != "vertex") throw std::runtime_error("read_ply: unsupported element " + kind);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw std::runtime_error("read_ply: unsupported property type " + type);
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!binary_le) throw std::runtime_error("read_ply: expected binary_little_endian");
  if (count < 0) throw std::runtime_error("read_ply: missing vertex element");

  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return int(i);
    throw std::runtime_error("read_ply: missing property " + name);
  };
  const int cx = col("x"), cy = col("y"), cz = col("z");
  const int cr = col("f_dc_0"), cg = col("f_dc_1"), cb = col("f_dc_2");
  const int co = col("opacity");
  const int cs0 = col("scale_0"), cs1 = col("scale_1"), cs2 = col("scale_2");
  const int cq0 = col("rot_0"), cq1 = col("rot_1"), cq2 = col("rot_2"), cq3 = col("rot_3");

  GaussianCloud cloud;
  cloud.position.resize(size_t(count) * 3);
  cloud.scale.resize(size_t(count) * 3);
  cloud.rotation.resize(size_t(count) * 4);
  cloud.opacity.resize(size_t(count));
  cloud.color.resize(size_t(count) * 3);
  std::vector<float> row(props.size());
  for (int64_t i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * 4));
    if (!is) throw std::runtime_error("read_ply: truncated vertex data in " + path);
    cloud.position[size_t(i * 3 + 0)] = row[size_t(cx)];
    cloud.position[size_t(i * 3 + 1)] = row[size_t(cy)];
    cloud.position[size_t(i * 3 + 2)] = row[size_t(cz)];
    cloud.color[size_t(i * 3 + 0)] = row[size_t(cr)];
    cloud.color[size_t(i * 3 + 1)] = row[size_t(cg)];
    cloud.color[size_t(i * 3 + 2)] = row[size_t(cb)];
    cloud.opacity[size_t(i)] = row[size_t(co)];
    cloud.scale[size_t(i * 3 + 0)] = row[size_t(cs0)];
    cloud.scale[size_t(i * 3 + 1)] = row[size_t(cs1)];
    cloud.scale[size_t(i * 3 + 2)] = row[size_t(cs2)];
    cloud.rotation[size_t(i * 4 + 0)] = row[size_t(cq0)];
    cloud.rotation[size_t(i * 4 + 1)] = row[size_t(cq1)];
    cloud.rotation[size_t(i * 4 + 2)] = row[size_t(cq2)];
    cloud.rotation[size_t(i * 4 + 3)] = row[size_t(cq3)];
  }
  return cloud;
}

}  // namespace gshead
