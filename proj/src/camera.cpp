#include "gshead/camera.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gshead/rng.hpp"
#include "json.hpp"

namespace gshead {

using ojson = nlohmann::ordered_json;

void Camera::validate() const {
  if (height <= 0 || width <= 0)
    throw std::runtime_error("camera: non-positive extents " + std::to_string(height) + "x" +
                             std::to_string(width));
  if (!(fov_y > 0.0) || !(fov_y < kPi))
    throw std::runtime_error("camera: fov_y out of (0, pi): " + std::to_string(fov_y));
  Vec3 view = look_at - position;
  if (norm(view) < 1e-12) throw std::runtime_error("camera: look_at coincides with position");
  if (norm(cross(view, up)) < 1e-12)
    throw std::runtime_error("camera: up is parallel to the viewing direction");
}

CameraBasis camera_basis(const Camera& cam) {
  Vec3 forward = normalized(cam.look_at - cam.position);
  Vec3 right = normalized(cross(forward, cam.up));
  Vec3 up2 = cross(right, forward);
  return {right, up2, forward};
}

Mat3 world_to_camera_rotation(const Camera& cam) {
  CameraBasis b = camera_basis(cam);
  Mat3 r;
  r.m = {b.right.x, b.right.y, b.right.z, b.up.x,      b.up.y,      b.up.z,
         b.forward.x, b.forward.y, b.forward.z};
  return r;
}

Camera camera_from_quat(const Vec3& position, const Quat& orientation, double fov_y, int height,
                        int width) {
  Mat3 r = rotation_matrix(orientation.normalized());
  Vec3 forward{r(0, 2), r(1, 2), r(2, 2)};
  Vec3 up{r(0, 1), r(1, 1), r(2, 1)};
  Camera cam;
  cam.position = position;
  cam.look_at = position + forward;
  cam.up = up;
  cam.fov_y = fov_y;
  cam.height = height;
  cam.width = width;
  cam.validate();
  return cam;
}

Ray pixel_ray(const Camera& cam, int i, int j) {
  CameraBasis b = camera_basis(cam);
  const double f = cam.focal();
  const double u = double(j) + 0.5;
  const double v = double(i) + 0.5;
  const double dx = (u - 0.5 * double(cam.width)) / f;
  const double dy = (0.5 * double(cam.height) - v) / f;
  Vec3 d = normalized(b.right * dx + b.up * dy + b.forward);
  return {cam.position, d};
}

PluckerMap plucker_embed(const Camera& cam) {
  cam.validate();
  const int H = cam.height, W = cam.width;
  CameraBasis b = camera_basis(cam);
  const double f = cam.focal();
  PluckerMap map;
  map.height = H;
  map.width = W;
  map.data.resize(size_t(6) * H * W);
  auto put = [&](int c, int i, int j, double v) { map.data[size_t((c * H + i) * W + j)] = v; };
  for (int i = 0; i < H; ++i) {
    const double dy = (0.5 * double(H) - (double(i) + 0.5)) / f;
    for (int j = 0; j < W; ++j) {
      const double dx = ((double(j) + 0.5) - 0.5 * double(W)) / f;
      Vec3 d = normalized(b.right * dx + b.up * dy + b.forward);
      Vec3 m = cross(cam.position, d);
      put(0, i, j, d.x);
      put(1, i, j, d.y);
      put(2, i, j, d.z);
      put(3, i, j, m.x);
      put(4, i, j, m.y);
      put(5, i, j, m.z);
    }
  }
  return map;
}

Camera camera_at(double azimuth_deg, double elevation_deg, double radius, int height, int width,
                 double fov_y) {
  const double az = deg_to_rad(azimuth_deg);
  const double el = deg_to_rad(elevation_deg);
  Camera cam;
  cam.position = {radius * std::sin(az) * std::cos(el), radius * std::sin(el),
                  radius * std::cos(az) * std::cos(el)};
  cam.look_at = {0, 0, 0};
  cam.up = {0, 1, 0};
  cam.fov_y = fov_y;
  cam.height = height;
  cam.width = width;
  cam.validate();
  return cam;
}

CameraRig canonical_four(double radius, int height, int width, double fov_y) {
  if (!(radius > 0)) throw std::runtime_error("canonical_four: radius must be positive");
  CameraRig rig;
  rig.kind = RigKind::CanonicalFour;
  for (double az : {0.0, 90.0, 270.0, 180.0})
    rig.cameras.push_back(camera_at(az, 0.0, radius, height, width, fov_y));
  return rig;
}

CameraRig ring_rig(const std::vector<RingSpec>& rings, double radius, int height, int width,
                   double fov_y) {
  if (!(radius > 0)) throw std::runtime_error("ring_rig: radius must be positive");
  CameraRig rig;
  rig.kind = RigKind::FixedCircular;
  for (const auto& ring : rings) {
    for (int k = 0; k < ring.count; ++k) {
      double az = 360.0 * double(k) / double(ring.count);
      rig.cameras.push_back(camera_at(az, ring.elevation_deg, radius, height, width, fov_y));
    }
  }
  return rig;
}

CameraRig circular_rig(int n, double radius, const std::vector<double>& elevations_deg, int height,
                       int width, double fov_y) {
  if (n < 1) throw std::runtime_error("circular_rig: n must be >= 1");
  if (elevations_deg.empty()) throw std::runtime_error("circular_rig: empty elevation list");
  const int rings = int(elevations_deg.size());
  std::vector<RingSpec> specs;
  for (int r = 0; r < rings; ++r) {
    int count = n / rings + (r < n % rings ? 1 : 0);
    if (count > 0) specs.push_back({count, elevations_deg[size_t(r)]});
  }
  CameraRig rig = ring_rig(specs, radius, height, width, fov_y);
  rig.kind = RigKind::FixedCircular;
  return rig;
}

CameraRig random_rig(int n, uint64_t seed, const RandomRigBounds& bounds, int height, int width,
                     double fov_y) {
  if (n < 1) throw std::runtime_error("random_rig: n must be >= 1");
  if (!(bounds.r_min > 0) || bounds.r_max < bounds.r_min ||
      bounds.elev_max_deg < bounds.elev_min_deg)
    throw std::runtime_error("random_rig: inverted bounds");
  Rng rng(seed);
  CameraRig rig;
  rig.kind = RigKind::Random;
  for (int k = 0; k < n; ++k) {
    const double az = rng.uniform(0.0, 360.0);
    const double el = rng.uniform(bounds.elev_min_deg, bounds.elev_max_deg);
    const double r = rng.uniform(bounds.r_min, bounds.r_max);
    Camera cam = camera_at(az, el, r, height, width, fov_y);
    if (bounds.target_jitter > 0) {
      cam.look_at = {rng.uniform(-bounds.target_jitter, bounds.target_jitter),
                     rng.uniform(-bounds.target_jitter, bounds.target_jitter),
                     rng.uniform(-bounds.target_jitter, bounds.target_jitter)};
      cam.validate();
    }
    rig.cameras.push_back(cam);
  }
  return rig;
}

static ojson vec_json(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }

static Vec3 vec_from_json(const ojson& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string rig_to_json(const CameraRig& rig) {
  if (rig.cameras.empty()) throw std::runtime_error("rig_to_json: empty rig");
  const Camera& c0 = rig.cameras.front();
  ojson j;
  j["convention"] = kWorldConvention;
  j["fov_y_deg"] = rad_to_deg(c0.fov_y);
  j["resolution"] = ojson::array({c0.height, c0.width});
  ojson views = ojson::array();
  for (size_t i = 0; i < rig.cameras.size(); ++i) {
    const Camera& c = rig.cameras[i];
    ojson v;
    v["id"] = int(i);
    v["position"] = vec_json(c.position);
    v["look_at"] = vec_json(c.look_at);
    v["up"] = vec_json(c.up);
    views.push_back(std::move(v));
  }
  j["views"] = std::move(views);
  return j.dump(2) + "\n";
}

CameraRig rig_from_json(const std::string& text) {
  ojson j = ojson::parse(text);
  CameraRig rig;
  rig.kind = RigKind::Custom;
  const double fov_y = deg_to_rad(j.at("fov_y_deg").get<double>());
  const int height = j.at("resolution").at(0).get<int>();
  const int width = j.at("resolution").at(1).get<int>();
  for (const auto& v : j.at("views")) {
    Camera cam;
    cam.position = vec_from_json(v.at("position"));
    cam.look_at = vec_from_json(v.at("look_at"));
    cam.up = vec_from_json(v.at("up"));
    cam.fov_y = fov_y;
    cam.height = height;
    cam.width = width;
    cam.validate();
    rig.cameras.push_back(cam);
  }
  return rig;
}

void write_rig(const std::string& path, const CameraRig& rig) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_rig: cannot open " + path);
  os << rig_to_json(rig);
}

CameraRig read_rig(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_rig: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return rig_from_json(ss.str());
}

}  // namespace gshead
