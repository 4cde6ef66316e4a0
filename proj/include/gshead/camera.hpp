#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gshead/geometry.hpp"

namespace gshead {

// World convention: head centered at the origin, Y-up, front camera on +Z,
// azimuth measured counterclockwise (seen from +Y) starting at +Z.
inline constexpr const char* kWorldConvention = "y-up,origin-centered,front=+z,azimuth-ccw";

struct Camera {
  Vec3 position;
  Vec3 look_at;
  Vec3 up{0, 1, 0};
  double fov_y = deg_to_rad(50.0);  // vertical, radians
  int height = 0;
  int width = 0;

  void validate() const;
  double focal() const { return 0.5 * double(height) / std::tan(0.5 * fov_y); }
};

struct CameraBasis {
  Vec3 right, up, forward;  // orthonormal, forward = viewing direction
};

CameraBasis camera_basis(const Camera& cam);

// Rows are (right, up, forward): x_cam = R * (x_world - position).
Mat3 world_to_camera_rotation(const Camera& cam);

Camera camera_from_quat(const Vec3& position, const Quat& orientation, double fov_y, int height,
                        int width);

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit
};

// Ray through the center of pixel (row i, col j).
Ray pixel_ray(const Camera& cam, int i, int j);

// Per-pixel (direction, moment = origin x direction), channel-major 6 x H x W.
struct PluckerMap {
  int height = 0, width = 0;
  std::vector<double> data;

  double at(int c, int i, int j) const { return data[size_t((c * height + i) * width + j)]; }
  Vec3 direction(int i, int j) const { return {at(0, i, j), at(1, i, j), at(2, i, j)}; }
  Vec3 moment(int i, int j) const { return {at(3, i, j), at(4, i, j), at(5, i, j)}; }
};

PluckerMap plucker_embed(const Camera& cam);

// For a unit-direction Plucker ray, the point on the ray closest to the origin.
inline Vec3 closest_ray_point(const Vec3& d, const Vec3& m) { return cross(d, m); }

enum class RigKind { CanonicalFour, FixedCircular, Random, Custom };

struct CameraRig {
  RigKind kind = RigKind::Custom;
  std::vector<Camera> cameras;
};

Camera camera_at(double azimuth_deg, double elevation_deg, double radius, int height, int width,
                 double fov_y);

// front/left/right/back at azimuths 0/90/270/180 deg, zero elevation.
CameraRig canonical_four(double radius, int height, int width, double fov_y);

// n cameras spread across the given elevation rings, equal azimuth gaps per ring.
CameraRig circular_rig(int n, double radius, const std::vector<double>& elevations_deg, int height,
                       int width, double fov_y);

// Explicit per-ring counts (e.g. the 8 + 4 + 4 accessory pattern).
struct RingSpec {
  int count = 0;
  double elevation_deg = 0;
};
CameraRig ring_rig(const std::vector<RingSpec>& rings, double radius, int height, int width,
                   double fov_y);

struct RandomRigBounds {
  double r_min = 2.0;
  double r_max = 3.5;
  double elev_min_deg = -20.0;
  double elev_max_deg = 20.0;
  double target_jitter = 0.0;  // look-at offset box half-width
};

CameraRig random_rig(int n, uint64_t seed, const RandomRigBounds& bounds, int height, int width,
                     double fov_y);

// Dataset camera-parameters file. Round-trips bit-exactly.
std::string rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const std::string& text);
void write_rig(const std::string& path, const CameraRig& rig);
CameraRig read_rig(const std::string& path);

}  // namespace gshead
