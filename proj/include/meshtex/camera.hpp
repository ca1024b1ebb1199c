// Perspective camera and the azimuth view ring.
//
// Conventions: right-handed world with +y up, camera looks down its local
// -z, OpenGL-style clip space (NDC depth in [-1, 1]), screen row 0 at the
// top, pixel centers at (x + 0.5, y + 0.5).
#pragma once

#include <cmath>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/geometry.hpp"

namespace meshtex {

struct Camera {
  Vec3 eye;
  Vec3 target;
  Vec3 up{0, 1, 0};
  double vfov_deg = 40.0;
  int width = 64;
  int height = 64;
  double near = 0.1;
  double far = 10.0;
};

inline void validate_camera(const Camera& c) {
  if (norm(c.target - c.eye) == 0.0) {
    throw ConfigError("camera eye and target coincide");
  }
  if (!(0.0 < c.near && c.near < c.far)) {
    throw ConfigError("camera requires 0 < near < far");
  }
  const Vec3 f = normalized(c.target - c.eye);
  if (norm(cross(f, c.up)) < 1e-9) {
    throw ConfigError("camera up vector is parallel to the view direction");
  }
  if (c.width < 1 || c.height < 1 || c.vfov_deg <= 0 || c.vfov_deg >= 180) {
    throw ConfigError("camera image size or field of view out of range");
  }
}

inline Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = normalized(target - eye);
  const Vec3 s = normalized(cross(f, up));
  const Vec3 u = cross(s, f);
  Mat4 m = Mat4::identity();
  m.at(0, 0) = s.x;
  m.at(0, 1) = s.y;
  m.at(0, 2) = s.z;
  m.at(0, 3) = -dot(s, eye);
  m.at(1, 0) = u.x;
  m.at(1, 1) = u.y;
  m.at(1, 2) = u.z;
  m.at(1, 3) = -dot(u, eye);
  m.at(2, 0) = -f.x;
  m.at(2, 1) = -f.y;
  m.at(2, 2) = -f.z;
  m.at(2, 3) = dot(f, eye);
  return m;
}

inline Mat4 perspective(double vfov_deg, double aspect, double near,
                        double far) {
  const double t = 1.0 / std::tan(deg_to_rad(vfov_deg) / 2.0);
  Mat4 m;
  m.at(0, 0) = t / aspect;
  m.at(1, 1) = t;
  m.at(2, 2) = -(far + near) / (far - near);
  m.at(2, 3) = -2.0 * far * near / (far - near);
  m.at(3, 2) = -1.0;
  return m;
}

// One projected vertex: screen position, NDC depth, clip-space w.
struct ScreenVertex {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
  double w = 0.0;
};

class CameraTransform {
 public:
  explicit CameraTransform(const Camera& cam) : cam_(cam) {
    validate_camera(cam);
    const double aspect =
        static_cast<double>(cam.width) / static_cast<double>(cam.height);
    view_proj_ = perspective(cam.vfov_deg, aspect, cam.near, cam.far) *
                 look_at(cam.eye, cam.target, cam.up);
  }

  ScreenVertex project(const Vec3& p) const {
    const Vec4 clip = transform(view_proj_, p);
    ScreenVertex v;
    v.w = clip.w;
    if (clip.w > 0.0) {
      v.x = (clip.x / clip.w + 1.0) * 0.5 * cam_.width;
      v.y = (1.0 - clip.y / clip.w) * 0.5 * cam_.height;
      v.depth = clip.z / clip.w;
    }
    return v;
  }

  const Camera& camera() const { return cam_; }

 private:
  Camera cam_;
  Mat4 view_proj_;
};

// Cameras at azimuths 360k/n degrees around the +y axis, fixed elevation
// and distance, all targeting the origin.
inline std::vector<Camera> make_view_ring(int n, double elevation_deg,
                                          double distance, int width,
                                          int height, double vfov_deg = 40.0,
                                          double near = 0.1,
                                          double far = 10.0) {
  if (n < 1) {
    throw ConfigError("view ring needs at least one camera");
  }
  std::vector<Camera> cams;
  cams.reserve(n);
  const double el = deg_to_rad(elevation_deg);
  for (int k = 0; k < n; ++k) {
    const double az = deg_to_rad(360.0 * k / n);
    Camera c;
    c.eye = {distance * std::cos(el) * std::sin(az),
             distance * std::sin(el),
             distance * std::cos(el) * std::cos(az)};
    c.target = {0, 0, 0};
    c.width = width;
    c.height = height;
    c.vfov_deg = vfov_deg;
    c.near = near;
    c.far = far;
    cams.push_back(c);
  }
  return cams;
}

}  // namespace meshtex
