#pragma once

#include "bgtri/types.hpp"

namespace bgt {

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
/// Pixel (px, py) covers [px, px+1) x [py, py+1); its center is (px+0.5, py+0.5).
struct Camera {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // world -> camera
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;
  double near = 0.01;
  double far = 1000.0;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec2 project_camera(const Vec3& cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }
  Vec2 project(const Vec3& world) const { return project_camera(to_camera(world)); }
  /// d(pixel)/d(camera-space point).
  Mat23 projection_jacobian(const Vec3& cam) const;
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Throws ContractError on invalid intrinsics or a non-orthonormal rotation.
  void validate() const;

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_x,
                        int width, int height);

  /// Same view with the focal length multiplied by `zoom` (close-up crop).
  Camera zoomed(double zoom) const;
};

}  // namespace bgt
