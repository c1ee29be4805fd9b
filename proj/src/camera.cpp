#include "bgtri/camera.hpp"

#include "bgtri/error.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace bgt {

Mat23 Camera::projection_jacobian(const Vec3& cam) const {
  const double iz = 1.0 / cam.z();
  Mat23 j;
  j << fx * iz, 0.0, -fx * cam.x() * iz * iz, 0.0, fy * iz, -fy * cam.y() * iz * iz;
  return j;
}

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ContractError("camera focal lengths must be positive");
  if (!(near > 0.0 && near < far)) throw ContractError("camera requires 0 < near < far");
  if (width <= 0 || height <= 0) throw ContractError("camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite())
    throw ContractError("camera pose is not finite");
  if (!(rotation * rotation.transpose()).isApprox(Mat3::Identity(), 1e-9) ||
      std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw ContractError("camera rotation is not orthonormal");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_x,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up_dir = up.normalized();
  if (std::abs(forward.dot(up_dir)) > 0.999) up_dir = std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 right = forward.cross(up_dir).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fx = width / (2.0 * std::tan(fov_x / 2.0));
  cam.fy = cam.fx;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  return cam;
}

Camera Camera::zoomed(double zoom) const {
  if (!(zoom > 0.0)) throw ContractError("zoom factor must be positive");
  Camera c = *this;
  c.fx *= zoom;
  c.fy *= zoom;
  return c;
}

}  // namespace bgt
