#pragma once

#include "bgtri/camera.hpp"
#include "bgtri/raster.hpp"
#include "bgtri/scene.hpp"

#include <array>
#include <span>
#include <vector>

namespace bgt {

/// Orthonormal frame [t1 t2 n] built from the surface tangents; t1 follows
/// dS/dv and n is the normalized dS/dv x dS/dw.
struct SurfaceFrame {
  Vec3 dv = Vec3::Zero();
  Vec3 dw = Vec3::Zero();
  Mat3 frame = Mat3::Identity();
  bool degenerate = false;
};

SurfaceFrame tangent_frame(const ControlNet& net, const Barycentric& bc);

/// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quaternion_to_matrix(const Vec4& q);

/// Transient pixel-aligned Gaussian.
struct SubPrimitive {
  int owner = kBackground;
  int pixel = 0;
  Barycentric bc;
  Vec3 position = Vec3::Zero();  // S_q, world
  Mat3 rotation = Mat3::Identity();  // local -> world
  Vec3 scale = Vec3::Ones();     // world units; third axis thin
  Vec3 diffuse = Vec3::Zero();   // c_q, clamped to [0, 1]
  std::array<bool, 3> diffuse_clamped{};
  std::array<double, kShBasisCount * 3> sh{};  // [basis * 3 + channel]
  double depth = 0.0;            // camera z of S_q
};

/// Attribute evaluation shared by the forward pass and the backward chain.
struct SubPrimitiveAttributes {
  SurfaceFrame frame;
  Vec4 raw_quaternion = Vec4(1, 0, 0, 0);
  Vec4 quaternion = Vec4(1, 0, 0, 0);
  Mat3 rotation = Mat3::Identity();
  std::array<double, 2> log_scale{};
  Vec3 scale = Vec3::Ones();
  Vec3 raw_diffuse = Vec3::Zero();
};

SubPrimitiveAttributes evaluate_attributes(const Primitive& prim, const Barycentric& bc);

/// One sub-primitive per foreground pixel, in row-major pixel order.
std::vector<SubPrimitive> generate(const RasterBuffers& buffers, const Scene& scene,
                                   const Camera& cam);

/// Real SH basis for bands 1-2 (8 functions).
std::array<double, kShBasisCount> sh_basis(const Vec3& dir);

/// d(basis)/d(dir): row b holds the gradient of basis function b.
std::array<Vec3, kShBasisCount> sh_basis_gradient(const Vec3& dir);

/// View-dependent RGB residual. `coeffs` has kShBasisCount * 3 entries.
Vec3 eval_sh_residual(std::span<const double> coeffs, const Vec3& view_dir);

}  // namespace bgt
