#include "bgtri/subprim.hpp"

#include "bgtri/error.hpp"

#include <algorithm>
#include <cmath>

namespace bgt {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                             -1.0925484305920792, 0.5462742152960396};

}  // namespace

SurfaceFrame tangent_frame(const ControlNet& net, const Barycentric& bc) {
  SurfaceFrame f;
  const auto t = surface_tangents(net, bc);
  f.dv = t[0];
  f.dw = t[1];
  const Vec3 m = f.dv.cross(f.dw);
  const double dv_norm = f.dv.norm(), m_norm = m.norm();
  if (!(dv_norm > 1e-300) || !(m_norm > 1e-300)) {
    f.degenerate = true;
    f.frame = Mat3::Identity();
    return f;
  }
  const Vec3 t1 = f.dv / dv_norm;
  const Vec3 n = m / m_norm;
  const Vec3 t2 = n.cross(t1);
  f.frame.col(0) = t1;
  f.frame.col(1) = t2;
  f.frame.col(2) = n;
  return f;
}

Mat3 quaternion_to_matrix(const Vec4& q) {
  const double r = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - r * z), 2 * (x * z + r * y),
      2 * (x * y + r * z), 1 - 2 * (x * x + z * z), 2 * (y * z - r * x),
      2 * (x * z - r * y), 2 * (y * z + r * x), 1 - 2 * (x * x + y * y);
  return m;
}

SubPrimitiveAttributes evaluate_attributes(const Primitive& prim, const Barycentric& bc) {
  SubPrimitiveAttributes a;
  a.frame = tangent_frame(prim.geometry, bc);

  const auto rot = interpolate_texels(prim.rotation, bc);
  a.raw_quaternion = Vec4(rot[0], rot[1], rot[2], rot[3]);
  const double qn = a.raw_quaternion.norm();
  a.quaternion = qn > 0.0 ? Vec4(a.raw_quaternion / qn) : Vec4(1, 0, 0, 0);
  a.rotation = a.frame.frame * quaternion_to_matrix(a.quaternion);

  const auto ls = interpolate_texels(prim.scaling, bc);
  a.log_scale = {ls[0], ls[1]};
  const double s1 = std::exp(ls[0]), s2 = std::exp(ls[1]);
  a.scale = Vec3(s1, s2, kThinAxisRatio * 0.5 * (s1 + s2));

  std::array<double, 6> weights{};
  bernstein_weights(prim.color.degree, bc, weights);
  a.raw_diffuse.setZero();
  for (int i = 0; i < 6; ++i) a.raw_diffuse += weights[i] * prim.color.points[i];
  return a;
}

std::vector<SubPrimitive> generate(const RasterBuffers& buffers, const Scene& scene,
                                   const Camera& cam) {
  std::vector<SubPrimitive> out;
  out.reserve(buffers.foreground_count());
  for (int pix = 0; pix < buffers.width * buffers.height; ++pix) {
    const int id = buffers.id[pix];
    if (id < 0) continue;
    const Primitive& prim = scene.primitives[id];
    SubPrimitive s;
    s.owner = id;
    s.pixel = pix;
    s.bc = buffers.uv[pix];
    s.position = evaluate_surface(prim.geometry, s.bc);
    const SubPrimitiveAttributes a = evaluate_attributes(prim, s.bc);
    s.rotation = a.rotation;
    s.scale = a.scale;
    s.diffuse = a.raw_diffuse.cwiseMax(0.0).cwiseMin(1.0);
    for (int c = 0; c < 3; ++c)
      s.diffuse_clamped[c] = a.raw_diffuse[c] < 0.0 || a.raw_diffuse[c] > 1.0;
    const auto sh = interpolate_texels(prim.sh, s.bc);
    std::copy(sh.begin(), sh.end(), s.sh.begin());
    s.depth = cam.to_camera(s.position).z();
    out.push_back(s);
  }
  return out;
}

std::array<double, kShBasisCount> sh_basis(const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  return {-kShC1 * y,
          kShC1 * z,
          -kShC1 * x,
          kShC2[0] * x * y,
          kShC2[1] * y * z,
          kShC2[2] * (2.0 * z * z - x * x - y * y),
          kShC2[3] * x * z,
          kShC2[4] * (x * x - y * y)};
}

std::array<Vec3, kShBasisCount> sh_basis_gradient(const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  return {Vec3(0, -kShC1, 0),
          Vec3(0, 0, kShC1),
          Vec3(-kShC1, 0, 0),
          kShC2[0] * Vec3(y, x, 0),
          kShC2[1] * Vec3(0, z, y),
          kShC2[2] * Vec3(-2 * x, -2 * y, 4 * z),
          kShC2[3] * Vec3(z, 0, x),
          kShC2[4] * Vec3(2 * x, -2 * y, 0)};
}

Vec3 eval_sh_residual(std::span<const double> coeffs, const Vec3& view_dir) {
  if (coeffs.size() != kShBasisCount * 3)
    throw DimensionError("SH residual expects 24 coefficients");
  const auto basis = sh_basis(view_dir);
  Vec3 out = Vec3::Zero();
  for (int b = 0; b < kShBasisCount; ++b)
    for (int c = 0; c < 3; ++c) out[c] += basis[b] * coeffs[b * 3 + c];
  return out;
}

}  // namespace bgt
