#include "bgtri/backward.hpp"

#include "bgtri/error.hpp"
#include "bgtri/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace bgt {

double PrimitiveGradient::mean_position_norm() const {
  const auto& g = groups[static_cast<int>(ParamGroup::position)];
  const int points = static_cast<int>(g.size() / 3);
  if (points == 0) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < points; ++i)
    sum += std::sqrt(g[3 * i] * g[3 * i] + g[3 * i + 1] * g[3 * i + 1] +
                     g[3 * i + 2] * g[3 * i + 2]);
  return sum / points;
}

GradientBuffers GradientBuffers::zeros_like(const Scene& scene) {
  GradientBuffers out;
  out.primitives.resize(scene.primitives.size());
  for (std::size_t p = 0; p < scene.primitives.size(); ++p)
    for (ParamGroup g : kParamGroups)
      out.primitives[p].groups[static_cast<int>(g)].assign(
          params(scene.primitives[p], g).size(), 0.0);
  return out;
}

void GradientBuffers::check_finite() const {
  for (std::size_t p = 0; p < primitives.size(); ++p)
    for (ParamGroup g : kParamGroups) {
      const auto values = primitives[p][g];
      for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
          throw NumericError("non-finite gradient at primitive " + std::to_string(p) + ", " +
                             std::string(to_string(g)) + "[" + std::to_string(i) + "]");
    }
}

double GradientBuffers::max_abs() const {
  double m = 0.0;
  for (const auto& p : primitives)
    for (const auto& g : p.groups)
      for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

std::vector<CompositeTermGradient> backward_composite(std::span<const Contribution> records,
                                                      std::span<const Vec3> colors,
                                                      double final_transmittance,
                                                      const Vec3& background,
                                                      const Vec3& d_pixel) {
  if (colors.size() != records.size()) throw DimensionError("one color per record expected");
  std::vector<CompositeTermGradient> out(records.size());
  // Sum of T_j alpha_j c_j over later terms plus T_n c_bg.
  Vec3 suffix = final_transmittance * background;
  for (int i = static_cast<int>(records.size()) - 1; i >= 0; --i) {
    const Contribution& r = records[i];
    const double ta = r.transmittance * r.alpha;
    out[i].d_color = ta * d_pixel;
    out[i].d_alpha = d_pixel.dot(r.transmittance * colors[i] - suffix / (1.0 - r.alpha));
    suffix += ta * colors[i];
  }
  return out;
}

FalloffGradient falloff_gradient(const Vec2& q, const Vec2& mean, const Vec3& conic) {
  const double dx = q.x() - mean.x(), dy = q.y() - mean.y();
  const double g =
      std::exp(-0.5 * (conic[0] * dx * dx + 2.0 * conic[1] * dx * dy + conic[2] * dy * dy));
  FalloffGradient out;
  out.d_mean = g * Vec2(conic[0] * dx + conic[1] * dy, conic[1] * dx + conic[2] * dy);
  out.d_conic = g * Vec3(-0.5 * dx * dx, -dx * dy, -0.5 * dy * dy);
  return out;
}

Mat2 conic_to_covariance_gradient(const Vec3& conic, const Vec3& d_conic) {
  Mat2 k;
  k << conic[0], conic[1], conic[1], conic[2];
  // The off-diagonal entry appears twice in K.
  Mat2 dk;
  dk << d_conic[0], 0.5 * d_conic[1], 0.5 * d_conic[1], d_conic[2];
  return -k * dk * k;
}

BoundaryWeightGradient boundary_weight_gradient(const Vec2& q, const Vec2& b, double sigma,
                                                BlendCase side) {
  BoundaryWeightGradient out;
  if (side == BlendCase::none) return out;
  const Vec2 diff = q - b;
  const double d = diff.norm();
  // A boundary point sits on its own pixel center up to rounding; |q - b| has a
  // cone tip there and the symmetric subgradient is zero.
  if (!(d > kConeTolerance * sigma) || d >= sigma) return out;
  const double sign = side == BlendCase::own ? 1.0 : -1.0;
  // d|q - b| / db = -(q - b) / d.
  out.d_position = -sign * gamma_derivative(d, sigma) * diff / d;
  out.d_sigma = sign * gamma_sigma_derivative(d, sigma);
  return out;
}

Vec4 quaternion_matrix_gradient(const Vec4& q, const Mat3& g) {
  const double r = q[0], x = q[1], y = q[2], z = q[3];
  return 2.0 * Vec4(-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                        x * g(2, 1),
                    y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - r * g(1, 2) +
                        z * g(2, 0) + r * g(2, 1) - 2 * x * g(2, 2),
                    -2 * y * g(0, 0) + x * g(0, 1) + r * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                        r * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2),
                    -2 * z * g(0, 0) - r * g(0, 1) + x * g(0, 2) + r * g(1, 0) -
                        2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
}

namespace {

constexpr int kNetSize = 6;

struct RecordGradient {
  Vec3 d_color = Vec3::Zero();
  Vec2 d_mean = Vec2::Zero();
  Vec3 d_conic = Vec3::Zero();
  Vec2 d_boundary = Vec2::Zero();
  double d_sigma = 0.0;
};

struct GaussianGradient {
  Vec3 d_color = Vec3::Zero();
  Vec2 d_mean = Vec2::Zero();
  Vec3 d_conic = Vec3::Zero();
  bool touched = false;
};

std::array<Vec3, kNetSize> zero_net() {
  std::array<Vec3, kNetSize> out;
  out.fill(Vec3::Zero());
  return out;
}

struct SubGradient {
  std::array<Vec3, kNetSize> d_position = zero_net();
  std::array<Vec3, kNetSize> d_color = zero_net();
  TexelWeights rotation_weights;
  Vec4 d_quaternion = Vec4::Zero();
  TexelWeights scaling_weights;
  Vec2 d_log_scale = Vec2::Zero();
  TexelWeights sh_weights;
  std::array<double, kShBasisCount * 3> d_sh{};
};

Vec3 normalize_gradient(const Vec3& unit, double length, const Vec3& g) {
  return (g - unit * unit.dot(g)) / length;
}

SubGradient chain_gaussian(const Scene& scene, const Camera& cam, const SubPrimitive& sub,
                           const ProjectedGaussian& pg, const GaussianGradient& gg) {
  const Primitive& prim = scene.primitives[sub.owner];
  const SubPrimitiveAttributes attr = evaluate_attributes(prim, sub.bc);
  SubGradient out;

  const Vec3 c = cam.to_camera(sub.position);
  const Mat23 jac = cam.projection_jacobian(c);
  const Mat3& view = cam.rotation;
  Vec3 d_cam = jac.transpose() * gg.d_mean;

  // Screen covariance M Sigma M^T with M = J W.
  const Mat2 d_cov = conic_to_covariance_gradient(pg.conic, gg.d_conic);
  const Mat3 rs = attr.rotation * attr.scale.asDiagonal();
  const Mat3 sigma_world = rs * rs.transpose();
  const Mat23 m = jac * view;
  const Mat3 d_sigma_world = m.transpose() * d_cov * m;
  const Mat23 d_jac = 2.0 * d_cov * m * sigma_world * view.transpose();
  const double x = c.x(), y = c.y(), z = c.z();
  const double fx = cam.fx, fy = cam.fy, iz2 = 1.0 / (z * z), iz3 = iz2 / z;
  d_cam.x() += d_jac(0, 2) * (-fx * iz2);
  d_cam.y() += d_jac(1, 2) * (-fy * iz2);
  d_cam.z() += d_jac(0, 0) * (-fx * iz2) + d_jac(0, 2) * (2.0 * fx * x * iz3) +
               d_jac(1, 1) * (-fy * iz2) + d_jac(1, 2) * (2.0 * fy * y * iz3);
  Vec3 d_surface = view.transpose() * d_cam;

  // Sigma_world = R diag(s^2) R^T.
  const Vec3 s2 = attr.scale.cwiseProduct(attr.scale);
  const Mat3 d_rot = 2.0 * d_sigma_world * attr.rotation * s2.asDiagonal();
  const Mat3 local = attr.rotation.transpose() * d_sigma_world * attr.rotation;
  Vec3 d_scale;
  for (int k = 0; k < 3; ++k) d_scale[k] = 2.0 * attr.scale[k] * local(k, k);
  const double thin = 0.5 * kThinAxisRatio * d_scale[2];
  out.d_log_scale = Vec2((d_scale[0] + thin) * attr.scale[0], (d_scale[1] + thin) * attr.scale[1]);
  out.scaling_weights = texel_weights(prim.scaling.resolution, sub.bc);

  // R = F Q.
  const Mat3 q_mat = quaternion_to_matrix(attr.quaternion);
  const Mat3 d_frame = d_rot * q_mat.transpose();
  const Mat3 d_qmat = attr.frame.frame.transpose() * d_rot;
  const Vec4 d_unit = quaternion_matrix_gradient(attr.quaternion, d_qmat);
  const double q_len = attr.raw_quaternion.norm();
  if (q_len > 0.0)
    out.d_quaternion = (d_unit - attr.quaternion * attr.quaternion.dot(d_unit)) / q_len;
  out.rotation_weights = texel_weights(prim.rotation.resolution, sub.bc);

  std::array<double, kNetSize> bw{}, tv{}, tw{};
  bernstein_weights(prim.geometry.degree, sub.bc, bw);
  if (!attr.frame.degenerate) {
    const Vec3 t1 = attr.frame.frame.col(0), n = attr.frame.frame.col(2);
    Vec3 g1 = d_frame.col(0);
    const Vec3 g2 = d_frame.col(1);
    Vec3 gn = d_frame.col(2);
    gn += t1.cross(g2);
    g1 += g2.cross(n);
    const Vec3& dv = attr.frame.dv;
    const Vec3& dw = attr.frame.dw;
    const Vec3 cross = dv.cross(dw);
    Vec3 d_dv = normalize_gradient(t1, dv.norm(), g1);
    const Vec3 d_m = normalize_gradient(n, cross.norm(), gn);
    d_dv += dw.cross(d_m);
    const Vec3 d_dw = d_m.cross(dv);
    bernstein_tangent_weights(prim.geometry.degree, sub.bc, tv, tw);
    for (int i = 0; i < kNetSize; ++i) out.d_position[i] += tv[i] * d_dv + tw[i] * d_dw;
  }

  // Color = clamp(diffuse + SH(view direction)).
  Vec3 d_color = gg.d_color;
  for (int ch = 0; ch < 3; ++ch)
    if (pg.color_clamped[ch]) d_color[ch] = 0.0;
  Vec3 d_diffuse = d_color;
  for (int ch = 0; ch < 3; ++ch)
    if (sub.diffuse_clamped[ch]) d_diffuse[ch] = 0.0;
  for (int i = 0; i < kNetSize; ++i) out.d_color[i] = bw[i] * d_diffuse;

  const Vec3 view_vec = sub.position - cam.center();
  const double view_len = view_vec.norm();
  const Vec3 dir = view_vec / view_len;
  const auto basis = sh_basis(dir);
  const auto basis_grad = sh_basis_gradient(dir);
  Vec3 d_dir = Vec3::Zero();
  for (int b = 0; b < kShBasisCount; ++b) {
    double coeff_dot = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      out.d_sh[b * 3 + ch] = basis[b] * d_color[ch];
      coeff_dot += sub.sh[b * 3 + ch] * d_color[ch];
    }
    d_dir += coeff_dot * basis_grad[b];
  }
  d_surface += normalize_gradient(dir, view_len, d_dir);
  out.sh_weights = texel_weights(prim.sh.resolution, sub.bc);

  for (int i = 0; i < kNetSize; ++i) out.d_position[i] += bw[i] * d_surface;
  return out;
}

void scatter_texels(std::span<double> dst, int channels, const TexelWeights& tw,
                    std::span<const double> value) {
  for (int k = 0; k < tw.count; ++k)
    for (int c = 0; c < channels; ++c) dst[tw.texel[k] * channels + c] += tw.weight[k] * value[c];
}

}  // namespace

GradientBuffers backward(const Scene& scene, const Camera& cam, const ForwardPass& pass,
                         const Image& d_image, const RenderOptions& options) {
  const CompositeResult& comp = pass.composite;
  if (!d_image.same_shape(comp.image)) throw DimensionError("dL/dimage does not match render");
  const int width = comp.image.width, height = comp.image.height;
  const auto& points = pass.buffers.boundary;

  // Per-record gradients; every record belongs to one pixel, so rows are independent.
  std::vector<RecordGradient> rec_grad(comp.records.size());
  parallel_for(height, options.threads, [&](int y) {
    std::vector<Vec3> colors;
    for (int x = 0; x < width; ++x) {
      const int pix = y * width + x;
      const auto recs = comp.pixel_records(pix);
      if (recs.empty()) continue;
      colors.clear();
      for (const Contribution& r : recs) colors.push_back(pass.gaussians[r.gaussian].color);
      const Vec3 d_pixel = d_image.rgb(x, y);
      const auto terms = backward_composite(recs, colors, comp.final_transmittance[pix],
                                            scene.background, d_pixel);
      const Vec2 q(x + 0.5, y + 0.5);
      const std::size_t first = comp.record_offsets[pix];
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const Contribution& r = recs[i];
        RecordGradient& out = rec_grad[first + i];
        out.d_color = terms[i].d_color;
        if (r.clamped) continue;
        const ProjectedGaussian& g = pass.gaussians[r.gaussian];
        const double d_alpha = terms[i].d_alpha;
        const FalloffGradient fg = falloff_gradient(q, g.mean, g.conic);
        const double d_falloff = d_alpha * scene.opacity * r.w;
        out.d_mean = d_falloff * fg.d_mean;
        out.d_conic = d_falloff * fg.d_conic;
        if (options.blending && r.boundary_point >= 0) {
          const BoundaryPoint& b = points[r.boundary_point];
          const double d_w = d_alpha * r.alpha / r.w;
          const auto bw = boundary_weight_gradient(q, b.position, b.sigma, r.side);
          out.d_boundary = d_w * bw.d_position;
          out.d_sigma = d_w * bw.d_sigma;
        }
      }
    }
  });

  // Fixed-order reduction onto Gaussians and boundary points.
  std::vector<GaussianGradient> gauss_grad(pass.gaussians.size());
  std::vector<Vec2> point_grad(points.size(), Vec2::Zero());
  std::vector<double> sigma_grad(points.size(), 0.0);
  for (std::size_t k = 0; k < comp.records.size(); ++k) {
    const Contribution& r = comp.records[k];
    GaussianGradient& gg = gauss_grad[r.gaussian];
    gg.touched = true;
    gg.d_color += rec_grad[k].d_color;
    gg.d_mean += rec_grad[k].d_mean;
    gg.d_conic += rec_grad[k].d_conic;
    if (r.boundary_point >= 0) {
      point_grad[r.boundary_point] += rec_grad[k].d_boundary;
      sigma_grad[r.boundary_point] += rec_grad[k].d_sigma;
    }
  }

  std::vector<SubGradient> sub_grad(pass.gaussians.size());
  parallel_for(static_cast<int>(pass.gaussians.size()), options.threads, [&](int gi) {
    if (!gauss_grad[gi].touched) return;
    const ProjectedGaussian& pg = pass.gaussians[gi];
    sub_grad[gi] = chain_gaussian(scene, cam, pass.subs[pg.source], pg, gauss_grad[gi]);
  });

  GradientBuffers grads = GradientBuffers::zeros_like(scene);
  for (std::size_t gi = 0; gi < pass.gaussians.size(); ++gi) {
    if (!gauss_grad[gi].touched) continue;
    const int owner = pass.gaussians[gi].owner;
    const Primitive& prim = scene.primitives[owner];
    PrimitiveGradient& pgrad = grads.primitives[owner];
    const SubGradient& sg = sub_grad[gi];
    auto pos = pgrad[ParamGroup::position];
    auto col = pgrad[ParamGroup::color];
    for (int i = 0; i < kNetSize; ++i)
      for (int a = 0; a < 3; ++a) {
        pos[3 * i + a] += sg.d_position[i][a];
        col[3 * i + a] += sg.d_color[i][a];
      }
    scatter_texels(pgrad[ParamGroup::rotation], prim.rotation.channels, sg.rotation_weights,
                   std::span<const double>(sg.d_quaternion.data(), 4));
    scatter_texels(pgrad[ParamGroup::scaling], prim.scaling.channels, sg.scaling_weights,
                   std::span<const double>(sg.d_log_scale.data(), 2));
    scatter_texels(pgrad[ParamGroup::sh], prim.sh.channels, sg.sh_weights, sg.d_sh);
  }

  // Boundary points: 2D position and sigma back to the owner's control points.
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (point_grad[i].isZero() && sigma_grad[i] == 0.0) continue;
    const BoundaryPoint& b = points[i];
    const Vec3 c = cam.to_camera(b.point);
    if (!(c.z() > cam.near)) continue;
    Vec3 d_cam = cam.projection_jacobian(c).transpose() * point_grad[i];
    d_cam.z() += sigma_grad[i] * (-b.sigma / c.z());
    const Vec3 d_world = cam.rotation.transpose() * d_cam;
    std::array<double, kNetSize> bw{};
    bernstein_weights(scene.primitives[b.owner].geometry.degree, b.bc, bw);
    auto pos = grads.primitives[b.owner][ParamGroup::position];
    for (int k = 0; k < kNetSize; ++k)
      for (int a = 0; a < 3; ++a) pos[3 * k + a] += bw[k] * d_world[a];
  }

  grads.check_finite();
  return grads;
}

bool fd_passes(const FdEntry& e, const FdOptions& options) {
  return std::abs(e.analytic - e.numeric) <= options.abs_floor || e.rel_error <= options.rel_tol;
}

std::vector<ParamRef> sample_parameters(const Scene& scene, int count, std::uint64_t seed) {
  std::vector<ParamRef> all;
  for (int p = 0; p < static_cast<int>(scene.primitives.size()); ++p)
    for (ParamGroup g : kParamGroups) {
      const int n = static_cast<int>(params(scene.primitives[p], g).size());
      for (int i = 0; i < n; ++i) all.push_back({p, g, i});
    }
  std::mt19937_64 rng(seed);
  const int take = std::min<int>(count, static_cast<int>(all.size()));
  for (int i = 0; i < take; ++i) {
    const int j = i + static_cast<int>(rng() % (all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(take);
  return all;
}

namespace {

// Discrete decisions of a forward pass; a change means the loss is not smooth there.
std::vector<std::int64_t> decision_signature(const ForwardPass& pass, bool include_raster) {
  std::vector<std::int64_t> sig;
  const auto& comp = pass.composite;
  const int width = comp.image.width;
  for (std::size_t pix = 0; pix + 1 < comp.record_offsets.size(); ++pix) {
    const auto recs = comp.pixel_records(static_cast<int>(pix));
    sig.push_back(static_cast<std::int64_t>(recs.size()));
    const Vec2 q(double(pix % width) + 0.5, double(pix / width) + 0.5);
    for (const Contribution& r : recs) {
      const ProjectedGaussian& g = pass.gaussians[r.gaussian];
      const SubPrimitive& s = pass.subs[g.source];
      std::int64_t flags = static_cast<std::int64_t>(r.side) | (r.clamped << 2);
      for (int c = 0; c < 3; ++c) {
        flags |= std::int64_t(g.color_clamped[c]) << (3 + c);
        flags |= std::int64_t(s.diffuse_clamped[c]) << (6 + c);
      }
      if (r.boundary_point >= 0) {
        const BoundaryPoint& b = pass.buffers.boundary[r.boundary_point];
        flags |= std::int64_t((q - b.position).norm() < b.sigma) << 9;
      }
      sig.push_back(g.source);
      sig.push_back(r.boundary_point);
      sig.push_back(flags);
    }
  }
  if (include_raster) {
    sig.insert(sig.end(), pass.buffers.id.begin(), pass.buffers.id.end());
    for (const BoundaryPoint& b : pass.buffers.boundary) sig.push_back(b.py * width + b.px);
  }
  return sig;
}

}  // namespace

std::vector<FdEntry> finite_difference_check(const Scene& scene, const Camera& cam,
                                             const LossFn& loss, std::span<const ParamRef> refs,
                                             const FdOptions& fd, const RenderOptions& options) {
  if (!(fd.eps > 0.0)) throw ContractError("finite-difference step must be positive");
  const ForwardPass base = render(scene, cam, options);
  Image d_image;
  loss(base.image(), &d_image);
  const GradientBuffers grads = backward(scene, cam, base, d_image, options);
  const auto base_sig = decision_signature(base, !fd.freeze_raster);

  auto evaluate = [&](const Scene& s) {
    return fd.freeze_raster ? render_frozen(s, cam, base.buffers, options)
                            : render(s, cam, options);
  };

  std::vector<FdEntry> out;
  out.reserve(refs.size());
  Scene work = scene;
  for (const ParamRef& ref : refs) {
    FdEntry e;
    e.param = ref;
    e.analytic = grads.primitives[ref.primitive][ref.group][ref.index];
    double& value = params(work.primitives[ref.primitive], ref.group)[ref.index];
    const double original = value;
    double f[2];
    for (int k = 0; k < 2; ++k) {
      value = original + (k == 0 ? fd.eps : -fd.eps);
      f[k] = loss(evaluate(work).image(), nullptr);
    }
    for (double scale : {10.0, -10.0, 1.0, -1.0}) {
      value = original + scale * fd.eps;
      if (decision_signature(evaluate(work), !fd.freeze_raster) != base_sig) e.excluded = true;
    }
    value = original;
    e.numeric = (f[0] - f[1]) / (2.0 * fd.eps);
    const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
    e.rel_error = scale > 0.0 ? std::abs(e.analytic - e.numeric) / scale : 0.0;
    out.push_back(e);
  }
  return out;
}

std::pair<Scene, Camera> gradient_check_scene(std::uint64_t seed, int size) {
  std::mt19937_64 rng(seed);
  auto draw = [&] {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = uniform01(rng);
    return v;
  };
  Scene scene;
  scene.background = Vec3(0.1, 0.2, 0.3);
  scene.boundary_scale = 0.25;
  const std::array<std::array<Vec3, 3>, 3> corners = {{
      {Vec3(-0.8, -0.6, 0.1), Vec3(0.6, -0.7, 0.0), Vec3(-0.1, 0.7, -0.1)},
      {Vec3(-0.2, -0.2, 0.4), Vec3(0.9, 0.0, 0.5), Vec3(0.3, 0.9, 0.3)},
      {Vec3(-0.9, 0.1, -0.3), Vec3(0.0, -0.9, -0.4), Vec3(0.2, 0.3, -0.2)},
  }};
  for (const auto& t : corners) {
    ControlNet net = flat_net(t[0], t[1], t[2]);
    for (Vec3& c : net.points) c += 0.1 * draw() - Vec3::Constant(0.05);
    Primitive prim = scene.make_primitive(net, 0.12);
    for (Vec3& c : prim.color.points) c = 0.8 * draw() + Vec3::Constant(0.1);
    for (double& v : prim.sh.texels) v = 0.2 * (uniform01(rng) - 0.5);
    for (double& v : prim.scaling.texels) v += 0.3 * (uniform01(rng) - 0.5);
    for (double& v : prim.rotation.texels) v += 0.2 * (uniform01(rng) - 0.5);
    scene.primitives.push_back(std::move(prim));
  }
  const Camera cam =
      Camera::look_at(Vec3(0.4, -0.3, 3.0), Vec3::Zero(), -Vec3::UnitY(), 0.8, size, size);
  return {std::move(scene), cam};
}

}  // namespace bgt
