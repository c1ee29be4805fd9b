#include "bgtri/raster.hpp"

#include "bgtri/error.hpp"
#include "bgtri/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace bgt {

namespace {

struct ScreenTriangle {
  std::array<Vec2, 3> s;
  std::array<double, 3> inv_z;
  std::array<Barycentric, 3> bc;
  int primitive;
  int index;
  double min_x, max_x, min_y, max_y;
};

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace

int tessellation_level(const ControlNet& net, const Camera& cam) {
  const int n = net.degree;
  std::vector<Vec3> cam_pts(net.points.size());
  for (std::size_t i = 0; i < net.points.size(); ++i) {
    cam_pts[i] = cam.to_camera(net.points[i]);
    if (cam_pts[i].z() <= cam.near) return kMaxTessellationLevel;
  }
  double longest = 0.0;
  for (const auto& t : control_indices(n)) {
    if (t.i == 0) continue;
    const Vec2 a = cam.project_camera(cam_pts[control_slot(n, t.i, t.j)]);
    const Vec2 b = cam.project_camera(cam_pts[control_slot(n, t.i - 1, t.j + 1)]);
    const Vec2 c = cam.project_camera(cam_pts[control_slot(n, t.i - 1, t.j)]);
    longest = std::max({longest, (a - b).norm(), (a - c).norm(), (b - c).norm()});
  }
  int level = kMinTessellationLevel;
  while (level < kMaxTessellationLevel && longest / double(1 << level) > 1.0) ++level;
  return level;
}

Tessellation tessellate_level(const ControlNet& net, int level) {
  Tessellation t;
  t.level = level;
  const int n = 1 << level;
  auto vertex = [n](int a, int b) {
    // Row b holds n - b + 1 vertices.
    return b * (n + 1) - b * (b - 1) / 2 + a;
  };
  for (int b = 0; b <= n; ++b) {
    for (int a = 0; a + b <= n; ++a) {
      const double v = double(a) / n, w = double(b) / n;
      const Barycentric bc{double(n - a - b) / n, v, w};
      t.bc.push_back(bc);
      t.positions.push_back(evaluate_surface(net, bc));
    }
  }
  t.triangles.reserve(static_cast<std::size_t>(n) * n);
  for (int b = 0; b < n; ++b) {
    for (int a = 0; a + b < n; ++a) {
      t.triangles.push_back({vertex(a, b), vertex(a + 1, b), vertex(a, b + 1)});
      if (a + b + 1 < n)
        t.triangles.push_back({vertex(a + 1, b), vertex(a + 1, b + 1), vertex(a, b + 1)});
    }
  }
  return t;
}

Tessellation tessellate(const Primitive& prim, const Camera& cam) {
  return tessellate_level(prim.geometry, tessellation_level(prim.geometry, cam));
}

bool intersects_frustum(const ControlNet& net, const Camera& cam) {
  bool all_near = true, all_far = true, any_behind = false;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const Vec3& p : net.points) {
    const Vec3 c = cam.to_camera(p);
    all_near = all_near && c.z() <= cam.near;
    all_far = all_far && c.z() >= cam.far;
    if (c.z() <= cam.near) {
      any_behind = true;
      continue;
    }
    const Vec2 s = cam.project_camera(c);
    min_x = std::min(min_x, s.x());
    max_x = std::max(max_x, s.x());
    min_y = std::min(min_y, s.y());
    max_y = std::max(max_y, s.y());
  }
  if (all_near || all_far) return false;
  if (any_behind) return true;
  return !(max_x < 0.0 || min_x > cam.width || max_y < 0.0 || min_y > cam.height);
}

int RasterBuffers::foreground_count() const {
  return static_cast<int>(std::count_if(id.begin(), id.end(), [](int v) { return v >= 0; }));
}

RasterBuffers rasterize(const Scene& scene, const Camera& cam, int threads) {
  cam.validate();
  RasterBuffers out;
  out.width = cam.width;
  out.height = cam.height;
  const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
  out.uv.assign(pixels, Barycentric{0.0, 0.0, 0.0});
  out.id.assign(pixels, kBackground);
  out.depth.assign(pixels, std::numeric_limits<double>::infinity());

  std::vector<ScreenTriangle> tris;
  for (int p = 0; p < static_cast<int>(scene.primitives.size()); ++p) {
    const auto& net = scene.primitives[p].geometry;
    if (!intersects_frustum(net, cam)) continue;
    const Tessellation tess = tessellate(scene.primitives[p], cam);
    std::vector<Vec3> cam_pts(tess.positions.size());
    for (std::size_t v = 0; v < cam_pts.size(); ++v) cam_pts[v] = cam.to_camera(tess.positions[v]);
    for (int t = 0; t < static_cast<int>(tess.triangles.size()); ++t) {
      const auto& tri = tess.triangles[t];
      ScreenTriangle st;
      bool ok = true;
      for (int k = 0; k < 3; ++k) {
        const Vec3& c = cam_pts[tri[k]];
        if (c.z() <= cam.near || c.z() >= cam.far) {
          ok = false;
          break;
        }
        st.s[k] = cam.project_camera(c);
        st.inv_z[k] = 1.0 / c.z();
        st.bc[k] = tess.bc[tri[k]];
      }
      if (!ok) continue;
      st.min_x = std::min({st.s[0].x(), st.s[1].x(), st.s[2].x()});
      st.max_x = std::max({st.s[0].x(), st.s[1].x(), st.s[2].x()});
      st.min_y = std::min({st.s[0].y(), st.s[1].y(), st.s[2].y()});
      st.max_y = std::max({st.s[0].y(), st.s[1].y(), st.s[2].y()});
      if (st.max_x < 0.0 || st.min_x > cam.width || st.max_y < 0.0 || st.min_y > cam.height)
        continue;
      if (edge(st.s[0], st.s[1], st.s[2]) == 0.0) continue;
      st.primitive = p;
      st.index = t;
      tris.push_back(st);
    }
  }

  // Horizontal bands; each band owns its rows, and the depth key
  // (depth, primitive, triangle) is a total order, so band layout is irrelevant.
  const int bands = std::max(1, std::min(threads, cam.height));
  std::vector<int> tri_index(pixels, -1);
  parallel_for(bands, bands, [&](int band) {
    const int y_begin = static_cast<int>(static_cast<long long>(cam.height) * band / bands);
    const int y_end = static_cast<int>(static_cast<long long>(cam.height) * (band + 1) / bands);
    for (const ScreenTriangle& st : tris) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(st.min_x - 0.5)));
      const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(st.max_x - 0.5)));
      const int y0 = std::max(y_begin, static_cast<int>(std::ceil(st.min_y - 0.5)));
      const int y1 = std::min(y_end - 1, static_cast<int>(std::floor(st.max_y - 0.5)));
      if (x0 > x1 || y0 > y1) continue;
      const double area = edge(st.s[0], st.s[1], st.s[2]);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p(x + 0.5, y + 0.5);
          const double l0 = edge(st.s[1], st.s[2], p) / area;
          const double l1 = edge(st.s[2], st.s[0], p) / area;
          const double l2 = edge(st.s[0], st.s[1], p) / area;
          if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
          const double a0 = l0 * st.inv_z[0], a1 = l1 * st.inv_z[1], a2 = l2 * st.inv_z[2];
          const double sum = a0 + a1 + a2;
          if (!(sum > 0.0)) continue;
          const double depth = 1.0 / sum;
          if (depth <= cam.near || depth >= cam.far) continue;
          const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
          const double cur = out.depth[pix];
          if (depth > cur) continue;
          if (depth == cur) {
            const int cur_id = out.id[pix];
            if (st.primitive > cur_id) continue;
            if (st.primitive == cur_id && st.index >= tri_index[pix]) continue;
          }
          const double b0 = a0 / sum, b1 = a1 / sum, b2 = a2 / sum;
          Barycentric bc{b0 * st.bc[0].u + b1 * st.bc[1].u + b2 * st.bc[2].u,
                         b0 * st.bc[0].v + b1 * st.bc[1].v + b2 * st.bc[2].v,
                         b0 * st.bc[0].w + b1 * st.bc[1].w + b2 * st.bc[2].w};
          bc.u = std::max(bc.u, 0.0);
          bc.v = std::max(bc.v, 0.0);
          bc.w = std::max(bc.w, 0.0);
          const double norm = bc.u + bc.v + bc.w;
          bc.u /= norm;
          bc.v /= norm;
          bc.w = std::max(0.0, 1.0 - bc.u - bc.v);
          out.depth[pix] = depth;
          out.id[pix] = st.primitive;
          out.uv[pix] = bc;
          tri_index[pix] = st.index;
        }
      }
    }
  });
  return out;
}

void locate_boundaries(std::span<BoundaryPoint> points, const Scene& scene, const Camera& cam,
                       double boundary_scale) {
  for (BoundaryPoint& b : points) {
    b.point = evaluate_surface(scene.primitives[b.owner].geometry, b.bc);
    const Vec3 c = cam.to_camera(b.point);
    b.depth = std::max(c.z(), cam.near);
    b.position = cam.project_camera(Vec3(c.x(), c.y(), b.depth));
    b.sigma = boundary_scale * cam.fx / b.depth;
  }
}

std::vector<BoundaryPoint> extract_boundaries(const RasterBuffers& buffers, const Scene& scene,
                                              const Camera& cam, double boundary_scale) {
  std::vector<BoundaryPoint> out;
  const int w = buffers.width, h = buffers.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int id = buffers.id_at(x, y);
      if (id < 0) continue;
      const bool boundary = (x > 0 && buffers.id_at(x - 1, y) != id) ||
                            (x + 1 < w && buffers.id_at(x + 1, y) != id) ||
                            (y > 0 && buffers.id_at(x, y - 1) != id) ||
                            (y + 1 < h && buffers.id_at(x, y + 1) != id);
      if (!boundary) continue;
      BoundaryPoint b;
      b.px = x;
      b.py = y;
      b.owner = id;
      b.bc = buffers.uv[buffers.pixel(x, y)];
      out.push_back(b);
    }
  }
  locate_boundaries(out, scene, cam, boundary_scale);
  return out;
}

}  // namespace bgt
