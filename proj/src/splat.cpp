#include "bgtri/splat.hpp"

#include "bgtri/error.hpp"
#include "bgtri/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bgt {

Mat2 project_covariance(const Mat3& cov_world, const Vec3& cam_point, const Camera& cam) {
  const Mat23 jw = cam.projection_jacobian(cam_point) * cam.rotation;
  return jw * cov_world * jw.transpose();
}

double support_radius(const Mat2& cov) {
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
  return kInfluenceCutoff * std::sqrt(lambda_max);
}

std::optional<ProjectedGaussian> project(const SubPrimitive& sub, const Camera& cam) {
  const Vec3 c = cam.to_camera(sub.position);
  if (!(c.z() > cam.near)) return std::nullopt;
  ProjectedGaussian g;
  g.owner = sub.owner;
  g.mean = cam.project_camera(c);
  g.depth = c.z();
  const Mat3 rs = sub.rotation * sub.scale.asDiagonal();
  g.cov = project_covariance(rs * rs.transpose(), c, cam);
  g.cov(0, 0) += kCovarianceBlur;
  g.cov(1, 1) += kCovarianceBlur;
  const double det = g.cov(0, 0) * g.cov(1, 1) - g.cov(0, 1) * g.cov(0, 1);
  if (!(det > 0.0)) return std::nullopt;
  g.conic = Vec3(g.cov(1, 1) / det, -g.cov(0, 1) / det, g.cov(0, 0) / det);
  g.radius = support_radius(g.cov);

  const Vec3 dir = (sub.position - cam.center()).normalized();
  const Vec3 raw = sub.diffuse + eval_sh_residual(sub.sh, dir);
  for (int ch = 0; ch < 3; ++ch) {
    g.color_clamped[ch] = raw[ch] < 0.0 || raw[ch] > 1.0;
    g.color[ch] = std::clamp(raw[ch], 0.0, 1.0);
  }
  return g;
}

int BoundaryTileIndex::tile_of(const Vec2& q) const {
  const int tx = std::clamp(static_cast<int>(std::floor(q.x() / tile_size)), 0, tiles_x - 1);
  const int ty = std::clamp(static_cast<int>(std::floor(q.y() / tile_size)), 0, tiles_y - 1);
  return ty * tiles_x + tx;
}

std::span<const int> BoundaryTileIndex::tile_entries(int tile) const {
  return {entries.data() + tile_offsets[tile],
          std::size_t(tile_offsets[tile + 1] - tile_offsets[tile])};
}

std::span<const int> BoundaryTileIndex::candidates(int tile, int owner) const {
  const auto first = entry_owner.begin() + tile_offsets[tile];
  const auto last = entry_owner.begin() + tile_offsets[tile + 1];
  const auto [lo, hi] = std::equal_range(first, last, owner);
  return {entries.data() + (lo - entry_owner.begin()), std::size_t(hi - lo)};
}

bool disc_overlaps_tile(const Vec2& center, double radius, int tx, int ty, int tile_size) {
  if (std::isinf(radius)) return true;
  const double x0 = double(tx) * tile_size, x1 = x0 + tile_size;
  const double y0 = double(ty) * tile_size, y1 = y0 + tile_size;
  const double dx = std::max({x0 - center.x(), 0.0, center.x() - x1});
  const double dy = std::max({y0 - center.y(), 0.0, center.y() - y1});
  return dx * dx + dy * dy < radius * radius;
}

BoundaryTileIndex build_boundary_tiles(std::span<const BoundaryPoint> points, int width,
                                       int height, double cutoff) {
  if (width <= 0 || height <= 0) throw ContractError("image size must be positive");
  BoundaryTileIndex index;
  index.cutoff = cutoff;
  index.tiles_x = (width + kTileSize - 1) / kTileSize;
  index.tiles_y = (height + kTileSize - 1) / kTileSize;
  const int tiles = index.tiles_x * index.tiles_y;

  std::vector<std::vector<int>> lists(tiles);
  index.point_tiles.resize(points.size());
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const BoundaryPoint& b = points[i];
    if (!(b.sigma > 0.0)) throw ContractError("boundary point sigma must be positive");
    const double r = cutoff * b.sigma;
    auto tile_range = [&](double lo, double hi, int count) {
      if (std::isinf(r)) return std::pair{0, count - 1};
      const double a = std::floor(lo / kTileSize), z = std::floor(hi / kTileSize);
      return std::pair{static_cast<int>(std::clamp(a, 0.0, double(count - 1))),
                       static_cast<int>(std::clamp(z, 0.0, double(count - 1)))};
    };
    const auto [tx0, tx1] = tile_range(b.position.x() - r, b.position.x() + r, index.tiles_x);
    const auto [ty0, ty1] = tile_range(b.position.y() - r, b.position.y() + r, index.tiles_y);
    index.point_tiles[i] = {tx0, ty0, tx1, ty1};
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        if (disc_overlaps_tile(b.position, r, tx, ty, kTileSize))
          lists[ty * index.tiles_x + tx].push_back(i);
  }

  index.tile_offsets.assign(tiles + 1, 0);
  for (int t = 0; t < tiles; ++t) {
    auto& list = lists[t];
    std::stable_sort(list.begin(), list.end(),
                     [&](int a, int b) { return points[a].owner < points[b].owner; });
    index.tile_offsets[t + 1] = index.tile_offsets[t] + static_cast<int>(list.size());
    for (int i : list) {
      index.entries.push_back(i);
      index.entry_owner.push_back(points[i].owner);
    }
  }
  return index;
}

double gamma(double d, double sigma) { return std::min(std::exp2(d / sigma - 1.0), 1.0); }

double gamma_derivative(double d, double sigma) {
  if (d >= sigma) return 0.0;
  return std::numbers::ln2 / sigma * gamma(d, sigma);
}

double gamma_sigma_derivative(double d, double sigma) {
  if (d >= sigma) return 0.0;
  return -std::numbers::ln2 * d / (sigma * sigma) * gamma(d, sigma);
}

namespace {

struct Candidate {
  int point = -1;
  double gamma = 0.0;
  double distance = 0.0;
};

// Strict lexicographic (gamma, distance, index) order.
bool better(const Candidate& a, const Candidate& b) {
  if (b.point < 0) return true;
  if (a.gamma != b.gamma) return a.gamma < b.gamma;
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.point < b.point;
}

void consider(const Vec2& q, int i, const BoundaryPoint& b, double cutoff, Candidate& best) {
  const double dx = q.x() - b.position.x(), dy = q.y() - b.position.y();
  const double d2 = dx * dx + dy * dy;
  const double r = cutoff * b.sigma;
  if (!std::isinf(r) && !(d2 < r * r)) return;
  const double d = std::sqrt(d2);
  const Candidate c{i, gamma(d, b.sigma), d};
  if (better(c, best)) best = c;
}

BlendResult finish(const Candidate& best, int pixel_id, int owner) {
  BlendResult r;
  if (best.point < 0) {
    r.w = pixel_id == owner ? 1.0 : 0.0;
    return r;
  }
  r.point = best.point;
  r.distance = best.distance;
  r.gamma = best.gamma;
  if (pixel_id == owner) {
    r.side = BlendCase::own;
    r.w = best.gamma;
  } else {
    r.side = BlendCase::far;
    r.w = 1.0 - best.gamma;
  }
  return r;
}

}  // namespace

BlendResult blending_coefficient(const Vec2& q, int pixel_id, int owner,
                                 std::span<const BoundaryPoint> points,
                                 const BoundaryTileIndex& index) {
  Candidate best;
  for (int i : index.candidates(index.tile_of(q), owner))
    consider(q, i, points[i], index.cutoff, best);
  return finish(best, pixel_id, owner);
}

BlendResult blending_coefficient_bruteforce(const Vec2& q, int pixel_id, int owner,
                                            std::span<const BoundaryPoint> points,
                                            double cutoff) {
  Candidate best;
  for (int i = 0; i < static_cast<int>(points.size()); ++i)
    if (points[i].owner == owner) consider(q, i, points[i], cutoff, best);
  return finish(best, pixel_id, owner);
}

namespace {

struct TileOutput {
  std::vector<int> counts;  // per pixel of the tile, row-major within the tile
  std::vector<Contribution> records;
};

}  // namespace

CompositeResult composite(std::span<const ProjectedGaussian> gaussians,
                          const RasterBuffers& buffers, std::span<const BoundaryPoint> points,
                          const BoundaryTileIndex& index, const CompositeOptions& options) {
  const int width = buffers.width, height = buffers.height;
  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  const int tiles = tiles_x * tiles_y;
  if (options.blending && (index.tiles_x != tiles_x || index.tiles_y != tiles_y))
    throw DimensionError("boundary tile index does not match the image");

  std::vector<std::vector<int>> bins(tiles);
  for (int i = 0; i < static_cast<int>(gaussians.size()); ++i) {
    const ProjectedGaussian& g = gaussians[i];
    if (!(g.radius > 0.0)) continue;
    const double x0 = std::floor((g.mean.x() - g.radius) / kTileSize);
    const double x1 = std::floor((g.mean.x() + g.radius) / kTileSize);
    const double y0 = std::floor((g.mean.y() - g.radius) / kTileSize);
    const double y1 = std::floor((g.mean.y() + g.radius) / kTileSize);
    if (x1 < 0 || y1 < 0 || x0 >= tiles_x || y0 >= tiles_y) continue;
    const int tx0 = static_cast<int>(std::max(x0, 0.0));
    const int tx1 = static_cast<int>(std::min(x1, double(tiles_x - 1)));
    const int ty0 = static_cast<int>(std::max(y0, 0.0));
    const int ty1 = static_cast<int>(std::min(y1, double(tiles_y - 1)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) bins[ty * tiles_x + tx].push_back(i);
  }

  CompositeResult out;
  out.image = Image(width, height, 3);
  out.final_transmittance.assign(static_cast<std::size_t>(width) * height, 1.0);
  std::vector<TileOutput> tile_out(tiles);

  parallel_for(tiles, options.threads, [&](int tile) {
    auto& list = bins[tile];
    // Depths closer than float precision keep generation (pixel) order, so
    // rounding noise cannot swap near-coincident Gaussians.
    std::stable_sort(list.begin(), list.end(), [&](int a, int b) {
      return static_cast<float>(gaussians[a].depth) < static_cast<float>(gaussians[b].depth);
    });
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * kTileSize, py0 = ty * kTileSize;
    const int px1 = std::min(px0 + kTileSize, width), py1 = std::min(py0 + kTileSize, height);
    TileOutput& to = tile_out[tile];
    to.counts.assign(static_cast<std::size_t>(px1 - px0) * (py1 - py0), 0);
    std::vector<std::pair<int, BlendResult>> memo;

    int local = 0;
    for (int y = py0; y < py1; ++y) {
      for (int x = px0; x < px1; ++x, ++local) {
        const int pix = y * width + x;
        const Vec2 q(x + 0.5, y + 0.5);
        const int pixel_id = buffers.id[pix];
        memo.clear();
        double t = 1.0;
        Vec3 color = Vec3::Zero();
        int count = 0;
        for (int gi : list) {
          const ProjectedGaussian& g = gaussians[gi];
          const double dx = q.x() - g.mean.x(), dy = q.y() - g.mean.y();
          const double power =
              -0.5 * (g.conic[0] * dx * dx + 2.0 * g.conic[1] * dx * dy + g.conic[2] * dy * dy);
          if (power > 0.0) continue;
          const double falloff = std::exp(power);
          const double base = options.opacity * falloff;
          if (base < kAlphaMin) continue;

          BlendResult blend;
          if (options.blending) {
            auto it = std::find_if(memo.begin(), memo.end(),
                                   [&](const auto& m) { return m.first == g.owner; });
            if (it == memo.end()) {
              memo.emplace_back(g.owner,
                                blending_coefficient(q, pixel_id, g.owner, points, index));
              it = memo.end() - 1;
            }
            blend = it->second;
          }
          if (!(blend.w > 0.0)) continue;
          double alpha = base * blend.w;
          if (alpha < kAlphaMin) continue;
          const bool clamped = alpha > kAlphaMax;
          if (clamped) alpha = kAlphaMax;

          to.records.push_back(
              {gi, alpha, t, falloff, blend.w, blend.point, blend.side, clamped});
          ++count;
          color += t * alpha * g.color;
          t *= 1.0 - alpha;
          if (t < kTransmittanceMin) break;
        }
        color += t * options.background;
        out.image.set_rgb(x, y, color);
        out.final_transmittance[pix] = t;
        to.counts[local] = count;
      }
    }
  });

  // Merge per-tile buffers into pixel order.
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  out.record_offsets.assign(pixels + 1, 0);
  for (int tile = 0; tile < tiles; ++tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * kTileSize, py0 = ty * kTileSize;
    const int tw = std::min(px0 + kTileSize, width) - px0;
    for (std::size_t k = 0; k < tile_out[tile].counts.size(); ++k) {
      const int x = px0 + static_cast<int>(k) % tw, y = py0 + static_cast<int>(k) / tw;
      out.record_offsets[static_cast<std::size_t>(y) * width + x + 1] = tile_out[tile].counts[k];
    }
  }
  for (std::size_t p = 0; p < pixels; ++p) out.record_offsets[p + 1] += out.record_offsets[p];
  out.records.resize(out.record_offsets[pixels]);
  for (int tile = 0; tile < tiles; ++tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * kTileSize, py0 = ty * kTileSize;
    const int tw = std::min(px0 + kTileSize, width) - px0;
    std::size_t src = 0;
    for (std::size_t k = 0; k < tile_out[tile].counts.size(); ++k) {
      const int x = px0 + static_cast<int>(k) % tw, y = py0 + static_cast<int>(k) / tw;
      const int dst = out.record_offsets[static_cast<std::size_t>(y) * width + x];
      std::copy_n(tile_out[tile].records.begin() + src, tile_out[tile].counts[k],
                  out.records.begin() + dst);
      src += tile_out[tile].counts[k];
    }
  }
  return out;
}

}  // namespace bgt
