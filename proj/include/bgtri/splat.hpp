#pragma once

#include "bgtri/camera.hpp"
#include "bgtri/raster.hpp"
#include "bgtri/subprim.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace bgt {

inline constexpr int kTileSize = 16;
/// A boundary point covers q iff |q - b| < kInfluenceCutoff * sigma.
inline constexpr double kInfluenceCutoff = 3.0;
/// Low-pass term added to the screen-space covariance diagonal.
inline constexpr double kCovarianceBlur = 0.3;
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;

struct ProjectedGaussian {
  int source = -1;  // sub-primitive index
  int owner = kBackground;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Vec3 conic = Vec3(1, 0, 1);  // (a, b, c) of the inverse covariance [[a b] [b c]]
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  std::array<bool, 3> color_clamped{};
  double radius = 0.0;  // screen-space support radius, pixels
};

/// J W cov W^T J^T for a world covariance at camera-space point `cam_point`.
Mat2 project_covariance(const Mat3& cov_world, const Vec3& cam_point, const Camera& cam);

/// kInfluenceCutoff times the larger standard deviation of `cov`.
double support_radius(const Mat2& cov);

/// EWA projection of a sub-primitive; nullopt when it lies behind the near plane.
std::optional<ProjectedGaussian> project(const SubPrimitive& sub, const Camera& cam);

/// Boundary points bucketed into kTileSize tiles. Within a tile entries are
/// sorted by owner id, then by point index.
struct BoundaryTileIndex {
  int tile_size = kTileSize;
  int tiles_x = 0;
  int tiles_y = 0;
  double cutoff = kInfluenceCutoff;
  std::vector<int> tile_offsets;  // tiles_x * tiles_y + 1
  std::vector<int> entries;       // point indices
  std::vector<int> entry_owner;
  /// Inclusive tile range (tx0, ty0, tx1, ty1) of each point's influence box.
  std::vector<std::array<int, 4>> point_tiles;

  int tile_of(const Vec2& q) const;
  std::span<const int> tile_entries(int tile) const;
  /// Points of `owner` listed in `tile` (binary search).
  std::span<const int> candidates(int tile, int owner) const;
};

/// Disc-vs-tile-rectangle overlap test used to fill the index.
bool disc_overlaps_tile(const Vec2& center, double radius, int tx, int ty, int tile_size);

BoundaryTileIndex build_boundary_tiles(std::span<const BoundaryPoint> points, int width,
                                       int height, double cutoff = kInfluenceCutoff);

/// min(2^(d/sigma - 1), 1).
double gamma(double d, double sigma);
/// d(gamma)/dd: (ln 2 / sigma) gamma for d < sigma, 0 in the clamped region.
double gamma_derivative(double d, double sigma);
/// d(gamma)/d(sigma): -(ln 2) d / sigma^2 gamma for d < sigma, 0 otherwise.
double gamma_sigma_derivative(double d, double sigma);

enum class BlendCase : std::uint8_t { none, own, far };

struct BlendResult {
  double w = 1.0;
  int point = -1;  // located boundary point, -1 when none covers q
  BlendCase side = BlendCase::none;
  double distance = 0.0;
  double gamma = 1.0;
};

/// Blending coefficient of a Gaussian owned by `owner` at pixel center `q`,
/// where `pixel_id` = I_id(q). Searches only the tile holding q.
BlendResult blending_coefficient(const Vec2& q, int pixel_id, int owner,
                                 std::span<const BoundaryPoint> points,
                                 const BoundaryTileIndex& index);

/// Reference scan over every boundary point; `cutoff` may be +inf.
BlendResult blending_coefficient_bruteforce(const Vec2& q, int pixel_id, int owner,
                                            std::span<const BoundaryPoint> points,
                                            double cutoff = kInfluenceCutoff);

/// One Gaussian's recorded contribution to one pixel.
struct Contribution {
  int gaussian = -1;
  double alpha = 0.0;
  double transmittance = 1.0;  // T_i before this term
  double falloff = 0.0;        // exp(-0.5 d^T conic d)
  double w = 1.0;
  int boundary_point = -1;
  BlendCase side = BlendCase::none;
  bool clamped = false;  // alpha hit kAlphaMax
};

struct CompositeOptions {
  double opacity = kAlphaMax;
  Vec3 background = Vec3::Zero();
  /// false reproduces plain splatting with w = 1 everywhere.
  bool blending = true;
  int threads = 1;
};

struct CompositeResult {
  Image image;
  std::vector<double> final_transmittance;
  std::vector<int> record_offsets;  // pixel -> first record, size W*H + 1
  std::vector<Contribution> records;

  std::span<const Contribution> pixel_records(int pixel) const {
    return {records.data() + record_offsets[pixel],
            std::size_t(record_offsets[pixel + 1] - record_offsets[pixel])};
  }
};

/// Tile-based front-to-back compositing with discontinuity-aware alpha.
/// Gaussians are ordered by depth at float precision, ties in input order.
CompositeResult composite(std::span<const ProjectedGaussian> gaussians,
                          const RasterBuffers& buffers, std::span<const BoundaryPoint> points,
                          const BoundaryTileIndex& index, const CompositeOptions& options);

}  // namespace bgt
