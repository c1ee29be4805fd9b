#pragma once

#include "bgtri/backward.hpp"
#include "bgtri/dataio.hpp"
#include "bgtri/render.hpp"
#include "bgtri/scene.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bgt {

struct TrainConfig {
  int iterations = 3000;
  double lambda = 0.2;  // D-SSIM weight
  int split_interval = 300;
  int split_until = 15000;
  double tau_grad = 0.0018;
  double tau_edge = 13.0;
  double tau_visibility = 0.08;
  double tau_texels = 0.4;
  double tau_area = 3e-4;
  double tau_aspect = 10.0;
  double lr_position = 1.6e-5;  // multiplied by the scene extent
  double lr_position_final = 0.01;  // fraction of lr_position reached at the end
  double lr_color = 2.5e-3;
  double lr_rotation = 1e-3;
  double lr_scaling = 5e-3;
  double lr_sh = 2.5e-3;
  int max_primitives = 300;
  std::uint64_t seed = 0;
  double boundary_scale = 0.06;
  Vec3 background = Vec3::Zero();
  bool blending = true;
  int threads = 1;
  int log_interval = 100;
  int checkpoint_interval = 0;  // 0 writes only the final checkpoint
  /// Round parameters to float32 after every step.
  bool float32_storage = true;

  void validate() const;
};

/// Names accepted by set_config_value, in declaration order.
const std::vector<std::string>& config_keys();
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);
/// Flat "key = value" lines; '#' starts a comment.
void load_config_file(TrainConfig& config, const std::filesystem::path& path);

struct LossResult {
  double loss = 0.0;
  double l2 = 0.0;
  double dssim = 0.0;
  Image grad;  // dL/d(render), empty unless requested
};

/// (1 - lambda) MSE + lambda (1 - SSIM) / 2.
LossResult photometric_loss(const Image& render, const Image& target, double lambda,
                            bool want_grad = true);

struct AdamState {
  std::int64_t step = 0;
  GradientBuffers m;
  GradientBuffers v;

  static AdamState zeros_like(const Scene& scene);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

using LearningRates = std::array<double, kParamGroups.size()>;

/// Position learning rate at `iteration`, decayed exponentially to
/// lr_position_final * lr_position over the run.
LearningRates learning_rates(const TrainConfig& config, double scene_extent, int iteration);

/// One Adam update, then color clamping, rotation renormalization and
/// optional float32 rounding.
void adam_step(Scene& scene, const GradientBuffers& grads, AdamState& state,
               const LearningRates& rates, bool float32_storage);

/// Folds one training view into every primitive's split/prune bookkeeping.
/// `edges` is the Sobel magnitude of the target's 0-255 grayscale.
void accumulate_split_stats(Scene& scene, const GradientBuffers& grads,
                            const RasterBuffers& buffers, const Image& edges);

struct SplitReport {
  int pruned = 0;
  int split = 0;
  /// For each primitive of the new scene, its index before the event, or -1 for children.
  std::vector<int> source;
};

/// Children of one primitive: exact geometry and color restriction, attribute
/// maps resampled at child texel positions.
std::array<Primitive, 4> split_primitive(const Primitive& prim, Scene& scene);

/// Prune, then split, then reset all statistics.
SplitReport split_and_prune(Scene& scene, const TrainConfig& config, std::mt19937_64& rng);

/// Carries optimizer moments across a split/prune event; children start at zero.
void remap_state(AdamState& state, const Scene& scene, const SplitReport& report);

/// Edge map used by the split statistics.
Image edge_map(const Image& target);

struct TrainLogRow {
  int iteration = 0;
  double loss = 0.0;
  double l2 = 0.0;
  double dssim = 0.0;
  int primitives = 0;
  double psnr = 0.0;
};

struct TrainResult {
  Scene scene;
  AdamState state;
  std::vector<TrainLogRow> log;
  double initial_l2 = 0.0;  // mean training-set L2 before the first step
  double final_l2 = 0.0;    // mean training-set L2 after the last step
};

struct TrainHooks {
  /// Directory for checkpoints/ and logs/; empty disables file output.
  std::filesystem::path out_dir;
  std::function<void(const TrainLogRow&)> on_log;
  /// Evaluate the full training-set L2 before and after training.
  bool measure_l2 = true;
};

/// 1.1 x the largest distance of a training camera from the cameras' centroid.
double scene_extent(const SceneDataset& data);

/// Median world size of one pixel at `center` over the dataset's cameras.
double pixel_footprint(const SceneDataset& data, const Vec3& center);

struct InitOptions {
  /// "points": one triangle per sampled point; "cube": the bounding cube of the points.
  std::string kind = "points";
  int count = 150;
  /// Total triangle area over the estimated surface area (points only).
  double coverage = 2.0;
  /// In-plane sub-primitive scale, in pixels at the point-cloud centroid.
  double footprint_px = 1.0;
  /// Orient point triangles along locally fitted planes instead of randomly.
  bool fit_orientation = false;
  std::uint64_t seed = 0;
};

Scene initialize_scene(const SceneDataset& data, std::span<const Vec3> points,
                       const InitOptions& options);

TrainResult train(Scene scene, const SceneDataset& data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Mean MSE of the scene's renders against every view.
double dataset_l2(const Scene& scene, const SceneDataset& data, const RenderOptions& options);

}  // namespace bgt
