#pragma once

#include "bgtri/camera.hpp"
#include "bgtri/raster.hpp"
#include "bgtri/scene.hpp"
#include "bgtri/splat.hpp"
#include "bgtri/subprim.hpp"

#include <vector>

namespace bgt {

struct RenderOptions {
  bool blending = true;
  int threads = 1;
  /// Influence cutoff of boundary points, in units of sigma.
  double cutoff = kInfluenceCutoff;
};

/// Everything the backward pass needs from one forward render.
struct ForwardPass {
  RasterBuffers buffers;  // includes the boundary points
  std::vector<SubPrimitive> subs;
  std::vector<ProjectedGaussian> gaussians;  // `source` indexes `subs`
  BoundaryTileIndex tiles;
  CompositeResult composite;

  const Image& image() const { return composite.image; }
};

ForwardPass render(const Scene& scene, const Camera& cam, const RenderOptions& options = {});

/// Re-renders with I_uv, I_id and the boundary pixel set taken from `frozen`;
/// only the continuous quantities are recomputed from the scene.
ForwardPass render_frozen(const Scene& scene, const Camera& cam, const RasterBuffers& frozen,
                          const RenderOptions& options = {});

}  // namespace bgt
