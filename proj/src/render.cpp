#include "bgtri/render.hpp"

namespace bgt {

namespace {

void splat_pass(ForwardPass& pass, const Scene& scene, const Camera& cam,
                const RenderOptions& options) {
  pass.subs = generate(pass.buffers, scene, cam);
  pass.gaussians.clear();
  pass.gaussians.reserve(pass.subs.size());
  for (int i = 0; i < static_cast<int>(pass.subs.size()); ++i) {
    if (auto g = project(pass.subs[i], cam)) {
      g->source = i;
      pass.gaussians.push_back(*g);
    }
  }
  pass.tiles = build_boundary_tiles(pass.buffers.boundary, cam.width, cam.height, options.cutoff);
  CompositeOptions co;
  co.opacity = scene.opacity;
  co.background = scene.background;
  co.blending = options.blending;
  co.threads = options.threads;
  pass.composite = composite(pass.gaussians, pass.buffers, pass.buffers.boundary, pass.tiles, co);
}

}  // namespace

ForwardPass render(const Scene& scene, const Camera& cam, const RenderOptions& options) {
  ForwardPass pass;
  pass.buffers = rasterize(scene, cam, options.threads);
  pass.buffers.boundary = extract_boundaries(pass.buffers, scene, cam, scene.boundary_scale);
  splat_pass(pass, scene, cam, options);
  return pass;
}

ForwardPass render_frozen(const Scene& scene, const Camera& cam, const RasterBuffers& frozen,
                          const RenderOptions& options) {
  ForwardPass pass;
  pass.buffers = frozen;
  locate_boundaries(pass.buffers.boundary, scene, cam, scene.boundary_scale);
  splat_pass(pass, scene, cam, options);
  return pass;
}

}  // namespace bgt
