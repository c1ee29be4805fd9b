#include "bgtri/metrics.hpp"

#include "bgtri/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace bgt {

namespace {

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("image shapes differ");
}

// Valid-mode separable filtering of one channel.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += taps[t] * img[y * w + x + t];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += taps[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

// Adjoint of filter_valid.
std::vector<double> filter_valid_adjoint(const std::vector<double>& g, int w, int h,
                                         const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int t = 0; t < k; ++t) rows[(y + t) * ow + x] += taps[t] * g[y * ow + x];
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int t = 0; t < k; ++t) out[y * w + x + t] += taps[t] * rows[y * ow + x];
  return out;
}

std::vector<double> channel(const Image& img, int c) {
  std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
  for (int i = 0; i < img.width * img.height; ++i) out[i] = img.data[i * img.channels + c];
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same(a, b);
  if (a.data.empty()) throw DimensionError("empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / a.data.size();
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

std::vector<double> ssim_taps() {
  std::vector<double> taps(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    taps[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

double ssim(const Image& a, const Image& b) { return ssim_with_gradient(a, b, nullptr); }

double ssim_with_gradient(const Image& a, const Image& b, Image* d_a) {
  require_same(a, b);
  const int w = a.width, h = a.height;
  if (w < kSsimWindow || h < kSsimWindow)
    throw DimensionError("image smaller than the SSIM window");
  const auto taps = ssim_taps();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  const std::size_t positions = static_cast<std::size_t>(ow) * oh;
  const double norm = 1.0 / (double(positions) * a.channels);
  if (d_a) *d_a = Image(w, h, a.channels);

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto x = channel(a, c), y = channel(b, c);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, taps), my = filter_valid(y, w, h, taps);
    const auto exx = filter_valid(xx, w, h, taps), eyy = filter_valid(yy, w, h, taps);
    const auto exy = filter_valid(xy, w, h, taps);
    std::vector<double> ga, gb, gc;
    if (d_a) {
      ga.resize(positions);
      gb.resize(positions);
      gc.resize(positions);
    }
    for (std::size_t p = 0; p < positions; ++p) {
      const double vx = exx[p] - mx[p] * mx[p], vy = eyy[p] - my[p] * my[p];
      const double cov = exy[p] - mx[p] * my[p];
      const double a1 = 2.0 * mx[p] * my[p] + kSsimC1, a2 = 2.0 * cov + kSsimC2;
      const double b1 = mx[p] * mx[p] + my[p] * my[p] + kSsimC1, b2 = vx + vy + kSsimC2;
      const double s = a1 * a2 / (b1 * b2);
      total += s;
      if (d_a) {
        const double d_mean = 2.0 * my[p] * a2 / (b1 * b2) - s * 2.0 * mx[p] / b1;
        const double d_var = -s / b2;
        const double d_cov = 2.0 * a1 / (b1 * b2);
        ga[p] = norm * (d_mean - 2.0 * mx[p] * d_var - my[p] * d_cov);
        gb[p] = norm * 2.0 * d_var;
        gc[p] = norm * d_cov;
      }
    }
    if (d_a) {
      const auto ta = filter_valid_adjoint(ga, w, h, taps);
      const auto tb = filter_valid_adjoint(gb, w, h, taps);
      const auto tc = filter_valid_adjoint(gc, w, h, taps);
      for (std::size_t i = 0; i < x.size(); ++i)
        d_a->data[i * a.channels + c] = ta[i] + x[i] * tb[i] + y[i] * tc[i];
    }
  }
  return total * norm;
}

Image grayscale(const Image& rgb, double scale) {
  if (rgb.channels != 3) throw DimensionError("grayscale expects an RGB image");
  Image out(rgb.width, rgb.height, 1);
  for (int i = 0; i < rgb.width * rgb.height; ++i)
    out.data[i] = scale * (0.299 * rgb.data[3 * i] + 0.587 * rgb.data[3 * i + 1] +
                           0.114 * rgb.data[3 * i + 2]);
  return out;
}

Image sobel_magnitude(const Image& gray) {
  if (gray.channels != 1) throw DimensionError("sobel expects a single-channel image");
  const int w = gray.width, h = gray.height;
  Image out(w, h, 1);
  auto at = [&](int x, int y) {
    return gray.data[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1) -
                        at(x - 1, y - 1) - 2.0 * at(x - 1, y) - at(x - 1, y + 1);
      const double gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1) -
                        at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1);
      out.data[y * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

double edge_sharpness(const Image& rgb, std::span<const std::uint8_t> mask) {
  if (mask.size() != static_cast<std::size_t>(rgb.width) * rgb.height)
    throw DimensionError("mask size does not match the image");
  const Image mag = sobel_magnitude(grayscale(rgb));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      sum += mag.data[i];
      ++count;
    }
  if (count == 0) throw ContractError("edge mask is empty");
  return sum / count;
}

namespace {

void require_points(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.empty() || q.empty()) throw ContractError("chamfer needs non-empty point sets");
}

double directed_bruteforce(std::span<const Vec3> from, std::span<const Vec3> to) {
  double sum = 0.0;
  for (const Vec3& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : to) best = std::min(best, (a - b).squaredNorm());
    sum += std::sqrt(best);
  }
  return sum / from.size();
}

struct PointGrid {
  Vec3 origin;
  double cell = 1.0;
  std::array<int, 3> dims{};
  std::vector<int> offsets;
  std::vector<int> items;

  explicit PointGrid(std::span<const Vec3> pts) {
    Vec3 lo = pts[0], hi = pts[0];
    for (const Vec3& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = hi - lo;
    const double diag = std::max(ext.norm(), 1e-12);
    cell = diag / std::max(1.0, std::cbrt(double(pts.size())));
    origin = lo;
    for (int a = 0; a < 3; ++a) dims[a] = std::max(1, static_cast<int>(ext[a] / cell) + 1);
    const std::size_t cells = std::size_t(dims[0]) * dims[1] * dims[2];
    offsets.assign(cells + 1, 0);
    std::vector<int> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto c = coords(pts[i]);
      cell_of[i] = index(c[0], c[1], c[2]);
      ++offsets[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) offsets[c + 1] += offsets[c];
    items.resize(pts.size());
    std::vector<int> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) items[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  std::array<int, 3> coords(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = static_cast<int>(std::floor((p[a] - origin[a]) / cell));
    return c;
  }
  int index(int x, int y, int z) const { return (z * dims[1] + y) * dims[0] + x; }
};

double directed_grid(std::span<const Vec3> from, std::span<const Vec3> to) {
  const PointGrid grid(to);
  const int max_ring = std::max({grid.dims[0], grid.dims[1], grid.dims[2]});
  double sum = 0.0;
  for (const Vec3& a : from) {
    const auto c = grid.coords(a);
    double best = std::numeric_limits<double>::infinity();
    // Distance from a to its (possibly outside) cell's far neighbours grows by one
    // cell per ring; stop once the next ring cannot hold anything closer.
    int outside = 0;
    for (int ax = 0; ax < 3; ++ax)
      outside = std::max({outside, -c[ax], c[ax] - (grid.dims[ax] - 1)});
    for (int r = 0; r <= outside + max_ring; ++r) {
      for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            if (x < 0 || y < 0 || z < 0 || x >= grid.dims[0] || y >= grid.dims[1] ||
                z >= grid.dims[2])
              continue;
            const int cell = grid.index(x, y, z);
            for (int k = grid.offsets[cell]; k < grid.offsets[cell + 1]; ++k)
              best = std::min(best, (a - to[grid.items[k]]).squaredNorm());
          }
      const double bound = r * grid.cell;
      if (best <= bound * bound) break;
    }
    sum += std::sqrt(best);
  }
  return sum / from.size();
}

}  // namespace

double chamfer_bruteforce(std::span<const Vec3> p, std::span<const Vec3> q) {
  require_points(p, q);
  return 0.5 * (directed_bruteforce(p, q) + directed_bruteforce(q, p));
}

double chamfer_grid(std::span<const Vec3> p, std::span<const Vec3> q) {
  require_points(p, q);
  return 0.5 * (directed_grid(p, q) + directed_grid(q, p));
}

double chamfer(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.size() <= 10000 && q.size() <= 10000) return chamfer_bruteforce(p, q);
  return chamfer_grid(p, q);
}

}  // namespace bgt
