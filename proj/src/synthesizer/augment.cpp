#include <cmath>
#include <numbers>

#include "vwam/synthesizer/synthesizer.hpp"
#include "vwam/util/rng.hpp"

namespace vwam::synthesizer {

namespace {

// Integer offset of a pad-then-crop, in [-pad, pad].
double crop_shift(util::CounterRng& rng, double pad) {
  const auto p = static_cast<std::int64_t>(std::floor(pad));
  return double(rng.integer(-p, p));
}

}  // namespace

AugmentDraw draw_augment(const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration) {
  // Every draw is taken whether or not its stage is enabled, so toggling one
  // stage does not reshuffle the others.
  util::CounterRng rng(seed, iteration);
  AugmentDraw d;
  const double sy = crop_shift(rng, cfg.crop_pad);
  const double sx = crop_shift(rng, cfg.crop_pad);
  const double angle = rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  const double cy = rng.uniform();
  const double cx = rng.uniform();
  const double s2y = crop_shift(rng, cfg.crop2_pad);
  const double s2x = crop_shift(rng, cfg.crop2_pad);
  if (cfg.crop) d.shift_y = sy, d.shift_x = sx;
  if (cfg.rotate) d.angle = angle;
  if (cfg.rescale) d.scale = scale, d.crop_y = cy, d.crop_x = cx;
  if (cfg.crop2) d.shift2_y = s2y, d.shift2_x = s2x;
  return d;
}

std::vector<ad::SampleGrid> augment_grids(const AugmentConfig& cfg, const AugmentDraw& draw, std::size_t height,
                                          std::size_t width) {
  std::vector<ad::SampleGrid> grids;
  const double h = double(height), w = double(width);
  if (cfg.crop) grids.push_back(ad::affine_grid(height, width, {1, 0, draw.shift_y, 0, 1, draw.shift_x}));
  if (cfg.rotate) {
    const double cy = (h - 1) / 2, cx = (w - 1) / 2;
    const double c = std::cos(draw.angle), s = std::sin(draw.angle);
    grids.push_back(ad::affine_grid(height, width,
                                    {c, -s, cy - c * cy + s * cx, s, c, cx - s * cy - c * cx}));
  }
  if (cfg.rescale) {
    // A square window of side scale*H placed uniformly where it fits (or
    // overhangs symmetrically when larger than the image), resized to H x W.
    const double ly = draw.scale * h, lx = draw.scale * w;
    const double y0 = std::min(0.0, h - ly) + draw.crop_y * std::abs(h - ly);
    const double x0 = std::min(0.0, w - lx) + draw.crop_x * std::abs(w - lx);
    grids.push_back(ad::affine_grid(height, width,
                                    {draw.scale, 0, y0 + 0.5 * draw.scale - 0.5, 0, draw.scale,
                                     x0 + 0.5 * draw.scale - 0.5}));
  }
  if (cfg.crop2) grids.push_back(ad::affine_grid(height, width, {1, 0, draw.shift2_y, 0, 1, draw.shift2_x}));
  return grids;
}

template <typename T>
ad::Var<T> augment(const ad::Var<T>& image, const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration) {
  if (image.shape().size() != 3 || image.shape()[0] != 3) {
    throw ShapeError("augment expects a [3, H, W] image, got " + ad::shape_str(image.shape()));
  }
  auto out = image;
  for (const auto& grid : augment_grids(cfg, draw_augment(cfg, seed, iteration), image.shape()[1], image.shape()[2])) {
    out = ad::bilinear_sample(out, grid);
  }
  return out;
}

io::Image augment(const io::Image& image, const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration) {
  ad::Graph<float> g(false);
  return augment(g.constant(image), cfg, seed, iteration).value();
}

template ad::Var<float> augment<float>(const ad::Var<float>&, const AugmentConfig&, std::uint64_t, std::uint64_t);
template ad::Var<double> augment<double>(const ad::Var<double>&, const AugmentConfig&, std::uint64_t, std::uint64_t);

}  // namespace vwam::synthesizer
