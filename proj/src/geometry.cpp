#include "anysat/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace anysat {
namespace {

// Returns n when x is within tolerance of the integer n >= 1, else 0.
size_t as_positive_integer(double x) {
    if (x < 0.5) return 0;
    double r = std::round(x);
    if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x))) return 0;
    return static_cast<size_t>(r);
}

}  // namespace

PatchGrid patch_grid(double tile_m, double patch_m) {
    if (patch_m <= 0) throw ConfigError("patch_grid: patch size must be positive");
    size_t per_axis = as_positive_integer(tile_m / patch_m);
    if (per_axis == 0)
        throw ConfigError("patch_grid: tile side " + std::to_string(tile_m) +
                          " m is not divisible by patch side " + std::to_string(patch_m) + " m");
    PatchGrid g;
    g.tile_m = tile_m;
    g.patch_m = patch_m;
    g.per_axis = per_axis;
    g.total = per_axis * per_axis;
    return g;
}

SubPatchLayout subpatch_layout(double patch_m, double pixel_m, size_t delta_px) {
    if (pixel_m <= 0 || delta_px == 0)
        throw ConfigError("subpatch_layout: pixel size and delta must be positive");
    size_t pixels = as_positive_integer(patch_m / pixel_m);
    if (pixels == 0)
        throw ConfigError("subpatch_layout: patch side " + std::to_string(patch_m) +
                          " m is not an integer number of " + std::to_string(pixel_m) +
                          " m pixels");
    SubPatchLayout l;
    l.pixel_m = pixel_m;
    l.requested = delta_px;
    l.effective = std::min(delta_px, pixels);
    l.pixels_per_side = pixels;
    if (pixels % l.effective != 0)
        throw ConfigError("subpatch_layout: " + std::to_string(pixels) +
                          " pixels per patch side not divisible by sub-patch side " +
                          std::to_string(l.effective));
    l.per_axis = pixels / l.effective;
    return l;
}

PosEncodingSpec::PosEncodingSpec(size_t width, double unit_m, double ref_m)
    : width(width), unit_m(unit_m), ref_m(ref_m) {
    if (width == 0 || width % 2 != 0)
        throw ConfigError("PosEncodingSpec: width must be even and positive, got " +
                          std::to_string(width));
    if (unit_m <= 0 || ref_m <= 0)
        throw ConfigError("PosEncodingSpec: unit and reference lengths must be positive");
}

std::vector<double> pos_encoding(size_t pos_x, size_t pos_y, const PosEncodingSpec& spec) {
    const size_t half = spec.width / 2;
    const double scale = spec.unit_m / spec.ref_m;
    std::vector<double> out(spec.width);
    for (size_t i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(spec.width));
        double phase = (i % 2) ? std::numbers::pi / 2.0 : 0.0;
        out[i] = std::sin(scale * static_cast<double>(pos_x) / freq + phase);
        out[half + i] = std::sin(scale * static_cast<double>(pos_y) / freq + phase);
    }
    return out;
}

}  // namespace anysat
